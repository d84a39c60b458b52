import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence, Union

from config import Config
from models import RunManifest, SeriesPoint
from utils.errors import ReportError

logger = logging.getLogger(__name__)

FORMATS = ('csv', 'json')


@dataclass
class Table:
    """Rows of a report file, in the order they are written"""
    columns: List[str]
    rows: List[Sequence[Any]] = field(default_factory=list)


Payload = Union[Table, Mapping[str, Any]]


def format_number(value: Any) -> str:
    """Locale-independent text for a single report cell"""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, Decimal):
        # shortest fixed-point form: 2.500 -> 2.5, 1E+2 -> 100
        return format(value.normalize(), 'f')
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ''
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


def to_json_value(value: Any) -> Any:
    """JSON-safe form; Decimals become exact strings rather than lossy floats"""
    if isinstance(value, Mapping):
        return {str(k): to_json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_json_value(v) for v in value]
    if isinstance(value, Decimal):
        return format_number(value)
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, (date, Enum)):
        return format_number(value)
    return value


def series_table(points: Iterable[SeriesPoint], column: str = 'value',
                 usd_points: Optional[Iterable[SeriesPoint]] = None) -> Table:
    points = list(points)
    if usd_points is None:
        return Table(columns=['date', column], rows=[[p.day, p.value] for p in points])
    usd = list(usd_points)
    return Table(columns=['date', column, f'{column}_usd'],
                 rows=[[p.day, p.value, u.value] for p, u in zip(points, usd)])


class ExportService:
    """Writes report files under one run directory and keeps the file inventory"""

    def __init__(self, config: Config, out_dir: Union[str, Path], fmt: str = 'csv'):
        if fmt not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}, got '{fmt}'")
        self.config = config
        self.out_dir = Path(out_dir)
        self.fmt = fmt
        self.files: List[str] = []

    def track(self, path: Path) -> None:
        """Record a file written by another writer so it lands in the manifest"""
        relative = Path(path).resolve().relative_to(self.out_dir.resolve()).as_posix()
        if relative not in self.files:
            self.files.append(relative)

    def _write(self, name: str, content: str) -> Path:
        path = self.out_dir / name
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(content.encode('utf-8'))
        except OSError as e:
            logger.error(f'Failed to write report file {path}: {e}')
            raise ReportError(f'cannot write {path}: {e}') from e
        self.track(path)
        return path

    def table_csv(self, table: Table) -> str:
        output = io.StringIO()
        writer = csv.writer(output, lineterminator='\n')
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_number(cell) for cell in row])
        content = output.getvalue()
        output.close()
        return content

    @staticmethod
    def json_text(payload: Any) -> str:
        return json.dumps(to_json_value(payload), indent=2, sort_keys=True, allow_nan=False) + '\n'

    def write_table(self, name: str, table: Table) -> Path:
        if self.fmt == 'json':
            records = [dict(zip(table.columns, row)) for row in table.rows]
            return self._write(f'{name}.json', self.json_text(records))
        return self._write(f'{name}.csv', self.table_csv(table))

    def write_json(self, name: str, payload: Mapping[str, Any]) -> Path:
        return self._write(f'{name}.json', self.json_text(payload))

    def write_manifest(self, manifest: RunManifest) -> Path:
        manifest.files = sorted(set(self.files) | {'manifest.json'})
        return self._write('manifest.json', self.json_text(manifest.to_dict()))

    def emit_report(self, results: Mapping[str, Payload], manifest: RunManifest) -> List[Path]:
        """Write every result under its name, tables as CSV (or JSON) and objects as JSON, then the manifest"""
        written = []
        for name in sorted(results):
            payload = results[name]
            if isinstance(payload, Table):
                written.append(self.write_table(name, payload))
            else:
                written.append(self.write_json(name, payload))
        written.append(self.write_manifest(manifest))
        logger.info(f'Wrote {len(written)} report files to {self.out_dir}')
        return written
