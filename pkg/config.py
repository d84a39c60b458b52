import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from models import EdgeFilter
from utils.errors import ConfigError

load_dotenv()

ADDRESS_RE = re.compile(r'^0x[0-9a-f]{40}$')
NAME_RE = re.compile(r'^[A-Za-z0-9][A-Za-z0-9_.-]*$')
# output directory holding the cross-collection results
MERGED_NAME = 'merged'

DEFAULT_SCHEMA = {
    'tx_hash': 'tx_hash',
    'contract': 'contract',
    'seller': 'seller',
    'buyer': 'buyer',
    'block_time': 'block_time_ms',
    'block_number': 'block_number',
    'eth_value': 'eth_value',
    'weth_value': 'weth_value',
    'token_ids': 'token_ids',
}


class Config:
    """Base configuration class"""
    TOOL_VERSION = '1.0.0'

    # Logging
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_FILE = os.environ.get('LOG_FILE')

    # Runs
    NFTNET_OUTPUT_DIR = os.environ.get('NFTNET_OUTPUT_DIR', 'runs')
    DEFAULT_SEED = int(os.environ.get('DEFAULT_SEED', 7))
    WORKERS = int(os.environ.get('WORKERS', 1))

    # Valuation
    ETH_USD_RATE = Decimal(os.environ.get('ETH_USD_RATE', '2000'))

    # Power-law fitting
    BOOTSTRAP_REPLICATES = int(os.environ.get('BOOTSTRAP_REPLICATES', 1000))
    RNG_ALGORITHM = 'PCG64'

    # Distances: exact BFS up to this many nodes, sampled sources above it
    DISTANCE_EXACT_THRESHOLD = int(os.environ.get('DISTANCE_EXACT_THRESHOLD', 10000))
    DISTANCE_SAMPLE_SIZE = int(os.environ.get('DISTANCE_SAMPLE_SIZE', 500))

    # PageRank
    PAGERANK_DAMPING = float(os.environ.get('PAGERANK_DAMPING', 0.85))
    PAGERANK_TOL = float(os.environ.get('PAGERANK_TOL', 1e-10))
    PAGERANK_MAX_ITER = int(os.environ.get('PAGERANK_MAX_ITER', 200))

    TOP_OWNERS = 5


class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration"""
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'WARNING')


class TestingConfig(Config):
    """Testing configuration"""
    BOOTSTRAP_REPLICATES = 100
    DISTANCE_EXACT_THRESHOLD = 2000
    WORKERS = 1


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config,
}


def get_config(environment: Optional[str] = None) -> Config:
    name = environment or os.environ.get('ENVIRONMENT', 'default')
    return config.get(name, Config)()


@dataclass(frozen=True)
class CollectionConfig:
    name: str
    contract: str
    csv_path: Path
    sidecar_path: Optional[Path] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'contract': self.contract,
            'csv_path': self.csv_path.name,
            'sidecar_path': self.sidecar_path.name if self.sidecar_path else None,
        }


@dataclass
class RunConfig:
    """Everything a run needs besides the seed and the output directory"""
    collections: List[CollectionConfig]
    eth_usd_rate: Decimal = Config.ETH_USD_RATE
    edge_filter: EdgeFilter = EdgeFilter.BUYSELL_AND_TRANSFER
    include_mint_in_degree: bool = False
    bootstrap_replicates: int = Config.BOOTSTRAP_REPLICATES
    schema: Dict[str, str] = field(default_factory=lambda: dict(DEFAULT_SCHEMA))
    delimiter: str = ','
    on_error: str = 'raise'
    distance_exact_threshold: int = Config.DISTANCE_EXACT_THRESHOLD
    distance_sample_size: int = Config.DISTANCE_SAMPLE_SIZE
    pagerank_damping: float = Config.PAGERANK_DAMPING
    pagerank_tol: float = Config.PAGERANK_TOL
    pagerank_max_iter: int = Config.PAGERANK_MAX_ITER
    pagerank_weighted: bool = True
    assortativity_directed: bool = False
    value_include_mint_cost: bool = False
    tx_per_token_include_transfers: bool = False
    top_owners: int = Config.TOP_OWNERS

    def collection(self, name: str) -> CollectionConfig:
        for item in self.collections:
            if item.name == name:
                return item
        raise ConfigError(f"Unknown collection '{name}'")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'collections': [c.to_dict() for c in self.collections],
            'eth_usd_rate': str(self.eth_usd_rate),
            'edge_filter': self.edge_filter.value,
            'include_mint_in_degree': self.include_mint_in_degree,
            'bootstrap_replicates': self.bootstrap_replicates,
            'schema': dict(sorted(self.schema.items())),
            'delimiter': self.delimiter,
            'on_error': self.on_error,
            'distance_exact_threshold': self.distance_exact_threshold,
            'distance_sample_size': self.distance_sample_size,
            'pagerank': {
                'damping': self.pagerank_damping,
                'tol': self.pagerank_tol,
                'max_iter': self.pagerank_max_iter,
                'weighted': self.pagerank_weighted,
            },
            'assortativity_directed': self.assortativity_directed,
            'value_include_mint_cost': self.value_include_mint_cost,
            'tx_per_token_include_transfers': self.tx_per_token_include_transfers,
            'top_owners': self.top_owners,
        }

    def config_hash(self, seed: int) -> str:
        payload = json.dumps({'config': self.to_dict(), 'seed': seed}, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def _resolve(base_dir: Path, value: Optional[str]) -> Optional[Path]:
    if not value:
        return None
    path = Path(value)
    return path if path.is_absolute() else base_dir / path


def load_run_config(path: os.PathLike, base: Optional[Config] = None) -> RunConfig:
    """Load and validate a JSON run configuration"""
    base = base or get_config()
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding='utf-8'))
    except OSError as e:
        raise ConfigError(f'Cannot read config file {path}: {e}') from e
    except json.JSONDecodeError as e:
        raise ConfigError(f'Config file {path} is not valid JSON: {e}') from e

    if not isinstance(raw, dict) or not raw.get('collections'):
        raise ConfigError(f"Config file {path} must list at least one entry under 'collections'")

    base_dir = path.parent
    collections = []
    seen = set()
    for entry in raw['collections']:
        try:
            name = str(entry['name'])
            contract = str(entry['contract']).lower()
            csv_path = _resolve(base_dir, entry['csv_path'])
        except (KeyError, TypeError) as e:
            raise ConfigError(f'Collection entry {entry!r} is missing a field: {e}') from e
        if not NAME_RE.match(name) or name == MERGED_NAME:
            raise ConfigError(f"Collection name '{name}' cannot be used as a directory name")
        if name in seen:
            raise ConfigError(f"Duplicate collection name '{name}'")
        if not ADDRESS_RE.match(contract):
            raise ConfigError(f"Collection '{name}' has a malformed contract address '{contract}'")
        if not csv_path.exists():
            raise ConfigError(f"Collection '{name}' points at missing file {csv_path}")
        seen.add(name)
        collections.append(CollectionConfig(
            name=name,
            contract=contract,
            csv_path=csv_path,
            sidecar_path=_resolve(base_dir, entry.get('sidecar_path')),
        ))

    pagerank = raw.get('pagerank', {})
    schema = dict(DEFAULT_SCHEMA)
    schema.update(raw.get('schema', {}))
    unknown = set(schema) - set(DEFAULT_SCHEMA)
    if unknown:
        raise ConfigError(f'Unknown schema fields: {sorted(unknown)}')
    on_error = raw.get('on_error', 'raise')
    if on_error not in ('raise', 'skip'):
        raise ConfigError(f"on_error must be 'raise' or 'skip', got '{on_error}'")

    try:
        return RunConfig(
            collections=collections,
            eth_usd_rate=Decimal(str(raw.get('eth_usd_rate', base.ETH_USD_RATE))),
            edge_filter=EdgeFilter(raw.get('edge_filter', EdgeFilter.BUYSELL_AND_TRANSFER.value)),
            include_mint_in_degree=bool(raw.get('include_mint_in_degree', False)),
            bootstrap_replicates=int(raw.get('bootstrap_replicates', base.BOOTSTRAP_REPLICATES)),
            schema=schema,
            delimiter=raw.get('delimiter', ','),
            on_error=on_error,
            distance_exact_threshold=int(raw.get('distance_exact_threshold', base.DISTANCE_EXACT_THRESHOLD)),
            distance_sample_size=int(raw.get('distance_sample_size', base.DISTANCE_SAMPLE_SIZE)),
            pagerank_damping=float(pagerank.get('damping', base.PAGERANK_DAMPING)),
            pagerank_tol=float(pagerank.get('tol', base.PAGERANK_TOL)),
            pagerank_max_iter=int(pagerank.get('max_iter', base.PAGERANK_MAX_ITER)),
            pagerank_weighted=bool(pagerank.get('weighted', True)),
            assortativity_directed=bool(raw.get('assortativity_directed', False)),
            value_include_mint_cost=bool(raw.get('value_include_mint_cost', False)),
            tx_per_token_include_transfers=bool(raw.get('tx_per_token_include_transfers', False)),
            top_owners=int(raw.get('top_owners', base.TOP_OWNERS)),
        )
    except ValueError as e:
        raise ConfigError(f'Invalid value in config file {path}: {e}') from e
