"""Parsing of exported transaction files and per-token normalization.

Exports carry one row per transaction record. A transaction may appear on
several rows (proxy contracts splitting the payment, refunds to the buyer);
those collapse to one logical transaction whose cost is the largest amount
moved. Multi-token transactions are priced by splitting the cost equally,
with the indivisible wei remainder going to the lowest token ids.
"""
import csv
import io
import logging
import os
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import IO, Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import pandas as pd

from config import DEFAULT_SCHEMA
from models import (WEI, ParseResult, ResolvedTransaction, TokenTransfer, TxClass, TxRecord,
                    token_sort_key)
from utils.errors import IngestError, InconsistentTransactionError

logger = logging.getLogger(__name__)

ADDRESS_RE = re.compile(r'^0x[0-9a-f]{40}$')
TX_HASH_RE = re.compile(r'^0x[0-9a-f]{64}$')
TOKEN_ID_RE = re.compile(r'^[0-9]+$')

TOKEN_SEPARATOR = ';'
STORE_COLUMNS = ['collection', 'token_id', 'from', 'to', 'price', 'timestamp', 'block_number', 'tx_hash', 'class']

Source = Union[str, os.PathLike, IO[bytes], IO[str]]


@dataclass
class NormalizeResult:
    transfers: List[TokenTransfer] = field(default_factory=list)
    conflicts: List[InconsistentTransactionError] = field(default_factory=list)


def _parse_address(value: str, name: str) -> str:
    address = value.strip().lower()
    if not ADDRESS_RE.match(address):
        raise ValueError(f"{name} '{value}' is not a 20-byte hex address")
    return address


def _parse_int(value: str, name: str, minimum: int) -> int:
    try:
        number = int(value.strip())
    except ValueError:
        raise ValueError(f"{name} '{value}' is not an integer") from None
    if number < minimum:
        raise ValueError(f'{name} {number} is below {minimum}')
    return number


def _parse_amount(value: str, name: str) -> Decimal:
    try:
        amount = Decimal(value.strip())
    except InvalidOperation:
        raise ValueError(f"{name} '{value}' is not a decimal number") from None
    if not amount.is_finite():
        raise ValueError(f"{name} '{value}' is not finite")
    if amount < 0:
        raise ValueError(f'{name} {value} is negative')
    quantized = amount.quantize(WEI)
    if quantized != amount:
        raise ValueError(f'{name} {value} has more than 18 fractional digits')
    return quantized


def _parse_token_ids(value: str) -> tuple:
    token_ids = tuple(part.strip() for part in value.split(TOKEN_SEPARATOR) if part.strip())
    if not token_ids:
        raise ValueError('token_ids is empty')
    for token_id in token_ids:
        if not TOKEN_ID_RE.match(token_id):
            raise ValueError(f"token id '{token_id}' is not a decimal identifier")
    if len(set(token_ids)) != len(token_ids):
        raise ValueError(f"token_ids '{value}' lists a token twice")
    return token_ids


def parse_row(row: Dict[str, object], line: int) -> TxRecord:
    """Build a TxRecord from one row keyed by logical field names"""
    for name, value in row.items():
        if not isinstance(value, str) or not value.strip():
            raise ValueError(f'missing value for {name}')

    tx_hash = row['tx_hash'].strip().lower()
    if not TX_HASH_RE.match(tx_hash):
        raise ValueError(f"tx_hash '{row['tx_hash']}' is not a 32-byte hex hash")

    return TxRecord(
        tx_hash=tx_hash,
        contract=_parse_address(row['contract'], 'contract'),
        seller=_parse_address(row['seller'], 'seller'),
        buyer=_parse_address(row['buyer'], 'buyer'),
        block_time=_parse_int(row['block_time'], 'block_time', 1),
        block_number=_parse_int(row['block_number'], 'block_number', 0),
        eth_value=_parse_amount(row['eth_value'], 'eth_value'),
        weth_value=_parse_amount(row['weth_value'], 'weth_value'),
        token_ids=_parse_token_ids(row['token_ids']),
        line=line,
    )


def _open_text(source: Source) -> TextIO:
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding='utf-8-sig', newline='')
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding='utf-8-sig', newline='')


def _physical_rows(handle: TextIO, delimiter: str) -> Iterator[Tuple[int, List[str]]]:
    """Yield each CSV record with the physical line it starts on"""
    reader = csv.reader(handle, delimiter=delimiter)
    end = 0
    for fields in reader:
        start, end = end + 1, reader.line_num
        if not fields or fields == ['']:
            continue
        yield start, fields


def _parse_rows(rows: Iterator[Tuple[int, List[str]]], mapping: Dict[str, str], on_error: str,
                name: Optional[str], result: ParseResult) -> None:
    header_row = next(rows, None)
    if header_row is None:
        raise IngestError('file is empty or has no header row', line=1, source=name)
    header_line, header = header_row
    header = [column.lstrip('\ufeff') if i == 0 else column for i, column in enumerate(header)]
    missing = [column for column in mapping.values() if column not in header]
    if missing:
        raise IngestError(f'missing columns {missing}', line=header_line, source=name)
    positions = {field_name: header.index(column) for field_name, column in mapping.items()}

    for line, fields in rows:
        try:
            if len(fields) != len(header):
                raise ValueError(f'expected {len(header)} fields, saw {len(fields)}')
            row = {field_name: fields[position] for field_name, position in positions.items()}
            result.records.append(parse_row(row, line))
        except ValueError as e:
            error = IngestError(str(e), line=line, source=name)
            if on_error == 'raise':
                raise error from e
            logger.warning(f'Skipping row: {error}')
            result.errors.append(error)


def parse_transactions(source: Source, schema: Optional[Dict[str, str]] = None, delimiter: str = ',',
                       on_error: str = 'raise', source_name: Optional[str] = None) -> ParseResult:
    """Parse an exported transaction CSV into TxRecords, preserving row order.

    ``schema`` maps the nine logical fields to column headers. With
    ``on_error='raise'`` the first malformed row aborts with an IngestError;
    with ``'skip'`` malformed rows, ragged ones included, are dropped and
    reported in the result. Line numbers are physical file lines, so blank
    lines and quoted multi-line cells are counted.
    """
    if on_error not in ('raise', 'skip'):
        raise ValueError(f"on_error must be 'raise' or 'skip', got '{on_error}'")
    mapping = dict(DEFAULT_SCHEMA)
    mapping.update(schema or {})
    name = source_name or (os.fspath(source) if isinstance(source, (str, os.PathLike)) else None)

    result = ParseResult()
    handle = _open_text(source)
    rows = _physical_rows(handle, delimiter)
    try:
        _parse_rows(rows, mapping, on_error, name, result)
    except csv.Error as e:
        raise IngestError(f'malformed CSV: {e}', source=name) from e
    except UnicodeDecodeError as e:
        raise IngestError(f'not valid UTF-8: {e}', source=name) from e
    finally:
        if isinstance(source, (str, os.PathLike)):
            handle.close()
        elif handle is not source:
            # leave the caller's binary stream open
            handle.detach()

    logger.info(f'Parsed {len(result.records)} records from {name or "stream"} ({result.skipped} skipped)')
    return result


def resolve_transaction_cost(records: Sequence[TxRecord]) -> ResolvedTransaction:
    """Collapse the records of one transaction and token set into a single cost.

    The cost is the maximum of ETH + WETH over the records.
    """
    if not records:
        raise ValueError('resolve_transaction_cost needs at least one record')
    first = records[0]
    token_set = frozenset(first.token_ids)
    for record in records[1:]:
        if record.tx_hash != first.tx_hash:
            raise ValueError(f'records span several hashes: {first.tx_hash}, {record.tx_hash}')
        if record.seller != first.seller or record.buyer != first.buyer:
            raise InconsistentTransactionError(first.tx_hash, 'records disagree on seller or buyer')
        if frozenset(record.token_ids) != token_set:
            raise InconsistentTransactionError(first.tx_hash, 'records disagree on the tokens moved')
        if record.contract != first.contract:
            raise InconsistentTransactionError(first.tx_hash, 'records disagree on the contract')
        if (record.block_time, record.block_number) != (first.block_time, first.block_number):
            raise InconsistentTransactionError(first.tx_hash, 'records disagree on the block')

    return ResolvedTransaction(
        tx_hash=first.tx_hash,
        contract=first.contract,
        seller=first.seller,
        buyer=first.buyer,
        block_time=first.block_time,
        block_number=first.block_number,
        cost=max(record.total_value for record in records),
        token_ids=tuple(sorted(token_set, key=token_sort_key)),
    )


def split_token_prices(transaction: ResolvedTransaction, collection: str = '') -> List[TokenTransfer]:
    """Price every token of a transaction at an equal share of its cost.

    Shares are whole wei; the remainder goes to the lowest token ids so the
    prices always add back up to the cost. Ids are ordered numerically, not
    as strings, so token 2 gets its extra wei before token 10.
    """
    token_ids = sorted(transaction.token_ids, key=token_sort_key)
    units = int(transaction.cost.quantize(WEI).scaleb(18))
    share, remainder = divmod(units, len(token_ids))

    transfers = []
    for i, token_id in enumerate(token_ids):
        wei = share + 1 if i < remainder else share
        transfers.append(TokenTransfer(
            collection=collection,
            token_id=token_id,
            from_addr=transaction.seller,
            to_addr=transaction.buyer,
            price=(Decimal(wei) * WEI).quantize(WEI),
            timestamp=transaction.block_time,
            block_number=transaction.block_number,
            tx_hash=transaction.tx_hash,
        ))
    return transfers


def _store_key(transfer: TokenTransfer):
    return transfer.sort_key, transfer.collection


def normalize_records(records: Iterable[TxRecord], collection: str, on_conflict: str = 'raise') -> NormalizeResult:
    """Turn parsed records into the sorted per-token transfer store"""
    groups: 'OrderedDict[str, List[TxRecord]]' = OrderedDict()
    for record in records:
        groups.setdefault(record.tx_hash, []).append(record)

    result = NormalizeResult()
    for tx_hash, group in groups.items():
        try:
            result.transfers.extend(_normalize_hash_group(tx_hash, group, collection))
        except InconsistentTransactionError as e:
            if on_conflict == 'raise':
                logger.error(f'Normalization failed for {collection}: {e}')
                raise
            logger.warning(f'Dropping transaction: {e}')
            result.conflicts.append(e)

    result.transfers.sort(key=_store_key)
    logger.info(f'Normalized {len(groups)} transactions into {len(result.transfers)} token transfers '
                f'for {collection} ({len(result.conflicts)} dropped)')
    return result


def _normalize_hash_group(tx_hash: str, group: List[TxRecord], collection: str) -> List[TokenTransfer]:
    by_tokens: 'OrderedDict[frozenset, List[TxRecord]]' = OrderedDict()
    for record in group:
        by_tokens.setdefault(frozenset(record.token_ids), []).append(record)

    seen_tokens: set = set()
    transfers = []
    for token_set, subgroup in by_tokens.items():
        if seen_tokens & token_set:
            raise InconsistentTransactionError(tx_hash, f'token(s) {sorted(seen_tokens & token_set)} '
                                                        'moved by two different records')
        seen_tokens |= token_set
        transfers.extend(split_token_prices(resolve_transaction_cost(subgroup), collection))
    return transfers


def normalize_transfers(transfers: Iterable[TokenTransfer]) -> List[TokenTransfer]:
    """Dedupe by (collection, tx_hash, token_id) and sort into store order"""
    ordered = sorted(transfers, key=_store_key)
    seen = set()
    unique = []
    for transfer in ordered:
        key = (transfer.collection, transfer.tx_hash, transfer.token_id)
        if key in seen:
            continue
        seen.add(key)
        unique.append(transfer)
    return unique


def format_price(price: Decimal) -> str:
    return str(price.quantize(WEI))


def write_transfer_store(transfers: Iterable[TokenTransfer], target: Union[str, os.PathLike, TextIO]) -> None:
    """Write the fixed-column transfer store in store order"""
    rows = sorted(transfers, key=_store_key)
    if isinstance(target, (str, os.PathLike)):
        with open(target, 'w', encoding='utf-8', newline='') as handle:
            _write_store_rows(rows, handle)
    else:
        _write_store_rows(rows, target)


def _write_store_rows(rows: List[TokenTransfer], handle: TextIO) -> None:
    writer = csv.writer(handle, lineterminator='\n')
    writer.writerow(STORE_COLUMNS)
    for t in rows:
        writer.writerow([
            t.collection, t.token_id, t.from_addr, t.to_addr, format_price(t.price),
            t.timestamp, t.block_number, t.tx_hash, t.tx_class.value if t.tx_class else '',
        ])


def read_transfer_store(source: Source) -> List[TokenTransfer]:
    """Read a transfer store written by write_transfer_store"""
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError as e:
        raise IngestError('transfer store is empty', line=1) from e
    missing = [column for column in STORE_COLUMNS if column not in frame.columns]
    if missing:
        raise IngestError(f'transfer store is missing columns {missing}', line=1)

    transfers = []
    for line, row in enumerate(frame[STORE_COLUMNS].itertuples(index=False, name=None), start=2):
        collection, token_id, from_addr, to_addr, price, timestamp, block_number, tx_hash, tx_class = row
        try:
            transfers.append(TokenTransfer(
                collection=collection,
                token_id=token_id,
                from_addr=from_addr,
                to_addr=to_addr,
                price=_parse_amount(price, 'price'),
                timestamp=int(timestamp),
                block_number=int(block_number),
                tx_hash=tx_hash,
                tx_class=TxClass(tx_class) if tx_class else None,
            ))
        except ValueError as e:
            raise IngestError(str(e), line=line) from e
    return transfers
