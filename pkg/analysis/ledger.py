import logging
import os
from collections import Counter
from dataclasses import replace
from decimal import Decimal
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set

import pandas as pd

from models import (WEI, ZERO_ADDRESS, AccountKind, BulkStats, MintRecord, OwnershipEvent, OwnershipHistory,
                    TokenTimeline, TokenTransfer, TxClass)
from utils.errors import IngestError

logger = logging.getLogger(__name__)


def load_account_sidecar(path: os.PathLike) -> Dict[str, AccountKind]:
    """Read an ``address,kind`` table with kind in {eoa, ca}"""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError as e:
        raise IngestError('account sidecar is empty', line=1, source=os.fspath(path)) from e
    if list(frame.columns[:2]) != ['address', 'kind']:
        raise IngestError("account sidecar header must be 'address,kind'", line=1, source=os.fspath(path))

    kinds: Dict[str, AccountKind] = {}
    for line, (address, kind) in enumerate(frame[['address', 'kind']].itertuples(index=False, name=None), start=2):
        try:
            account_kind = AccountKind(kind.strip().lower())
        except ValueError:
            raise IngestError(f"unknown account kind '{kind}'", line=line, source=os.fspath(path)) from None
        kinds[address.strip().lower()] = account_kind
    logger.info(f'Loaded {len(kinds)} account kinds from {path}')
    return kinds


class AccountBook:
    """Account kinds for one run: sidecar lookups plus the EoA default"""

    def __init__(self, sidecar: Optional[Mapping[str, AccountKind]] = None):
        self.sidecar: Dict[str, AccountKind] = dict(sidecar or {})
        self.defaulted: Set[str] = set()

    @property
    def warning_count(self) -> int:
        return len(self.defaulted)

    def kind_of(self, address: str) -> AccountKind:
        kind = self.sidecar.get(address)
        if kind is not None:
            return kind
        if address not in self.defaulted:
            self.defaulted.add(address)
            logger.debug(f'No account kind for {address}, assuming EoA')
        return AccountKind.EOA

    def is_eoa(self, address: str) -> bool:
        return address != ZERO_ADDRESS and self.kind_of(address) == AccountKind.EOA

    def merged_with(self, other: 'AccountBook') -> 'AccountBook':
        book = AccountBook({**self.sidecar, **other.sidecar})
        book.defaulted = (self.defaulted | other.defaulted) - set(book.sidecar)
        return book

    def log_summary(self, collection: str) -> None:
        if self.defaulted:
            logger.warning(f'{collection}: {len(self.defaulted)} addresses had no account kind and were '
                           f'treated as EoA')


def classify_account(address: str, sidecar: Optional[Mapping[str, AccountKind]] = None,
                     book: Optional[AccountBook] = None) -> AccountKind:
    """Kind of an address: the sidecar entry when present, EoA otherwise.

    Passing an ``AccountBook`` records defaulted addresses in its tally.
    """
    if book is None:
        book = AccountBook(sidecar)
    return book.kind_of(address)


def classify_transfer(transfer: TokenTransfer) -> TxClass:
    if transfer.from_addr == ZERO_ADDRESS:
        return TxClass.MINT
    if transfer.from_addr != transfer.to_addr and transfer.price > 0:
        return TxClass.BUYSELL
    # self-transactions and zero-price movements
    return TxClass.TRANSFER


def classify_transfers(transfers: Iterable[TokenTransfer]) -> List[TokenTransfer]:
    return [replace(t, tx_class=classify_transfer(t)) for t in transfers]


def _require_classified(transfers: Sequence[TokenTransfer]) -> None:
    if any(t.tx_class is None for t in transfers):
        raise ValueError('transfers must be classified first')


def bulk_stats(transfers: Sequence[TokenTransfer], kinds: AccountBook) -> BulkStats:
    """Wallet, transaction and volume totals for one collection.

    Volume figures cover BuySell transfers only; the variance is the
    population variance.
    """
    _require_classified(transfers)
    stats = BulkStats()
    if not transfers:
        return stats

    classes = Counter(t.tx_class for t in transfers)
    stats.tx_total = len(transfers)
    stats.tx_buysell = classes[TxClass.BUYSELL]
    stats.tx_transfer = classes[TxClass.TRANSFER]
    stats.tx_mint = classes[TxClass.MINT]

    wallets = {address for t in transfers for address in (t.from_addr, t.to_addr)} - {ZERO_ADDRESS}
    stats.wallets_total = len(wallets)
    stats.wallets_ca = sum(1 for address in wallets if kinds.kind_of(address) == AccountKind.CA)
    stats.wallets_eoa = stats.wallets_total - stats.wallets_ca

    prices = [t.price for t in transfers if t.tx_class == TxClass.BUYSELL]
    _fill_volume(stats, len(prices), sum(prices, Decimal(0)),
                 max(prices, default=Decimal(0)), sum((p * p for p in prices), Decimal(0)))
    return stats


def _fill_volume(stats: BulkStats, n: int, total: Decimal, maximum: Decimal, sum_squares: Decimal) -> None:
    stats.volume_total = total
    stats.volume_max = maximum
    if n == 0:
        stats.volume_avg = Decimal(0).quantize(WEI)
        stats.volume_var = Decimal(0).quantize(WEI)
        return
    mean = total / n
    stats.volume_avg = mean.quantize(WEI)
    stats.volume_var = max(sum_squares / n - mean * mean, Decimal(0)).quantize(WEI)


def merge_bulk_stats(transfers_by_part: Sequence[Sequence[TokenTransfer]], kinds: AccountBook) -> BulkStats:
    """Stats over several collections at once; wallets trading in two collections count once"""
    return bulk_stats([t for transfers in transfers_by_part for t in transfers], kinds)


def replay_ownership(transfers: Iterable[TokenTransfer]) -> OwnershipHistory:
    """Fold classified transfers into per-token ownership timelines.

    Events are applied in (timestamp, block_number, tx_hash, token_id) order.
    A transfer of an unminted token, a second mint, or a transfer from an
    address that does not own the token is logged as a violation and still
    applied.
    """
    ordered = sorted(transfers, key=lambda t: t.sort_key)
    _require_classified(ordered)
    collections = {t.collection for t in ordered}
    if len(collections) > 1:
        raise ValueError(f'replay_ownership runs per collection, got {sorted(collections)}')

    history = OwnershipHistory(collection=collections.pop() if collections else '')
    for t in ordered:
        timeline = history.tokens.get(t.token_id)
        if timeline is None:
            timeline = history.tokens[t.token_id] = TokenTimeline(token_id=t.token_id)

        if t.tx_class == TxClass.MINT:
            if timeline.mint is not None:
                history.violations.append(f'token {t.token_id} minted again in {t.tx_hash}')
            else:
                timeline.mint = MintRecord(minter=t.to_addr, mint_cost=t.price, mint_time=t.timestamp)
        elif not timeline.events:
            history.violations.append(f'token {t.token_id} moved before its mint in {t.tx_hash}')
        elif timeline.owner != t.from_addr:
            history.violations.append(f'token {t.token_id} moved by {t.from_addr} '
                                      f'while owned by {timeline.owner} in {t.tx_hash}')

        timeline.events.append(OwnershipEvent(
            owner=t.to_addr,
            from_addr=t.from_addr,
            price=t.price,
            timestamp=t.timestamp,
            block_number=t.block_number,
            tx_hash=t.tx_hash,
            tx_class=t.tx_class,
        ))

    if history.violations:
        logger.warning(f'{history.violation_count} ownership violations while replaying {history.collection}')
    logger.info(f'Replayed {len(ordered)} transfers over {len(history.tokens)} tokens for {history.collection}')
    return history
