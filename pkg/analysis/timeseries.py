"""Daily series over a replayed ownership history.

Days are UTC calendar days of the block time. Series built from a history
run on a dense grid from the first mint day (the first event day when the
collection has no mints) to the last event day.
"""
import logging
import math
from collections import Counter, defaultdict
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple

import pandas as pd

from models import (WEI, ZERO_ADDRESS, DailyActivity, OwnerFlow, OwnershipEvent, OwnershipHistory, PriceMultipliers,
                    SeriesPoint, TokenTransfer, TopOwners, TxClass, token_sort_key)

logger = logging.getLogger(__name__)

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
MS_PER_DAY = 86_400_000


def utc_day(timestamp_ms: int) -> date:
    return (EPOCH + timedelta(milliseconds=timestamp_ms)).date()


def day_end_ms(day: date) -> int:
    """Last millisecond of a UTC day"""
    return (day - EPOCH.date()).days * MS_PER_DAY + MS_PER_DAY - 1


def _date_range(first: date, last: date) -> List[date]:
    return [ts.date() for ts in pd.date_range(first, last, freq='D')]


def day_grid(h: OwnershipHistory) -> List[date]:
    events = h.events()
    if not events:
        return []
    mint_days = [utc_day(e.timestamp) for _, e in events if e.tx_class == TxClass.MINT]
    first = min(mint_days) if mint_days else utc_day(events[0][1].timestamp)
    return _date_range(first, utc_day(events[-1][1].timestamp))


class _LedgerState:
    """Running holdings and valuations while events are applied in order"""

    def __init__(self, include_mint_cost: bool = False):
        self.include_mint_cost = include_mint_cost
        self.owner: Dict[str, str] = {}
        self.last_price: Dict[str, Decimal] = {}
        self.traded = set()
        self.minted = set()
        self.balance: Counter = Counter()
        self.value: Dict[str, Decimal] = defaultdict(Decimal)
        self.total_value = Decimal(0)
        self.holders = 0

    def apply(self, token_id: str, event: OwnershipEvent) -> None:
        price = self.last_price.get(token_id, Decimal(0))
        previous = self.owner.get(token_id)
        if previous is not None:
            self._release(previous, price)

        if event.tx_class == TxClass.MINT:
            self.minted.add(token_id)
            if self.include_mint_cost and token_id not in self.traded:
                self._reprice(token_id, event.price)
        elif event.tx_class == TxClass.BUYSELL:
            self.traded.add(token_id)
            self._reprice(token_id, event.price)

        self.owner[token_id] = event.owner
        self._hold(event.owner, self.last_price.get(token_id, Decimal(0)))

    def _reprice(self, token_id: str, price: Decimal) -> None:
        self.total_value += price - self.last_price.get(token_id, Decimal(0))
        self.last_price[token_id] = price

    def _release(self, wallet: str, price: Decimal) -> None:
        self.balance[wallet] -= 1
        self.value[wallet] -= price
        if wallet != ZERO_ADDRESS and self.balance[wallet] == 0:
            self.holders -= 1

    def _hold(self, wallet: str, price: Decimal) -> None:
        if wallet != ZERO_ADDRESS and self.balance[wallet] == 0:
            self.holders += 1
        self.balance[wallet] += 1
        self.value[wallet] += price

    @property
    def holder_value(self) -> Decimal:
        return self.total_value - self.value.get(ZERO_ADDRESS, Decimal(0))


def _replay_days(h: OwnershipHistory, include_mint_cost: bool = False) -> Iterator[Tuple[date, _LedgerState, set]]:
    """Yield the state at the end of every grid day along with the wallets touched that day"""
    events = h.events()
    state = _LedgerState(include_mint_cost)
    position = 0
    for day in day_grid(h):
        cutoff = day_end_ms(day)
        touched = set()
        while position < len(events) and events[position][1].timestamp <= cutoff:
            token_id, event = events[position]
            previous = state.owner.get(token_id)
            if previous is not None:
                touched.add(previous)
            touched.add(event.owner)
            state.apply(token_id, event)
            position += 1
        yield day, state, touched


def collection_value_series(h: OwnershipHistory, include_mint_cost: bool = False) -> List[SeriesPoint]:
    """Sum over tokens of each token's latest BuySell price at the end of every day.

    Tokens never sold count as zero, or at their mint cost with
    ``include_mint_cost``.
    """
    return [SeriesPoint(day, state.total_value) for day, state, _ in _replay_days(h, include_mint_cost)]


def wallet_value_series(h: OwnershipHistory, include_mint_cost: bool = False) -> List[SeriesPoint]:
    """Mean value of the wallets holding at least one token; days without holders are omitted"""
    series = []
    for day, state, _ in _replay_days(h, include_mint_cost):
        if state.holders:
            series.append(SeriesPoint(day, (state.holder_value / state.holders).quantize(WEI)))
    return series


def holder_stats_series(h: OwnershipHistory) -> Tuple[List[SeriesPoint], List[SeriesPoint]]:
    """Unique holders per day, and tokens minted so far per holder"""
    unique, average = [], []
    for day, state, _ in _replay_days(h):
        unique.append(SeriesPoint(day, state.holders))
        if state.holders:
            average.append(SeriesPoint(day, len(state.minted) / state.holders))
    return unique, average


def daily_activity(transfers: Sequence[TokenTransfer]) -> DailyActivity:
    """Per-day BuySell count and volume, plus Transfer and Mint counts, zero-filled"""
    if any(t.tx_class is None for t in transfers):
        raise ValueError('transfers must be classified first')
    activity = DailyActivity()
    if not transfers:
        return activity

    counts: Dict[TxClass, Counter] = {tx_class: Counter() for tx_class in TxClass}
    volume: Dict[date, Decimal] = defaultdict(Decimal)
    for t in transfers:
        day = utc_day(t.timestamp)
        counts[t.tx_class][day] += 1
        if t.tx_class == TxClass.BUYSELL:
            volume[day] += t.price

    days = [utc_day(t.timestamp) for t in transfers]
    for day in _date_range(min(days), max(days)):
        activity.transactions.append(SeriesPoint(day, counts[TxClass.BUYSELL][day]))
        activity.volume.append(SeriesPoint(day, volume.get(day, Decimal(0))))
        activity.transfers.append(SeriesPoint(day, counts[TxClass.TRANSFER][day]))
        activity.mints.append(SeriesPoint(day, counts[TxClass.MINT][day]))
    return activity


def _daily_means(ratios: Dict[date, List[float]]) -> List[SeriesPoint]:
    return [SeriesPoint(day, math.fsum(values) / len(values)) for day, values in sorted(ratios.items())]


def price_multipliers(h: OwnershipHistory) -> PriceMultipliers:
    """Daily mean of sale price over mint cost, and over the token's first sale price.

    Tokens minted for free (or never seen minted) are left out of the
    mint-based series and tallied in ``excluded_tokens``.
    """
    vs_mint: Dict[date, List[float]] = defaultdict(list)
    vs_first: Dict[date, List[float]] = defaultdict(list)
    excluded = 0
    for token_id in sorted(h.tokens, key=token_sort_key):
        timeline = h.tokens[token_id]
        sales = [e for e in timeline.events if e.tx_class == TxClass.BUYSELL]
        if not sales:
            continue
        mint_cost = timeline.mint.mint_cost if timeline.mint else Decimal(0)
        if mint_cost <= 0:
            excluded += 1
        first_price = sales[0].price
        for position, sale in enumerate(sales):
            day = utc_day(sale.timestamp)
            if mint_cost > 0:
                vs_mint[day].append(float(sale.price / mint_cost))
            if position > 0:
                vs_first[day].append(float(sale.price / first_price))

    if excluded:
        logger.info(f'{excluded} traded tokens without a mint cost left out of the mint multiplier')
    return PriceMultipliers(vs_mint=_daily_means(vs_mint), vs_first_trade=_daily_means(vs_first),
                            excluded_tokens=excluded)


def tx_per_token_histogram(h: OwnershipHistory, include_transfers: bool = False) -> List[Tuple[int, int]]:
    """(k, number of tokens with k Mint and BuySell events), ascending in k"""
    counted = {TxClass.MINT, TxClass.BUYSELL}
    if include_transfers:
        counted.add(TxClass.TRANSFER)
    per_token = Counter(sum(1 for e in timeline.events if e.tx_class in counted) for timeline in h.tokens.values())
    return sorted(per_token.items())


def top_owner_flows(h: OwnershipHistory, n: int = 5) -> TopOwners:
    """Wallets ranked by their historical peak balance, with daily balance series.

    Ties go to the earlier peak date, then to the lower address.
    """
    peak: Dict[str, int] = {}
    peak_day: Dict[str, date] = {}
    for day, state, touched in _replay_days(h):
        for wallet in touched:
            if wallet == ZERO_ADDRESS:
                continue
            if state.balance[wallet] > peak.get(wallet, 0):
                peak[wallet] = state.balance[wallet]
                peak_day[wallet] = day

    ranked = sorted(peak, key=lambda w: (-peak[w], peak_day[w], w))
    note = None
    if n > len(ranked):
        note = f'requested {n} wallets but only {len(ranked)} ever held a token'
        logger.info(note)
    top = ranked[:n]

    balances: Dict[str, List[SeriesPoint]] = {wallet: [] for wallet in top}
    for day, state, _ in _replay_days(h):
        for wallet in top:
            balances[wallet].append(SeriesPoint(day, state.balance[wallet]))

    flows = [OwnerFlow(address=w, balances=balances[w], peak_balance=peak[w], peak_date=peak_day[w]) for w in top]
    return TopOwners(flows=flows, note=note)


def token_event_rows(h: OwnershipHistory) -> List[Dict[str, object]]:
    """Every ownership event of every token, for per-token price charts"""
    rows = []
    for token_id in sorted(h.tokens, key=token_sort_key):
        for event in h.tokens[token_id].events:
            rows.append({
                'token_id': token_id,
                'date': utc_day(event.timestamp).isoformat(),
                'timestamp': event.timestamp,
                'class': event.tx_class.value,
                'from': event.from_addr,
                'to': event.owner,
                'price': event.price,
                'tx_hash': event.tx_hash,
            })
    return rows


def usd_view(series: Iterable[SeriesPoint], eth_usd_rate: Decimal) -> List[SeriesPoint]:
    """The same series priced in USD at a constant rate"""
    return [SeriesPoint(point.day, (Decimal(point.value) * eth_usd_rate).quantize(WEI)) for point in series]


def daily_balances(h: OwnershipHistory) -> Dict[date, Counter]:
    """End-of-day balance of every wallet, the zero address included"""
    return {day: Counter(+state.balance) for day, state, _ in _replay_days(h)}


def minted_by_day(h: OwnershipHistory) -> Dict[date, int]:
    return {day: len(state.minted) for day, state, _ in _replay_days(h)}
