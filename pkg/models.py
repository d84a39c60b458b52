from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

ZERO_ADDRESS = '0x' + '0' * 40

# Wei resolution: every monetary amount carries exactly 18 fractional digits
WEI = Decimal('1e-18')

Number = Union[int, float, Decimal]


def token_sort_key(token_id: str) -> Tuple[int, str]:
    """Numeric order for decimal token identifiers"""
    stripped = token_id.lstrip('0') or '0'
    return len(stripped), stripped


class AccountKind(str, Enum):
    EOA = 'eoa'
    CA = 'ca'


class TxClass(str, Enum):
    MINT = 'mint'
    TRANSFER = 'transfer'
    BUYSELL = 'buysell'


class EdgeFilter(str, Enum):
    BUYSELL_AND_TRANSFER = 'buysell_and_transfer'
    BUYSELL_ONLY = 'buysell_only'

    def admits(self, tx_class: TxClass) -> bool:
        if tx_class == TxClass.BUYSELL:
            return True
        return tx_class == TxClass.TRANSFER and self == EdgeFilter.BUYSELL_AND_TRANSFER


class AssortativityLabel(str, Enum):
    STRONGLY_ASSORTATIVE = 'strongly_assortative'
    WEAKLY_ASSORTATIVE = 'weakly_assortative'
    NEUTRAL = 'neutral'
    WEAKLY_DISASSORTATIVE = 'weakly_disassortative'
    STRONGLY_DISASSORTATIVE = 'strongly_disassortative'


@dataclass(frozen=True)
class TxRecord:
    """One row of an exported transaction file"""
    tx_hash: str
    contract: str
    seller: str
    buyer: str
    block_time: int
    block_number: int
    eth_value: Decimal
    weth_value: Decimal
    token_ids: Tuple[str, ...]
    line: int = field(default=0, compare=False)

    @property
    def total_value(self) -> Decimal:
        # ETH and WETH are interchangeable at parity
        return self.eth_value + self.weth_value

    def to_dict(self) -> Dict[str, Any]:
        return {
            'tx_hash': self.tx_hash,
            'contract': self.contract,
            'seller': self.seller,
            'buyer': self.buyer,
            'block_time': self.block_time,
            'block_number': self.block_number,
            'eth_value': self.eth_value,
            'weth_value': self.weth_value,
            'token_ids': list(self.token_ids),
        }


@dataclass(frozen=True)
class ResolvedTransaction:
    """A transaction whose duplicate records were collapsed to a single cost"""
    tx_hash: str
    contract: str
    seller: str
    buyer: str
    block_time: int
    block_number: int
    cost: Decimal
    token_ids: Tuple[str, ...]


@dataclass(frozen=True)
class TokenTransfer:
    collection: str
    token_id: str
    from_addr: str
    to_addr: str
    price: Decimal
    timestamp: int
    block_number: int
    tx_hash: str
    tx_class: Optional[TxClass] = None

    @property
    def sort_key(self) -> Tuple[int, int, str, Tuple[int, str]]:
        return self.timestamp, self.block_number, self.tx_hash, token_sort_key(self.token_id)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'collection': self.collection,
            'token_id': self.token_id,
            'from': self.from_addr,
            'to': self.to_addr,
            'price': self.price,
            'timestamp': self.timestamp,
            'block_number': self.block_number,
            'tx_hash': self.tx_hash,
            'class': self.tx_class.value if self.tx_class else '',
        }


@dataclass
class ParseResult:
    records: List[TxRecord] = field(default_factory=list)
    errors: List[Exception] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return len(self.errors)


@dataclass
class BulkStats:
    wallets_total: int = 0
    wallets_eoa: int = 0
    wallets_ca: int = 0
    tx_total: int = 0
    tx_buysell: int = 0
    tx_transfer: int = 0
    tx_mint: int = 0
    volume_total: Decimal = Decimal(0)
    volume_max: Decimal = Decimal(0)
    volume_avg: Decimal = Decimal(0)
    volume_var: Decimal = Decimal(0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'wallets_total': self.wallets_total,
            'wallets_eoa': self.wallets_eoa,
            'wallets_ca': self.wallets_ca,
            'tx_total': self.tx_total,
            'tx_buysell': self.tx_buysell,
            'tx_transfer': self.tx_transfer,
            'tx_mint': self.tx_mint,
            'volume_total': self.volume_total,
            'volume_max': self.volume_max,
            'volume_avg': self.volume_avg,
            'volume_var': self.volume_var,
        }


@dataclass(frozen=True)
class MintRecord:
    minter: str
    mint_cost: Decimal
    mint_time: int


@dataclass(frozen=True)
class OwnershipEvent:
    owner: str
    from_addr: str
    price: Decimal
    timestamp: int
    block_number: int
    tx_hash: str
    tx_class: TxClass

    @property
    def sort_key(self) -> Tuple[int, int, str]:
        return self.timestamp, self.block_number, self.tx_hash


@dataclass
class TokenTimeline:
    token_id: str
    mint: Optional[MintRecord] = None
    events: List[OwnershipEvent] = field(default_factory=list)

    @property
    def owner(self) -> Optional[str]:
        return self.events[-1].owner if self.events else None

    def owner_at(self, t: int) -> Optional[str]:
        owner = None
        for event in self.events:
            if event.timestamp > t:
                break
            owner = event.owner
        return owner


@dataclass
class OwnershipHistory:
    """Per-token ownership timelines of one collection"""
    collection: str
    tokens: Dict[str, TokenTimeline] = field(default_factory=dict)
    violations: List[str] = field(default_factory=list)

    @property
    def violation_count(self) -> int:
        return len(self.violations)

    def events(self) -> List[Tuple[str, OwnershipEvent]]:
        """All events across tokens in replay order"""
        pairs = [(token_id, event) for token_id, timeline in self.tokens.items() for event in timeline.events]
        pairs.sort(key=lambda pair: (pair[1].sort_key, token_sort_key(pair[0])))
        return pairs

    def owner_at(self, token_id: str, t: int) -> Optional[str]:
        timeline = self.tokens.get(token_id)
        return timeline.owner_at(t) if timeline else None

    def balances_at(self, t: int) -> Counter:
        # Burned tokens stay on the zero address so balances always sum to the supply
        balances: Counter = Counter()
        for timeline in self.tokens.values():
            owner = timeline.owner_at(t)
            if owner is not None:
                balances[owner] += 1
        return balances

    def minted_count_at(self, t: int) -> int:
        return sum(1 for timeline in self.tokens.values()
                   if timeline.mint is not None and timeline.mint.mint_time <= t)


@dataclass(frozen=True)
class DegreeSequence:
    in_degree: Dict[str, int]
    out_degree: Dict[str, int]

    @property
    def nodes(self) -> List[str]:
        return sorted(self.in_degree)


@dataclass
class PowerLawFit:
    alpha: float
    xmin: int
    ks_stat: float
    n_tail: int
    sigma: float
    p_value: Optional[float] = None
    n_boot: Optional[int] = None
    seed: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'alpha': self.alpha,
            'xmin': self.xmin,
            'ks': self.ks_stat,
            'p': self.p_value,
            'n_tail': self.n_tail,
            'n_boot': self.n_boot,
            'seed': self.seed,
            'sigma': self.sigma,
        }


@dataclass(frozen=True)
class RatioCdf:
    series: List[Tuple[float, float]]
    excluded: int


@dataclass(frozen=True)
class DistanceStats:
    diameter: int
    mean_distance: float
    exact: bool
    component_size: int
    sampled_sources: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'diameter': self.diameter,
            'mean_distance': self.mean_distance,
            'exact': self.exact,
            'component_size': self.component_size,
            'sampled_sources': self.sampled_sources,
        }


@dataclass(frozen=True)
class SeriesPoint:
    day: date
    value: Number


@dataclass
class DailyActivity:
    transactions: List[SeriesPoint] = field(default_factory=list)
    volume: List[SeriesPoint] = field(default_factory=list)
    transfers: List[SeriesPoint] = field(default_factory=list)
    mints: List[SeriesPoint] = field(default_factory=list)


@dataclass
class PriceMultipliers:
    vs_mint: List[SeriesPoint] = field(default_factory=list)
    vs_first_trade: List[SeriesPoint] = field(default_factory=list)
    excluded_tokens: int = 0


@dataclass
class OwnerFlow:
    address: str
    balances: List[SeriesPoint]
    peak_balance: int
    peak_date: Optional[date]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'address': self.address,
            'peak_balance': self.peak_balance,
            'peak_date': self.peak_date.isoformat() if self.peak_date else None,
        }


@dataclass
class TopOwners:
    flows: List[OwnerFlow]
    note: Optional[str] = None


@dataclass
class RunManifest:
    tool_version: str
    config_hash: str
    seed: int
    rng: str
    eth_usd_rate: Decimal
    stages: List[str] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    warnings: Dict[str, int] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'tool_version': self.tool_version,
            'config_hash': self.config_hash,
            'seed': self.seed,
            'rng': self.rng,
            'eth_usd_rate': self.eth_usd_rate,
            'stages': list(self.stages),
            'timings': dict(sorted(self.timings.items())),
            'warnings': dict(sorted(self.warnings.items())),
            'files': sorted(self.files),
        }
