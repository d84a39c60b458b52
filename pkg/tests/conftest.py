import csv
import json
from decimal import Decimal
from itertools import combinations
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pytest

from analysis.graph import NftGraph
from analysis.ledger import classify_transfers
from models import ZERO_ADDRESS, EdgeFilter, OwnershipHistory, TokenTransfer, TxClass

DAY_MS = 86_400_000
# 2021-01-28 00:00:00 UTC
T0 = 1_611_792_000_000
CONTRACT = '0x' + 'c0' * 20
OTHER_CONTRACT = '0x' + 'c1' * 20
EXPORT_COLUMNS = ['tx_hash', 'contract', 'seller', 'buyer', 'block_time_ms', 'block_number',
                  'eth_value', 'weth_value', 'token_ids']


def addr(n: int) -> str:
    return '0x' + format(n, '040x')


def tx_hash(n: int) -> str:
    return '0x' + format(n, '064x')


def transfer(token_id, from_addr, to_addr, price='0', day=0, offset_ms=0, n=None, collection='c',
             tx_class: Optional[TxClass] = None) -> TokenTransfer:
    """A classified transfer at T0 + day days + offset_ms"""
    timestamp = T0 + day * DAY_MS + offset_ms
    t = TokenTransfer(
        collection=collection,
        token_id=str(token_id),
        from_addr=from_addr,
        to_addr=to_addr,
        price=Decimal(str(price)).quantize(Decimal('1e-18')),
        timestamp=timestamp,
        block_number=timestamp // 1000,
        tx_hash=tx_hash(n if n is not None else timestamp * 100 + int(token_id) % 100),
        tx_class=tx_class,
    )
    return t if tx_class else classify_transfers([t])[0]


def mint(token_id, to_addr, price='0', day=0, offset_ms=0, **kwargs) -> TokenTransfer:
    return transfer(token_id, ZERO_ADDRESS, to_addr, price, day, offset_ms, **kwargs)


def graph_from_edges(edges: Iterable[Tuple[str, str]], nodes: Sequence[str] = (),
                     mints: Optional[Dict[str, int]] = None,
                     edge_filter: EdgeFilter = EdgeFilter.BUYSELL_AND_TRANSFER) -> NftGraph:
    """An NftGraph with one BuySell edge per (u, v) pair listed"""
    graph = nx.MultiDiGraph()
    for node in nodes:
        graph.add_node(node, mint_count=0, mint_spend=Decimal(0))
    for i, (u, v) in enumerate(edges):
        for node in (u, v):
            if node not in graph:
                graph.add_node(node, mint_count=0, mint_spend=Decimal(0))
        graph.add_edge(u, v, weight=Decimal(1), token_id=str(i), timestamp=T0 + i, tx_class=TxClass.BUYSELL,
                       collection='c')
    for node, count in (mints or {}).items():
        if node not in graph:
            graph.add_node(node, mint_count=0, mint_spend=Decimal(0))
        graph.nodes[node]['mint_count'] = count
    return NftGraph(graph, edge_filter)


def random_graph(rng: np.random.Generator, n: int, p: float, directed: bool = True) -> NftGraph:
    seed = int(rng.integers(2 ** 31))
    base = nx.gnp_random_graph(n, p, seed=seed, directed=directed)
    names = {i: f'w{i:03d}' for i in base.nodes}
    return graph_from_edges([(names[u], names[v]) for u, v in base.edges()], nodes=list(names.values()))


def random_trace(rng: np.random.Generator, n_tokens: int = 20, n_events: int = 200, n_wallets: int = 8,
                 days: int = 30) -> List[TokenTransfer]:
    """A consistent classified history: every token is minted, then moved by its owner"""
    wallets = [addr(100 + i) for i in range(n_wallets)]
    owner = {}
    transfers = []
    for token in range(n_tokens):
        to = wallets[int(rng.integers(n_wallets))]
        owner[token] = to
        price = ['0', '0.05', '0.1'][int(rng.integers(3))]
        transfers.append(mint(token, to, price, day=int(rng.integers(3)), offset_ms=token))
    for k in range(n_events):
        token = int(rng.integers(n_tokens))
        seller = owner[token]
        buyer = wallets[int(rng.integers(n_wallets))]
        price = '0' if rng.random() < 0.3 else str(round(float(rng.uniform(0.01, 5.0)), 3))
        transfers.append(transfer(token, seller, buyer, price, day=3 + k * days // n_events,
                                  offset_ms=1000 + k, n=10_000 + k))
        owner[token] = buyer
    return transfers


# Oracles

def floyd_warshall(g: nx.Graph) -> Tuple[int, float]:
    """Diameter and mean distance of a connected undirected graph, by Floyd-Warshall"""
    nodes = sorted(g.nodes)
    index = {node: i for i, node in enumerate(nodes)}
    n = len(nodes)
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0)
    for u, v in g.edges():
        dist[index[u], index[v]] = dist[index[v], index[u]] = 1
    for k in range(n):
        dist = np.minimum(dist, dist[:, k:k + 1] + dist[k:k + 1, :])
    pairs = [dist[i, j] for i, j in combinations(range(n), 2)]
    if not pairs:
        return 0, 0.0
    return int(max(pairs)), float(sum(pairs)) / len(pairs)


def dense_pagerank(g: NftGraph, damping: float = 0.85, weighted: bool = True) -> Dict[str, float]:
    nodes = g.nodes
    n = len(nodes)
    index = {node: i for i, node in enumerate(nodes)}
    w = np.zeros((n, n))
    for u, v in g.graph.edges():
        if u != v:
            w[index[u], index[v]] = w[index[u], index[v]] + 1 if weighted else 1
    ranks = np.full(n, 1.0 / n)
    for _ in range(10_000):
        updated = np.zeros(n)
        for i in range(n):
            out = w[i].sum()
            if out == 0:
                updated += damping * ranks[i] / n
            else:
                updated += damping * ranks[i] * w[i] / out
        updated += (1 - damping) / n
        if np.abs(updated - ranks).sum() < 1e-15:
            ranks = updated
            break
        ranks = updated
    return {node: float(ranks[index[node]]) for node in nodes}


def peel_coreness(g: nx.Graph) -> Dict[str, int]:
    """Coreness by repeatedly deleting every node of degree below k"""
    core = {}
    remaining = g.copy()
    k = 0
    while remaining.number_of_nodes():
        while True:
            low = [node for node, degree in remaining.degree() if degree <= k]
            if not low:
                break
            for node in low:
                core[node] = k
            remaining.remove_nodes_from(low)
        k += 1
    return core


def brute_force_transitivity(g: nx.Graph) -> float:
    triangles = 0
    for a, b, c in combinations(sorted(g.nodes), 3):
        if g.has_edge(a, b) and g.has_edge(b, c) and g.has_edge(a, c):
            triangles += 1
    triples = sum(d * (d - 1) // 2 for _, d in g.degree())
    return 3 * triangles / triples if triples else 0.0


def rescan_holdings(h: OwnershipHistory, cutoff: int,
                    include_mint_cost: bool = False) -> Tuple[Dict[str, str], Dict[str, Decimal]]:
    """Owner and valuation of every token at ``cutoff``, rebuilt from each timeline alone"""
    owner, price = {}, {}
    for token_id, timeline in h.tokens.items():
        seen = [e for e in timeline.events if e.timestamp <= cutoff]
        if not seen:
            continue
        owner[token_id] = seen[-1].owner
        sales = [e for e in seen if e.tx_class == TxClass.BUYSELL]
        mints = [e for e in seen if e.tx_class == TxClass.MINT]
        if sales:
            price[token_id] = sales[-1].price
        elif include_mint_cost and mints:
            price[token_id] = mints[-1].price
        else:
            price[token_id] = Decimal(0)
    return owner, price


# Export files

def write_export(path, rows: List[Dict[str, str]]) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=EXPORT_COLUMNS, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def export_row(n: int, seller: str, buyer: str, eth='0', weth='0', tokens=('1',), day=0, offset_ms=0,
               contract: str = CONTRACT) -> Dict[str, str]:
    timestamp = T0 + day * DAY_MS + offset_ms
    return {
        'tx_hash': tx_hash(n),
        'contract': contract,
        'seller': seller,
        'buyer': buyer,
        'block_time_ms': str(timestamp),
        'block_number': str(timestamp // 1000),
        'eth_value': eth,
        'weth_value': weth,
        'token_ids': ';'.join(tokens),
    }


def synthetic_export(seed: int, n_tokens: int = 40, n_trades: int = 160, n_wallets: int = 16,
                     contract: str = CONTRACT) -> List[Dict[str, str]]:
    """Mints in small batches followed by trades, plus one WETH refund duplicate and one foreign-contract row"""
    rng = np.random.Generator(np.random.PCG64(seed))
    wallets = [addr(1000 + seed * 100 + i) for i in range(n_wallets)]
    rows = []
    owner = {}
    n = seed * 100_000
    token = 0
    while token < n_tokens:
        batch = [str(t) for t in range(token, min(n_tokens, token + int(rng.integers(1, 4))))]
        buyer = wallets[int(rng.integers(n_wallets))]
        rows.append(export_row(n, ZERO_ADDRESS, buyer, eth=str(Decimal('0.08') * len(batch)), tokens=batch,
                               day=int(rng.integers(2)), offset_ms=token, contract=contract))
        for t in batch:
            owner[t] = buyer
        token += len(batch)
        n += 1
    for k in range(n_trades):
        t = str(int(rng.integers(n_tokens)))
        # skewed buyer choice so in-degrees are heavy-tailed
        buyer = wallets[min(n_wallets - 1, int(rng.zipf(1.6)) - 1)]
        price = '0' if rng.random() < 0.2 else str(round(float(rng.uniform(0.05, 4.0)), 4))
        rows.append(export_row(n, owner[t], buyer, eth=price, tokens=(t,), day=2 + k // 8, offset_ms=k,
                               contract=contract))
        if k == 5:
            rows.append(export_row(n, owner[t], buyer, weth=price, tokens=(t,), day=2 + k // 8, offset_ms=k,
                                   contract=contract))
        owner[t] = buyer
        n += 1
    foreign = OTHER_CONTRACT if contract == CONTRACT else CONTRACT
    rows.append(export_row(n, wallets[0], wallets[1], eth='1', tokens=('999',), day=3, contract=foreign))
    return rows


@pytest.fixture
def run_config_path(tmp_path):
    """Two synthetic collections, one with an account sidecar"""
    data = tmp_path / 'data'
    data.mkdir()
    write_export(data / 'alpha.csv', synthetic_export(1))
    write_export(data / 'beta.csv', synthetic_export(2, contract=OTHER_CONTRACT))
    with open(data / 'alpha_accounts.csv', 'w', encoding='utf-8') as handle:
        handle.write('address,kind\n')
        handle.write(f'{addr(1100 + 3)},ca\n')
        handle.write(f'{addr(1100 + 4)},eoa\n')

    config = {
        'collections': [
            {'name': 'alpha', 'contract': CONTRACT, 'csv_path': 'data/alpha.csv',
             'sidecar_path': 'data/alpha_accounts.csv'},
            {'name': 'beta', 'contract': OTHER_CONTRACT, 'csv_path': 'data/beta.csv'},
        ],
        'eth_usd_rate': 2000,
        'bootstrap_replicates': 5,
        'distance_exact_threshold': 2000,
    }
    path = tmp_path / 'run.json'
    path.write_text(json.dumps(config), encoding='utf-8')
    return path


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(20210128))
