"""Multi-directed weighted wallet graph.

Nodes are wallets, each edge is one token moving between two EoAs. Mints
never become edges: the tokens a wallet received from the zero address and
what it paid for them are kept on the node as ``mint_count`` and
``mint_spend``.
"""
import csv
import logging
import os
from collections import Counter
from decimal import Decimal
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Sequence, Tuple

import networkx as nx

from analysis.ingest import format_price
from analysis.ledger import AccountBook
from models import ZERO_ADDRESS, EdgeFilter, TokenTransfer, TxClass, token_sort_key

logger = logging.getLogger(__name__)

NODE_COLUMNS = ['address', 'mint_count', 'mint_spend']
EDGE_COLUMNS = ['from', 'to', 'weight', 'token_id', 'timestamp', 'class', 'collection']


class NftGraph:
    """Immutable wrapper around a networkx MultiDiGraph of wallets"""

    def __init__(self, graph: nx.MultiDiGraph, edge_filter: EdgeFilter = EdgeFilter.BUYSELL_AND_TRANSFER):
        self.graph = nx.freeze(graph)
        self.edge_filter = edge_filter

    def __repr__(self):
        return f'<NftGraph {self.number_of_nodes()} nodes, {self.number_of_edges()} edges>'

    def number_of_nodes(self) -> int:
        return self.graph.number_of_nodes()

    def number_of_edges(self) -> int:
        return self.graph.number_of_edges()

    @property
    def nodes(self) -> List[str]:
        return sorted(self.graph.nodes)

    def mint_count(self, address: str) -> int:
        return self.graph.nodes[address]['mint_count']

    def mint_spend(self, address: str) -> Decimal:
        return self.graph.nodes[address]['mint_spend']

    def edges(self) -> Iterator[Tuple[str, str, Dict[str, Any]]]:
        return iter(sorted(self.graph.edges(data=True), key=_edge_order))

    def simple_directed(self, weighted: bool = True) -> nx.DiGraph:
        """Parallel edges collapsed into a ``weight`` multiplicity, self-loops dropped"""
        simple = nx.DiGraph()
        simple.add_nodes_from(self.nodes)
        multiplicity = Counter((u, v) for u, v in self.graph.edges() if u != v)
        for (u, v), count in sorted(multiplicity.items()):
            simple.add_edge(u, v, weight=count if weighted else 1)
        return simple

    def simple_undirected(self) -> nx.Graph:
        simple = nx.Graph()
        simple.add_nodes_from(self.nodes)
        simple.add_edges_from(sorted({tuple(sorted((u, v))) for u, v in self.graph.edges() if u != v}))
        return simple


def _edge_order(edge: Tuple[str, str, Dict[str, Any]]):
    u, v, data = edge
    return data['timestamp'], data['collection'], token_sort_key(data['token_id']), u, v, data['weight']


def _add_wallet(graph: nx.MultiDiGraph, address: str) -> None:
    if address not in graph:
        graph.add_node(address, mint_count=0, mint_spend=Decimal(0))


def build_graph(transfers: Iterable[TokenTransfer], kinds: AccountBook,
                edge_filter: EdgeFilter = EdgeFilter.BUYSELL_AND_TRANSFER,
                allow_self_loops: bool = False) -> NftGraph:
    """One edge per admitted transfer between two EoAs; mints become node parameters"""
    graph = nx.MultiDiGraph()
    dropped: Counter = Counter()
    for t in sorted(transfers, key=lambda t: (t.sort_key, t.collection)):
        if t.tx_class is None:
            raise ValueError('transfers must be classified first')

        if t.tx_class == TxClass.MINT:
            if kinds.is_eoa(t.to_addr):
                _add_wallet(graph, t.to_addr)
                graph.nodes[t.to_addr]['mint_count'] += 1
                graph.nodes[t.to_addr]['mint_spend'] += t.price
            else:
                dropped['mint_to_contract'] += 1
            continue
        if not edge_filter.admits(t.tx_class):
            dropped['filtered_class'] += 1
            continue
        if t.from_addr == t.to_addr and not allow_self_loops:
            dropped['self_loop'] += 1
            continue
        if ZERO_ADDRESS in (t.from_addr, t.to_addr):
            dropped['burn'] += 1
            continue
        if not (kinds.is_eoa(t.from_addr) and kinds.is_eoa(t.to_addr)):
            dropped['contract_endpoint'] += 1
            continue

        _add_wallet(graph, t.from_addr)
        _add_wallet(graph, t.to_addr)
        graph.add_edge(t.from_addr, t.to_addr, weight=t.price, token_id=t.token_id,
                       timestamp=t.timestamp, tx_class=t.tx_class, collection=t.collection)

    logger.info(f'Built graph with {graph.number_of_nodes()} nodes and {graph.number_of_edges()} edges '
                f'(dropped: {dict(sorted(dropped.items()))})')
    return NftGraph(graph, edge_filter)


def merge_graphs(graphs: Sequence[NftGraph]) -> NftGraph:
    """Multigraph union: node parameters add up, every edge is kept"""
    filters = {g.edge_filter for g in graphs}
    if len(filters) > 1:
        raise ValueError(f'cannot merge graphs built with different edge filters: {sorted(f.value for f in filters)}')

    merged = nx.MultiDiGraph()
    for g in graphs:
        for address, data in g.graph.nodes(data=True):
            _add_wallet(merged, address)
            merged.nodes[address]['mint_count'] += data['mint_count']
            merged.nodes[address]['mint_spend'] += data['mint_spend']
    for g in graphs:
        for u, v, data in g.edges():
            merged.add_edge(u, v, **data)

    edge_filter = filters.pop() if filters else EdgeFilter.BUYSELL_AND_TRANSFER
    logger.info(f'Merged {len(graphs)} graphs into {merged.number_of_nodes()} nodes '
                f'and {merged.number_of_edges()} edges')
    return NftGraph(merged, edge_filter)


def weakly_connected_components(g: NftGraph) -> List[List[str]]:
    """Components ignoring direction, largest first, ties by smallest address"""
    parts = [sorted(component) for component in nx.weakly_connected_components(g.graph)]
    parts.sort(key=lambda part: (-len(part), part[0]))
    return parts


def export_graph(g: NftGraph, directory: os.PathLike) -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    nodes_path = directory / 'nodes.csv'
    edges_path = directory / 'edges.csv'

    with open(nodes_path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(NODE_COLUMNS)
        for address in g.nodes:
            writer.writerow([address, g.mint_count(address), format_price(g.mint_spend(address))])

    with open(edges_path, 'w', encoding='utf-8', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(EDGE_COLUMNS)
        for u, v, data in g.edges():
            writer.writerow([u, v, format_price(data['weight']), data['token_id'], data['timestamp'],
                             data['tx_class'].value, data['collection']])
    return [nodes_path, edges_path]


def load_graph(directory: os.PathLike, edge_filter: EdgeFilter = EdgeFilter.BUYSELL_AND_TRANSFER) -> NftGraph:
    directory = Path(directory)
    graph = nx.MultiDiGraph()
    with open(directory / 'nodes.csv', encoding='utf-8', newline='') as handle:
        for row in csv.DictReader(handle):
            graph.add_node(row['address'], mint_count=int(row['mint_count']),
                           mint_spend=Decimal(row['mint_spend']))
    with open(directory / 'edges.csv', encoding='utf-8', newline='') as handle:
        for row in csv.DictReader(handle):
            _add_wallet(graph, row['from'])
            _add_wallet(graph, row['to'])
            graph.add_edge(row['from'], row['to'], weight=Decimal(row['weight']), token_id=row['token_id'],
                           timestamp=int(row['timestamp']), tx_class=TxClass(row['class']),
                           collection=row['collection'])
    return NftGraph(graph, edge_filter)
