from dataclasses import replace
from decimal import Decimal

import networkx as nx
import pytest

from analysis.graph import build_graph, export_graph, load_graph, merge_graphs, weakly_connected_components
from analysis.ledger import AccountBook
from models import ZERO_ADDRESS, AccountKind, EdgeFilter

from conftest import addr, graph_from_edges, mint, random_graph, random_trace, transfer

A, B, C, D = addr(1), addr(2), addr(3), addr(4)


def sample_transfers():
    return [
        mint(1, A, '0.08'),
        mint(2, A, '0.08', offset_ms=1),
        mint(3, C, '0.08', offset_ms=2),
        transfer(1, A, B, '1.5', day=1),
        transfer(2, A, B, '2', day=1, offset_ms=1),
        transfer(1, B, D, '0', day=2),
        transfer(2, B, B, '0', day=2, offset_ms=1),
        transfer(2, B, ZERO_ADDRESS, '0', day=3),
        transfer(3, C, A, '1', day=3, offset_ms=1),
    ]


@pytest.fixture
def book():
    return AccountBook({C: AccountKind.CA})


class TestBuildGraph:
    def test_nodes_and_edges(self, book):
        g = build_graph(sample_transfers(), book)
        assert g.nodes == sorted([A, B, D])
        assert g.number_of_edges() == 3
        assert [(u, v, data['weight']) for u, v, data in g.edges()] == [
            (A, B, Decimal('1.5')), (A, B, Decimal(2)), (B, D, Decimal(0))]

    def test_mints_are_node_parameters(self, book):
        g = build_graph(sample_transfers(), book)
        assert g.mint_count(A) == 2
        assert g.mint_spend(A) == Decimal('0.16')
        assert g.mint_count(B) == 0
        assert C not in g.graph

    def test_buysell_only(self, book):
        g = build_graph(sample_transfers(), book, edge_filter=EdgeFilter.BUYSELL_ONLY)
        assert g.nodes == sorted([A, B])
        assert g.number_of_edges() == 2
        assert g.edge_filter == EdgeFilter.BUYSELL_ONLY

    def test_self_loops_on_request(self, book):
        g = build_graph(sample_transfers(), book, allow_self_loops=True)
        assert g.graph.has_edge(B, B)
        assert g.number_of_edges() == 4

    def test_needs_classified_input(self, book):
        with pytest.raises(ValueError):
            build_graph([replace(transfer(1, A, B, '1'), tx_class=None)], book)

    def test_graph_is_frozen(self, book):
        g = build_graph(sample_transfers(), book)
        with pytest.raises(nx.NetworkXError):
            g.graph.add_edge(A, D)

    def test_no_zero_address_or_contracts(self, rng):
        transfers = random_trace(rng) + [transfer(0, addr(100), ZERO_ADDRESS, day=40)]
        g = build_graph(transfers, AccountBook({addr(101): AccountKind.CA}))
        assert ZERO_ADDRESS not in g.graph
        assert addr(101) not in g.graph
        assert all(u != v for u, v in g.graph.edges())


class TestProjections:
    def test_multiplicity_weights(self):
        g = graph_from_edges([('a', 'b'), ('a', 'b'), ('b', 'a'), ('c', 'c')])
        weighted = g.simple_directed()
        assert weighted['a']['b']['weight'] == 2
        assert weighted['b']['a']['weight'] == 1
        assert not weighted.has_edge('c', 'c')
        assert g.simple_directed(weighted=False)['a']['b']['weight'] == 1

    def test_undirected_collapses_directions(self):
        g = graph_from_edges([('a', 'b'), ('b', 'a'), ('b', 'c')], nodes=['d'])
        simple = g.simple_undirected()
        assert simple.number_of_edges() == 2
        assert sorted(simple.nodes) == ['a', 'b', 'c', 'd']


class TestMergeGraphs:
    def test_sums_node_parameters_and_keeps_edges(self):
        left = graph_from_edges([('a', 'b')], mints={'a': 2})
        right = graph_from_edges([('a', 'b'), ('c', 'a')], mints={'a': 1, 'c': 4})
        merged = merge_graphs([left, right])
        assert merged.number_of_edges() == 3
        assert merged.mint_count('a') == 3
        assert merged.mint_count('c') == 4
        assert merged.nodes == ['a', 'b', 'c']

    def test_mixed_filters(self):
        left = graph_from_edges([('a', 'b')])
        right = graph_from_edges([('a', 'b')], edge_filter=EdgeFilter.BUYSELL_ONLY)
        with pytest.raises(ValueError):
            merge_graphs([left, right])

    def test_nothing_to_merge(self):
        assert merge_graphs([]).number_of_nodes() == 0


def test_weakly_connected_components_order():
    g = graph_from_edges([('d', 'e'), ('b', 'c'), ('x', 'y'), ('y', 'z')], nodes=['a'])
    assert weakly_connected_components(g) == [['x', 'y', 'z'], ['b', 'c'], ['d', 'e'], ['a']]


def test_export_and_load(tmp_path, rng):
    g = build_graph(random_trace(rng), AccountBook())
    nodes_path, edges_path = export_graph(g, tmp_path / 'graph')

    assert nodes_path.read_text(encoding='utf-8').splitlines()[0] == 'address,mint_count,mint_spend'
    assert len(edges_path.read_text(encoding='utf-8').splitlines()) == g.number_of_edges() + 1

    loaded = load_graph(tmp_path / 'graph')
    assert loaded.nodes == g.nodes
    assert [loaded.mint_count(a) for a in loaded.nodes] == [g.mint_count(a) for a in g.nodes]
    assert [loaded.mint_spend(a) for a in loaded.nodes] == [g.mint_spend(a) for a in g.nodes]
    assert list(loaded.edges()) == list(g.edges())


def test_merging_a_graph_with_itself_doubles_edges():
    g = graph_from_edges([('a', 'b'), ('b', 'c')], mints={'a': 1})
    merged = merge_graphs([g, g])
    assert merged.number_of_edges() == 4
    assert merged.mint_count('a') == 2
    assert merge_graphs([graph_from_edges([('a', 'b')]), graph_from_edges([('c', 'd')])]).number_of_nodes() == 4


def test_components_match_union_find(rng):
    for _ in range(20):
        g = random_graph(rng, 50, 0.03)
        parent = {node: node for node in g.nodes}

        def find(node):
            while parent[node] != node:
                node = parent[node]
            return node

        for u, v in g.graph.edges():
            parent[find(u)] = find(v)
        expected = {}
        for node in g.nodes:
            expected.setdefault(find(node), []).append(node)
        assert sorted(map(sorted, expected.values())) == sorted(weakly_connected_components(g))
