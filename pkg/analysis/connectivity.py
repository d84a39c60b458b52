import logging
import math
import warnings
from typing import Dict, List, Mapping, Optional, Tuple

import networkx as nx
import numpy as np

from analysis.graph import NftGraph
from models import AssortativityLabel, Number
from utils.errors import NonConvergenceError, UndefinedMetricError

logger = logging.getLogger(__name__)


def reciprocity(g: NftGraph) -> float:
    """Share of directed links whose reverse link also exists"""
    simple = g.simple_directed()
    if simple.number_of_edges() == 0:
        return 0.0
    return float(nx.overall_reciprocity(simple))


def transitivity(g: NftGraph) -> float:
    return float(nx.transitivity(g.simple_undirected()))


def assortativity(g: NftGraph, directed: bool = False) -> Optional[float]:
    """Pearson correlation of endpoint degrees, None when it is undefined.

    The default runs on total degrees of the undirected simple projection;
    ``directed`` correlates source out-degree with target in-degree on the
    directed one. Edgeless and regular graphs have no defined coefficient.
    """
    simple = g.simple_directed(weighted=False) if directed else g.simple_undirected()
    if simple.number_of_edges() == 0:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', RuntimeWarning)
        if directed:
            r = nx.degree_assortativity_coefficient(simple, x='out', y='in')
        else:
            r = nx.degree_assortativity_coefficient(simple)
    if r is None or math.isnan(r):
        logger.info('Assortativity undefined: endpoint degrees have zero variance')
        return None
    return float(r)


def classify_assortativity(r: Optional[float]) -> AssortativityLabel:
    if r is None:
        raise UndefinedMetricError('cannot classify an undefined assortativity coefficient')
    if not -1.0 - 1e-9 <= r <= 1.0 + 1e-9:
        raise ValueError(f'assortativity must lie in [-1, 1], got {r}')
    if r >= 0.6:
        return AssortativityLabel.STRONGLY_ASSORTATIVE
    if r >= 0.2:
        return AssortativityLabel.WEAKLY_ASSORTATIVE
    if r > -0.2:
        return AssortativityLabel.NEUTRAL
    if r > -0.6:
        return AssortativityLabel.WEAKLY_DISASSORTATIVE
    return AssortativityLabel.STRONGLY_DISASSORTATIVE


def pagerank(g: NftGraph, damping: float = 0.85, tol: float = 1e-10, max_iter: int = 200,
             weighted: bool = True) -> Dict[str, float]:
    """PageRank by power iteration on the directed simple projection.

    Parallel edges become integer multiplicity weights unless ``weighted`` is
    off. The rank of wallets without outgoing links is spread uniformly.
    Iteration stops once the L1 change drops below ``tol``.
    """
    nodes = g.nodes
    n = len(nodes)
    if n == 0:
        return {}

    simple = g.simple_directed(weighted=weighted)
    matrix = nx.to_scipy_sparse_array(simple, nodelist=nodes, weight='weight', format='csr', dtype=float)
    out_strength = np.asarray(matrix.sum(axis=1)).ravel()
    dangling = out_strength == 0
    scale = np.divide(1.0, out_strength, out=np.zeros(n), where=~dangling)
    # row-stochastic transition matrix, transposed for the pull update
    transition = (matrix.multiply(scale[:, None])).T.tocsr()

    ranks = np.full(n, 1.0 / n)
    for iteration in range(1, max_iter + 1):
        updated = damping * (transition @ ranks + ranks[dangling].sum() / n) + (1.0 - damping) / n
        change = np.abs(updated - ranks).sum()
        ranks = updated
        if change < tol:
            logger.debug(f'PageRank converged after {iteration} iterations')
            ranks = ranks / ranks.sum()
            return {node: float(score) for node, score in zip(nodes, ranks)}

    raise NonConvergenceError(
        f'PageRank did not converge within {max_iter} iterations (last L1 change {change:.3e})',
        last_iterate={node: float(score) for node, score in zip(nodes, ranks)},
        iterations=max_iter,
    )


def coreness(g: NftGraph) -> Dict[str, int]:
    """k-core number of every wallet on the undirected simple projection"""
    cores = nx.core_number(g.simple_undirected())
    return {node: int(cores[node]) for node in sorted(cores)}


def score_ccdf(scores: Mapping[str, Number]) -> List[Tuple[Number, float]]:
    """(score, share of wallets scoring at least that much), ascending"""
    if not scores:
        return []
    values = np.asarray(list(scores.values()))
    uniq, counts = np.unique(values, return_counts=True)
    n = len(values)
    at_least = n - np.concatenate(([0], np.cumsum(counts)[:-1]))
    return [(score.item(), int(k) / n) for score, k in zip(uniq, at_least)]
