"""Degree statistics, distances and discrete power-law fitting.

Power laws are fitted the maximum-likelihood way: for every candidate lower
cutoff the exponent maximizes the discrete log-likelihood normalized by the
Hurwitz zeta function, and the cutoff kept is the one whose fitted law sits
closest to the data in Kolmogorov-Smirnov distance. Goodness of fit comes
from a semiparametric bootstrap.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta

from analysis.graph import NftGraph, weakly_connected_components
from models import DegreeSequence, DistanceStats, PowerLawFit, RatioCdf
from utils.errors import DegenerateDataError, PowerLawFitError

logger = logging.getLogger(__name__)

MIN_TAIL = 10
ALPHA_BOUNDS = (1.0 + 1e-6, 12.0)
ALPHA_XATOL = 1e-10
# Samples of the fitted law are capped so int64 never overflows
SAMPLE_CAP = 10 ** 12


def degree_sequences(g: NftGraph, include_mint: bool = False) -> DegreeSequence:
    """Multigraph degrees; with ``include_mint`` every mint counts as an incoming edge"""
    in_degree = {node: degree for node, degree in g.graph.in_degree()}
    out_degree = {node: degree for node, degree in g.graph.out_degree()}
    if include_mint:
        for node in in_degree:
            in_degree[node] += g.mint_count(node)
    return DegreeSequence(in_degree=dict(sorted(in_degree.items())), out_degree=dict(sorted(out_degree.items())))


def ccdf(values: Sequence[int]) -> List[Tuple[int, float]]:
    """(x, P(X >= x)) over the distinct values, in ascending x"""
    if len(values) == 0:
        raise ValueError('ccdf of an empty sample')
    uniq, counts = np.unique(np.asarray(values, dtype=np.int64), return_counts=True)
    n = int(counts.sum())
    at_least = n - np.concatenate(([0], np.cumsum(counts)[:-1]))
    return [(int(x), int(k) / n) for x, k in zip(uniq, at_least)]


def degree_ratio_cdf(seq: DegreeSequence) -> RatioCdf:
    """CDF of in/out degree ratios; nodes without outgoing edges are excluded and counted"""
    ratios = []
    excluded = 0
    for node in seq.nodes:
        out = seq.out_degree[node]
        if out == 0:
            excluded += 1
            continue
        ratios.append(seq.in_degree[node] / out)
    if not ratios:
        return RatioCdf(series=[], excluded=excluded)

    uniq, counts = np.unique(np.asarray(ratios, dtype=float), return_counts=True)
    cumulative = np.cumsum(counts)
    n = len(ratios)
    return RatioCdf(series=[(float(r), int(k) / n) for r, k in zip(uniq, cumulative)], excluded=excluded)


def diameter_and_mean_distance(g: NftGraph, exact_threshold: int = 10000, sample_size: int = 500,
                               seed: int = 0) -> DistanceStats:
    """Diameter and mean shortest-path length of the largest weakly connected component.

    Distances are hop counts on the undirected simple projection and the mean
    runs over unordered connected pairs. Components larger than
    ``exact_threshold`` are estimated from BFS trees rooted at ``sample_size``
    seeded random sources, in which case the diameter is a lower bound.
    """
    if g.number_of_nodes() == 0:
        raise ValueError('distances of an empty graph')

    component = weakly_connected_components(g)[0]
    n = len(component)
    if n == 1:
        return DistanceStats(diameter=0, mean_distance=0.0, exact=True, component_size=1)
    projection = g.simple_undirected().subgraph(component)

    exact = n <= exact_threshold
    if exact:
        sources = component
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        picked = rng.choice(n, size=min(sample_size, n), replace=False)
        sources = [component[i] for i in sorted(picked)]
        logger.info(f'Estimating distances from {len(sources)} of {n} sources')

    total = 0
    diameter = 0
    for source in sources:
        lengths = nx.single_source_shortest_path_length(projection, source)
        total += sum(lengths.values())
        diameter = max(diameter, max(lengths.values()))

    return DistanceStats(
        diameter=diameter,
        mean_distance=total / (len(sources) * (n - 1)),
        exact=exact,
        component_size=n,
        sampled_sources=0 if exact else len(sources),
    )


def _check_values(values: Sequence[int]) -> np.ndarray:
    data = np.asarray(values, dtype=np.int64)
    if data.size and data.min() < 1:
        raise ValueError('power-law fits need positive integers; drop zero degrees first')
    return np.sort(data)


def _fit_alpha(tail: np.ndarray, xmin: int) -> float:
    n = tail.size
    log_sum = float(np.log(tail).sum())

    def neg_log_likelihood(alpha):
        return alpha * log_sum + n * math.log(zeta(alpha, xmin))

    result = minimize_scalar(neg_log_likelihood, bounds=ALPHA_BOUNDS, method='bounded',
                             options={'xatol': ALPHA_XATOL})
    return float(result.x)


def _ks_distance(tail: np.ndarray, alpha: float, xmin: int) -> float:
    """Sup distance between the empirical and fitted CDFs over x >= xmin"""
    uniq, counts = np.unique(tail, return_counts=True)
    empirical = np.cumsum(counts) / tail.size
    norm = zeta(alpha, xmin)
    model = 1.0 - zeta(alpha, uniq + 1) / norm
    distance = np.abs(empirical - model).max()

    # between two observed values the empirical CDF is flat while the model keeps rising
    gaps = uniq[1:] - 1
    if gaps.size:
        before_next = 1.0 - zeta(alpha, gaps + 1) / norm
        distance = max(distance, np.abs(empirical[:-1] - before_next).max())
    # with an overridden xmin the model may put mass below the first observation
    if uniq[0] > xmin:
        distance = max(distance, float(1.0 - zeta(alpha, uniq[0]) / norm))
    return float(distance)


def _fit_at(data: np.ndarray, xmin: int) -> Optional[PowerLawFit]:
    tail = data[data >= xmin]
    if tail.size < MIN_TAIL or tail[0] == tail[-1]:
        return None
    alpha = _fit_alpha(tail, xmin)
    return PowerLawFit(
        alpha=alpha,
        xmin=int(xmin),
        ks_stat=_ks_distance(tail, alpha, xmin),
        n_tail=int(tail.size),
        sigma=(alpha - 1.0) / math.sqrt(tail.size),
    )


def fit_power_law(values: Sequence[int], xmin_override: Optional[int] = None) -> PowerLawFit:
    """Discrete power-law fit with the KS-minimizing lower cutoff.

    Raises ``DegenerateDataError`` when every value is the same and
    ``PowerLawFitError`` when no cutoff leaves at least ten tail samples.
    """
    data = _check_values(values)
    if data.size and data[0] == data[-1]:
        raise DegenerateDataError(f'all {data.size} values equal {int(data[0])}')

    if xmin_override is not None:
        fit = _fit_at(data, int(xmin_override))
        if fit is None:
            raise PowerLawFitError(f'xmin={xmin_override} leaves fewer than {MIN_TAIL} distinct-valued tail samples')
        return fit

    best: Optional[PowerLawFit] = None
    for xmin in np.unique(data):
        fit = _fit_at(data, int(xmin))
        if fit is None:
            # tails only shrink as xmin grows
            break
        logger.debug(f'xmin={fit.xmin} alpha={fit.alpha:.4f} ks={fit.ks_stat:.5f} n_tail={fit.n_tail}')
        if best is None or fit.ks_stat < best.ks_stat:
            best = fit

    if best is None:
        raise PowerLawFitError(f'no xmin leaves at least {MIN_TAIL} tail samples among {data.size} values')
    return best


def sample_discrete_power_law(alpha: float, xmin: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from P(x) = x^-alpha / zeta(alpha, xmin), x >= xmin.

    A continuous approximation gives the starting guess. Steps doubling away
    from it bracket each draw on the exact survival function
    S(x) = zeta(alpha, x) / zeta(alpha, xmin), and bisection settles it on
    the x with S(x + 1) < u <= S(x). Draws beyond SAMPLE_CAP are capped.
    """
    if alpha <= 1:
        raise ValueError(f'alpha must exceed 1, got {alpha}')
    if size == 0:
        return np.zeros(0, dtype=np.int64)

    u = 1.0 - rng.random(size)
    guess = np.floor((xmin - 0.5) * u ** (-1.0 / (alpha - 1.0)) + 0.5)
    x = np.clip(guess, xmin, SAMPLE_CAP).astype(np.int64)
    norm = zeta(alpha, xmin)

    def reaches(points: np.ndarray, idx: np.ndarray) -> np.ndarray:
        return (zeta(alpha, points) / norm >= u[idx]) & (points <= SAMPLE_CAP)

    # invariant: S(lo) >= u > S(hi), with S(xmin) = 1 and SAMPLE_CAP + 1 out of reach
    upward = reaches(x, np.arange(size))
    lo = np.where(upward, x, xmin)
    hi = np.where(upward, SAMPLE_CAP + 1, x)
    step = 1
    idx = np.arange(size)
    while idx.size:
        up = upward[idx]
        candidate = np.where(up, np.minimum(x[idx] + step, SAMPLE_CAP + 1), np.maximum(x[idx] - step, xmin))
        hit = reaches(candidate, idx)
        lo[idx[hit]] = candidate[hit]
        hi[idx[~hit]] = candidate[~hit]
        idx = idx[np.where(up, hit & (candidate < SAMPLE_CAP), ~hit)]
        step *= 2

    idx = np.flatnonzero(hi - lo > 1)
    while idx.size:
        mid = (lo[idx] + hi[idx]) // 2
        hit = reaches(mid, idx)
        lo[idx[hit]] = mid[hit]
        hi[idx[~hit]] = mid[~hit]
        idx = idx[hi[idx] - lo[idx] > 1]
    return lo


def _replicate_ks(args) -> Optional[float]:
    """KS distance of one refitted synthetic dataset, None when the refit fails"""
    index, seed_seq, body, n, n_tail, alpha, xmin, xmin_override = args
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    k = int(rng.binomial(n, n_tail / n))
    tail = sample_discrete_power_law(alpha, xmin, k, rng)
    head = rng.choice(body, size=n - k, replace=True) if n - k else np.zeros(0, dtype=np.int64)
    synthetic = np.concatenate((head, tail))
    try:
        return fit_power_law(synthetic, xmin_override=xmin_override).ks_stat
    except PowerLawFitError as e:
        logger.warning(f'Bootstrap replicate {index} failed: {e}')
        return None


def bootstrap_p_value(values: Sequence[int], fit: PowerLawFit, n_boot: int, seed: int, workers: int = 1,
                      xmin_override: Optional[int] = None) -> float:
    """Fraction of synthetic datasets fitting no better than the data.

    Each replicate keeps the empirical values below ``xmin`` for its body and
    draws its tail from the fitted law, then refits it the way the data was
    fitted: with the same fixed ``xmin_override`` when one is given, with a
    fresh cutoff search otherwise. Replicates get their own generator
    spawned from ``seed`` and are combined in replicate order, so the result
    does not depend on ``workers``.
    """
    if n_boot < 1:
        raise ValueError(f'n_boot must be at least 1, got {n_boot}')
    data = _check_values(values)
    n = int(data.size)
    body = data[data < fit.xmin]
    n_tail = n - body.size

    children = np.random.SeedSequence(seed).spawn(n_boot)
    tasks = [(i, child, body, n, n_tail, fit.alpha, fit.xmin, xmin_override) for i, child in enumerate(children)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_replicate_ks, tasks, chunksize=max(1, n_boot // (workers * 4))))
    else:
        results = [_replicate_ks(task) for task in tasks]

    scores = [ks for ks in results if ks is not None]
    failed = n_boot - len(scores)
    if failed:
        logger.warning(f'{failed} of {n_boot} bootstrap replicates failed and were excluded')
    if not scores:
        raise PowerLawFitError(f'all {n_boot} bootstrap replicates failed')
    return sum(1 for ks in scores if ks >= fit.ks_stat) / len(scores)


def fit_with_bootstrap(values: Sequence[int], n_boot: int, seed: int, workers: int = 1,
                       xmin_override: Optional[int] = None) -> PowerLawFit:
    fit = fit_power_law(values, xmin_override=xmin_override)
    p = bootstrap_p_value(values, fit, n_boot=n_boot, seed=seed, workers=workers, xmin_override=xmin_override)
    logger.info(f'Power-law fit alpha={fit.alpha:.3f} xmin={fit.xmin} ks={fit.ks_stat:.4f} p={p:.3f}')
    return replace(fit, p_value=p, n_boot=n_boot, seed=seed)


def positive_values(degrees: Sequence[int]) -> List[int]:
    return [d for d in degrees if d > 0]
