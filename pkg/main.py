#!/usr/bin/env python3
"""
NFT transaction network analysis - command-line entry point

Reconstructs per-collection wallet graphs from exported transaction files and
writes static and temporal network metrics as plot-ready report files.
"""

import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import click

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from analysis import connectivity, timeseries, topology
from analysis.graph import NftGraph, build_graph, export_graph, merge_graphs, weakly_connected_components
from analysis.ingest import normalize_records, parse_transactions, write_transfer_store
from analysis.ledger import (AccountBook, bulk_stats, classify_transfers, load_account_sidecar, merge_bulk_stats,
                             replay_ownership)
from config import MERGED_NAME, CollectionConfig, Config, RunConfig, get_config, load_run_config
from models import BulkStats, OwnershipHistory, RunManifest, TokenTransfer
from utils.errors import NftNetError, NonConvergenceError, PowerLawFitError
from utils.export_service import ExportService, Payload, Table, series_table

logger = logging.getLogger(__name__)

STAGES = ('ingest', 'stats', 'graph', 'topology', 'connectivity', 'timeseries', 'owners', 'report')


def _degree_ccdf(degrees) -> List[Tuple[int, float]]:
    values = topology.positive_values(list(degrees))
    return topology.ccdf(values) if values else []


def setup_logging(config: Config) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if config.LOG_FILE:
        handlers.append(logging.FileHandler(config.LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, str(config.LOG_LEVEL).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


@dataclass
class CollectionRun:
    """Lazily computed intermediate results of one collection"""
    collection: CollectionConfig
    run_config: RunConfig
    warnings: Dict[str, int] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.collection.name

    @cached_property
    def book(self) -> AccountBook:
        sidecar = load_account_sidecar(self.collection.sidecar_path) if self.collection.sidecar_path else {}
        return AccountBook(sidecar)

    @cached_property
    def transfers(self) -> List[TokenTransfer]:
        cfg = self.run_config
        parsed = parse_transactions(self.collection.csv_path, schema=cfg.schema, delimiter=cfg.delimiter,
                                    on_error=cfg.on_error, source_name=self.collection.csv_path.name)
        self.warnings['skipped_rows'] = parsed.skipped

        records = [r for r in parsed.records if r.contract == self.collection.contract]
        foreign = len(parsed.records) - len(records)
        if foreign:
            logger.warning(f'{self.name}: ignoring {foreign} rows for contracts other than {self.collection.contract}')
        self.warnings['foreign_contract_rows'] = foreign

        normalized = normalize_records(records, self.name, on_conflict=cfg.on_error)
        self.warnings['conflicting_transactions'] = len(normalized.conflicts)
        return classify_transfers(normalized.transfers)

    @cached_property
    def stats(self) -> BulkStats:
        return bulk_stats(self.transfers, self.book)

    @cached_property
    def graph(self) -> NftGraph:
        return build_graph(self.transfers, self.book, self.run_config.edge_filter)

    @cached_property
    def history(self) -> OwnershipHistory:
        h = replay_ownership(self.transfers)
        self.warnings['ownership_violations'] = h.violation_count
        return h


class NftAnalysisApplication:
    """Runs analysis stages over the configured collections and emits the report"""

    def __init__(self, run_config: RunConfig, out_dir: Path, seed: int, workers: int = 1, fmt: str = 'csv',
                 bootstrap: Optional[int] = None, powerlaw: bool = True,
                 collections: Sequence[str] = (), environment: Optional[str] = None):
        self.config = get_config(environment)
        self.run_config = run_config
        self.out_dir = Path(out_dir)
        self.seed = seed
        self.workers = max(1, workers)
        self.bootstrap = run_config.bootstrap_replicates if bootstrap is None else bootstrap
        self.powerlaw = powerlaw
        self.export = ExportService(self.config, self.out_dir, fmt)

        selected = [run_config.collection(name) for name in collections] if collections else run_config.collections
        self.runs = [CollectionRun(collection, run_config) for collection in selected]
        # the merged view only makes sense over the whole configuration
        self.with_merged = not collections

        self.results: Dict[str, Payload] = {}
        self.timings: Dict[str, float] = {}
        self.stages_run: List[str] = []
        self.extra_warnings: Dict[str, int] = {}
        self._cache: Dict[str, Any] = {}

    def _for_each_collection(self, fn: Callable[[CollectionRun], Any]) -> List[Any]:
        """Apply fn to every collection, concurrently, keeping configuration order"""
        if self.workers == 1 or len(self.runs) == 1:
            return [fn(run) for run in self.runs]
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            return list(executor.map(fn, self.runs))

    def _cached(self, key: str, compute: Callable[[], Any]) -> Any:
        if key not in self._cache:
            self._cache[key] = compute()
        return self._cache[key]

    def _warn(self, key: str, count: int = 1) -> None:
        self.extra_warnings[key] = self.extra_warnings.get(key, 0) + count

    @property
    def merged_book(self) -> AccountBook:
        def compute():
            book = AccountBook()
            for run in self.runs:
                book = book.merged_with(run.book)
            return book
        return self._cached('merged_book', compute)

    @property
    def merged_graph(self) -> NftGraph:
        return self._cached('merged_graph', lambda: merge_graphs([run.graph for run in self.runs]))

    def _graphs(self) -> List[Tuple[str, NftGraph]]:
        graphs = [(run.name, run.graph) for run in self.runs]
        if self.with_merged:
            graphs.append((MERGED_NAME, self.merged_graph))
        return graphs

    # Stages

    def stage_ingest(self) -> None:
        def write(run: CollectionRun):
            path = self.out_dir / run.name / 'transfers.csv'
            path.parent.mkdir(parents=True, exist_ok=True)
            write_transfer_store(run.transfers, path)
            return path

        for path in self._for_each_collection(write):
            self.export.track(path)

    def stage_stats(self) -> None:
        for run, stats in zip(self.runs, self._for_each_collection(lambda run: run.stats)):
            self.results[f'{run.name}/bulk_stats'] = stats.to_dict()
        if self.with_merged:
            self.results[f'{MERGED_NAME}/bulk_stats'] = self.merged_stats().to_dict()

    def merged_stats(self) -> BulkStats:
        return self._cached('merged_stats', lambda: merge_bulk_stats([run.transfers for run in self.runs],
                                                                    self.merged_book))

    def stage_graph(self) -> None:
        self._for_each_collection(lambda run: run.graph)
        for name, g in self._graphs():
            for path in export_graph(g, self.out_dir / name):
                self.export.track(path)
            components = weakly_connected_components(g)
            self.results[f'{name}/graph_stats'] = {
                'vertices': g.number_of_nodes(),
                'edges': g.number_of_edges(),
                'components': len(components),
                'largest_component': len(components[0]) if components else 0,
                'edge_filter': g.edge_filter.value,
            }

    def _fit(self, label: str, degrees: List[int]) -> Dict[str, Any]:
        values = topology.positive_values(degrees)
        try:
            if self.bootstrap > 0:
                fit = topology.fit_with_bootstrap(values, n_boot=self.bootstrap, seed=self.seed, workers=self.workers)
            else:
                fit = topology.fit_power_law(values)
        except PowerLawFitError as e:
            logger.warning(f'Power-law fit for {label} failed: {e}')
            self._warn('failed_powerlaw_fits')
            return {'error': str(e)}
        return fit.to_dict()

    def topology_of(self, name: str, g: NftGraph) -> Dict[str, Any]:
        def compute():
            cfg = self.run_config
            plain = topology.degree_sequences(g)
            with_mint = topology.degree_sequences(g, include_mint=True)
            in_seq = with_mint if cfg.include_mint_in_degree else plain
            out = {
                'ccdf_in': _degree_ccdf(in_seq.in_degree.values()),
                'ccdf_out': _degree_ccdf(plain.out_degree.values()),
                'ratio': topology.degree_ratio_cdf(in_seq),
                'distances': (topology.diameter_and_mean_distance(
                    g, exact_threshold=cfg.distance_exact_threshold, sample_size=cfg.distance_sample_size,
                    seed=self.seed) if g.number_of_nodes() else None),
                'fits': None,
            }
            if self.powerlaw:
                out['fits'] = {
                    'in': self._fit(f'{name} in-degree', list(plain.in_degree.values())),
                    'out': self._fit(f'{name} out-degree', list(plain.out_degree.values())),
                    'in_with_mint': self._fit(f'{name} in-degree with mints', list(with_mint.in_degree.values())),
                }
            return out
        return self._cached(f'topology:{name}', compute)

    def stage_topology(self) -> None:
        self._for_each_collection(lambda run: run.graph)
        for name, g in self._graphs():
            result = self.topology_of(name, g)
            self.results[f'{name}/ccdf_in'] = Table(['x', 'ccdf'], result['ccdf_in'])
            self.results[f'{name}/ccdf_out'] = Table(['x', 'ccdf'], result['ccdf_out'])
            ratio = result['ratio']
            self.results[f'{name}/ratio_cdf'] = Table(['ratio', 'cdf'], ratio.series)
            distances = result['distances']
            self.results[f'{name}/distances'] = {
                **(distances.to_dict() if distances else {}),
                'ratio_excluded_nodes': ratio.excluded,
            }
            if result['fits'] is not None:
                self.results[f'{name}/powerlaw'] = result['fits']

    def connectivity_of(self, name: str, g: NftGraph) -> Dict[str, Any]:
        def compute():
            cfg = self.run_config
            try:
                ranks = connectivity.pagerank(g, damping=cfg.pagerank_damping, tol=cfg.pagerank_tol,
                                              max_iter=cfg.pagerank_max_iter, weighted=cfg.pagerank_weighted)
                converged = True
            except NonConvergenceError as e:
                logger.warning(f'{name}: {e}; reporting the last iterate')
                self._warn('pagerank_nonconvergence')
                ranks, converged = e.last_iterate, False

            r = connectivity.assortativity(g)
            summary = {
                'reciprocity': connectivity.reciprocity(g),
                'transitivity': connectivity.transitivity(g),
                'assortativity': r,
                'assortativity_label': connectivity.classify_assortativity(r).value if r is not None else None,
                'pagerank_damping': cfg.pagerank_damping,
                'pagerank_weighted': cfg.pagerank_weighted,
                'pagerank_converged': converged,
            }
            if cfg.assortativity_directed:
                summary['assortativity_directed'] = connectivity.assortativity(g, directed=True)
            cores = connectivity.coreness(g)
            summary['max_coreness'] = max(cores.values(), default=0)
            return {
                'summary': summary,
                'pagerank_ccdf': connectivity.score_ccdf(ranks),
                'coreness_ccdf': connectivity.score_ccdf(cores),
            }
        return self._cached(f'connectivity:{name}', compute)

    def stage_connectivity(self) -> None:
        self._for_each_collection(lambda run: run.graph)
        for name, g in self._graphs():
            result = self.connectivity_of(name, g)
            self.results[f'{name}/connectivity'] = result['summary']
            self.results[f'{name}/pagerank_ccdf'] = Table(['score', 'ccdf'], result['pagerank_ccdf'])
            self.results[f'{name}/coreness_ccdf'] = Table(['score', 'ccdf'], result['coreness_ccdf'])

    def stage_timeseries(self) -> None:
        cfg = self.run_config
        rate = cfg.eth_usd_rate

        def compute(run: CollectionRun) -> Dict[str, Table]:
            h = run.history
            value = timeseries.collection_value_series(h, include_mint_cost=cfg.value_include_mint_cost)
            wallet = timeseries.wallet_value_series(h, include_mint_cost=cfg.value_include_mint_cost)
            unique, average = timeseries.holder_stats_series(h)
            activity = timeseries.daily_activity(run.transfers)
            multipliers = timeseries.price_multipliers(h)
            histogram = timeseries.tx_per_token_histogram(h, include_transfers=cfg.tx_per_token_include_transfers)
            events = timeseries.token_event_rows(h)
            event_columns = ['token_id', 'date', 'timestamp', 'class', 'from', 'to', 'price', 'tx_hash']
            return {
                'collection_value': series_table(value, usd_points=timeseries.usd_view(value, rate)),
                'wallet_value': series_table(wallet, usd_points=timeseries.usd_view(wallet, rate)),
                'unique_wallets': series_table(unique, 'wallets'),
                'avg_tokens_per_wallet': series_table(average, 'tokens_per_wallet'),
                'daily_transactions': series_table(activity.transactions, 'transactions'),
                'daily_volume': series_table(activity.volume, 'volume',
                                             usd_points=timeseries.usd_view(activity.volume, rate)),
                'daily_transfers': series_table(activity.transfers, 'transfers'),
                'daily_mints': series_table(activity.mints, 'mints'),
                'multiplier_vs_mint': series_table(multipliers.vs_mint, 'multiplier'),
                'multiplier_vs_first_trade': series_table(multipliers.vs_first_trade, 'multiplier'),
                'tx_per_token': Table(['transactions', 'tokens'], histogram),
                'token_events': Table(event_columns, [[row[c] for c in event_columns] for row in events]),
            }

        for run, tables in zip(self.runs, self._for_each_collection(compute)):
            for key, table in tables.items():
                self.results[f'{run.name}/{key}'] = table

    def stage_owners(self) -> None:
        n = self.run_config.top_owners
        for run, top in zip(self.runs, self._for_each_collection(lambda run: timeseries.top_owner_flows(run.history, n))):
            for flow in top.flows:
                self.results[f'{run.name}/owner_flow_{flow.address}'] = series_table(flow.balances, 'balance')
            self.results[f'{run.name}/top_owners'] = {
                'wallets': [flow.to_dict() for flow in top.flows],
                'note': top.note,
            }

    def stage_report(self) -> None:
        """Headline tables over all collections, plus the merged row when available"""
        self._for_each_collection(lambda run: run.graph)
        names = [run.name for run in self.runs]
        stats = [run.stats for run in self.runs]
        if self.with_merged:
            names.append(MERGED_NAME)
            stats.append(self.merged_stats())

        rate = self.run_config.eth_usd_rate
        collected = Table(['collection', 'wallets_total', 'wallets_eoa', 'wallets_ca', 'tx_total', 'tx_buysell',
                           'tx_transfer', 'tx_mint', 'volume_total', 'volume_total_usd', 'volume_max',
                           'volume_avg', 'volume_var'])
        for name, s in zip(names, stats):
            collected.rows.append([name, s.wallets_total, s.wallets_eoa, s.wallets_ca, s.tx_total, s.tx_buysell,
                                   s.tx_transfer, s.tx_mint, s.volume_total, s.volume_total * rate, s.volume_max,
                                   s.volume_avg, s.volume_var])

        network = Table(['collection', 'vertices', 'edges', 'diameter', 'mean_distance', 'exact'])
        fits = Table(['collection', 'degree', 'alpha', 'xmin', 'ks', 'p', 'n_tail', 'sigma'])
        links = Table(['collection', 'reciprocity', 'transitivity', 'assortativity', 'assortativity_label'])
        for name, g in self._graphs():
            shape = self.topology_of(name, g)
            distances = shape['distances']
            network.rows.append([name, g.number_of_nodes(), g.number_of_edges(),
                                 distances.diameter if distances else None,
                                 distances.mean_distance if distances else None,
                                 distances.exact if distances else None])
            for degree, fit in sorted((shape['fits'] or {}).items()):
                if 'error' in fit:
                    continue
                fits.rows.append([name, degree, fit['alpha'], fit['xmin'], fit['ks'], fit['p'],
                                  fit['n_tail'], fit['sigma']])
            summary = self.connectivity_of(name, g)['summary']
            links.rows.append([name, summary['reciprocity'], summary['transitivity'], summary['assortativity'],
                               summary['assortativity_label']])

        self.results['collected_data'] = collected
        self.results['network_stats'] = network
        self.results['powerlaw'] = fits
        self.results['connectivity'] = links

    def manifest(self) -> RunManifest:
        warnings: Dict[str, int] = dict(self.extra_warnings)
        for run in self.runs:
            for key, count in run.warnings.items():
                warnings[key] = warnings.get(key, 0) + count
            if 'book' in run.__dict__:
                warnings['defaulted_accounts'] = warnings.get('defaulted_accounts', 0) + run.book.warning_count
                run.book.log_summary(run.collection.name)
        return RunManifest(
            tool_version=self.config.TOOL_VERSION,
            config_hash=self.run_config.config_hash(self.seed),
            seed=self.seed,
            rng=self.config.RNG_ALGORITHM,
            eth_usd_rate=self.run_config.eth_usd_rate,
            stages=list(self.stages_run),
            timings=dict(self.timings),
            warnings=warnings,
        )

    def run(self, stages: Sequence[str]) -> List[Path]:
        for stage in stages:
            if stage not in STAGES:
                raise ValueError(f'unknown stage {stage}')
            logger.info(f'Running stage {stage} on {len(self.runs)} collection(s)')
            started = time.perf_counter()
            getattr(self, f'stage_{stage}')()
            self.timings[stage] = round(time.perf_counter() - started, 3)
            self.stages_run.append(stage)
            logger.info(f'Stage {stage} finished in {self.timings[stage]}s')
        return self.export.emit_report(self.results, self.manifest())


def run_options(fn):
    options = [
        click.option('--config', 'config_path', envvar='NFTNET_CONFIG', required=True,
                     type=click.Path(exists=True, dir_okay=False, path_type=Path),
                     help='JSON run configuration (defaults to $NFTNET_CONFIG)'),
        click.option('--out', 'out_dir', type=click.Path(file_okay=False, path_type=Path),
                     default=lambda: Config.NFTNET_OUTPUT_DIR, show_default='$NFTNET_OUTPUT_DIR or runs',
                     help='Run output directory'),
        click.option('--seed', type=int, default=lambda: Config.DEFAULT_SEED, help='Seed for every random draw'),
        click.option('--collection', 'collections', multiple=True, help='Restrict the run to these collections'),
        click.option('--workers', type=click.IntRange(min=1), default=lambda: Config.WORKERS,
                     help='Parallel workers for collections and bootstrap replicates'),
        click.option('--bootstrap', type=click.IntRange(min=0), default=None,
                     help='Bootstrap replicates for power-law p-values (0 skips them)'),
        click.option('--powerlaw/--no-powerlaw', default=True, help='Fit power laws to the degree distributions'),
        click.option('--format', 'fmt', type=click.Choice(['csv', 'json']), default='csv',
                     help='File format of tabular results'),
        click.option('--environment', '-e', type=click.Choice(['development', 'production', 'testing']),
                     default=None, help='Configuration profile'),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def execute(stages: Sequence[str], config_path: Path, out_dir: Path, seed: int, collections: Tuple[str, ...],
            workers: int, bootstrap: Optional[int], powerlaw: bool, fmt: str, environment: Optional[str]) -> None:
    setup_logging(get_config(environment))
    try:
        run_config = load_run_config(config_path, get_config(environment))
        app = NftAnalysisApplication(run_config, out_dir, seed=seed, workers=workers, fmt=fmt,
                                     bootstrap=bootstrap, powerlaw=powerlaw, collections=collections,
                                     environment=environment)
        app.run(stages)
    except (NftNetError, OSError) as e:
        logger.error(f'Run failed: {e}')
        click.echo(f'Error: {e}', err=True)
        sys.exit(1)


@click.group()
@click.version_option(Config.TOOL_VERSION, prog_name='nftnet')
def cli():
    """NFT transaction network analysis"""


def _stage_command(stage: str, help_text: str):
    @run_options
    def command(**options):
        execute([stage], **options)
    command.__doc__ = help_text
    cli.command(name=stage)(command)


_stage_command('ingest', 'Parse and normalize transaction files into per-token transfer stores.')
_stage_command('stats', 'Wallet, transaction and volume totals per collection.')
_stage_command('graph', 'Build and export the wallet graphs.')
_stage_command('topology', 'Degree distributions, distances and power-law fits.')
_stage_command('connectivity', 'Reciprocity, transitivity, assortativity, PageRank and coreness.')
_stage_command('timeseries', 'Daily valuation, activity and price multiplier series.')
_stage_command('owners', 'Balance flows of the wallets with the highest peak holdings.')
_stage_command('report', 'Headline tables across collections.')


@cli.command(name='all')
@run_options
def run_all(**options):
    """Run every stage in order."""
    execute(list(STAGES), **options)


def main():
    """Main entry point"""
    cli()


if __name__ == '__main__':
    main()
