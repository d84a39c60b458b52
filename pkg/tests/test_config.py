import inspect
import json
import os
from decimal import Decimal

import pytest

from analysis.topology import diameter_and_mean_distance
from config import DEFAULT_SCHEMA, Config, get_config, load_run_config
from models import EdgeFilter
from utils.errors import ConfigError

from conftest import CONTRACT


def write_config(tmp_path, **overrides):
    (tmp_path / 'export.csv').write_text('', encoding='utf-8')
    raw = {'collections': [{'name': 'alpha', 'contract': CONTRACT.upper().replace('0X', '0x'),
                            'csv_path': 'export.csv'}]}
    raw.update(overrides)
    path = tmp_path / 'run.json'
    path.write_text(json.dumps(raw), encoding='utf-8')
    return path


def collection(name='alpha', contract=CONTRACT, csv_path='export.csv'):
    return {'name': name, 'contract': contract, 'csv_path': csv_path}


class TestLoadRunConfig:
    def test_defaults(self, tmp_path):
        run = load_run_config(write_config(tmp_path), get_config('testing'))
        [alpha] = run.collections
        assert alpha.contract == CONTRACT
        assert alpha.csv_path == tmp_path / 'export.csv'
        assert alpha.sidecar_path is None
        assert run.bootstrap_replicates == 100
        assert run.edge_filter == EdgeFilter.BUYSELL_AND_TRANSFER
        assert run.schema == DEFAULT_SCHEMA
        assert run.pagerank_damping == 0.85

    def test_overrides(self, tmp_path):
        path = write_config(tmp_path, eth_usd_rate='1850.5', edge_filter='buysell_only',
                            pagerank={'damping': 0.9, 'weighted': False}, schema={'block_time': 'timestamp'},
                            top_owners=3)
        run = load_run_config(path)
        assert run.eth_usd_rate == Decimal('1850.5')
        assert run.edge_filter == EdgeFilter.BUYSELL_ONLY
        assert (run.pagerank_damping, run.pagerank_weighted) == (0.9, False)
        assert run.schema['block_time'] == 'timestamp'
        assert run.top_owners == 3

    @pytest.mark.parametrize('overrides', [
        {'collections': []},
        {'collections': [collection(name='merged')]},
        {'collections': [collection(name='../escape')]},
        {'collections': [collection(), collection()]},
        {'collections': [collection(contract='0x1234')]},
        {'collections': [collection(csv_path='missing.csv')]},
        {'collections': [{'name': 'alpha'}]},
        {'schema': {'gas': 'gas_used'}},
        {'on_error': 'ignore'},
        {'edge_filter': 'everything'},
        {'bootstrap_replicates': 'many'},
    ])
    def test_rejects(self, tmp_path, overrides):
        with pytest.raises(ConfigError):
            load_run_config(write_config(tmp_path, **overrides))

    def test_not_json(self, tmp_path):
        path = tmp_path / 'run.json'
        path.write_text('collections: []', encoding='utf-8')
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_unknown_collection(self, tmp_path):
        run = load_run_config(write_config(tmp_path))
        with pytest.raises(ConfigError):
            run.collection('beta')

    def test_hash_depends_on_seed_and_settings(self, tmp_path):
        run = load_run_config(write_config(tmp_path))
        assert run.config_hash(1) == run.config_hash(1)
        assert run.config_hash(1) != run.config_hash(2)
        other = load_run_config(write_config(tmp_path, top_owners=9))
        assert other.config_hash(1) != run.config_hash(1)


def test_environment_profiles():
    assert get_config('testing').BOOTSTRAP_REPLICATES == 100
    assert get_config('unknown').RNG_ALGORITHM == 'PCG64'


def test_default_distance_threshold_covers_large_collections():
    # HashMasks' largest component has 7,174 wallets
    default = inspect.signature(diameter_and_mean_distance).parameters['exact_threshold'].default
    assert default >= 7174
    if 'DISTANCE_EXACT_THRESHOLD' not in os.environ:
        assert Config.DISTANCE_EXACT_THRESHOLD == default


def test_environment_variable_picks_the_profile(monkeypatch):
    monkeypatch.setenv('ENVIRONMENT', 'testing')
    assert get_config().BOOTSTRAP_REPLICATES == 100
    monkeypatch.delenv('ENVIRONMENT')
    assert type(get_config()) is Config
