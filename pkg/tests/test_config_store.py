"""
Tests for run configuration, environment helpers and the artifact store.
"""

import pytest

from config import (
    CONFIG_VERSION,
    RunConfig,
    cache_dir,
    config_from_mapping,
    default_workers,
    load_config,
    log_level,
    save_config,
)
from errors import ConfigError, StaleArtifactError
from store import (
    MANIFEST_VERSION,
    ArtifactStore,
    artifact_key,
    check_input_hashes,
    get_path_hash,
    load_manifest,
    save_manifest,
)


class TestRunConfig:
    """Tests for RunConfig validation and hashing."""

    def test_defaults_are_valid(self):
        config = RunConfig()
        assert config.effective_rho_max == 25
        assert config.pipeline_config().k == 50

    def test_invalid_fields_are_collected(self):
        with pytest.raises(ConfigError) as exc:
            RunConfig(k=0, learner='svm')
        assert set(exc.value.fields) == {'k', 'learner'}

    def test_dpa_needs_identity_or_per_partition_map(self):
        with pytest.raises(ConfigError) as exc:
            RunConfig(strategy='dpa-hash', feature_map='pca')
        assert 'per_partition' in exc.value.fields
        assert RunConfig(strategy='dpa-hash', feature_map='pca', per_partition=True).per_partition

    def test_hash_ignores_workers_and_output_dir(self):
        base = RunConfig()
        assert RunConfig(workers=4, output_dir='elsewhere').config_hash() == base.config_hash()
        assert RunConfig(k=7).config_hash() != base.config_hash()

    def test_explicit_rho_max(self):
        assert RunConfig(k=10, rho_max=2).effective_rho_max == 2

    def test_sub_configs(self):
        config = RunConfig(learner='logistic-regression', epochs=3, feature_map='pca', out_dim=5)
        assert config.learner_config().epochs == 3
        assert config.feature_map_config().out_dim == 5
        assert config.pipeline_config().learner.kind == 'logistic-regression'


class TestConfigFile:
    """Tests for the KEY=value config files."""

    def test_text_starts_with_version(self):
        text = RunConfig().to_text()
        assert text.splitlines()[0] == f"CONFIG_VERSION={CONFIG_VERSION}"
        assert 'MERGE_LABELS=false' in text.splitlines()

    def test_save_and_load(self, tmp_path):
        config = RunConfig(train_path='train.csv', train_format='csv', k=7, equalize=True, learning_rate=0.25)
        path = tmp_path / 'run.env'
        save_config(config, str(path))
        assert load_config(str(path)) == config

    def test_missing_version(self):
        with pytest.raises(ConfigError) as exc:
            config_from_mapping({'K': '3'})
        assert 'config_version' in exc.value.fields

    def test_wrong_version(self):
        with pytest.raises(ConfigError) as exc:
            config_from_mapping({'CONFIG_VERSION': '2'})
        assert 'config_version' in exc.value.fields

    def test_unknown_key_and_bad_value(self):
        with pytest.raises(ConfigError) as exc:
            config_from_mapping({'CONFIG_VERSION': '1', 'FOO': 'x', 'K': 'drei', 'EQUALIZE': 'vielleicht'})
        assert set(exc.value.fields) == {'foo', 'k', 'equalize'}

    def test_lowercase_keys(self):
        assert config_from_mapping({'config_version': '1', 'k': '4'}).k == 4


class TestEnvironment:
    """Tests for environment driven defaults."""

    def test_cache_dir_override_wins(self, monkeypatch):
        monkeypatch.setenv('DPA_CACHE_DIR', '/tmp/from-env')
        assert cache_dir() == '/tmp/from-env'
        assert cache_dir('/tmp/flag') == '/tmp/flag'

    def test_cache_dir_default(self, monkeypatch):
        monkeypatch.delenv('DPA_CACHE_DIR', raising=False)
        assert cache_dir().endswith('cache')

    def test_workers(self, monkeypatch):
        monkeypatch.setenv('DPA_WORKERS', '4')
        assert default_workers() == 4
        monkeypatch.setenv('DPA_WORKERS', 'viele')
        with pytest.raises(ConfigError):
            default_workers()

    def test_log_level(self, monkeypatch):
        monkeypatch.delenv('LOG_LEVEL', raising=False)
        assert log_level() == 'INFO'
        monkeypatch.setenv('LOG_LEVEL', 'debug')
        assert log_level() == 'DEBUG'


class TestArtifactStore:
    """Tests for the content-addressed cache."""

    def test_put_and_get(self, tmp_path):
        store = ArtifactStore(str(tmp_path))
        store.put('abc', b'blob')
        assert store.get('abc') == b'blob'
        assert store.get('missing') is None

    def test_kinds_are_separate(self, tmp_path):
        store = ArtifactStore(str(tmp_path))
        store.put('abc', b'model')
        store.put('abc', b'map', kind='fmaps')
        assert store.get('abc') == b'model'
        assert store.get('abc', kind='fmaps') == b'map'

    def test_no_temp_files_left(self, tmp_path):
        store = ArtifactStore(str(tmp_path))
        store.put('abc', b'blob')
        assert [p.name for p in (tmp_path / 'models').iterdir()] == ['abc.npz']

    def test_key_separates_parts(self):
        assert artifact_key('a', 'bc') != artifact_key('ab', 'c')
        assert artifact_key('a', 1) == artifact_key('a', '1')


class TestManifest:
    """Tests for manifests and stale-input detection."""

    def test_version_is_stamped(self, tmp_path):
        path = tmp_path / 'manifest.json'
        save_manifest(str(path), {'k': 3})
        assert load_manifest(str(path)) == {'k': 3, 'manifest_version': MANIFEST_VERSION}

    def test_unknown_version(self, tmp_path):
        path = tmp_path / 'manifest.json'
        path.write_text('{"manifest_version": 99}')
        with pytest.raises(StaleArtifactError):
            load_manifest(str(path))

    def test_changed_input(self, tmp_path):
        data = tmp_path / 'train.csv'
        data.write_text('1,2,0\n')
        manifest = {'input_hashes': {str(data): get_path_hash(str(data))}}
        check_input_hashes(manifest)

        data.write_text('1,2,1\n')
        with pytest.raises(StaleArtifactError):
            check_input_hashes(manifest)

    def test_missing_input(self, tmp_path):
        with pytest.raises(StaleArtifactError):
            check_input_hashes({'input_hashes': {str(tmp_path / 'gone.csv'): 'x'}})

    def test_directory_hash(self, tmp_path):
        folder = tmp_path / 'images'
        (folder / '0').mkdir(parents=True)
        (folder / '0' / 'a.png').write_bytes(b'a')
        before = get_path_hash(str(folder))
        assert get_path_hash(str(folder)) == before
        (folder / '0' / 'b.png').write_bytes(b'b')
        assert get_path_hash(str(folder)) != before
