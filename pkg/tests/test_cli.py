"""
Tests for the dpa command line.
"""

import json
import os

import pytest

from cli import EXIT_COUNTEREXAMPLE, EXIT_ERROR, EXIT_OK, EXIT_REFUSED, main
from dataset import read_dataset
from report import read_certificates


def run(capsys, *argv):
    """Runs the CLI quietly and returns (exit code, parsed stdout)."""
    code = main(['--quiet', *argv])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


@pytest.fixture
def data_args(toy_csv_files):
    train_csv, test_csv = toy_csv_files
    return ['--train', train_csv, '--train-format', 'csv', '--test', test_csv, '--test-format', 'csv', '--k', '3']


@pytest.fixture
def trained_run(tmp_path, capsys, data_args):
    cache = str(tmp_path / 'cache')
    run_dir = str(tmp_path / 'run')
    code, out = run(capsys, '--cache-dir', cache, 'train', *data_args, '--output-dir', run_dir)
    assert code == EXIT_OK
    return cache, run_dir, out


class TestTrain:
    """Tests for dpa train."""

    def test_writes_run_directory(self, trained_run):
        cache, run_dir, out = trained_run
        assert out == {'run_dir': run_dir, 'k': 3, 'trained': 3, 'cached': 0}
        for name in ('manifest.json', 'config.env', 'plan.json', 'plan.bin', 'feature_map.npz'):
            assert os.path.exists(os.path.join(run_dir, name)), name

        with open(os.path.join(run_dir, 'manifest.json')) as f:
            manifest = json.load(f)
        assert manifest['strategy'] == 'ssdpa-sort'
        assert manifest['partition_sizes'] == [2, 2, 2]
        assert len(manifest['model_keys']) == 3

    def test_second_run_is_cached(self, tmp_path, capsys, trained_run, data_args):
        cache, run_dir, _ = trained_run
        code, out = run(capsys, '--cache-dir', cache, 'train', *data_args, '--output-dir', run_dir)
        assert code == EXIT_OK
        assert out['cached'] == 3
        assert out['trained'] == 0

    def test_missing_training_data(self, tmp_path, capsys):
        code, _ = run(capsys, '--cache-dir', str(tmp_path), 'train', '--output-dir', str(tmp_path / 'run'))
        assert code == EXIT_ERROR

    def test_invalid_config_value(self, tmp_path, capsys, data_args):
        code, _ = run(capsys, 'train', *data_args, '--learner', 'svm', '--output-dir', str(tmp_path / 'run'))
        assert code == EXIT_ERROR


class TestCertifyAndCurve:
    """Tests for dpa certify and dpa curve."""

    def test_certify(self, capsys, trained_run):
        cache, run_dir, _ = trained_run
        code, summary = run(capsys, '--cache-dir', cache, 'certify', run_dir)
        assert code == EXIT_OK
        assert summary['clean_accuracy'] == 1.0
        assert summary['median_certified_robustness'] == 1
        assert summary['base_classifier_accuracy'] == 1.0

        rows = read_certificates(os.path.join(run_dir, 'certificates.jsonl'))
        assert rows[0] == {'index': 0, 'true_label': 0, 'predicted': 0, 'counts': [3, 0], 'rho_bar': 1}
        with open(os.path.join(run_dir, 'curve.csv')) as f:
            assert f.read() == "rho,certified_accuracy\n0,1.0\n1,1.0\n"

    def test_curve_with_excel(self, tmp_path, capsys, trained_run):
        cache, run_dir, _ = trained_run
        run(capsys, '--cache-dir', cache, 'certify', run_dir)

        xlsx = str(tmp_path / 'kurve.xlsx')
        code, out = run(capsys, 'curve', run_dir, '--xlsx', xlsx, '--rho-max', '2')
        assert code == EXIT_OK
        assert out['points'] == [[0, 1.0], [1, 1.0], [2, 0.0]]
        assert out['median_certified_robustness'] == 1
        assert out['base_classifier_accuracy'] == 1.0
        assert os.path.exists(xlsx)

    def test_curve_before_certify(self, capsys, trained_run):
        _, run_dir, _ = trained_run
        code, _ = run(capsys, 'curve', run_dir)
        assert code == EXIT_ERROR

    def test_changed_training_file_is_stale(self, capsys, trained_run, toy_csv_files):
        cache, run_dir, _ = trained_run
        train_csv, _ = toy_csv_files
        with open(train_csv, 'a') as f:
            f.write("5,5,1\n")
        code, _ = run(capsys, '--cache-dir', cache, 'certify', run_dir)
        assert code == EXIT_ERROR

    def test_missing_cache_is_stale(self, tmp_path, capsys, trained_run):
        _, run_dir, _ = trained_run
        code, _ = run(capsys, '--cache-dir', str(tmp_path / 'empty'), 'certify', run_dir)
        assert code == EXIT_ERROR

    def test_certify_without_train(self, tmp_path, capsys):
        code, _ = run(capsys, '--cache-dir', str(tmp_path / 'cache'), 'certify', str(tmp_path / 'nothing'))
        assert code == EXIT_ERROR

    def test_relative_paths_from_another_directory(self, tmp_path, capsys, monkeypatch, toy_csv_files):
        monkeypatch.chdir(tmp_path)
        cache = str(tmp_path / 'cache')
        code, _ = run(capsys, '--cache-dir', cache, 'train', '--train', 'train.csv', '--train-format', 'csv',
                      '--test', 'test.csv', '--test-format', 'csv', '--k', '3', '--output-dir', 'run')
        assert code == EXIT_OK

        # Manifest und Konfiguration gelten auch aus einem anderen Ordner
        elsewhere = tmp_path / 'elsewhere'
        elsewhere.mkdir()
        monkeypatch.chdir(elsewhere)
        run_dir = str(tmp_path / 'run')
        code, summary = run(capsys, '--cache-dir', cache, 'certify', run_dir)
        assert code == EXIT_OK
        assert summary['clean_accuracy'] == 1.0

        code, out = run(capsys, 'curve', run_dir)
        assert code == EXIT_OK
        assert out['points'] == [[0, 1.0], [1, 1.0]]


class TestVerify:
    """Tests for dpa verify."""

    def test_certified_radius_is_sound(self, capsys, data_args):
        code, out = run(capsys, 'verify', *data_args, '--sample', '0')
        assert code == EXIT_OK
        assert out['verdict'] == 'sound'
        assert out['rho'] == 1
        assert out['sets_checked'] == 7

    def test_counterexample_exit_code(self, capsys, data_args):
        code, out = run(capsys, 'verify', *data_args, '--sample', '0', '--rho', '2')
        assert code == EXIT_COUNTEREXAMPLE
        assert out['verdict'] == 'counterexample'
        assert len(out['counterexample']['flips']) == 2

    def test_refuses_above_cap(self, capsys, data_args):
        code, out = run(capsys, 'verify', *data_args, '--sample', '0', '--cap', '3')
        assert code == EXIT_REFUSED
        assert out == {'threat': 'label-flip', 'rho': 1, 'verdict': 'refused', 'required': 7, 'cap': 3}

    def test_insertion(self, capsys, data_args):
        code, out = run(capsys, 'verify', *data_args, '--strategy', 'dpa-hash', '--threat', 'insertion', '--rho', '0')
        assert code == EXIT_OK
        assert out['threat'] == 'insertion'
        assert out['vote_level'] == 'sound'

    def test_sample_out_of_range(self, capsys, data_args):
        code, _ = run(capsys, 'verify', *data_args, '--sample', '3')
        assert code == EXIT_ERROR


class TestOtherCommands:
    """Tests for ingest, ra-compare and binary2means."""

    def test_ingest(self, tmp_path, capsys, toy_csv_files):
        train_csv, _ = toy_csv_files
        output = str(tmp_path / 'train.dpad')
        code, out = run(capsys, 'ingest', train_csv, '--format', 'csv', '-o', output)
        assert code == EXIT_OK
        assert out['m'] == 6
        assert out['dim'] == 2
        assert out['unique_samples'] is True
        assert read_dataset(output).content_hash == out['content_hash']

    def test_ra_compare(self, capsys):
        code, out = run(capsys, 'ra-compare', '60000', '50', '200')
        assert code == EXIT_OK
        assert out['k'] == 1200
        assert out['ra_probability'] == pytest.approx(0.15375, abs=1e-3)
        assert out['dpa_bound'] == pytest.approx(200 / 1200)
        assert out['dpa_required_gap'] == pytest.approx(2 * 200 / 1200)

    def test_binary2means(self, capsys, data_args):
        code, out = run(capsys, 'binary2means', *data_args, '--class-a', '0', '--class-b', '1')
        assert code == EXIT_OK
        assert out['clean_accuracy'] == 1.0
        assert out['rho_bar'] == 3
        assert out['hypothesis'] == 'H-straight'
