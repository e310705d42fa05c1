import io
import json

import numpy as np
import pandas as pd
import pytest
from django.apps import apps
from django.core.management import call_command
from django.core.management.base import CommandError

from analytics.formats import read_detections, write_container, write_detections
from analytics.ml_models.signal_core import SignalRecord

SMALL_CONFIG = """\
# two short channels keep command tests fast
n_channels = 2
duration_s = 20
events_per_kind = 2
resected_channels = 0
n_permutations = 200
n_bootstrap = 100
d_max = 3
"""


def run(name, *args, **options):
    stdout = io.StringIO()
    call_command(name, *args, stdout=stdout, **options)
    return stdout.getvalue()


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp('commands')
    config = root / 'small.cfg'
    config.write_text(SMALL_CONFIG)
    run('simulate', config=str(config), out=str(root / 'sim'))
    run('detect', str(root / 'sim' / 'recording.json'), config=str(config), out=str(root / 'det'))
    return root


@pytest.fixture
def silent_container(tmp_path):
    record = SignalRecord(np.zeros((2, 20480)), 2048.0, ['a', 'b'], [True, False])
    write_container(tmp_path / 'silent.json', record)
    return tmp_path / 'silent.json'


def test_simulate_writes_container_and_annotations(workspace):
    sim = workspace / 'sim'
    assert (sim / 'recording.bin').stat().st_size == 4 * 2 * 40960
    header = json.loads((sim / 'recording.json').read_text())
    assert header['channel_names'] == ['ch00', 'ch01']
    assert header['resected'] == [True, False]
    annotations = pd.read_csv(sim / 'annotations.csv')
    assert set(annotations['kind']) <= {'ripple', 'fast_ripple', 'spike'}
    manifest = json.loads((sim / 'manifest.json').read_text())
    assert manifest['command'] == 'simulate'
    assert 'recording.bin' in manifest['outputs']
    assert (sim / 'run_config.txt').exists()


def test_simulate_rerun_is_byte_identical(workspace, tmp_path):
    run('simulate', config=str(workspace / 'small.cfg'), out=str(tmp_path / 'again'))
    for name in ('recording.json', 'recording.bin', 'annotations.csv', 'manifest.json', 'run_config.txt'):
        assert (tmp_path / 'again' / name).read_bytes() == (workspace / 'sim' / name).read_bytes()


def test_seed_flag_changes_the_recording(workspace, tmp_path):
    run('simulate', config=str(workspace / 'small.cfg'), out=str(tmp_path / 'other'), seed=7)
    other = (tmp_path / 'other' / 'recording.bin').read_bytes()
    assert other != (workspace / 'sim' / 'recording.bin').read_bytes()


def test_malformed_config_exits_2_without_output(tmp_path):
    config = tmp_path / 'bad.cfg'
    config.write_text('n_groups = 1\n')
    with pytest.raises(CommandError) as excinfo:
        run('simulate', config=str(config), out=str(tmp_path / 'never'))
    assert excinfo.value.returncode == 2
    assert not (tmp_path / 'never').exists()


def test_unknown_key_exits_2(tmp_path):
    config = tmp_path / 'bad.cfg'
    config.write_text('epoch_size = 1\n')
    with pytest.raises(CommandError) as excinfo:
        run('detect', str(tmp_path / 'absent.json'), config=str(config), out=str(tmp_path / 'never'))
    assert excinfo.value.returncode == 2


@pytest.mark.parametrize('value', ['80', '80, 150, 250'])
def test_band_with_wrong_edge_count_exits_2(tmp_path, value):
    config = tmp_path / 'bad.cfg'
    config.write_text(f'ripple_band = {value}\n')
    with pytest.raises(CommandError) as excinfo:
        run('simulate', config=str(config), out=str(tmp_path / 'never'))
    assert excinfo.value.returncode == 2
    assert not (tmp_path / 'never').exists()


def test_detect_outputs(workspace):
    det = workspace / 'det'
    detections = read_detections(det / 'detections.csv')
    features = pd.read_csv(det / 'features.csv')
    assert len(detections) > 0
    assert set(detections['band']) <= {'ripple', 'fast_ripple'}
    assert (detections['kind'] == detections['band']).all()
    assert features.loc[detections['feature_row'], 'is_hfo'].all()
    assert (features.loc[detections['feature_row'], 'salience'] >= 10.0).all()
    assert set(pd.read_csv(det / 'merge_tree.csv').columns) == {'band', 'node_a', 'node_b', 'distance'}
    manifest = json.loads((det / 'manifest.json').read_text())
    assert manifest['recordings'] == 1
    assert set(manifest['inputs']) == {'container', 'container_payload', 'config'}


def test_detect_rerun_is_byte_identical(workspace, tmp_path):
    run('detect', str(workspace / 'sim' / 'recording.json'), config=str(workspace / 'small.cfg'),
        out=str(tmp_path / 'again'))
    for name in ('detections.csv', 'features.csv', 'merge_tree.csv', 'manifest.json'):
        assert (tmp_path / 'again' / name).read_bytes() == (workspace / 'det' / name).read_bytes()


def test_detect_on_silence_finds_nothing(silent_container, tmp_path):
    run('detect', str(silent_container), out=str(tmp_path / 'det'))
    assert len(read_detections(tmp_path / 'det' / 'detections.csv')) == 0


def test_detect_below_nyquist_exits_3(tmp_path):
    record = SignalRecord(np.zeros((1, 5000)), 1000.0, ['a'], [False])
    write_container(tmp_path / 'slow.json', record)
    with pytest.raises(CommandError) as excinfo:
        run('detect', str(tmp_path / 'slow.json'), out=str(tmp_path / 'det'))
    assert excinfo.value.returncode == 3


def test_detect_ripple_band_only_at_1000_hz(tmp_path):
    record = SignalRecord(np.zeros((1, 5000)), 1000.0, ['a'], [False])
    write_container(tmp_path / 'slow.json', record)
    run('detect', str(tmp_path / 'slow.json'), band='ripple', out=str(tmp_path / 'det'))
    assert (tmp_path / 'det' / 'detections.csv').exists()


def test_detect_missing_container_exits_3(tmp_path):
    with pytest.raises(CommandError) as excinfo:
        run('detect', str(tmp_path / 'absent.json'), out=str(tmp_path / 'det'))
    assert excinfo.value.returncode == 3


def test_evaluate(workspace, tmp_path):
    run('evaluate', str(workspace / 'det' / 'detections.csv'), str(workspace / 'sim' / 'annotations.csv'),
        container=str(workspace / 'sim' / 'recording.json'), config=str(workspace / 'small.cfg'),
        out=str(tmp_path / 'eval'))
    report = json.loads((tmp_path / 'eval' / 'eval_report.json').read_text())
    assert set(report['bands']) == {'ripple', 'fast_ripple'}
    for band in report['bands'].values():
        assert 0.0 <= band['f_score'] <= 1.0
        assert 0.0 < band['p_value'] <= 1.0
        assert band['n_permutations'] == 200
    assert report['spikes']['injected'] == 4
    scores = pd.read_csv(tmp_path / 'eval' / 'band_scores.csv')
    assert list(scores['band']) == ['fast_ripple', 'ripple']


def test_evaluate_channel_outside_container_exits_2(workspace, tmp_path):
    detections = pd.DataFrame({'channel': [5], 'center_s': [1.0], 'kind': ['ripple'], 'band': ['ripple'],
                               'cluster': [0], 'feature_row': [0]})
    write_detections(tmp_path / 'detections.csv', detections)
    with pytest.raises(CommandError) as excinfo:
        run('evaluate', str(tmp_path / 'detections.csv'), str(workspace / 'sim' / 'annotations.csv'),
            container=str(workspace / 'sim' / 'recording.json'), out=str(tmp_path / 'eval'))
    assert excinfo.value.returncode == 2


def test_rate_ratio_with_detections_only_in_resected_channels(tmp_path):
    record = SignalRecord(np.zeros((3, 12288)), 2048.0, ['a', 'b', 'c'], [True, True, False])
    write_container(tmp_path / 'patient.json', record)
    detections = pd.DataFrame({
        'channel': [0, 1, 1, 0],
        'center_s': [1.0, 2.0, 3.0, 4.0],
        'kind': ['ripple', 'ripple', 'fast_ripple', 'fast_ripple'],
        'band': ['ripple', 'ripple', 'fast_ripple', 'fast_ripple'],
        'cluster': [0, 0, 0, 0],
        'feature_row': [0, 1, 2, 3],
    })
    write_detections(tmp_path / 'detections.csv', detections)
    run('rate_ratio', str(tmp_path / 'detections.csv'), str(tmp_path / 'patient.json'), ilae=1,
        out=str(tmp_path / 'rates'))
    summary = json.loads((tmp_path / 'rates' / 'rate_ratio.json').read_text())
    assert summary == {'patient': {'ripple': {'ratio': 1.0, 'flag': None},
                                   'fast_ripple': {'ratio': 1.0, 'flag': None}}}
    ratios = pd.read_csv(tmp_path / 'rates' / 'rate_ratios.csv')
    assert ratios['outcome'].tolist() == ['good']
    rates = pd.read_csv(tmp_path / 'rates' / 'rate_table.csv')
    ripple = rates[rates['band'] == 'ripple'].set_index('channel')
    assert ripple.loc[0, 'rate'] == pytest.approx(10.0)


def test_rate_ratio_patient_table(silent_container, tmp_path):
    write_detections(tmp_path / 'none.csv', pd.DataFrame(
        columns=['channel', 'center_s', 'kind', 'band', 'cluster', 'feature_row']))
    (tmp_path / 'patients.csv').write_text(
        'patient,detections,container,ilae\nquiet,none.csv,silent.json,3\n')
    run('rate_ratio', patients=str(tmp_path / 'patients.csv'), out=str(tmp_path / 'rates'))
    summary = json.loads((tmp_path / 'rates' / 'rate_ratio.json').read_text())
    assert summary['quiet']['ripple'] == {'ratio': None, 'flag': 'no-events'}


def test_rate_ratio_without_inputs_exits_2(tmp_path):
    with pytest.raises(CommandError) as excinfo:
        run('rate_ratio', out=str(tmp_path / 'rates'))
    assert excinfo.value.returncode == 2


def test_report_on_empty_detections(silent_container, tmp_path):
    run('detect', str(silent_container), out=str(tmp_path / 'det'))
    run('report', detection=str(tmp_path / 'det'), out=str(tmp_path / 'report'))
    assert (tmp_path / 'report' / 'channel_counts.svg').exists()
    assert (tmp_path / 'report' / 'dendrogram.svg').exists()
    manifest = json.loads((tmp_path / 'report' / 'manifest.json').read_text())
    assert 'detection_manifest' in manifest['inputs']


def test_report_on_detector_output(workspace, tmp_path):
    run('report', detection=str(workspace / 'det'), out=str(tmp_path / 'report'))
    figures = sorted(path.name for path in (tmp_path / 'report').glob('dendrogram_*.svg'))
    assert figures
    assert all(name.split('_', 1)[1].startswith(('ripple', 'fast_ripple')) for name in figures)


def test_report_without_sources_exits_2(tmp_path):
    with pytest.raises(CommandError) as excinfo:
        run('report', out=str(tmp_path / 'report'))
    assert excinfo.value.returncode == 2


@pytest.mark.slow
def test_select_features(workspace, tmp_path):
    sim = workspace / 'sim'
    run('select_features', str(sim / 'recording.json'), str(sim / 'annotations.csv'),
        config=str(workspace / 'small.cfg'), out=str(tmp_path / 'sel'))
    selected = (tmp_path / 'sel' / 'selected_features.txt').read_text().split()
    assert 1 <= len(selected) <= 3
    correlations = pd.read_csv(tmp_path / 'sel' / 'correlations.csv')
    assert list(correlations.columns) == ['feature', 'r']
    assert set(selected) <= set(correlations['feature'])

    config = tmp_path / 'subset.cfg'
    config.write_text(f'feature_subset_path = {tmp_path / "sel" / "selected_features.txt"}\n')
    run('detect', str(workspace / 'sim' / 'recording.json'), config=str(config), out=str(tmp_path / 'det'))
    manifest = json.loads((tmp_path / 'det' / 'manifest.json').read_text())
    assert manifest['feature_subset'] == selected


def test_app_registers_without_models():
    config = apps.get_app_config('analytics')
    assert config.verbose_name == 'HFO detection'
    assert 'default_auto_field' not in vars(type(config))
    assert list(config.get_models()) == []
