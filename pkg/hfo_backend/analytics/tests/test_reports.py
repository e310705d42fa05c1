import numpy as np
import pandas as pd

from analytics import reports
from analytics.ml_models.clustering import hierarchical_cluster


def test_placeholder_is_byte_identical(tmp_path):
    first = reports.plot_placeholder(tmp_path / 'a.svg', 'no events', 'Rate ratio').read_bytes()
    second = reports.plot_placeholder(tmp_path / 'b.svg', 'no events', 'Rate ratio').read_bytes()
    assert first == second
    assert b'<svg' in first


def test_scores_by_snr(tmp_path):
    frame = pd.DataFrame({
        'recording': ['snr0_bg00', 'snr0_bg00', 'snr15_bg00', 'snr15_bg00'],
        'snr_db': [0.0, 0.0, 15.0, 15.0],
        'band': ['ripple', 'fast_ripple', 'ripple', 'fast_ripple'],
        'f_score': [0.4, 0.3, 0.95, 0.9],
    })
    path = reports.plot_scores_by_snr(frame, tmp_path / 'scores.svg')
    assert path.stat().st_size > 0
    again = reports.plot_scores_by_snr(frame, tmp_path / 'again.svg')
    assert path.read_bytes() == again.read_bytes()


def test_scores_without_snr_fall_back_to_placeholder(tmp_path):
    frame = pd.DataFrame(columns=['recording', 'snr_db', 'band', 'f_score'])
    reports.plot_scores_by_snr(frame, tmp_path / 'scores.svg')
    reports.plot_placeholder(tmp_path / 'expected.svg', 'no SNR-tagged recordings', 'F-score by SNR')
    assert (tmp_path / 'scores.svg').read_bytes() == (tmp_path / 'expected.svg').read_bytes()


def test_rate_ratios_skip_missing_values(tmp_path):
    frame = pd.DataFrame({
        'patient': ['p1', 'p2', 'p3'],
        'ripple_ratio': [0.5, np.nan, -0.2],
        'fast_ripple_ratio': [np.nan, np.nan, 0.8],
        'outcome': ['good', '', 'poor'],
    })
    assert reports.plot_rate_ratios(frame, tmp_path / 'ratios.svg').exists()
    assert reports.plot_outcome_groups(frame, tmp_path / 'outcome.svg').exists()


def test_rate_ratios_without_events(tmp_path):
    frame = pd.DataFrame({'patient': ['p1'], 'ripple_ratio': [np.nan], 'fast_ripple_ratio': [np.nan],
                          'outcome': ['']})
    reports.plot_rate_ratios(frame, tmp_path / 'ratios.svg')
    reports.plot_placeholder(tmp_path / 'expected.svg', 'no events', 'Rate ratio')
    assert (tmp_path / 'ratios.svg').read_bytes() == (tmp_path / 'expected.svg').read_bytes()


def test_dendrogram_from_merge_table(tmp_path, rng):
    result = hierarchical_cluster(rng.standard_normal((12, 3)))
    path = reports.plot_dendrogram(result.merge_frame(), tmp_path / 'tree.svg')
    assert b'<svg' in path.read_bytes()


def test_selection_figures(tmp_path):
    ranking = pd.Series([0.9, -0.4, 0.0], index=['time_rms', 'img_area', 'tf_mean'], name='r')
    assert reports.plot_correlations(ranking, tmp_path / 'corr.svg').exists()
    curve = pd.DataFrame({'subset_size': [1, 2, 3], 'f_score': [0.6, 0.8, 0.85]})
    assert reports.plot_selection_curve(curve, tmp_path / 'curve.svg').exists()


def test_channel_counts(tmp_path):
    counts = pd.DataFrame({'channel': [0, 0, 1], 'band': ['ripple', 'fast_ripple', 'ripple'],
                           'count': [4, 1, 2]})
    assert reports.plot_channel_counts(counts, tmp_path / 'counts.svg').exists()
    empty = pd.DataFrame(columns=['channel', 'band', 'count'])
    reports.plot_channel_counts(empty, tmp_path / 'empty.svg')
    reports.plot_placeholder(tmp_path / 'expected.svg', 'no events', 'Detections per channel')
    assert (tmp_path / 'empty.svg').read_bytes() == (tmp_path / 'expected.svg').read_bytes()
