from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from analytics.config import RunConfig
from analytics.exceptions import ParameterError, SchemaError
from analytics.ml_models.metrics import (
    MatchCounts, bootstrap_ci, evaluate, event_labels, match_events, match_pairs, outcome_group,
    permutation_test, rate_ratio, rate_table, ratio_table, score_band, scores, spike_false_positives,
)

from .conftest import make_event


def max_matching(detected, reference, radius):
    """Augmenting-path maximum bipartite matching"""
    adjacency = [[j for j, r in enumerate(reference) if abs(d - r) <= radius] for d in detected]
    owner = {}

    def augment(i, visited):
        for j in adjacency[i]:
            if j in visited:
                continue
            visited.add(j)
            if j not in owner or augment(owner[j], visited):
                owner[j] = i
                return True
        return False

    return sum(augment(i, set()) for i in range(len(detected)))


def test_matching_equals_maximum_bipartite_matching():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        detected = np.round(rng.uniform(0, 1, rng.integers(0, 11)), 3)
        reference = np.round(rng.uniform(0, 1, rng.integers(0, 11)), 3)
        ci_s = rng.choice([0.05, 0.1, 0.2])
        counts = match_events(detected, reference, ci_s)
        best = max_matching(detected, reference, ci_s / 2)
        assert counts == MatchCounts(best, len(detected) - best, len(reference) - best)


def test_matching_window_is_inclusive():
    assert match_events([0.5], [0.5625], ci_s=0.125) == MatchCounts(1, 0, 0)
    assert match_events([0.5], [0.5626], ci_s=0.125) == MatchCounts(0, 1, 1)


def test_one_detection_confirms_one_reference():
    assert match_events([1.0], [0.98, 1.02], 0.1) == MatchCounts(1, 0, 1)
    assert match_events([0.98, 1.02], [1.0], 0.1) == MatchCounts(1, 1, 0)


def test_matching_prefers_nearest_reference():
    assert match_pairs([1.0, 1.08], [1.04, 1.1], 0.1) == [(0, 0), (1, 1)]
    assert match_pairs([1.0], [1.03, 1.01], 0.1) == [(0, 1)]


def test_empty_inputs():
    assert match_events([], [1.0]) == MatchCounts(0, 0, 1)
    assert match_events([1.0], []) == MatchCounts(0, 1, 0)
    assert scores(MatchCounts()) == (0.0, 0.0, 0.0)


def test_scores():
    sens, prec, f_score = scores(MatchCounts(tp=8, fp=2, fn=8))
    assert sens == pytest.approx(0.5)
    assert prec == pytest.approx(0.8)
    assert f_score == pytest.approx(2 * 0.4 / 1.3)


def test_counts_are_non_negative():
    with pytest.raises(ParameterError):
        MatchCounts(tp=-1)


def reference_table(n_per_kind=10, n_channels=3):
    rows = []
    for channel in range(n_channels):
        for i, kind in enumerate(['ripple', 'fast_ripple', 'spike'] * n_per_kind):
            rows.append({'channel': channel, 'center_s': 1.0 + 2.0 * i, 'kind': kind,
                         'band': 'broadband' if kind == 'spike' else kind, 'amplitude': 1.0})
    return pd.DataFrame(rows)


def detections_at(references, kinds, band='ripple'):
    chosen = references[references['kind'].isin(kinds)]
    return pd.DataFrame({'channel': chosen['channel'].to_numpy(), 'center_s': chosen['center_s'].to_numpy(),
                         'band': band})


def test_score_band_sums_channels():
    references = reference_table()
    counts = score_band(detections_at(references, ['ripple', 'spike']), references, 'ripple')
    assert counts == MatchCounts(tp=30, fp=30, fn=0)


def test_channels_are_scored_apart():
    references = pd.DataFrame({'channel': [0], 'center_s': [1.0], 'kind': ['ripple']})
    detections = pd.DataFrame({'channel': [1], 'center_s': [1.0], 'band': ['ripple']})
    assert score_band(detections, references, 'ripple') == MatchCounts(0, 1, 1)


def test_recordings_are_scored_apart():
    references = pd.DataFrame({'recording': ['a', 'b'], 'channel': [0, 0], 'center_s': [1.0, 3.0],
                               'kind': ['ripple', 'ripple']})
    detections = pd.DataFrame({'recording': ['b', 'a'], 'channel': [0, 0], 'center_s': [1.0, 3.0],
                               'band': ['ripple', 'ripple']})
    assert score_band(detections, references, 'ripple') == MatchCounts(0, 2, 2)


def test_perfect_detections_are_significant():
    references = reference_table()
    result = permutation_test(detections_at(references, ['ripple']), references, 'ripple',
                              n_perm=200, seed=1, n_bootstrap=200)
    assert result.observed == 1.0
    assert result.p_value <= 0.01
    assert result.score_ci == (1.0, 1.0)
    assert result.warning is None


def test_uninformative_detections_are_not_significant():
    references = reference_table(n_per_kind=5, n_channels=2)
    p_values = []
    for seed in range(40):
        rng = np.random.default_rng(seed)
        chosen = references.iloc[np.sort(rng.choice(len(references), size=len(references) // 2,
                                                    replace=False))]
        detections = pd.DataFrame({'channel': chosen['channel'], 'center_s': chosen['center_s'],
                                   'band': 'ripple'})
        p_values.append(permutation_test(detections, references, 'ripple', n_perm=99, seed=seed,
                                         n_bootstrap=10, chunks=4).p_value)
    assert 0.3 <= np.mean(p_values) <= 0.8
    assert np.mean(np.array(p_values) <= 0.05) <= 0.2


@pytest.mark.slow
def test_null_p_values_are_not_anti_conservative():
    references = reference_table(n_per_kind=30, n_channels=1)
    p_values = []
    for seed in range(200):
        rng = np.random.default_rng(1000 + seed)
        chosen = references.iloc[np.sort(rng.choice(len(references), size=45, replace=False))]
        detections = pd.DataFrame({'channel': chosen['channel'], 'center_s': chosen['center_s'],
                                   'band': 'ripple'})
        p_values.append(permutation_test(detections, references, 'ripple', n_perm=99, seed=seed,
                                         n_bootstrap=10, chunks=4).p_value)
    # One-sided: ties in the count-based F-score can only push p-values up
    assert stats.kstest(p_values, 'uniform', alternative='greater').statistic < 0.1
    assert 0.4 <= np.mean(p_values) <= 0.7


def test_permutation_test_is_reproducible():
    references = reference_table(n_per_kind=4)
    detections = detections_at(references, ['ripple', 'fast_ripple'])
    first = permutation_test(detections, references, 'ripple', n_perm=150, seed=7)
    second = permutation_test(detections, references, 'ripple', n_perm=150, seed=7)
    assert first == second


def test_few_permutations_warn():
    references = reference_table(n_per_kind=2)
    result = permutation_test(detections_at(references, ['ripple']), references, 'ripple', n_perm=20)
    assert result.warning is not None
    assert result.p_value == pytest.approx(1 / 21)


def test_bootstrap_interval():
    assert bootstrap_ci(MatchCounts(10, 0, 0), 100, seed=0) == (1.0, 1.0)
    assert bootstrap_ci(MatchCounts(), 100, seed=0) == (0.0, 0.0)
    low, high = bootstrap_ci(MatchCounts(50, 20, 30), 500, seed=0)
    assert low < 2 * 50 / (2 * 50 + 20 + 30) < high


def test_unknown_kind_is_a_schema_error():
    references = pd.DataFrame({'channel': [0], 'center_s': [1.0], 'kind': ['sharp_wave']})
    detections = pd.DataFrame({'channel': [0], 'center_s': [1.0], 'band': ['ripple']})
    with pytest.raises(SchemaError):
        score_band(detections, references, 'ripple')
    with pytest.raises(SchemaError):
        score_band(detections.drop(columns='band'), references.assign(kind='ripple'), 'ripple')


def test_spike_false_positives():
    references = pd.DataFrame({'channel': [0, 0, 1], 'center_s': [1.0, 5.0, 1.0],
                               'kind': ['spike', 'ripple', 'spike']})
    detections = pd.DataFrame({'channel': [0, 0, 1, 0], 'center_s': [1.01, 5.0, 3.0, 8.0],
                               'band': ['ripple', 'ripple', 'fast_ripple', 'ripple']})
    assert spike_false_positives(detections, references, 0.1) == 1


def test_event_labels_from_events():
    references = pd.DataFrame({'channel': [0, 0], 'center_s': [1.0, 2.0], 'kind': ['ripple', 'fast_ripple']})
    events = [make_event(1.02), make_event(2.0, band='ripple'), make_event(2.01, band='fast_ripple'),
              make_event(1.0, channel=1)]
    assert event_labels(events, references, 0.1).tolist() == [1, 0, 1, 0]


def patient(channel_names, resected, duration_s=60.0):
    return SimpleNamespace(channel_names=channel_names, resected=resected, duration_s=duration_s)


def detections_per_channel(counts, band='ripple'):
    channels = [channel for channel, count in enumerate(counts) for _ in range(count)]
    return pd.DataFrame({'channel': channels, 'center_s': np.arange(len(channels), dtype=float),
                         'band': band})


def test_rate_table_counts_per_minute():
    record = patient(['a', 'b'], [True, False], duration_s=120.0)
    table = rate_table(detections_per_channel([4, 1]), record)
    ripple = table.band('ripple')
    assert ripple['rate'].tolist() == [2.0, 0.5]
    assert ripple['channel_name'].tolist() == ['a', 'b']
    assert table.band('fast_ripple')['count'].sum() == 0


def test_rate_ratio_scenarios():
    record = patient(['a', 'b', 'c', 'd'], [True, True, False, False])
    only_resected = rate_ratio(rate_table(detections_per_channel([3, 2, 0, 0]), record), 'ripple')
    assert only_resected.value == 1.0
    assert rate_ratio(rate_table(detections_per_channel([9, 0, 1, 0]), record), 'ripple').value >= 0.8
    assert rate_ratio(rate_table(detections_per_channel([1, 0, 5, 4]), record), 'ripple').value <= -0.8
    intermediate = rate_ratio(rate_table(detections_per_channel([8, 5, 1, 1]), record), 'ripple')
    assert intermediate.value == pytest.approx((13 - 2) / 15, abs=1e-12)


def test_rate_ratio_without_events_is_flagged():
    record = patient(['a', 'b'], [True, False])
    result = rate_ratio(rate_table(detections_per_channel([0, 0]), record), 'ripple')
    assert result.value is None and result.flag == 'no-events'


def test_ratio_table_with_outcomes():
    record = patient(['a', 'b'], [True, False])
    table = ratio_table([
        ('p1', rate_table(detections_per_channel([3, 1]), record), 1),
        ('p2', rate_table(detections_per_channel([0, 0]), record), 4),
        ('p3', rate_table(detections_per_channel([1, 1]), record), None),
    ])
    assert table['ripple_ratio'].iloc[0] == pytest.approx(0.5)
    assert np.isnan(table['ripple_ratio'].iloc[1]) and table['ripple_flag'].iloc[1] == 'no-events'
    assert table['outcome'].tolist() == ['good', 'poor', '']
    assert outcome_group(2) == 'poor'


def test_evaluate_reports_bands_recordings_and_spikes():
    references = pd.concat([reference_table(n_per_kind=3, n_channels=2).assign(recording='r1', snr_db=15.0),
                            reference_table(n_per_kind=3, n_channels=2).assign(recording='r2', snr_db=5.0)],
                           ignore_index=True)
    ripple = references[(references['kind'] == 'ripple') & (references['recording'] == 'r1')]
    detections = pd.DataFrame({'recording': ripple['recording'], 'channel': ripple['channel'],
                               'center_s': ripple['center_s'], 'band': 'ripple'})
    config = RunConfig(n_permutations=50, n_bootstrap=50, permutation_chunks=2)
    report = evaluate(detections, references, config)

    assert report.bands['ripple'].tp == 6 and report.bands['ripple'].fn == 6
    assert report.bands['fast_ripple'].f_score == 0.0
    frame = report.recordings_frame()
    assert len(frame) == 4
    r1 = frame[(frame['recording'] == 'r1') & (frame['band'] == 'ripple')].iloc[0]
    assert r1['f_score'] == 1.0 and r1['snr_db'] == 15.0
    payload = report.to_dict()
    assert payload['spikes'] == {'injected': 12, 'false_positives': 0, 'false_positive_rate': 0.0}
    assert payload['config_digest'] == config.digest()
    assert payload['bands']['ripple']['warning'] == 'only 50 permutations; p-value resolution is coarse'
