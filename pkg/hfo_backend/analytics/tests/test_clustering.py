import numpy as np
import pytest

from analytics.config import RunConfig
from analytics.exceptions import ParameterError
from analytics.ml_models.clustering import hierarchical_cluster, label_clusters
from analytics.ml_models.detector import TfecDetector
from analytics.ml_models.features import feature_frame, zscore
from analytics.ml_models.synth import BenchmarkConfig, build_benchmark


def two_blobs(rng, n_a=10, n_b=6):
    a = rng.normal(0.0, 0.1, size=(n_a, 3))
    b = rng.normal(5.0, 0.1, size=(n_b, 3))
    return np.vstack([a, b])


def test_separated_blobs_are_split():
    result = hierarchical_cluster(two_blobs(np.random.default_rng(0)))
    assert result.assignment.tolist() == [0] * 10 + [1] * 6
    assert result.group_sizes() == {0: 10, 1: 6}
    assert len(result.merge_tree) == 15
    assert result.linkage_matrix.shape == (15, 4)


def test_group_ids_follow_first_appearance():
    matrix = two_blobs(np.random.default_rng(1))[::-1]
    assert hierarchical_cluster(matrix).assignment[0] == 0


def test_merge_frame_lists_every_merge():
    frame = hierarchical_cluster(two_blobs(np.random.default_rng(2))).merge_frame()
    assert list(frame.columns) == ['node_a', 'node_b', 'distance']
    assert len(frame) == 15
    assert frame['distance'].is_monotonic_increasing


def test_cut_into_more_groups():
    rng = np.random.default_rng(3)
    matrix = np.vstack([rng.normal(center, 0.05, size=(4, 2)) for center in (0.0, 3.0, 6.0)])
    result = hierarchical_cluster(matrix, n_groups=3)
    assert sorted(result.group_sizes().values()) == [4, 4, 4]


def test_two_events_make_two_singletons():
    result = hierarchical_cluster(np.array([[0.0], [1.0]]))
    assert result.assignment.tolist() == [0, 1]


def test_clustering_preconditions():
    with pytest.raises(ParameterError):
        hierarchical_cluster(np.zeros((1, 3)))
    with pytest.raises(ParameterError):
        hierarchical_cluster(np.zeros((2, 3)), n_groups=3)
    with pytest.raises(ParameterError):
        hierarchical_cluster(np.array([[0.0], [np.nan], [1.0]]))


def test_empty_feature_subset_still_clusters():
    result = hierarchical_cluster(np.zeros((4, 0)))
    assert result.assignment.size == 4


def test_largest_averaged_range_is_hfo():
    rng = np.random.default_rng(4)
    result = hierarchical_cluster(two_blobs(rng))
    t = np.arange(100)
    crops = [0.1 * rng.standard_normal(100) for _ in range(10)] \
        + [5.0 * np.sin(0.4 * t) for _ in range(6)]
    labelled = label_clusters(result, crops)
    assert labelled.hfo_group == 1
    assert labelled.is_hfo().tolist() == [False] * 10 + [True] * 6
    assert labelled.group_mean_range[1] == pytest.approx(10.0, rel=0.01)


def test_range_tie_prefers_smaller_group():
    result = hierarchical_cluster(two_blobs(np.random.default_rng(5)))
    crops = [np.array([0.0, 1.0, -1.0, 0.5])] * 16
    assert label_clusters(result, crops).hfo_group == 1


def test_unlabelled_result_has_no_hfo_mask():
    result = hierarchical_cluster(two_blobs(np.random.default_rng(6)))
    with pytest.raises(ParameterError):
        result.is_hfo()


def test_label_needs_one_crop_per_event():
    result = hierarchical_cluster(two_blobs(np.random.default_rng(7)))
    with pytest.raises(ParameterError):
        label_clusters(result, [np.zeros(10)] * 3)


def co_membership(assignment):
    return assignment[:, np.newaxis] == assignment[np.newaxis, :]


@pytest.mark.parametrize('seed', range(5))
def test_duplicated_events_share_a_group(seed):
    rng = np.random.default_rng(seed)
    matrix = np.vstack([rng.normal(0.0, 1.0, size=(12, 4)), rng.normal(2.0, 1.0, size=(8, 4))])
    result = hierarchical_cluster(np.repeat(matrix, 2, axis=0))
    assert np.array_equal(result.assignment[::2], result.assignment[1::2])


@pytest.mark.parametrize('seed', range(5))
def test_row_order_does_not_change_the_partition(seed):
    rng = np.random.default_rng(seed)
    matrix = np.vstack([rng.normal(0.0, 1.0, size=(15, 3)), rng.normal(3.0, 1.0, size=(10, 3))])
    order = rng.permutation(matrix.shape[0])
    reference = hierarchical_cluster(matrix).assignment
    shuffled = hierarchical_cluster(matrix[order]).assignment
    restored = np.empty_like(shuffled)
    restored[order] = shuffled
    assert np.array_equal(co_membership(restored), co_membership(reference))


@pytest.fixture(scope='module')
def ten_db_candidates():
    config = RunConfig(snr_db=10.0, n_channels=4, duration_s=30.0, events_per_kind=5,
                       resected_channels=(0,))
    record, annotations = build_benchmark(BenchmarkConfig.from_run_config(config))
    events = TfecDetector(config).extract(record)
    return config, annotations, events, feature_frame(events)


@pytest.mark.parametrize('band', ['ripple', 'fast_ripple'])
def test_injected_atoms_land_in_the_hfo_group(ten_db_candidates, band):
    config, annotations, events, frame = ten_db_candidates
    rows = [row for row, event in enumerate(events) if event.band == band]
    normalized, _, _ = zscore(frame.iloc[rows][list(config.feature_subset)])
    labelled = label_clusters(hierarchical_cluster(normalized), [events[row] for row in rows])
    in_hfo = labelled.is_hfo()

    atoms = annotations[annotations['kind'] == band]
    found = hits = 0
    for atom in atoms.itertuples():
        matches = [k for k, row in enumerate(rows)
                   if events[row].channel == atom.channel and abs(events[row].center_s - atom.center_s) < 0.1]
        if matches:
            found += 1
            hits += bool(in_hfo[matches].any())
    assert found >= 0.8 * len(atoms)
    assert hits >= 0.9 * found
