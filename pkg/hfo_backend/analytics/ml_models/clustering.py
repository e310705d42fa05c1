"""
Unsupervised separation of events into HFO and non-HFO groups
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.cluster import hierarchy

from analytics.exceptions import ParameterError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterResult:
    """
    Outcome of agglomerative clustering on a set of events

    assignment holds one group id per event (0..n_groups-1, numbered by first
    appearance). merge_tree lists (node_a, node_b, distance) per merge in the
    scipy node numbering; linkage_matrix is the full scipy linkage (used for
    dendrograms). hfo_group and group_mean_range are filled by label_clusters.
    """

    assignment: np.ndarray
    merge_tree: List[Tuple[int, int, float]]
    linkage_matrix: np.ndarray
    hfo_group: Optional[int] = None
    group_mean_range: Dict[int, float] = field(default_factory=dict)

    @property
    def n_groups(self) -> int:
        return int(self.assignment.max()) + 1 if self.assignment.size else 0

    def group_sizes(self) -> Dict[int, int]:
        return {group: int(np.sum(self.assignment == group)) for group in range(self.n_groups)}

    def is_hfo(self) -> np.ndarray:
        """Boolean mask of events in the HFO group"""
        if self.hfo_group is None:
            raise ParameterError('Clusters have not been labelled yet')
        return self.assignment == self.hfo_group

    def merge_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.merge_tree, columns=['node_a', 'node_b', 'distance'])


def _first_appearance(labels: np.ndarray) -> np.ndarray:
    """Renumber labels 0, 1, ... in order of first occurrence"""
    _, first_index, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first_index))
    return rank[inverse]


def hierarchical_cluster(matrix, n_groups: int = 2, method: str = 'ward') -> ClusterResult:
    """
    Agglomerative clustering of z-scored feature rows

    Ward linkage on Euclidean distance; the tree is cut to exactly n_groups
    groups. Equal-distance merges follow scipy's deterministic ordering.

    Args:
        matrix: (n_events, n_features) array or DataFrame, already z-scored
        n_groups: number of groups after the cut
        method: scipy linkage method

    Returns:
        ClusterResult with assignment and merge tree (unlabelled)
    """
    values = np.asarray(matrix, dtype=np.float64)
    if values.ndim != 2:
        raise ParameterError('hierarchical_cluster expects a 2-D feature matrix')
    n_events = values.shape[0]
    if n_events < 2:
        raise ParameterError(f'Clustering needs at least 2 events, got {n_events}')
    if n_events < n_groups:
        raise ParameterError(f'Cannot cut {n_events} events into {n_groups} groups')
    if not np.all(np.isfinite(values)):
        raise ParameterError('Feature matrix contains non-finite values')

    if values.shape[1] == 0:
        values = np.zeros((n_events, 1))
    tree = hierarchy.linkage(values, method=method, metric='euclidean')
    labels = hierarchy.cut_tree(tree, n_clusters=n_groups).ravel()
    assignment = _first_appearance(labels)

    merge_tree = [(int(a), int(b), float(distance)) for a, b, distance, _ in tree]
    logger.debug('Clustered %d events into groups of %s', n_events,
                 np.bincount(assignment, minlength=n_groups).tolist())
    return ClusterResult(assignment=assignment, merge_tree=merge_tree, linkage_matrix=tree)


def label_clusters(result: ClusterResult, events: Sequence) -> ClusterResult:
    """
    Name the HFO group by the amplitude range of each group's averaged crop

    Crops are already centred on the event, so they are averaged sample-wise
    without alignment or sign flips. The group with the largest range of its
    averaged trace is HFO; on a tie the group with fewer members wins (then
    the lower group id).

    Args:
        result: output of hierarchical_cluster
        events: Event objects (or bare crops) in the order they were clustered

    Returns:
        A copy of result with hfo_group and group_mean_range filled
    """
    if len(events) != result.assignment.size:
        raise ParameterError(
            f'{len(events)} events for an assignment of {result.assignment.size}'
        )
    crops = np.array([np.asarray(getattr(event, 'crop', event), dtype=np.float64)
                      for event in events])

    ranges = {}
    sizes = {}
    for group in range(max(result.n_groups, 2)):
        members = crops[result.assignment == group]
        if members.shape[0] == 0:
            raise ParameterError(f'Group {group} is empty; cannot label clusters')
        average = members.mean(axis=0)
        ranges[group] = float(average.max() - average.min())
        sizes[group] = members.shape[0]

    hfo_group = min(ranges, key=lambda group: (-ranges[group], sizes[group], group))
    logger.info('HFO group %d (%d events, averaged range %.2f uV)',
                hfo_group, sizes[hfo_group], ranges[hfo_group])
    return replace(result, hfo_group=hfo_group, group_mean_range=ranges)
