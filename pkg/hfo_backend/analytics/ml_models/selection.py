"""
Wrapper feature selection for the clustering detector

Sequential forward floating selection scores every candidate subset by
re-running z-scoring, clustering and labelling on it and comparing the HFO
group with reference labels (event-level F-score).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from analytics.exceptions import ParameterError
from analytics.ml_models.clustering import hierarchical_cluster, label_clusters
from analytics.ml_models.features import zscore
from analytics.ml_models.metrics import MatchCounts, scores

logger = logging.getLogger(__name__)

CostFunction = Callable[[pd.DataFrame, np.ndarray], float]


@dataclass
class SelectionTrace:
    """
    Accepted SFFS steps

    steps holds (action, feature, score) with action 'add' or 'remove'.
    curve maps subset size to the best score seen at that size.
    """

    steps: List[Tuple[str, str, float]] = field(default_factory=list)
    best_subset: Tuple[str, ...] = ()
    best_score: float = 0.0
    curve: Dict[int, float] = field(default_factory=dict)

    def steps_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.steps, columns=['action', 'feature', 'f_score'])
        frame.insert(0, 'step', np.arange(1, len(frame) + 1))
        return frame

    def curve_frame(self) -> pd.DataFrame:
        sizes = sorted(self.curve)
        return pd.DataFrame({'subset_size': sizes, 'f_score': [self.curve[s] for s in sizes]})


def clustering_cost(crops: Sequence[np.ndarray], n_groups: int = 2,
                    groups: Optional[Sequence[str]] = None) -> CostFunction:
    """
    Event-level F-score of the clustering detector on a feature subset

    Events are clustered separately per group (detection band) as the
    detector does; a group too small to cluster is predicted HFO entirely.
    Events in a labelled HFO group are predicted HFO and compared with the
    0/1 reference labels.
    """
    crops = [np.asarray(crop, dtype=np.float64) for crop in crops]
    groups = np.asarray(groups if groups is not None else [''] * len(crops), dtype=object)

    def cost(subset: pd.DataFrame, labels: np.ndarray) -> float:
        predicted = np.zeros(len(crops), dtype=bool)
        for group in sorted(set(groups)):
            rows = np.flatnonzero(groups == group)
            if rows.size < max(2, n_groups):
                predicted[rows] = True
                continue
            normalized, _, _ = zscore(subset.iloc[rows])
            result = label_clusters(hierarchical_cluster(normalized, n_groups=n_groups),
                                    [crops[row] for row in rows])
            predicted[rows] = result.is_hfo()
        truth = labels.astype(bool)
        counts = MatchCounts(
            tp=int(np.sum(predicted & truth)),
            fp=int(np.sum(predicted & ~truth)),
            fn=int(np.sum(~predicted & truth)),
        )
        return scores(counts)[2]

    return cost


def _evaluate(cost: CostFunction, frame: pd.DataFrame, labels: np.ndarray,
              subset: Sequence[str]) -> float:
    # Canonical column order so a subset always scores the same
    columns = [name for name in frame.columns if name in set(subset)]
    return float(cost(frame[columns], labels))


def _check_labels(frame: pd.DataFrame, labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape[0] != frame.shape[0]:
        raise ParameterError(f'{labels.shape[0]} labels for {frame.shape[0]} events')
    if frame.shape[0] < 2:
        raise ParameterError('Feature selection needs at least 2 events')
    if not np.isin(labels, (0, 1)).all():
        raise ParameterError('Labels must be 0 (background) or 1 (HFO)')
    if np.unique(labels).size < 2:
        raise ParameterError('Labels hold a single class; nothing to select against')
    return labels.astype(np.int64)


def sffs(matrix, labels, cost: Optional[CostFunction] = None, d_max: int = 15,
         crops: Optional[Sequence[np.ndarray]] = None, epsilon: float = 1e-6,
         n_jobs: int = 1, groups: Optional[Sequence[str]] = None) -> SelectionTrace:
    """
    Sequential forward floating selection

    Each round adds the candidate with the highest cost (ties go to the
    earliest column), then removes previously selected features one at a
    time while a removal strictly improves the score by more than epsilon.
    The search stops at d_max features or when no addition improves.

    Args:
        matrix: DataFrame of raw features, columns in canonical order
        labels: 0/1 reference label per event
        cost: callable(subset_frame, labels) -> score; defaults to the
            clustering detector's F-score, which needs the event crops
        d_max: largest subset size
        crops: event crops for the default cost
        groups: detection band per event for the default cost
        epsilon: improvement tolerance
        n_jobs: joblib workers for candidate evaluation

    Returns:
        SelectionTrace
    """
    frame = pd.DataFrame(matrix).copy()
    frame.columns = [str(name) for name in frame.columns]
    labels = _check_labels(frame, labels)
    names = list(frame.columns)
    if not 1 <= d_max <= len(names):
        raise ParameterError(f'd_max must lie in [1, {len(names)}], got {d_max}')
    if cost is None:
        if crops is None:
            raise ParameterError('The default cost needs the event crops')
        cost = clustering_cost(crops, groups=groups)

    trace = SelectionTrace()
    selected: List[str] = []
    current = -np.inf
    best_subset: Tuple[str, ...] = ()

    def record(action: str, feature: str, score: float):
        nonlocal current, best_subset
        current = score
        trace.steps.append((action, feature, score))
        size = len(selected)
        trace.curve[size] = max(trace.curve.get(size, -np.inf), score)
        if score > trace.best_score or not best_subset:
            trace.best_score = score
            best_subset = tuple(selected)
        logger.debug('SFFS %s %s -> %.6f (%d features)', action, feature, score, size)

    with Parallel(n_jobs=n_jobs) as parallel:
        while len(selected) < d_max:
            candidates = [name for name in names if name not in selected]
            results = parallel(
                delayed(_evaluate)(cost, frame, labels, selected + [name]) for name in candidates
            )
            index = int(np.argmax(results))
            if selected and results[index] <= current + epsilon:
                break
            selected.append(candidates[index])
            record('add', candidates[index], results[index])

            # Conditional exclusion never drops the feature just added
            while len(selected) > 2:
                removable = selected[:-1]
                results = parallel(
                    delayed(_evaluate)(cost, frame, labels, [name for name in selected if name != drop])
                    for drop in removable
                )
                index = int(np.argmax(results))
                if results[index] <= current + epsilon:
                    break
                selected.remove(removable[index])
                record('remove', removable[index], results[index])

    trace.best_subset = best_subset
    logger.info('SFFS selected %d features, F-score %.4f', len(best_subset), trace.best_score)
    return trace


def correlation_ranking(matrix, labels) -> pd.Series:
    """
    Point-biserial correlation of each feature with 0/1 labels

    Zero-variance features get 0. Sorted by decreasing |r|, ties kept in
    column order.
    """
    frame = matrix if isinstance(matrix, pd.DataFrame) else pd.DataFrame(np.asarray(matrix))
    labels = np.asarray(labels, dtype=np.float64)
    if frame.shape[0] < 2:
        raise ParameterError('Correlation ranking needs at least 2 events')
    if labels.shape[0] != frame.shape[0]:
        raise ParameterError(f'{labels.shape[0]} labels for {frame.shape[0]} events')
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ParameterError('Labels must be binary (0/1)')

    constant = frame.nunique(dropna=False) <= 1
    with np.errstate(invalid='ignore', divide='ignore'):
        r = frame.astype(np.float64).corrwith(pd.Series(labels, index=frame.index))
    r = r.where(~constant, 0.0).fillna(0.0)
    order = r.abs().sort_values(ascending=False, kind='stable').index
    return r.reindex(order).rename('r')
