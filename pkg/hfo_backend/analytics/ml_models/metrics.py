"""
Scoring of detections against reference annotations

Detections and references are pandas DataFrames with at least the columns
channel, center_s and band (detections) or kind (references). An optional
`recording` column in both keeps events from different containers apart.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.optimize import linear_sum_assignment

from analytics.exceptions import ParameterError, SchemaError

logger = logging.getLogger(__name__)

EVENT_KINDS = ('ripple', 'fast_ripple', 'spike')
SCORED_BANDS = ('ripple', 'fast_ripple')
MIN_PERMUTATIONS = 100

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class MatchCounts:
    """True negatives are not counted"""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ParameterError(f'Match counts must be non-negative: {self}')

    def __add__(self, other: 'MatchCounts') -> 'MatchCounts':
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def match_pairs(detected: Sequence[float], reference: Sequence[float],
                ci_s: float = 0.1) -> List[Tuple[int, int]]:
    """
    Pair detections with references lying within +-ci_s/2 of them

    Each detection and each reference is used at most once. The matching has
    maximum size and, among those, the smallest total distance. Events are
    split into independent runs wherever consecutive centres are more than
    ci_s/2 apart, and each run is solved with linear_sum_assignment.

    Returns:
        (detection index, reference index) pairs, sorted
    """
    det = np.asarray(detected, dtype=np.float64).ravel()
    ref = np.asarray(reference, dtype=np.float64).ravel()
    if det.size == 0 or ref.size == 0:
        return []
    radius = ci_s / 2.0

    centers = np.concatenate([det, ref])
    is_ref = np.concatenate([np.zeros(det.size, dtype=bool), np.ones(ref.size, dtype=bool)])
    index = np.concatenate([np.arange(det.size), np.arange(ref.size)])
    order = np.argsort(centers, kind='stable')
    breaks = np.flatnonzero(np.diff(centers[order]) > radius) + 1

    pairs = []
    for run in np.split(order, breaks):
        d = index[run][~is_ref[run]]
        r = index[run][is_ref[run]]
        if d.size == 0 or r.size == 0:
            continue
        distance = np.abs(det[d][:, np.newaxis] - ref[r][np.newaxis, :])
        admissible = distance <= radius
        if not admissible.any():
            continue
        # Larger than any sum of admissible distances, so pair count wins first
        penalty = radius * min(d.size, r.size) + 1.0
        rows, cols = linear_sum_assignment(np.where(admissible, distance, penalty))
        keep = admissible[rows, cols]
        pairs.extend(zip(d[rows[keep]].tolist(), r[cols[keep]].tolist()))
    return sorted(pairs)


def match_events(detected: Sequence[float], reference: Sequence[float],
                 ci_s: float = 0.1) -> MatchCounts:
    """
    TP/FP/FN of detections against references on one channel and band

    A reference is a true positive when a detection lies within its +-ci_s/2
    window; every detection confirms at most one reference.
    """
    n_det = len(detected)
    n_ref = len(reference)
    tp = len(match_pairs(detected, reference, ci_s))
    return MatchCounts(tp=tp, fp=n_det - tp, fn=n_ref - tp)


def scores(counts: MatchCounts) -> Tuple[float, float, float]:
    """
    Sensitivity, precision and F-score

    Empty denominators give 0.
    """
    sens = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    prec = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    f_score = 2 * prec * sens / (prec + sens) if prec + sens > 0 else 0.0
    return sens, prec, f_score


def _require(frame: pd.DataFrame, columns: Sequence[str], what: str):
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise SchemaError(f'{what} lack column(s): {", ".join(missing)}')


def _check_references(references: pd.DataFrame):
    _require(references, ('channel', 'center_s', 'kind'), 'References')
    unknown = sorted(set(references['kind']) - set(EVENT_KINDS))
    if unknown:
        raise SchemaError(f'Unknown event kinds in references: {", ".join(map(str, unknown))}')


def _group_keys(detections: pd.DataFrame, references: pd.DataFrame) -> List[str]:
    if 'recording' in detections.columns and 'recording' in references.columns:
        return ['recording', 'channel']
    return ['channel']


def _keys(frame: pd.DataFrame, columns: Sequence[str]) -> List[tuple]:
    return list(zip(*(frame[column].tolist() for column in columns))) if len(frame) else []


class _BandScorer:
    """
    Precomputed per-channel event lists for repeated scoring of one band

    counts(kinds) scores the band's detections against the references whose
    kind (possibly shuffled) names the band.
    """

    def __init__(self, detections: pd.DataFrame, references: pd.DataFrame,
                 band: str, ci_s: float):
        self.band = band
        self.ci_s = ci_s
        columns = _group_keys(detections, references)

        in_band = detections[detections['band'] == band]
        self.detections: Dict[tuple, np.ndarray] = {}
        for key, center in zip(_keys(in_band, columns), in_band['center_s'].tolist()):
            self.detections.setdefault(key, []).append(center)
        self.detections = {key: np.sort(values) for key, values in self.detections.items()}

        self.centers = references['center_s'].to_numpy(dtype=np.float64)
        self.reference_index: Dict[tuple, np.ndarray] = {}
        for position, key in enumerate(_keys(references, columns)):
            self.reference_index.setdefault(key, []).append(position)
        self.reference_index = {key: np.asarray(values) for key, values in self.reference_index.items()}
        self.groups = sorted(set(self.detections) | set(self.reference_index), key=repr)

    def counts(self, kinds: np.ndarray) -> MatchCounts:
        selected = kinds == self.band
        total = MatchCounts()
        empty = np.empty(0)
        for key in self.groups:
            index = self.reference_index.get(key, np.empty(0, dtype=np.int64))
            reference = np.sort(self.centers[index[selected[index]]]) if index.size else empty
            total = total + match_events(self.detections.get(key, empty), reference, self.ci_s)
        return total


def score_band(detections: pd.DataFrame, references: pd.DataFrame, band: str,
               ci_s: float = 0.1) -> MatchCounts:
    """Counts for one band summed over channels (and recordings)"""
    _require(detections, ('channel', 'center_s', 'band'), 'Detections')
    _check_references(references)
    return _BandScorer(detections, references, band, ci_s).counts(references['kind'].to_numpy())


@dataclass(frozen=True)
class PermutationResult:
    p_value: float
    observed: float
    score_ci: Tuple[float, float]
    n_permutations: int
    warning: Optional[str] = None


def _null_chunk(scorer: _BandScorer, kinds: np.ndarray, n_perm: int,
                seed_seq: np.random.SeedSequence) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    null = np.empty(n_perm)
    for i in range(n_perm):
        null[i] = scores(scorer.counts(rng.permutation(kinds)))[2]
    return null


def bootstrap_ci(counts: MatchCounts, n_bootstrap: int = 1000,
                 seed: Union[Seed, np.random.SeedSequence] = 0) -> Tuple[float, float]:
    """
    2.5th and 97.5th percentile of F-scores over resampled event outcomes

    Every reference (hit or missed) and every false detection is one outcome;
    outcomes are drawn with replacement.
    """
    outcomes = np.repeat([0, 1, 2], [counts.tp, counts.fp, counts.fn])
    if outcomes.size == 0:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    draws = outcomes[rng.integers(0, outcomes.size, size=(n_bootstrap, outcomes.size))]
    tp = np.sum(draws == 0, axis=1)
    fp = np.sum(draws == 1, axis=1)
    fn = np.sum(draws == 2, axis=1)
    with np.errstate(invalid='ignore', divide='ignore'):
        f_scores = np.where(tp > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    low, high = np.percentile(f_scores, [2.5, 97.5])
    return float(low), float(high)


def permutation_test(detections: pd.DataFrame, references: pd.DataFrame, band: str,
                     n_perm: int = 10000, seed: Seed = 0, ci_s: float = 0.1,
                     n_bootstrap: int = 1000, chunks: int = 16,
                     n_jobs: int = 1) -> PermutationResult:
    """
    Significance of a band's F-score under shuffled reference kinds

    The null distribution rescores the detections after randomly permuting
    the kind labels (ripple, fast ripple, spike) of all references. The
    permutations are split into a fixed number of chunks, each seeded from
    SeedSequence(seed).spawn(chunks), so the result does not depend on n_jobs.

    Returns:
        PermutationResult with p = (1 + #{null >= observed}) / (n_perm + 1)
        and the bootstrap F-score interval
    """
    if n_perm < 1:
        raise ParameterError('n_perm must be at least 1')
    _require(detections, ('channel', 'center_s', 'band'), 'Detections')
    _check_references(references)
    scorer = _BandScorer(detections, references, band, ci_s)
    kinds = references['kind'].to_numpy()
    counts = scorer.counts(kinds)
    observed = scores(counts)[2]

    chunks = max(1, min(chunks, n_perm))
    children = np.random.SeedSequence(seed).spawn(chunks + 1)
    sizes = [len(part) for part in np.array_split(np.arange(n_perm), chunks)]
    nulls = Parallel(n_jobs=n_jobs)(
        delayed(_null_chunk)(scorer, kinds, size, child)
        for size, child in zip(sizes, children[:chunks])
    )
    null = np.concatenate(nulls)
    p_value = (1 + int(np.sum(null >= observed))) / (n_perm + 1)

    warning = None
    if n_perm < MIN_PERMUTATIONS:
        warning = f'only {n_perm} permutations; p-value resolution is coarse'
        logger.warning('Permutation test for %s: %s', band, warning)
    ci = bootstrap_ci(counts, n_bootstrap, children[chunks])
    logger.info('%s: F=%.4f p=%.4f CI=[%.3f, %.3f]', band, observed, p_value, *ci)
    return PermutationResult(p_value=p_value, observed=observed, score_ci=ci,
                             n_permutations=n_perm, warning=warning)


def _by_key(frame: pd.DataFrame, columns: Sequence[str]) -> Dict[tuple, Tuple[np.ndarray, np.ndarray]]:
    """Row positions and centres of a frame grouped by (recording,) channel"""
    grouped: Dict[tuple, List[int]] = {}
    for position, key in enumerate(_keys(frame, columns)):
        grouped.setdefault(key, []).append(position)
    centers = frame['center_s'].to_numpy(dtype=np.float64)
    return {key: (np.asarray(rows), centers[rows]) for key, rows in grouped.items()}


def spike_false_positives(detections: pd.DataFrame, references: pd.DataFrame,
                          ci_s: float = 0.1) -> int:
    """Detections that confirm no HFO but lie within +-ci_s/2 of an injected spike"""
    _require(detections, ('channel', 'center_s', 'band'), 'Detections')
    _check_references(references)
    columns = _group_keys(detections, references)
    radius = ci_s / 2.0
    spikes = _by_key(references[references['kind'] == 'spike'], columns)

    count = 0
    for band in SCORED_BANDS:
        hfo = _by_key(references[references['kind'] == band], columns)
        for key, (_, centers) in _by_key(detections[detections['band'] == band], columns).items():
            if key not in spikes:
                continue
            matched = {d for d, _ in match_pairs(centers, hfo.get(key, (None, []))[1], ci_s)}
            near = spikes[key][1]
            for position, center in enumerate(centers):
                if position not in matched and np.min(np.abs(near - center)) <= radius:
                    count += 1
    return count


def event_labels(events, references: pd.DataFrame, ci_s: float = 0.1) -> np.ndarray:
    """
    0/1 label per event: 1 when it confirms a reference HFO of its band

    Args:
        events: DataFrame with channel, center_s, band (and recording), or a
            sequence of Event objects
        references: annotation table

    Returns:
        int array aligned with events
    """
    if not isinstance(events, pd.DataFrame):
        events = pd.DataFrame({
            'channel': [event.channel for event in events],
            'center_s': [event.center_s for event in events],
            'band': [event.band for event in events],
        })
    _require(events, ('channel', 'center_s', 'band'), 'Events')
    _check_references(references)
    columns = _group_keys(events, references)
    labels = np.zeros(len(events), dtype=np.int64)
    band_of_event = events['band'].to_numpy()
    for band in SCORED_BANDS:
        hfo = _by_key(references[references['kind'] == band], columns)
        in_band = np.flatnonzero(band_of_event == band)
        for key, (rows, centers) in _by_key(events.iloc[in_band], columns).items():
            for d, _ in match_pairs(centers, hfo.get(key, (None, []))[1], ci_s):
                labels[in_band[rows[d]]] = 1
    return labels


@dataclass
class RateTable:
    """
    HFO rates per channel and band

    frame columns: channel, channel_name, band, count, duration_min, rate,
    resected. Rates are events per minute.
    """

    frame: pd.DataFrame

    def band(self, band: str) -> pd.DataFrame:
        return self.frame[self.frame['band'] == band]


def rate_table(detections: pd.DataFrame, record, bands: Sequence[str] = SCORED_BANDS) -> RateTable:
    """
    Count detections per channel and band over the recording duration

    Args:
        detections: detection table (channel, band)
        record: anything with channel_names, resected and duration_s
        bands: bands to tabulate
    """
    _require(detections, ('channel', 'band'), 'Detections')
    duration_min = record.duration_s / 60.0
    if duration_min <= 0:
        raise ParameterError('Recording duration must be positive')
    rows = []
    for band in bands:
        in_band = detections[detections['band'] == band]
        counts = in_band['channel'].value_counts()
        for channel, name in enumerate(record.channel_names):
            count = int(counts.get(channel, 0))
            rows.append({
                'channel': channel,
                'channel_name': name,
                'band': band,
                'count': count,
                'duration_min': duration_min,
                'rate': count / duration_min,
                'resected': bool(record.resected[channel]),
            })
    columns = ['channel', 'channel_name', 'band', 'count', 'duration_min', 'rate', 'resected']
    return RateTable(pd.DataFrame(rows, columns=columns))


@dataclass(frozen=True)
class RatioResult:
    """Resection rate ratio in [-1, 1]; value is None when flag is 'no-events'"""

    value: Optional[float]
    flag: Optional[str] = None


def rate_ratio(rates: RateTable, band: str) -> RatioResult:
    """(sum of resected rates - sum of other rates) / sum of all rates"""
    table = rates.band(band)
    resected = table.loc[table['resected'], 'rate'].sum()
    other = table.loc[~table['resected'], 'rate'].sum()
    total = resected + other
    if total <= 0:
        return RatioResult(value=None, flag='no-events')
    return RatioResult(value=float((resected - other) / total))


def outcome_group(ilae: Optional[int]) -> str:
    """good for ILAE class 1, poor for classes 2 to 6, empty when unknown"""
    if ilae is None or pd.isna(ilae):
        return ''
    return 'good' if int(ilae) == 1 else 'poor'


def ratio_table(patients: Sequence[Tuple[str, RateTable, Optional[int]]]) -> pd.DataFrame:
    """One row per patient with ripple and fast-ripple ratios and outcome group"""
    rows = []
    for patient, rates, ilae in patients:
        row = {'patient': patient}
        for band in SCORED_BANDS:
            result = rate_ratio(rates, band)
            row[f'{band}_ratio'] = result.value if result.value is not None else np.nan
            row[f'{band}_flag'] = result.flag or ''
        row['ilae'] = ilae if ilae is not None else np.nan
        row['outcome'] = outcome_group(ilae)
        rows.append(row)
    columns = ['patient', 'ripple_ratio', 'ripple_flag', 'fast_ripple_ratio', 'fast_ripple_flag',
               'ilae', 'outcome']
    return pd.DataFrame(rows, columns=columns)


@dataclass
class BandReport:
    tp: int
    fp: int
    fn: int
    sensitivity: float
    precision: float
    f_score: float
    p_value: float
    score_ci: Tuple[float, float]
    n_permutations: int
    warning: Optional[str] = None


@dataclass
class EvalReport:
    """
    Scores per band, per recording rows (suite runs) and spike bookkeeping
    """

    bands: Dict[str, BandReport] = field(default_factory=dict)
    recordings: List[dict] = field(default_factory=list)
    spike_false_positives: int = 0
    n_spikes: int = 0
    ci_s: float = 0.1
    config_digest: str = ''

    @property
    def spike_fp_rate(self) -> float:
        return self.spike_false_positives / self.n_spikes if self.n_spikes else 0.0

    def to_dict(self) -> dict:
        return {
            'bands': {band: _rounded(asdict(report)) for band, report in sorted(self.bands.items())},
            'recordings': [_rounded(row) for row in self.recordings],
            'spikes': {
                'injected': self.n_spikes,
                'false_positives': self.spike_false_positives,
                'false_positive_rate': round(self.spike_fp_rate, 10),
            },
            'ci_s': self.ci_s,
            'config_digest': self.config_digest,
        }

    def recordings_frame(self) -> pd.DataFrame:
        columns = ['recording', 'snr_db', 'band', 'tp', 'fp', 'fn', 'sensitivity', 'precision', 'f_score']
        return pd.DataFrame(self.recordings, columns=columns)


def _rounded(mapping: dict) -> dict:
    out = {}
    for key, value in mapping.items():
        if isinstance(value, float):
            value = None if np.isnan(value) else round(value, 10)
        elif isinstance(value, tuple):
            value = [round(item, 10) for item in value]
        out[key] = value
    return out


def evaluate(detections: pd.DataFrame, references: pd.DataFrame, config,
             n_jobs: int = 1) -> EvalReport:
    """
    Full evaluation protocol

    Band scores with permutation p-value and bootstrap interval, one score row
    per recording and band when both tables carry a recording column, and the
    spike false-positive count.
    """
    _require(detections, ('channel', 'center_s', 'band'), 'Detections')
    _check_references(references)
    report = EvalReport(ci_s=config.ci_s, config_digest=config.digest())

    for position, band in enumerate(SCORED_BANDS):
        counts = score_band(detections, references, band, config.ci_s)
        sens, prec, f_score = scores(counts)
        test = permutation_test(detections, references, band, n_perm=config.n_permutations,
                                seed=(config.seed, position), ci_s=config.ci_s,
                                n_bootstrap=config.n_bootstrap,
                                chunks=config.permutation_chunks, n_jobs=n_jobs)
        report.bands[band] = BandReport(
            tp=counts.tp, fp=counts.fp, fn=counts.fn, sensitivity=sens, precision=prec,
            f_score=f_score, p_value=test.p_value, score_ci=test.score_ci,
            n_permutations=test.n_permutations, warning=test.warning,
        )

    if 'recording' in detections.columns and 'recording' in references.columns:
        recordings = set(references['recording']) | set(detections['recording'])
        for recording in sorted(recordings, key=str):
            ref = references[references['recording'] == recording]
            det = detections[detections['recording'] == recording]
            snr = float(ref['snr_db'].iloc[0]) if 'snr_db' in ref.columns and len(ref) else np.nan
            for band in SCORED_BANDS:
                counts = score_band(det, ref, band, config.ci_s)
                sens, prec, f_score = scores(counts)
                report.recordings.append({
                    'recording': recording, 'snr_db': snr, 'band': band,
                    'tp': counts.tp, 'fp': counts.fp, 'fn': counts.fn,
                    'sensitivity': sens, 'precision': prec, 'f_score': f_score,
                })

    report.n_spikes = int(np.sum(references['kind'] == 'spike'))
    report.spike_false_positives = spike_false_positives(detections, references, config.ci_s)
    return report
