"""
Time-frequency event clustering detector

Pipeline per detection pass: band-pass, epoch, S-transform, whitening,
Otsu/CCL candidate extraction, duplicate pooling, features, z-scoring on the
selected subset, Ward clustering and amplitude-range labelling. Candidates
below salience_floor stay in the clustering pool as background but are never
reported.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from analytics.exceptions import ConfigError, DataContractError
from analytics.ml_models.clustering import ClusterResult, hierarchical_cluster, label_clusters
from analytics.ml_models.events import Event, extract_candidates, pool_and_dedup
from analytics.ml_models.features import FEATURE_NAMES, feature_frame, zscore
from analytics.ml_models.signal_core import SignalRecord, bandpass, epoch_signal
from analytics.ml_models.stockwell import stransform, whiten

logger = logging.getLogger(__name__)

DETECTION_COLUMNS = ['channel', 'center_s', 'kind', 'band', 'cluster', 'feature_row']
EVENT_META_COLUMNS = ['channel', 'center_s', 'band', 'cluster', 'is_hfo', 'peak', 'salience', 'pixel_count']


@dataclass
class DetectionResult:
    """
    Output of one detector run

    events holds every clustered candidate (HFO or not) in the row order of
    features; detections lists the HFO-labelled events only, feature_row
    pointing into features.
    """

    events: List[Event] = field(default_factory=list)
    features: pd.DataFrame = field(default_factory=pd.DataFrame)
    detections: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=DETECTION_COLUMNS))
    clusters: Dict[str, ClusterResult] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)


def _channel_events(trace: np.ndarray, channel: int, fs: float, band: Tuple[float, float],
                    config) -> List[Event]:
    """Events of one channel for one pass; trace is the raw channel"""
    filtered = bandpass(trace, fs, band[0], band[1], config.filter_taps_per_s)
    record = SignalRecord(filtered[np.newaxis, :], fs, [str(channel)])
    epochs = [replace(epoch, channel=channel)
              for epoch in epoch_signal(record, config.epoch_window_s, config.epoch_step_s)[0]]
    events = []
    for index, epoch in enumerate(epochs):
        tfd = whiten(stransform(epoch.samples, fs, band[0], band[1], (channel, epoch.start_sample)))
        events.extend(extract_candidates(tfd, epoch, config, filtered, epoch_index=index))
    pooled = pool_and_dedup(events, config.merge_radius_s)
    logger.debug('Channel %d, %.0f-%.0f Hz: %d events (%d before pooling)',
                 channel, band[0], band[1], len(pooled), len(events))
    return pooled


class TfecDetector:
    """
    Unsupervised HFO detector for multichannel recordings

    Args:
        config: RunConfig
        n_jobs: joblib workers; channels are processed in parallel
    """

    def __init__(self, config, n_jobs: int = 1):
        self.config = config
        self.n_jobs = n_jobs
        self.subset = tuple(config.resolved_subset())
        unknown = [name for name in self.subset if name not in FEATURE_NAMES]
        if unknown:
            raise ConfigError(f'Unknown features in subset: {", ".join(unknown)}')

    def check_record(self, record: SignalRecord):
        """Every configured pass must fit below the Nyquist frequency"""
        for name, (low, high) in self.config.bands().items():
            if high >= record.fs / 2:
                raise DataContractError(
                    f'{name} band {low:g}-{high:g} Hz needs fs above {2 * high:g} Hz, '
                    f'recording has {record.fs:g} Hz'
                )

    def extract(self, record: SignalRecord) -> List[Event]:
        """Pooled candidates over every pass and channel"""
        self.check_record(record)
        events = []
        for name, band in self.config.bands().items():
            per_channel = Parallel(n_jobs=self.n_jobs)(
                delayed(_channel_events)(record.samples[channel], channel, record.fs, band, self.config)
                for channel in range(record.n_channels)
            )
            found = [event for channel_events in per_channel for event in channel_events]
            logger.info('Pass %s: %d candidates', name, len(found))
            events.extend(found)
        return sorted(events, key=lambda e: (e.band, e.channel, e.center_s))

    def classify(self, events: Sequence[Event],
                 frame: pd.DataFrame) -> Tuple[np.ndarray, np.ndarray, Dict[str, ClusterResult]]:
        """
        Cluster each band's candidates separately

        An event is reported as HFO when its cluster is labelled HFO and its
        salience reaches salience_floor. Bands with fewer candidates than
        groups skip clustering: their salient events are reported in cluster 0.

        Returns:
            (cluster id per event, HFO mask per event, ClusterResult per band)
        """
        cluster_ids = np.zeros(len(events), dtype=np.int64)
        salient = np.array([event.salience >= self.config.salience_floor for event in events], dtype=bool)
        is_hfo = np.zeros(len(events), dtype=bool)
        clusters = {}
        bands = np.array([event.band for event in events], dtype=object)
        for band in sorted(set(bands)):
            rows = np.flatnonzero(bands == band)
            if rows.size < max(2, self.config.n_groups):
                logger.info('%s: %d events, clustering skipped', band, rows.size)
                is_hfo[rows] = salient[rows]
                continue
            normalized, _, _ = zscore(frame.iloc[rows][list(self.subset)])
            result = hierarchical_cluster(normalized, n_groups=self.config.n_groups,
                                          method=self.config.linkage)
            result = label_clusters(result, [events[row] for row in rows])
            cluster_ids[rows] = result.assignment
            is_hfo[rows] = result.is_hfo() & salient[rows]
            clusters[band] = result
            logger.info('%s: %d events, %d labelled HFO', band, rows.size, int(is_hfo[rows].sum()))
        return cluster_ids, is_hfo, clusters

    def detect(self, record: SignalRecord) -> DetectionResult:
        timings = {}
        started = time.perf_counter()
        events = self.extract(record)
        timings['extract_s'] = time.perf_counter() - started

        started = time.perf_counter()
        frame = feature_frame(events)
        timings['features_s'] = time.perf_counter() - started

        started = time.perf_counter()
        cluster_ids, is_hfo, clusters = self.classify(events, frame)
        timings['cluster_s'] = time.perf_counter() - started

        meta = pd.DataFrame({
            'channel': [event.channel for event in events],
            'center_s': [event.center_s for event in events],
            'band': [event.band for event in events],
            'cluster': cluster_ids,
            'is_hfo': is_hfo,
            'peak': [event.peak for event in events],
            'salience': [event.salience for event in events],
            'pixel_count': [event.pixel_count for event in events],
        }, columns=EVENT_META_COLUMNS)
        features = pd.concat([meta, frame.reset_index(drop=True)], axis=1)
        features['flags'] = [';'.join(flags) for flags in frame.attrs.get('flags', [])]

        hfo_rows = np.flatnonzero(is_hfo)
        detections = pd.DataFrame({
            'channel': meta['channel'].to_numpy()[hfo_rows],
            'center_s': meta['center_s'].to_numpy()[hfo_rows],
            'kind': meta['band'].to_numpy()[hfo_rows],
            'band': meta['band'].to_numpy()[hfo_rows],
            'cluster': cluster_ids[hfo_rows],
            'feature_row': hfo_rows,
        }, columns=DETECTION_COLUMNS)
        detections = detections.sort_values(['channel', 'center_s', 'band'], kind='stable')
        logger.info('Detected %d HFOs among %d candidates', len(detections), len(events))
        return DetectionResult(events=list(events), features=features,
                               detections=detections.reset_index(drop=True),
                               clusters=clusters, timings=timings)


def detect_record(record: SignalRecord, config, n_jobs: int = 1) -> DetectionResult:
    return TfecDetector(config, n_jobs=n_jobs).detect(record)
