"""
Event-of-interest segmentation on time-frequency maps

Otsu binarisation and connected-component labelling run on the whitened
energy map of each epoch; surviving blobs become Events carrying a 200 ms
signal crop and the matching patch of the map.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import cv2
import numpy as np
from scipy import ndimage

from analytics.exceptions import ParameterError
from analytics.ml_models.signal_core import Epoch
from analytics.ml_models.stockwell import TfdMatrix

logger = logging.getLogger(__name__)

N_LEVELS = 256
BAND_SPLIT_HZ = 250.0


@dataclass(frozen=True)
class OtsuResult:
    """
    Otsu split of a matrix quantised to 256 levels over [lo, hi]

    Cells quantised above `level` are foreground. `threshold` is the same
    boundary expressed in the matrix's own units.
    """

    level: int
    threshold: float
    lo: float
    hi: float
    degenerate: bool = False

    def quantize(self, matrix: np.ndarray) -> np.ndarray:
        return quantize(matrix, self.lo, self.hi)

    def binarize(self, matrix: np.ndarray) -> np.ndarray:
        if self.degenerate:
            return np.zeros(np.shape(matrix), dtype=bool)
        return self.quantize(matrix) > self.level


def quantize(matrix: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Map [lo, hi] onto the integer levels 0..255"""
    matrix = np.asarray(matrix, dtype=np.float64)
    if hi <= lo:
        return np.zeros(matrix.shape, dtype=np.uint8)
    scaled = np.floor((matrix - lo) / (hi - lo) * N_LEVELS)
    return np.clip(scaled, 0, N_LEVELS - 1).astype(np.uint8)


def otsu_threshold(mag_matrix: np.ndarray) -> OtsuResult:
    """
    Otsu threshold over 256 quantisation levels

    The level maximising between-class variance is returned, the lowest one on
    ties. A constant matrix is flagged degenerate and binarises to background.
    """
    matrix = np.asarray(mag_matrix, dtype=np.float64)
    if matrix.size == 0:
        raise ParameterError('Otsu threshold needs a non-empty matrix')
    lo, hi = float(matrix.min()), float(matrix.max())
    if hi <= lo:
        return OtsuResult(level=0, threshold=lo, lo=lo, hi=hi, degenerate=True)

    levels = quantize(matrix, lo, hi)
    levels = levels.reshape(-1, levels.shape[-1]) if levels.ndim > 1 else levels[np.newaxis, :]
    levels = np.ascontiguousarray(levels)
    level, _ = cv2.threshold(levels, 0, 255, cv2.THRESH_BINARY + cv2.THRESH_OTSU)
    level = int(level)
    step = (hi - lo) / N_LEVELS
    return OtsuResult(level=level, threshold=lo + (level + 1) * step, lo=lo, hi=hi)


@dataclass(frozen=True)
class BlobRegion:
    """
    One connected component of a binary time-frequency map

    Row index = frequency bin, column index = time sample. pixels holds the
    member (row, col) coordinates in raster order.
    """

    label: int
    pixel_count: int
    centroid_t: float
    centroid_f: float
    bbox: Tuple[float, float, float, float]
    pixels: np.ndarray
    centroid_row: float = 0.0
    centroid_col: float = 0.0

    @property
    def height(self) -> int:
        return int(self.pixels[:, 0].max() - self.pixels[:, 0].min() + 1)

    @property
    def width(self) -> int:
        return int(self.pixels[:, 1].max() - self.pixels[:, 1].min() + 1)


def label_components(binary_matrix: np.ndarray, min_area: int = 1, connectivity: int = 8,
                     t_axis: Optional[np.ndarray] = None,
                     f_axis: Optional[np.ndarray] = None) -> List[BlobRegion]:
    """
    Connected-component labelling of a binary matrix

    Args:
        binary_matrix: 2-D boolean-like array
        min_area: regions with fewer cells are discarded
        connectivity: 8 (default) or 4
        t_axis, f_axis: column / row calibration; index units when omitted

    Returns:
        Regions ordered by their first cell in raster order, labelled 1..n
    """
    if connectivity not in (4, 8):
        raise ParameterError(f'connectivity must be 4 or 8, got {connectivity}')
    binary = np.ascontiguousarray(np.asarray(binary_matrix) != 0, dtype=np.uint8)
    if binary.ndim != 2:
        raise ParameterError('label_components expects a 2-D matrix')
    n_rows, n_cols = binary.shape
    t_axis = np.arange(n_cols, dtype=np.float64) if t_axis is None else np.asarray(t_axis, dtype=np.float64)
    f_axis = np.arange(n_rows, dtype=np.float64) if f_axis is None else np.asarray(f_axis, dtype=np.float64)

    n_labels, labels = cv2.connectedComponents(binary, connectivity=connectivity, ltype=cv2.CV_32S)
    if n_labels <= 1:
        return []

    flat = labels.ravel()
    order = np.argsort(flat, kind='stable')
    boundaries = np.searchsorted(flat[order], np.arange(1, n_labels + 1))
    groups = []
    for label in range(1, n_labels):
        members = order[boundaries[label - 1]:boundaries[label]]
        if members.size >= min_area:
            groups.append(members)
    groups.sort(key=lambda members: members[0])

    regions = []
    for new_label, members in enumerate(groups, start=1):
        rows, cols = np.divmod(members, n_cols)
        centroid_row, centroid_col = rows.mean(), cols.mean()
        regions.append(BlobRegion(
            label=new_label,
            pixel_count=int(members.size),
            centroid_t=float(np.interp(centroid_col, np.arange(n_cols), t_axis)),
            centroid_f=float(np.interp(centroid_row, np.arange(n_rows), f_axis)),
            bbox=(float(t_axis[cols.min()]), float(t_axis[cols.max()]),
                  float(f_axis[rows.min()]), float(f_axis[rows.max()])),
            pixels=np.column_stack([rows, cols]),
            centroid_row=float(centroid_row),
            centroid_col=float(centroid_col),
        ))
    return regions


@dataclass(frozen=True)
class Event:
    """
    One extracted event of interest

    center_s is absolute (recording time). crop is the band-passed trace over
    [center - crop_s/2, center + crop_s/2]; tfd_patch is the whitened map over
    the same window (all analysed rows). peak is the largest whitened energy
    over the blob, salience the largest energy after sustained_energy.
    """

    channel: int
    center_s: float
    crop: np.ndarray
    band: str
    tfd_patch: np.ndarray
    region: BlobRegion
    source_epoch: int
    fs: float
    peak: float = 0.0
    salience: float = 0.0

    @property
    def pixel_count(self) -> int:
        return self.region.pixel_count


def band_of(frequency: float) -> str:
    return 'ripple' if frequency < BAND_SPLIT_HZ else 'fast_ripple'


def _window(trace: np.ndarray, center: int, half: int, length: int) -> np.ndarray:
    """trace[center-half : center-half+length], zero-padded beyond the recording"""
    start = center - half
    out = np.zeros(length)
    lo, hi = max(start, 0), min(start + length, trace.size)
    if hi > lo:
        out[lo - start:hi - start] = trace[lo:hi]
    return out


def sustained_energy(mag: np.ndarray, f_axis: np.ndarray, fs: float, cycles: float) -> np.ndarray:
    """
    Whitened energy averaged along time over a few periods of each row

    Row r is smoothed with a Gaussian of sd cycles * fs / f_axis[r] samples.
    Rows at 0 Hz are left as they are.
    """
    mag = np.asarray(mag, dtype=np.float64)
    out = mag.copy()
    for row, frequency in enumerate(np.asarray(f_axis, dtype=np.float64)):
        if frequency > 0:
            out[row] = ndimage.gaussian_filter1d(mag[row], cycles * fs / frequency, mode='reflect')
    return out


def extract_candidates(tfd: TfdMatrix, epoch: Epoch, config, trace: np.ndarray,
                       epoch_index: int = 0) -> List[Event]:
    """
    Every blob of one epoch the detector clusters

    Args:
        tfd: whitened energy map computed from the epoch
        epoch: the epoch the map was computed from
        config: RunConfig (min_blob_area, candidate_floor, salience_cycles, crop_s)
        trace: the full band-passed channel, so crops can extend past the epoch
        epoch_index: position of the epoch within its channel

    Returns:
        One Event per blob with at least min_blob_area cells whose peak
        whitened energy reaches candidate_floor. Event.salience is the
        largest sustained energy over the blob's cells.
    """
    otsu = otsu_threshold(tfd.mag)
    if otsu.degenerate:
        logger.debug('Channel %d epoch %d: constant map, no events', epoch.channel, epoch_index)
        return []

    binary = otsu.binarize(tfd.mag)
    regions = label_components(binary, min_area=config.min_blob_area,
                               t_axis=tfd.t_axis, f_axis=tfd.f_axis)
    if not regions:
        return []

    fs = epoch.fs
    sustained = sustained_energy(tfd.mag, tfd.f_axis, fs, config.salience_cycles)
    crop_len = int(round(config.crop_s * fs))
    half = crop_len // 2
    n_cols = tfd.mag.shape[1]
    events = []
    for region in regions:
        rows, cols = region.pixels[:, 0], region.pixels[:, 1]
        peak = float(tfd.mag[rows, cols].max())
        if peak < config.candidate_floor:
            continue
        center_col = int(round(region.centroid_col))
        center_sample = epoch.start_sample + center_col

        # Patch columns outside the epoch take the neutral baseline value 1
        patch = np.ones((tfd.mag.shape[0], crop_len))
        first = center_col - half
        lo, hi = max(first, 0), min(first + crop_len, n_cols)
        patch[:, lo - first:hi - first] = tfd.mag[:, lo:hi]

        events.append(Event(
            channel=epoch.channel,
            center_s=center_sample / fs,
            crop=_window(trace, center_sample, half, crop_len),
            band=band_of(region.centroid_f),
            tfd_patch=patch,
            region=region,
            source_epoch=epoch_index,
            fs=fs,
            peak=peak,
            salience=float(sustained[rows, cols].max()),
        ))
    logger.debug('Channel %d epoch %d: %d blobs, %d candidates',
                 epoch.channel, epoch_index, len(regions), len(events))
    return events


def extract_events(tfd: TfdMatrix, epoch: Epoch, config, trace: np.ndarray,
                   epoch_index: int = 0) -> List[Event]:
    """
    Events of interest in one epoch: the candidates whose sustained energy
    reaches salience_floor
    """
    candidates = extract_candidates(tfd, epoch, config, trace, epoch_index)
    return [event for event in candidates if event.salience >= config.salience_floor]


def pool_and_dedup(events: Iterable[Event], merge_radius_s: float = 0.1) -> List[Event]:
    """
    Merge duplicates produced by overlapping epochs

    Events are sorted by (band, center, -pixel_count, source_epoch). Within a
    band, a chain of events each closer than merge_radius_s to the current
    keeper collapses onto the event with the largest blob; the scan is greedy
    left to right, so the result does not depend on input order.
    """
    ordered = sorted(events, key=lambda e: (e.band, e.center_s, -e.pixel_count, e.source_epoch))
    pooled = []
    for band in sorted({event.band for event in ordered}):
        group = [event for event in ordered if event.band == band]
        cluster: List[Event] = []
        for event in group:
            if cluster and event.center_s - cluster[0].center_s >= merge_radius_s:
                pooled.append(_keeper(cluster))
                cluster = []
            cluster.append(event)
        if cluster:
            pooled.append(_keeper(cluster))

    # Keepers of adjacent clusters can still sit closer than the radius
    result: List[Event] = []
    for event in sorted(pooled, key=lambda e: (e.band, e.center_s)):
        previous = result[-1] if result and result[-1].band == event.band else None
        if previous is not None and event.center_s - previous.center_s < merge_radius_s:
            result[-1] = _keeper([previous, event])
        else:
            result.append(event)
    return sorted(result, key=lambda e: (e.center_s, e.band))


def _keeper(cluster: Sequence[Event]) -> Event:
    return min(cluster, key=lambda e: (-e.pixel_count, e.center_s, e.source_epoch))
