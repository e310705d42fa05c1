"""
Feature catalog for events of interest

Four groups are computed per event: time-domain statistics of the crop,
Welch-spectrum descriptors, statistics of the time-frequency patch, and image
descriptors of the patch (segment moments, geometry and local binary patterns).
Degenerate inputs never raise: the affected features are imputed with 0 and a
named flag is recorded next to the vector.
"""

import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Optional, Sequence, Tuple

import cv2
import numpy as np
import pandas as pd
from scipy import ndimage, signal, stats
from skimage.feature import local_binary_pattern
from sklearn.preprocessing import StandardScaler

from analytics.exceptions import DataContractError, ParameterError
from analytics.ml_models.events import Event, label_components, otsu_threshold
from analytics.ml_models.signal_core import tkeo

logger = logging.getLogger(__name__)

TIME_FEATURES = (
    'time_mean', 'time_variance', 'time_skewness', 'time_kurtosis', 'time_cv',
    'time_rms', 'time_power', 'time_line_length', 'time_autocorr_lag1',
    'time_nonlinear_energy', 'time_fractal_dimension', 'time_range',
)
FREQ_FEATURES = (
    'freq_spectral_flux', 'freq_spectral_flatness', 'freq_spectral_entropy',
    'freq_iwmf', 'freq_iwbw', 'freq_peak_power',
)
TF_FEATURES = (
    'tf_mean', 'tf_variance', 'tf_skewness', 'tf_kurtosis', 'tf_cv',
    'tf_shannon_entropy', 'tf_renyi_entropy', 'tf_flatness', 'tf_flux',
    'tf_energy_concentration',
)
IMAGE_FEATURES = (
    'img_m00', 'img_m10', 'img_m01', 'img_centroid_m', 'img_centroid_n',
    'img_mu20', 'img_mu02', 'img_mu11', 'img_area', 'img_moment_perimeter',
    'img_moment_compactness', 'img_boundary_perimeter', 'img_height', 'img_width',
    'lbp_mean', 'lbp_variance', 'lbp_skewness', 'lbp_kurtosis',
)
FEATURE_NAMES = TIME_FEATURES + FREQ_FEATURES + TF_FEATURES + IMAGE_FEATURES

MIN_CROP_SAMPLES = 16
RENYI_ALPHA = 3
TF_FLUX_LAG = (1, 1)
BOX_SIZES = tuple(2 ** k for k in range(7))

LBP_POINTS = 8
LBP_RADIUS = 1


@dataclass
class FeatureVector:
    values: np.ndarray
    names: Tuple[str, ...] = FEATURE_NAMES
    event_ref: Optional[Event] = None
    flags: FrozenSet[str] = frozenset()

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


@dataclass(frozen=True)
class Psd:
    """
    One-sided power spectral density (uV^2/Hz)

    halves holds the periodograms of the first and second half of the crop,
    used for spectral flux.
    """

    power: np.ndarray
    f_axis: np.ndarray
    halves: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def df(self) -> float:
        return float(self.f_axis[1] - self.f_axis[0]) if len(self.f_axis) > 1 else 0.0


def _standardized_moments(x: np.ndarray) -> Tuple[float, float]:
    """Skewness m3/s^3 and (Pearson) kurtosis m4/s^4 with population moments"""
    return float(stats.skew(x, bias=True)), float(stats.kurtosis(x, fisher=False, bias=True))


def box_counting_dimension(x: Sequence[float], box_sizes: Sequence[int] = BOX_SIZES) -> float:
    """
    Box-counting dimension of a trace's graph

    The amplitude is rescaled so the trace spans as many units as it has
    samples; for each box size eps (in samples) every column of eps samples
    (plus its right end point) is covered by floor(max/eps) - floor(min/eps) + 1
    boxes. The dimension is the least-squares slope of log N(eps) against
    log(1/eps).
    """
    y = np.asarray(x, dtype=np.float64)
    n = y.size
    span = y.max() - y.min() if n else 0.0
    y = (y - y.min()) / span * (n - 1) if span > 0 else np.zeros(n)

    sizes = [eps for eps in box_sizes if eps < n - 1]
    if len(sizes) < 2:
        return 1.0
    counts = []
    for eps in sizes:
        starts = np.arange(0, n - 1, eps)
        ends = y[np.minimum(starts + eps, n - 1)]
        col_max = np.maximum(np.maximum.reduceat(y[:-1], starts), ends)
        col_min = np.minimum(np.minimum.reduceat(y[:-1], starts), ends)
        counts.append(np.sum(np.floor(col_max / eps) - np.floor(col_min / eps) + 1))
    slope, _ = np.polyfit(np.log(1.0 / np.asarray(sizes, dtype=np.float64)), np.log(counts), 1)
    return float(slope)


def time_features(crop: Sequence[float]) -> Tuple[Dict[str, float], FrozenSet[str]]:
    """
    Statistical and other time-domain features of a crop

    Returns:
        (features keyed by TIME_FEATURES names, degeneracy flags)
    """
    x = np.asarray(crop, dtype=np.float64)
    if x.ndim != 1:
        raise ParameterError('time features need a 1-D crop')
    if x.size < MIN_CROP_SAMPLES:
        raise DataContractError(
            f'time features need a crop of at least {MIN_CROP_SAMPLES} samples, got {x.size}'
        )
    flags = set()

    mean = x.mean()
    variance = x.var()
    centered = x - mean
    if variance > 0:
        skewness, kurtosis = _standardized_moments(x)
        autocorr = float(np.sum(centered[:-1] * centered[1:]) / np.sum(centered ** 2))
    else:
        skewness = kurtosis = autocorr = 0.0
        flags.add('time_zero_variance')
    if variance > 0 and mean != 0:
        cv = float(np.sqrt(variance) / mean)
    else:
        cv = 0.0
        flags.add('time_cv_undefined')

    features = {
        'time_mean': float(mean),
        'time_variance': float(variance),
        'time_skewness': skewness,
        'time_kurtosis': kurtosis,
        'time_cv': cv,
        'time_rms': float(np.sqrt(np.mean(x ** 2))),
        'time_power': float(np.sum(x ** 2)),
        'time_line_length': float(np.sum(np.abs(np.diff(x)))),
        'time_autocorr_lag1': autocorr,
        'time_nonlinear_energy': float(np.sum(tkeo(x)[1:-1])),
        'time_fractal_dimension': box_counting_dimension(x),
        'time_range': float(x.max() - x.min()),
    }
    return features, frozenset(flags)


def welch_psd(crop: Sequence[float], fs: float) -> Psd:
    """
    Welch PSD with 1 s Hamming segments and no overlap

    Crops shorter than one second use a single segment spanning the whole
    crop. Density scaling makes sum(power) * df match the crop variance.
    """
    x = np.asarray(crop, dtype=np.float64)
    if x.size == 0:
        raise ParameterError('welch_psd needs a non-empty crop')
    nperseg = min(x.size, int(round(fs)))
    f_axis, power = signal.welch(x, fs=fs, window='hamming', nperseg=nperseg, noverlap=0,
                                 detrend='constant', scaling='density')

    half = x.size // 2
    halves = None
    if half >= 2:
        _, first = signal.periodogram(x[:half], fs=fs, window='hamming', scaling='density')
        _, second = signal.periodogram(x[half:2 * half], fs=fs, window='hamming', scaling='density')
        halves = (first, second)
    return Psd(power=power, f_axis=f_axis, halves=halves)


def freq_features(psd: Psd) -> Tuple[Dict[str, float], FrozenSet[str]]:
    """Spectral flux, flatness, entropy, IWMF, IWBW and peak power"""
    power = np.asarray(psd.power, dtype=np.float64)
    if power.size == 0:
        raise ParameterError('freq features need a non-empty psd')
    flags = set()
    flux = float(np.sum(np.abs(psd.halves[1] - psd.halves[0]))) if psd.halves else 0.0

    total = power.sum()
    if total > 0:
        p = power / total
        nonzero = p[p > 0]
        entropy = float(-np.sum(nonzero * np.log2(nonzero)))
        flatness = float(np.exp(np.mean(np.log(power))) / np.mean(power)) if np.all(power > 0) else 0.0
        iwmf = float(np.sum(p * psd.f_axis))
        iwbw = float(np.sqrt(np.sum(p * (psd.f_axis - iwmf) ** 2)))
    else:
        entropy = flatness = iwmf = iwbw = 0.0
        flags.add('freq_zero_power')

    features = {
        'freq_spectral_flux': flux,
        'freq_spectral_flatness': flatness,
        'freq_spectral_entropy': entropy,
        'freq_iwmf': iwmf,
        'freq_iwbw': iwbw,
        'freq_peak_power': float(power.max()),
    }
    return features, frozenset(flags)


def tf_features(tfd_patch: np.ndarray) -> Tuple[Dict[str, float], FrozenSet[str]]:
    """
    Statistics, entropies, flatness, flux and energy concentration of a patch

    Entropies use the patch normalised to unit sum. Energy concentration
    (sum of sqrt(rho))^2 is taken on the raw patch, so it scales with energy.
    """
    rho = np.asarray(tfd_patch, dtype=np.float64)
    if rho.ndim != 2 or rho.size == 0:
        raise ParameterError('tf features need a non-empty 2-D patch')
    if np.any(rho < 0):
        raise ParameterError('tf features need a non-negative patch')
    flags = set()
    values = rho.ravel()

    mean = values.mean()
    variance = values.var()
    if variance > 0:
        skewness, kurtosis = _standardized_moments(values)
    else:
        skewness = kurtosis = 0.0
        flags.add('tf_zero_variance')
    cv = float(np.sqrt(variance) / mean) if mean > 0 else 0.0

    lag_n, lag_m = TF_FLUX_LAG
    flux = float(np.sum(np.abs(rho[lag_n:, lag_m:] - rho[:-lag_n, :-lag_m])) / rho.size) \
        if rho.shape[0] > lag_n and rho.shape[1] > lag_m else 0.0

    total = values.sum()
    if total > 0:
        normalized = values / total
        nonzero = normalized[normalized > 0]
        shannon = float(-np.sum(nonzero * np.log2(nonzero)))
        renyi = float(np.log2(np.sum(nonzero ** RENYI_ALPHA)) / (1 - RENYI_ALPHA))
        flatness = float(np.exp(np.mean(np.log(values))) / mean) if np.all(values > 0) else 0.0
    else:
        shannon = renyi = flatness = 0.0
        flags.add('tf_zero_energy')
    concentration = float(np.sum(np.sqrt(values)) ** 2)

    features = {
        'tf_mean': float(mean),
        'tf_variance': float(variance),
        'tf_skewness': skewness,
        'tf_kurtosis': kurtosis,
        'tf_cv': cv,
        'tf_shannon_entropy': shannon,
        'tf_renyi_entropy': renyi,
        'tf_flatness': flatness,
        'tf_flux': flux,
        'tf_energy_concentration': concentration,
    }
    return features, frozenset(flags)


def segment_moments(mask: np.ndarray) -> Dict[str, float]:
    """
    Raw (m_pq) and central (mu_pq) moments of a binary segment up to order 3

    m_pq sums row^p col^q over the segment (row = frequency, column = time).
    OpenCV puts x on the column axis, so its m_qp is returned as m_pq.
    """
    opencv = cv2.moments(np.ascontiguousarray(mask, dtype=np.uint8), binaryImage=True)
    moments = {f'{key[:-2]}{key[-1]}{key[-2]}': float(value) for key, value in opencv.items()}
    moments['mu00'] = moments['m00']
    return moments


def lbp_codes(gray: np.ndarray) -> np.ndarray:
    """8-neighbour, radius-1 local binary pattern codes of a gray-level image"""
    return local_binary_pattern(np.asarray(gray, dtype=np.uint8), LBP_POINTS, LBP_RADIUS,
                                method='default').astype(np.int64)


def _lbp_statistics(gray: np.ndarray) -> Tuple[Dict[str, float], bool]:
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        return dict.fromkeys(IMAGE_FEATURES[-4:], 0.0), True
    histogram = np.bincount(lbp_codes(gray).ravel(), minlength=256).astype(np.float64)
    p = histogram / histogram.sum()
    codes = np.arange(256, dtype=np.float64)
    mean = float(np.sum(p * codes))
    variance = float(np.sum(p * (codes - mean) ** 2))
    if variance > 0:
        skewness = float(np.sum(p * (codes - mean) ** 3) / variance ** 1.5)
        kurtosis = float(np.sum(p * (codes - mean) ** 4) / variance ** 2)
    else:
        skewness = kurtosis = 0.0
    return {
        'lbp_mean': mean,
        'lbp_variance': variance,
        'lbp_skewness': skewness,
        'lbp_kurtosis': kurtosis,
    }, variance == 0


def image_features(tfd_patch: np.ndarray) -> Tuple[Dict[str, float], FrozenSet[str]]:
    """
    Moment, geometric and LBP descriptors of a patch

    The patch is binarised with the Otsu threshold and the largest connected
    segment (8-connectivity) is described. The moment-based perimeter and
    compactness follow (m30 + m12)^2 + (m03 + m21)^2 and that value over the
    area; img_boundary_perimeter counts segment cells with a 4-neighbour
    outside the segment.
    """
    gray = np.asarray(tfd_patch, dtype=np.float64)
    if gray.ndim != 2 or gray.size == 0:
        raise ParameterError('image features need a non-empty 2-D patch')
    flags = set()
    features = dict.fromkeys(IMAGE_FEATURES, 0.0)

    otsu = otsu_threshold(gray)
    binary = otsu.binarize(gray)
    regions = label_components(binary, min_area=1) if binary.any() else []
    if not regions:
        flags.add('img_empty_segment')
        return features, frozenset(flags)

    largest = max(regions, key=lambda region: region.pixel_count)
    mask = np.zeros(gray.shape, dtype=bool)
    mask[largest.pixels[:, 0], largest.pixels[:, 1]] = True

    moments = segment_moments(mask)
    m00 = moments['m00']
    moment_perimeter = (moments['m30'] + moments['m12']) ** 2 + (moments['m03'] + moments['m21']) ** 2
    eroded = ndimage.binary_erosion(mask, structure=ndimage.generate_binary_structure(2, 1),
                                    border_value=0)
    features.update({
        'img_m00': m00,
        'img_m10': moments['m10'],
        'img_m01': moments['m01'],
        'img_centroid_m': moments['m10'] / m00,
        'img_centroid_n': moments['m01'] / m00,
        'img_mu20': moments['mu20'],
        'img_mu02': moments['mu02'],
        'img_mu11': moments['mu11'],
        'img_area': moments['mu00'],
        'img_moment_perimeter': moment_perimeter,
        'img_moment_compactness': moment_perimeter / moments['mu00'],
        'img_boundary_perimeter': float(mask.sum() - eroded.sum()),
        'img_height': float(largest.height),
        'img_width': float(largest.width),
    })

    lbp, lbp_flat = _lbp_statistics(otsu.quantize(gray))
    features.update(lbp)
    if lbp_flat:
        flags.add('lbp_degenerate')
    return features, frozenset(flags)


def assemble(event: Event) -> FeatureVector:
    """Concatenate the four feature groups of one event in catalog order"""
    merged: Dict[str, float] = {}
    flags = set()
    groups = (
        time_features(event.crop),
        freq_features(welch_psd(event.crop, event.fs)),
        tf_features(event.tfd_patch),
        image_features(event.tfd_patch),
    )
    for features, group_flags in groups:
        merged.update(features)
        flags |= group_flags
    values = np.array([merged[name] for name in FEATURE_NAMES], dtype=np.float64)

    # Overflowing moments are the only way a non-finite value can appear
    bad = ~np.isfinite(values)
    if bad.any():
        values[bad] = 0.0
        flags.add('non_finite')
    if flags:
        logger.debug('Event at %.3f s (channel %d): imputed %s',
                     event.center_s, event.channel, ', '.join(sorted(flags)))
    return FeatureVector(values=values, names=FEATURE_NAMES, event_ref=event,
                         flags=frozenset(flags))


def feature_frame(events: Iterable[Event]) -> pd.DataFrame:
    """
    Feature matrix of a set of events

    Returns:
        DataFrame with one row per event and the catalog names as columns; the
        degeneracy flags are kept in the `attrs['flags']` list, outside the
        clustering input
    """
    vectors = [assemble(event) for event in events]
    frame = pd.DataFrame([vector.values for vector in vectors], columns=list(FEATURE_NAMES))
    if not vectors:
        frame = pd.DataFrame(columns=list(FEATURE_NAMES), dtype=np.float64)
    frame.attrs['flags'] = [sorted(vector.flags) for vector in vectors]
    return frame


def zscore(matrix) -> Tuple[object, np.ndarray, np.ndarray]:
    """
    Column-wise standardisation with population standard deviation

    Zero-variance columns come out as exact zeros.

    Returns:
        (normalised matrix of the input's type, column means, column sds)
    """
    values = np.asarray(matrix, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 2:
        raise ParameterError('zscore needs at least 2 events')
    scaler = StandardScaler()
    normalized = scaler.fit_transform(values)
    constant = np.ptp(values, axis=0) == 0
    sds = np.where(constant, 0.0, np.sqrt(scaler.var_))
    normalized[:, constant] = 0.0
    if isinstance(matrix, pd.DataFrame):
        normalized = pd.DataFrame(normalized, columns=matrix.columns, index=matrix.index)
    return normalized, scaler.mean_, sds
