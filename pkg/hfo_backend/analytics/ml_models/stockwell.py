"""
Discrete Stockwell transform and the time-frequency matrices built from it
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import fft

from analytics.exceptions import ParameterError

logger = logging.getLogger(__name__)

MIN_EPOCH_LENGTH = 64


@dataclass(frozen=True)
class TfdMatrix:
    """
    Time-frequency magnitude matrix

    mag has one row per analysed frequency (f_axis, Hz, increasing) and one
    column per epoch sample (t_axis, seconds from the epoch start).
    source_epoch is (channel, start_sample) of the epoch it was computed from.
    """

    mag: np.ndarray
    f_axis: np.ndarray
    t_axis: np.ndarray
    source_epoch: Optional[Tuple[int, int]] = None

    @property
    def shape(self):
        return self.mag.shape

    @property
    def df(self) -> float:
        if len(self.f_axis) < 2:
            return 0.0
        return float(self.f_axis[1] - self.f_axis[0])


def _check_inputs(x: np.ndarray, fs: float, f_lo: float, f_hi: float):
    if x.ndim != 1 or x.size < MIN_EPOCH_LENGTH:
        raise ParameterError(f'S-transform needs a 1-D epoch of at least {MIN_EPOCH_LENGTH} samples')
    if not fs / x.size <= f_lo <= f_hi < fs / 2:
        raise ParameterError(
            f'Band [{f_lo}, {f_hi}] Hz must start at least one bin above DC and stay below fs/2'
        )


def band_bins(n: int, fs: float, f_lo: float, f_hi: float) -> np.ndarray:
    """DFT bin indices whose frequency falls in [f_lo, f_hi], DC excluded"""
    resolution = fs / n
    first = max(1, int(np.ceil(f_lo / resolution - 1e-9)))
    last = int(np.floor(f_hi / resolution + 1e-9))
    return np.arange(first, last + 1)


def stransform_complex(epoch_samples: Sequence[float], fs: float,
                       f_lo: float, f_hi: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Complex S-transform rows for every DFT bin in [f_lo, f_hi]

    Each row k is the inverse DFT over nu of X[nu + k] * exp(-2 pi^2 nu^2 / k^2)
    with X the epoch spectrum (circular indexing).

    Returns:
        (rows, f_axis) with rows of shape (n_bins, n_samples)
    """
    x = np.asarray(epoch_samples, dtype=np.float64)
    _check_inputs(x, fs, f_lo, f_hi)
    n = x.size
    bins = band_bins(n, fs, f_lo, f_hi)

    spectrum = fft.fft(x)
    nu = fft.fftfreq(n, d=1.0 / n)
    shifted = spectrum[(bins[:, np.newaxis] + np.arange(n)[np.newaxis, :]) % n]
    gauss = np.exp(-2.0 * np.pi ** 2 * nu[np.newaxis, :] ** 2 / bins[:, np.newaxis] ** 2)
    rows = fft.ifft(shifted * gauss, axis=1, workers=-1)
    return rows, bins * fs / n


def stransform(epoch_samples: Sequence[float], fs: float, f_lo: float, f_hi: float,
               source_epoch: Optional[Tuple[int, int]] = None) -> TfdMatrix:
    """Magnitude S-transform of one epoch restricted to the band [f_lo, f_hi]"""
    rows, f_axis = stransform_complex(epoch_samples, fs, f_lo, f_hi)
    t_axis = np.arange(rows.shape[1]) / fs
    return TfdMatrix(np.abs(rows), f_axis, t_axis, source_epoch)


def stransform_direct(epoch_samples: Sequence[float], fs: float, f: float) -> np.ndarray:
    """
    One complex S-transform row by direct summation over time

    Evaluates sum_tau x[tau] * |k|/(sqrt(2 pi) N) * exp(-k^2 (t - tau)^2 / (2 N^2))
    * exp(-j 2 pi k tau / N), periodised over the epoch so it matches the
    circular FFT path. k is the bin index of f. O(N^2); meant for N <= 2048.
    """
    x = np.asarray(epoch_samples, dtype=np.float64)
    _check_inputs(x, fs, f, f)
    n = x.size
    k = int(round(f * n / fs))
    if k < 1:
        raise ParameterError(f'Frequency {f} Hz rounds to the DC bin')

    tau = np.arange(n)
    lag = tau[np.newaxis, :] - tau[:, np.newaxis]
    # Periodise the Gaussian window (the FFT path is circular); terms beyond
    # n_wraps periods are below 1e-12
    n_wraps = int(np.ceil(7.5 / k)) + 1
    window = np.zeros((n, n))
    for wrap in range(-n_wraps, n_wraps + 1):
        window += np.exp(-(k ** 2) * (lag + wrap * n) ** 2 / (2.0 * n ** 2))
    window *= abs(k) / (np.sqrt(2.0 * np.pi) * n)
    phase = np.exp(-2j * np.pi * k * tau / n)
    return window @ (x * phase)


def whiten(tfd: TfdMatrix) -> TfdMatrix:
    """
    Energy relative to each row's median energy

    Rows whose median is zero (silent input) are left at zero.
    """
    energy = tfd.mag ** 2
    baseline = np.median(energy, axis=1, keepdims=True)
    safe = np.where(baseline > 0, baseline, 1.0)
    relative = np.where(baseline > 0, energy / safe, 0.0)
    return replace(tfd, mag=relative)
