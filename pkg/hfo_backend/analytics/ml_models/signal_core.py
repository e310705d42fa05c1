"""
Signal container, epoching, band-pass filtering and Teager-Kaiser energy
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy import signal

from analytics.exceptions import DataContractError, ParameterError

logger = logging.getLogger(__name__)

# Minimum sampling rate for fast-ripple analysis (Nyquist above 500 Hz)
MIN_FS = 1000.0

RIPPLE_BAND = (80.0, 250.0)
FAST_RIPPLE_BAND = (250.0, 500.0)
FULL_BAND = (80.0, 500.0)


@dataclass
class SignalRecord:
    """
    Multichannel recording sampled at a common rate

    Args:
        samples: array of shape (n_channels, n_samples), amplitudes in uV
        fs: sampling rate in Hz
        channel_names: one label per channel
        resected: one flag per channel, True when the contact lies in the resected area
    """

    samples: np.ndarray
    fs: float
    channel_names: List[str]
    resected: List[bool] = field(default_factory=list)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        self.fs = float(self.fs)
        if self.fs <= 0:
            raise DataContractError(f'Sampling rate must be positive, got {self.fs}')
        if self.fs < MIN_FS:
            raise DataContractError(
                f'Sampling rate {self.fs} Hz is below the {MIN_FS:.0f} Hz needed for HFO analysis'
            )
        n_channels = self.samples.shape[0]
        self.channel_names = list(self.channel_names)
        if len(self.channel_names) != n_channels:
            raise DataContractError(
                f'{len(self.channel_names)} channel names for {n_channels} channels'
            )
        if not self.resected:
            self.resected = [False] * n_channels
        self.resected = [bool(flag) for flag in self.resected]
        if len(self.resected) != n_channels:
            raise DataContractError(
                f'{len(self.resected)} resected flags for {n_channels} channels'
            )

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def with_samples(self, samples: np.ndarray) -> 'SignalRecord':
        """Same channel metadata, different sample matrix (e.g. filtered)"""
        return SignalRecord(samples, self.fs, self.channel_names, self.resected)


@dataclass(frozen=True)
class Epoch:
    channel: int
    start_sample: int
    samples: np.ndarray
    fs: float

    @property
    def start_s(self) -> float:
        return self.start_sample / self.fs


def epoch_signal(record: SignalRecord, window_s: float = 1.0,
                 step_s: float = 0.5) -> List[List[Epoch]]:
    """
    Cut every channel into overlapping fixed-length epochs

    A trailing partial window is dropped. A record shorter than one window
    yields empty per-channel lists.

    Returns:
        One list of Epoch per channel, ordered by start sample
    """
    if window_s <= 0:
        raise ParameterError(f'window_s must be positive, got {window_s}')
    if not 0 < step_s <= window_s:
        raise ParameterError(f'step_s must lie in (0, window_s], got {step_s}')

    window = int(round(window_s * record.fs))
    step = int(round(step_s * record.fs))
    if record.n_samples < window:
        return [[] for _ in range(record.n_channels)]

    starts = np.arange(0, record.n_samples - window + 1, step)
    epochs = []
    for channel in range(record.n_channels):
        trace = record.samples[channel]
        epochs.append([
            Epoch(channel, int(start), trace[start:start + window], record.fs)
            for start in starts
        ])
    return epochs


def _check_band(fs: float, f_lo: float, f_hi: float):
    if not 0 < f_lo < f_hi < fs / 2:
        raise ParameterError(
            f'Invalid band [{f_lo}, {f_hi}] Hz for fs={fs} Hz (need 0 < f_lo < f_hi < fs/2)'
        )


def design_bandpass(fs: float, f_lo: float, f_hi: float,
                    taps_per_s: float = 0.25) -> np.ndarray:
    """Odd-length linear-phase Hamming FIR for the band [f_lo, f_hi]"""
    _check_band(fs, f_lo, f_hi)
    numtaps = int(fs * taps_per_s) | 1
    return signal.firwin(numtaps, [f_lo, f_hi], pass_zero=False, window='hamming', fs=fs)


def bandpass(samples: Sequence[float], fs: float, f_lo: float, f_hi: float,
             taps_per_s: float = 0.25) -> np.ndarray:
    """
    Zero-phase band-pass filter

    The FIR is symmetric with an odd number of taps, so a centred ('same')
    convolution compensates its constant group delay exactly.

    Args:
        samples: 1-D trace or 2-D array filtered along the last axis
        fs: sampling rate in Hz
        f_lo, f_hi: pass band edges in Hz
        taps_per_s: filter length in seconds (taps = fs * taps_per_s, forced odd)

    Returns:
        Filtered array with the input's shape
    """
    taps = design_bandpass(fs, f_lo, f_hi, taps_per_s)
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        return signal.oaconvolve(x, taps, mode='same')
    return signal.oaconvolve(x, taps[np.newaxis, :], mode='same', axes=-1)


def tkeo(samples: Sequence[float]) -> np.ndarray:
    """
    Teager-Kaiser energy x[n]^2 - x[n-1] x[n+1]

    Endpoints are set to 0 so the output stays aligned with the input.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size < 3:
        raise ParameterError('TKEO needs a 1-D trace of at least 3 samples')
    energy = np.zeros_like(x)
    energy[1:-1] = x[1:-1] ** 2 - x[:-2] * x[2:]
    return energy
