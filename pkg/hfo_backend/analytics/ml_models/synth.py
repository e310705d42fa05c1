"""
Synthetic benchmark recordings with ground-truth annotations

Each channel is 1/f background with ripples, fast ripples and spikes injected
at a controlled signal-to-noise ratio. Oscillatory events are Gabor atoms
whose SNR is measured in their own band over their half-power support;
spikes are biphasic transients scaled by broadband SNR.
"""

import logging
from dataclasses import dataclass, fields, replace
from typing import Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import fft

from analytics.exceptions import ParameterError
from analytics.ml_models.signal_core import SignalRecord, bandpass, design_bandpass

logger = logging.getLogger(__name__)

# Envelope half-power width (power) in units of the Gaussian sd: 2 * sqrt(ln 2)
HALF_POWER_WIDTH = 2.0 * np.sqrt(np.log(2.0))

RIPPLE_F0 = (100.0, 200.0)
FAST_RIPPLE_F0 = (300.0, 450.0)
N_CYCLES = (6, 10)
EDGE_MARGIN_S = 0.5
ANNOTATION_COLUMNS = ['channel', 'center_s', 'kind', 'band', 'amplitude']


@dataclass(frozen=True)
class EventSpec:
    """
    One injected event

    f0 and n_cycles apply to ripple and fast_ripple; width_s to spikes.
    co_occurring links a fast ripple rendered at the same centre.
    """

    kind: str
    center_s: float
    amplitude: float = 1.0
    f0: float = 0.0
    n_cycles: int = 6
    width_s: float = 0.05
    channel: int = 0
    co_occurring: Optional['EventSpec'] = None

    def __post_init__(self):
        if self.kind == 'ripple' and not 80 <= self.f0 < 250:
            raise ParameterError(f'Ripple f0 must lie in [80, 250) Hz, got {self.f0}')
        if self.kind == 'fast_ripple' and not 250 <= self.f0 < 500:
            raise ParameterError(f'Fast ripple f0 must lie in [250, 500) Hz, got {self.f0}')
        if self.kind in ('ripple', 'fast_ripple') and self.n_cycles < 6:
            raise ParameterError(f'Oscillatory events need at least 6 cycles, got {self.n_cycles}')
        if self.kind == 'spike' and not 0.03 <= self.width_s <= 0.07:
            raise ParameterError(f'Spike width must lie in [0.03, 0.07] s, got {self.width_s}')
        if self.kind not in ('ripple', 'fast_ripple', 'spike'):
            raise ParameterError(f'Unknown event kind {self.kind!r}')

    @property
    def band(self) -> str:
        return 'broadband' if self.kind == 'spike' else self.kind

    @property
    def envelope_sd_s(self) -> float:
        """Gaussian sd putting n_cycles inside the half-power width"""
        return self.n_cycles / (HALF_POWER_WIDTH * self.f0)

    @property
    def support_s(self) -> float:
        """Half-power width for oscillations, full width for spikes"""
        if self.kind == 'spike':
            return self.width_s
        return HALF_POWER_WIDTH * self.envelope_sd_s


@dataclass(frozen=True)
class BenchmarkConfig:
    n_channels: int = 8
    duration_s: float = 120.0
    fs: float = 2048.0
    snr_db: float = 15.0
    snr_levels: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0)
    n_backgrounds: int = 30
    background_id: int = 0
    seed: int = 0
    events_per_kind: int = 10
    co_occurrence_rate: float = 0.2
    spike_width_s: float = 0.05
    background_rms_uv: float = 20.0
    white_floor: float = 0.0
    min_separation_s: float = 0.5
    resected_channels: Tuple[int, ...] = (0, 1, 2)
    ripple_band: Tuple[float, float] = (80.0, 250.0)
    fast_ripple_band: Tuple[float, float] = (250.0, 500.0)
    filter_taps_per_s: float = 0.25

    @classmethod
    def from_run_config(cls, config) -> 'BenchmarkConfig':
        return cls(**{f.name: getattr(config, f.name) for f in fields(cls)})

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.fs))


def generate_background(config: BenchmarkConfig, channel: int, background_id: int) -> np.ndarray:
    """
    Unit-RMS pink noise for one channel

    White Gaussian noise is shaped by 1/sqrt(f) above 1 Hz (power ~ 1/f) in
    the Fourier domain; white_floor adds unshaped noise of that relative RMS.
    Reproducible from (seed, channel, background_id).
    """
    n = config.n_samples
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, channel, background_id]))
    white = rng.standard_normal(n)
    freqs = fft.rfftfreq(n, d=1.0 / config.fs)
    shaping = np.zeros_like(freqs)
    audible = freqs >= 1.0
    shaping[audible] = 1.0 / np.sqrt(freqs[audible])
    pink = fft.irfft(fft.rfft(white) * shaping, n)
    pink /= np.sqrt(np.mean(pink ** 2))
    if config.white_floor > 0:
        pink = pink + config.white_floor * rng.standard_normal(n)
        pink /= np.sqrt(np.mean(pink ** 2))
    return pink


def render_event(spec: EventSpec, fs: float) -> np.ndarray:
    """
    Samples of one event, centred on the middle sample (odd length)

    Oscillations are cos(2 pi f0 t) under a Gaussian envelope; spikes are a
    sharp negative deflection followed by a slower positive wave. The peak
    absolute value equals spec.amplitude.
    """
    if spec.kind == 'spike':
        sharp_sd = spec.width_s / 8.0
        slow_sd = spec.width_s / 4.0
        half = int(np.ceil(2.0 * spec.width_s * fs))
        t = np.arange(-half, half + 1) / fs
        shape = -np.exp(-t ** 2 / (2 * sharp_sd ** 2)) \
            + 0.35 * np.exp(-(t - spec.width_s / 2.0) ** 2 / (2 * slow_sd ** 2))
    else:
        sd = spec.envelope_sd_s
        half = int(np.ceil(5.0 * sd * fs))
        t = np.arange(-half, half + 1) / fs
        shape = np.exp(-t ** 2 / (2 * sd ** 2)) * np.cos(2 * np.pi * spec.f0 * t)
    return shape * (spec.amplitude / np.max(np.abs(shape)))


def _add(trace: np.ndarray, samples: np.ndarray, center: int):
    half = samples.size // 2
    trace[center - half:center - half + samples.size] += samples


def window_power(trace: np.ndarray, center: int, half_width: int, fs: float,
                 band: Optional[Tuple[float, float]] = None, taps_per_s: float = 0.25) -> float:
    """
    Mean power of trace over [center - half_width, center + half_width]

    With a band, the trace is band-passed first. Only a neighbourhood one
    filter length wide is filtered, which matches filtering the whole trace.
    """
    lo, hi = center - half_width, center + half_width + 1
    if band is None:
        return float(np.mean(trace[lo:hi] ** 2))
    pad = design_bandpass(fs, band[0], band[1], taps_per_s).size
    start, stop = max(lo - pad, 0), min(hi + pad, trace.size)
    filtered = bandpass(trace[start:stop], fs, band[0], band[1], taps_per_s)
    return float(np.mean(filtered[lo - start:hi - start] ** 2))


def measure_snr(event_trace: np.ndarray, background: np.ndarray, spec: EventSpec,
                fs: float, band: Optional[Tuple[float, float]] = None,
                taps_per_s: float = 0.25) -> float:
    """SNR in dB of an event against background over the event's support"""
    center = int(round(spec.center_s * fs))
    half_width = max(1, int(round(spec.support_s * fs / 2.0)))
    signal_power = window_power(event_trace, center, half_width, fs, band, taps_per_s)
    noise_power = window_power(background, center, half_width, fs, band, taps_per_s)
    return float(10.0 * np.log10(signal_power / noise_power))


def place_events(config: BenchmarkConfig, channel: int) -> List[EventSpec]:
    """
    Draw unit-amplitude event specs for one channel

    Every kind gets events_per_kind events; a co_occurrence_rate share of the
    fast ripples share a slot with a ripple. Slots are spread with Dirichlet
    gaps on top of min_separation_s, keeping EDGE_MARGIN_S from both ends.
    """
    per_kind = config.events_per_kind
    n_pairs = int(round(config.co_occurrence_rate * per_kind))
    slots = ['ripple'] * (per_kind - n_pairs) + ['fast_ripple'] * (per_kind - n_pairs) \
        + ['pair'] * n_pairs + ['spike'] * per_kind
    if not slots:
        return []

    slack = config.duration_s - 2 * EDGE_MARGIN_S - (len(slots) - 1) * config.min_separation_s
    if slack < 0:
        raise ParameterError(
            f'{len(slots)} events with {config.min_separation_s} s separation do not fit '
            f'in {config.duration_s} s'
        )
    rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, channel, config.background_id, 1])
    )
    gaps = rng.dirichlet(np.ones(len(slots) + 1)) * slack
    centers = EDGE_MARGIN_S + np.cumsum(gaps[:-1]) + np.arange(len(slots)) * config.min_separation_s
    kinds = rng.permutation(np.array(slots, dtype=object))

    def oscillation(kind: str, center: float) -> EventSpec:
        low, high = RIPPLE_F0 if kind == 'ripple' else FAST_RIPPLE_F0
        return EventSpec(kind=kind, center_s=float(center), f0=float(rng.uniform(low, high)),
                         n_cycles=int(rng.integers(N_CYCLES[0], N_CYCLES[1] + 1)), channel=channel)

    specs = []
    for kind, center in zip(kinds, centers):
        # Centres sit on the sample grid so render and annotation agree exactly
        center = round(center * config.fs) / config.fs
        if kind == 'spike':
            specs.append(EventSpec(kind='spike', center_s=center, width_s=config.spike_width_s,
                                   channel=channel))
        elif kind == 'pair':
            fast = oscillation('fast_ripple', center)
            specs.append(replace(oscillation('ripple', center), co_occurring=fast))
        else:
            specs.append(oscillation(kind, center))
    return specs


def _scaled(spec: EventSpec, background: np.ndarray, config: BenchmarkConfig) -> EventSpec:
    """Amplitude giving spec the configured SNR against this background"""
    band = {'ripple': config.ripple_band, 'fast_ripple': config.fast_ripple_band}.get(spec.kind)
    unit = np.zeros_like(background)
    _add(unit, render_event(spec, config.fs), int(round(spec.center_s * config.fs)))
    measured = measure_snr(unit, background, spec, config.fs, band, config.filter_taps_per_s)
    gain = 10.0 ** ((config.snr_db - measured) / 20.0)
    return replace(spec, amplitude=spec.amplitude * gain, co_occurring=None)


def _channel(config: BenchmarkConfig, channel: int) -> Tuple[np.ndarray, List[EventSpec]]:
    background = generate_background(config, channel, config.background_id) * config.background_rms_uv
    trace = background.copy()
    injected = []
    for spec in place_events(config, channel):
        members = [spec] + ([spec.co_occurring] if spec.co_occurring else [])
        for member in members:
            scaled = _scaled(member, background, config)
            _add(trace, render_event(scaled, config.fs), int(round(scaled.center_s * config.fs)))
            injected.append(scaled)
    return trace, injected


def build_benchmark(config: BenchmarkConfig, n_jobs: int = 1) -> Tuple[SignalRecord, pd.DataFrame]:
    """
    One synthetic recording and its annotation table

    Channels are generated independently (in parallel with n_jobs) from
    seeds derived from (seed, channel, background_id).

    Returns:
        (SignalRecord, DataFrame with ANNOTATION_COLUMNS sorted by channel and time)
    """
    results = Parallel(n_jobs=n_jobs)(
        delayed(_channel)(config, channel) for channel in range(config.n_channels)
    )
    samples = np.vstack([trace for trace, _ in results])
    names = [f'ch{channel:02d}' for channel in range(config.n_channels)]
    resected = [channel in config.resected_channels for channel in range(config.n_channels)]
    record = SignalRecord(samples, config.fs, names, resected)

    rows = [
        {'channel': spec.channel, 'center_s': spec.center_s, 'kind': spec.kind,
         'band': spec.band, 'amplitude': spec.amplitude}
        for _, injected in results for spec in injected
    ]
    annotations = pd.DataFrame(rows, columns=ANNOTATION_COLUMNS)
    annotations = annotations.sort_values(['channel', 'center_s', 'kind'], kind='stable')
    annotations = annotations.reset_index(drop=True)
    logger.info('Benchmark background %d at %.1f dB: %d channels, %d events',
                config.background_id, config.snr_db, config.n_channels, len(annotations))
    return record, annotations


def recording_name(snr_db: float, background_id: int) -> str:
    return f'snr{snr_db:g}_bg{background_id:02d}'


def build_suite(config: BenchmarkConfig,
                n_jobs: int = 1) -> Iterator[Tuple[float, int, SignalRecord, pd.DataFrame]]:
    """Every (background, SNR level) combination of the benchmark"""
    for background_id in range(config.n_backgrounds):
        for snr_db in config.snr_levels:
            variant = replace(config, snr_db=float(snr_db), background_id=background_id)
            record, annotations = build_benchmark(variant, n_jobs=n_jobs)
            yield float(snr_db), background_id, record, annotations
