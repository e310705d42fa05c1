"""
Run configuration: a flat `key = value` file with environment overrides

Every key has a default below. Unknown keys and values that violate a
module precondition are rejected with ConfigError before any output is written.
"""

import dataclasses
import hashlib
import logging
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

from analytics.exceptions import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = 'TFEC_'
BANDS = ('ripple', 'fast_ripple', 'both', 'full')
LINKAGES = ('ward',)
BAND_KEYS = ('ripple_band', 'fast_ripple_band', 'full_band')


@dataclass(frozen=True)
class RunConfig:
    # Detection bands
    band: str = 'both'
    ripple_band: Tuple[float, float] = (80.0, 250.0)
    fast_ripple_band: Tuple[float, float] = (250.0, 500.0)
    full_band: Tuple[float, float] = (80.0, 500.0)
    filter_taps_per_s: float = 0.25

    # Epoching and event extraction
    epoch_window_s: float = 1.0
    epoch_step_s: float = 0.5
    min_blob_area: int = 6
    candidate_floor: float = 9.0
    salience_floor: float = 10.0
    salience_cycles: float = 2.0
    crop_s: float = 0.2
    merge_radius_s: float = 0.1

    # Clustering and features
    linkage: str = 'ward'
    n_groups: int = 2
    feature_subset: Tuple[str, ...] = (
        'time_rms', 'time_range', 'time_line_length', 'time_nonlinear_energy',
        'time_kurtosis', 'freq_peak_power', 'freq_iwbw', 'freq_spectral_entropy',
        'tf_mean', 'tf_energy_concentration', 'img_area', 'img_height',
    )
    feature_subset_path: str = ''

    # Evaluation
    ci_s: float = 0.1
    n_permutations: int = 10000
    n_bootstrap: int = 1000
    permutation_chunks: int = 16

    # Feature selection
    d_max: int = 15
    selection_epsilon: float = 1e-6

    # Synthetic benchmark
    n_channels: int = 8
    duration_s: float = 120.0
    fs: float = 2048.0
    snr_db: float = 15.0
    snr_levels: Tuple[float, ...] = (0.0, 5.0, 10.0, 15.0)
    n_backgrounds: int = 30
    background_id: int = 0
    events_per_kind: int = 10
    co_occurrence_rate: float = 0.2
    spike_width_s: float = 0.05
    background_rms_uv: float = 20.0
    white_floor: float = 0.0
    min_separation_s: float = 0.5
    resected_channels: Tuple[int, ...] = (0, 1, 2)

    # Reproducibility and resources
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Check every value against the preconditions of the module that consumes it"""
        checks = [
            (self.band in BANDS, f'band must be one of {BANDS}'),
            (self.linkage in LINKAGES, f'linkage must be one of {LINKAGES}'),
            (self.epoch_window_s > 0, 'epoch_window_s must be positive'),
            (0 < self.epoch_step_s <= self.epoch_window_s, 'epoch_step_s must lie in (0, epoch_window_s]'),
            (self.min_blob_area >= 1, 'min_blob_area must be at least 1'),
            (self.candidate_floor >= 0, 'candidate_floor must be non-negative'),
            (self.salience_floor >= 0, 'salience_floor must be non-negative'),
            (self.salience_cycles > 0, 'salience_cycles must be positive'),
            (0 < self.crop_s <= self.epoch_window_s, 'crop_s must lie in (0, epoch_window_s]'),
            (self.merge_radius_s >= 0, 'merge_radius_s must be non-negative'),
            (self.n_groups >= 2, 'n_groups must be at least 2'),
            (len(self.feature_subset) > 0 or bool(self.feature_subset_path), 'feature_subset is empty'),
            (self.ci_s > 0, 'ci_s must be positive'),
            (self.n_permutations >= 1, 'n_permutations must be at least 1'),
            (self.n_bootstrap >= 1, 'n_bootstrap must be at least 1'),
            (self.permutation_chunks >= 1, 'permutation_chunks must be at least 1'),
            (self.d_max >= 1, 'd_max must be at least 1'),
            (self.selection_epsilon >= 0, 'selection_epsilon must be non-negative'),
            (self.filter_taps_per_s > 0, 'filter_taps_per_s must be positive'),
            (self.n_channels >= 1, 'n_channels must be at least 1'),
            (self.duration_s > 0, 'duration_s must be positive'),
            (self.fs >= 1000, 'fs must be at least 1000 Hz'),
            (self.n_backgrounds >= 1, 'n_backgrounds must be at least 1'),
            (len(self.snr_levels) > 0, 'snr_levels is empty'),
            (0 <= self.background_id < self.n_backgrounds, 'background_id must lie in [0, n_backgrounds)'),
            (self.events_per_kind >= 0, 'events_per_kind must be non-negative'),
            (0 <= self.co_occurrence_rate <= 1, 'co_occurrence_rate must lie in [0, 1]'),
            (0.03 <= self.spike_width_s <= 0.07, 'spike_width_s must lie in [0.03, 0.07] s'),
            (self.background_rms_uv > 0, 'background_rms_uv must be positive'),
            (self.white_floor >= 0, 'white_floor must be non-negative'),
            (self.min_separation_s >= 0, 'min_separation_s must be non-negative'),
            (self.threads != 0, 'threads must be non-zero (negative counts follow joblib)'),
        ]
        for name in BAND_KEYS:
            bounds = tuple(getattr(self, name))
            if len(bounds) != 2:
                raise ConfigError(f'{name} must hold exactly two frequencies, got {len(bounds)}')
            lo, hi = bounds
            checks.append((0 < lo < hi, f'{name} must satisfy 0 < low < high'))
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def bands(self) -> Dict[str, Tuple[float, float]]:
        """Detection passes selected by `band`, keyed by pass name"""
        if self.band == 'ripple':
            return {'ripple': self.ripple_band}
        if self.band == 'fast_ripple':
            return {'fast_ripple': self.fast_ripple_band}
        if self.band == 'full':
            return {'full': self.full_band}
        return {'ripple': self.ripple_band, 'fast_ripple': self.fast_ripple_band}

    def resolved_subset(self) -> Tuple[str, ...]:
        """Feature names used for clustering, reading feature_subset_path when set"""
        if not self.feature_subset_path:
            return tuple(self.feature_subset)
        path = Path(self.feature_subset_path)
        try:
            names = [line.strip() for line in path.read_text().splitlines()]
        except OSError as exc:
            raise ConfigError(f'Cannot read feature subset file {path}: {exc}') from exc
        names = tuple(name for name in names if name and not name.startswith('#'))
        if not names:
            raise ConfigError(f'Feature subset file {path} lists no features')
        return names

    def replace(self, **changes) -> 'RunConfig':
        return dataclasses.replace(self, **changes)

    def dumps(self) -> str:
        """Resolved configuration in the key = value format, keys sorted"""
        lines = []
        for f in sorted(fields(self), key=lambda item: item.name):
            lines.append(f'{f.name} = {_format_value(getattr(self, f.name))}')
        return '\n'.join(lines) + '\n'

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode('utf-8')).hexdigest()


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ', '.join(_format_value(item) for item in value)
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return str(value)


def _parse_value(name: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ValueError(raw)
            return lowered in ('true', '1', 'yes')
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [item.strip() for item in raw.split(',') if item.strip()]
            if default and isinstance(default[0], str) or name == 'feature_subset':
                return tuple(items)
            if name == 'resected_channels':
                return tuple(int(item) for item in items)
            if name in BAND_KEYS and len(items) != 2:
                raise ConfigError(f'{name} takes `low, high`, got {raw!r}')
            return tuple(float(item) for item in items)
        return raw
    except ValueError as exc:
        raise ConfigError(f'Invalid value for {name}: {raw!r}') from exc


def parse_config_text(text: str, source: str = '<config>') -> Dict[str, str]:
    """Split `key = value` lines into a raw mapping; '#' starts a comment"""
    entries = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'{source}:{lineno}: expected `key = value`, got {line!r}')
        key, value = line.split('=', 1)
        key = key.strip()
        if not key:
            raise ConfigError(f'{source}:{lineno}: empty key')
        entries[key] = value
    return entries


def build_config(entries: Mapping[str, str], base: Optional[RunConfig] = None) -> RunConfig:
    """Apply raw string overrides on top of base (defaults when omitted)"""
    base = base or RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(entries) - set(known))
    if unknown:
        raise ConfigError(f'Unknown configuration keys: {", ".join(unknown)}')
    changes = {
        key: _parse_value(key, value, getattr(base, key))
        for key, value in entries.items()
    }
    try:
        return dataclasses.replace(base, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def env_overrides(environ: Mapping[str, str], prefix: str = ENV_PREFIX) -> Dict[str, str]:
    """Collect `<prefix><KEY>` variables that name a configuration key"""
    names = {f.name for f in fields(RunConfig)}
    overrides = {}
    for variable, value in environ.items():
        if not variable.startswith(prefix):
            continue
        key = variable[len(prefix):].lower()
        if key in names:
            overrides[key] = value
    return overrides


def load_config(path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None,
                prefix: str = ENV_PREFIX, base: Optional[RunConfig] = None,
                **cli_overrides) -> RunConfig:
    """
    Resolve the run configuration

    Precedence, lowest first: defaults (or base), config file, environment,
    CLI flags (keyword arguments whose value is not None).
    """
    config = base or RunConfig()
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f'Cannot read config file {path}: {exc}') from exc
        config = build_config(parse_config_text(text, str(path)), config)

    environ = os.environ if environ is None else environ
    from_env = env_overrides(environ, prefix)
    if from_env:
        logger.info('Applying environment overrides: %s', ', '.join(sorted(from_env)))
        config = build_config(from_env, config)

    flags = {key: value for key, value in cli_overrides.items() if value is not None}
    if flags:
        config = build_config({key: str(value) for key, value in flags.items()}, config)
    return config
