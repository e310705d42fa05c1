"""
On-disk formats: signal container, annotation and detection tables, run
manifest. Every write goes to a temporary file in the target directory and
is moved into place with os.replace.
"""

import hashlib
import io
import json
import logging
import os
import tempfile
from importlib import metadata
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from analytics import __version__
from analytics.exceptions import DataContractError, SchemaError
from analytics.ml_models.detector import DETECTION_COLUMNS
from analytics.ml_models.metrics import EVENT_KINDS
from analytics.ml_models.signal_core import SignalRecord
from analytics.ml_models.synth import ANNOTATION_COLUMNS

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CONTAINER_VERSION = 1
PAYLOAD_DTYPE = np.dtype('<f4')
OPTIONAL_COLUMNS = ['recording', 'snr_db']
BANDS_BY_KIND = {'ripple': 'ripple', 'fast_ripple': 'fast_ripple', 'spike': 'broadband'}
MANIFEST_PACKAGES = ('numpy', 'scipy', 'pandas', 'scikit-learn', 'opencv-python', 'joblib', 'django')


def atomic_write_bytes(path: PathLike, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temporary = tempfile.mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(handle, 'wb') as stream:
            stream.write(data)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.unlink(temporary)
        raise


def atomic_write_text(path: PathLike, text: str):
    atomic_write_bytes(path, text.encode('utf-8'))


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as stream:
        for block in iter(lambda: stream.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


# Signal container

def payload_path(header_path: PathLike) -> Path:
    return Path(header_path).with_suffix('.bin')


def container_header(record: SignalRecord, payload_name: str) -> dict:
    return {
        'version': CONTAINER_VERSION,
        'fs': record.fs,
        'channel_names': list(record.channel_names),
        'resected': [bool(flag) for flag in record.resected],
        'n_samples': record.n_samples,
        'duration_s': record.duration_s,
        'dtype': 'float32',
        'endianness': 'little',
        'layout': 'channel-major',
        'payload': payload_name,
    }


def write_container(header_path: PathLike, record: SignalRecord) -> Path:
    """
    Write a JSON header and its little-endian float32 channel-major payload

    Returns:
        Path of the payload file
    """
    header_path = Path(header_path)
    payload = payload_path(header_path)
    atomic_write_bytes(payload, np.ascontiguousarray(record.samples, dtype=PAYLOAD_DTYPE).tobytes())
    header = container_header(record, payload.name)
    atomic_write_text(header_path, json.dumps(header, indent=2, sort_keys=True) + '\n')
    logger.info('Wrote container %s (%d channels, %.1f s)', header_path, record.n_channels,
                record.duration_s)
    return payload


def read_container(header_path: PathLike) -> SignalRecord:
    """Load a container, checking header and payload against each other"""
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
    except (OSError, ValueError) as exc:
        raise DataContractError(f'Cannot read container header {header_path}: {exc}') from exc

    required = ('version', 'fs', 'channel_names', 'resected', 'n_samples', 'dtype', 'endianness')
    missing = [key for key in required if key not in header]
    if missing:
        raise DataContractError(f'{header_path}: header lacks {", ".join(missing)}')
    if header['version'] != CONTAINER_VERSION:
        raise DataContractError(f'{header_path}: unsupported container version {header["version"]}')
    if header['dtype'] != 'float32' or header['endianness'] != 'little':
        raise DataContractError(f'{header_path}: payload must be little-endian float32')

    payload = header_path.parent / header.get('payload', payload_path(header_path).name)
    n_channels = len(header['channel_names'])
    n_samples = int(header['n_samples'])
    try:
        raw = payload.read_bytes()
    except OSError as exc:
        raise DataContractError(f'Cannot read payload {payload}: {exc}') from exc
    expected = PAYLOAD_DTYPE.itemsize * n_channels * n_samples
    if len(raw) != expected:
        raise DataContractError(
            f'{payload}: {len(raw)} bytes, header implies {expected} '
            f'({n_channels} channels x {n_samples} samples x 4)'
        )
    samples = np.frombuffer(raw, dtype=PAYLOAD_DTYPE).reshape(n_channels, n_samples)
    return SignalRecord(samples.astype(np.float64), header['fs'], header['channel_names'],
                        header['resected'])


# Annotation and detection tables

def _to_csv(frame: pd.DataFrame) -> str:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, lineterminator='\n')
    return buffer.getvalue()


def _columns(frame: pd.DataFrame, base: Sequence[str]) -> list:
    return list(base) + [column for column in OPTIONAL_COLUMNS if column in frame.columns]


def write_annotations(path: PathLike, annotations: pd.DataFrame):
    _require_columns(annotations, ANNOTATION_COLUMNS, path)
    atomic_write_text(path, _to_csv(annotations[_columns(annotations, ANNOTATION_COLUMNS)]))


def _require_columns(frame: pd.DataFrame, columns: Iterable[str], source):
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise SchemaError(f'{source}: missing column(s) {", ".join(missing)}')


def _read_table(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype={'kind': str, 'band': str, 'recording': str},
                            float_precision='round_trip')
    except FileNotFoundError as exc:
        raise SchemaError(f'Table {path} does not exist') from exc
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise SchemaError(f'Cannot parse {path}: {exc}') from exc
    _require_columns(frame, columns, path)
    unexpected = [column for column in frame.columns if column not in list(columns) + OPTIONAL_COLUMNS]
    if unexpected:
        raise SchemaError(f'{path}: unexpected column(s) {", ".join(unexpected)}')
    try:
        frame['channel'] = frame['channel'].astype(np.int64)
        frame['center_s'] = frame['center_s'].astype(np.float64)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f'{path}: non-numeric channel or center_s') from exc
    return frame


def read_annotations(path: PathLike, duration_s: Optional[float] = None) -> pd.DataFrame:
    """
    Strict parse of an annotation table

    Unknown kinds, kind/band mismatches and centres outside [0, duration_s]
    are schema errors.
    """
    frame = _read_table(path, ANNOTATION_COLUMNS)
    unknown = sorted(set(frame['kind']) - set(EVENT_KINDS))
    if unknown:
        raise SchemaError(f'{path}: unknown event kind(s) {", ".join(map(str, unknown))}')
    mismatched = frame['band'] != frame['kind'].map(BANDS_BY_KIND)
    if mismatched.any():
        row = int(np.flatnonzero(mismatched.to_numpy())[0])
        raise SchemaError(f'{path}: row {row + 1} has kind {frame["kind"].iloc[row]!r} '
                          f'but band {frame["band"].iloc[row]!r}')
    if (frame['center_s'] < 0).any() or (duration_s is not None and (frame['center_s'] > duration_s).any()):
        raise SchemaError(f'{path}: event centre outside the recording')
    frame['amplitude'] = frame['amplitude'].astype(np.float64)
    return frame


def write_detections(path: PathLike, detections: pd.DataFrame):
    _require_columns(detections, DETECTION_COLUMNS, path)
    atomic_write_text(path, _to_csv(detections[_columns(detections, DETECTION_COLUMNS)]))


def read_detections(path: PathLike) -> pd.DataFrame:
    frame = _read_table(path, DETECTION_COLUMNS)
    bad = sorted(set(frame['band']) - {'ripple', 'fast_ripple'})
    if bad:
        raise SchemaError(f'{path}: unknown detection band(s) {", ".join(map(str, bad))}')
    return frame


def write_table(path: PathLike, frame: pd.DataFrame):
    """Backing CSV of a report or a feature matrix"""
    atomic_write_text(path, _to_csv(frame))


# Provenance

def package_versions(packages: Sequence[str] = MANIFEST_PACKAGES) -> Dict[str, str]:
    versions = {'hfo-tfec': __version__}
    for package in packages:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = 'unknown'
    return versions


def write_run_config(out_dir: PathLike, config) -> Path:
    path = Path(out_dir) / 'run_config.txt'
    atomic_write_text(path, config.dumps())
    return path


def write_manifest(out_dir: PathLike, command: str, config, inputs: Dict[str, PathLike],
                   outputs: Iterable[str], extra: Optional[dict] = None,
                   timings: Optional[Dict[str, float]] = None) -> Path:
    """
    Deterministic run manifest plus a separate timings file

    manifest.json records the command, config hash, package versions, input
    digests and output names; wall-clock timings go to timings.json so the
    manifest stays byte-identical across reruns.
    """
    out_dir = Path(out_dir)
    manifest = {
        'command': command,
        'config_digest': config.digest(),
        'versions': package_versions(),
        'inputs': {name: {'path': Path(path).name, 'sha256': sha256_file(path)}
                   for name, path in sorted(inputs.items())},
        'outputs': sorted(outputs),
    }
    if extra:
        manifest.update(extra)
    path = out_dir / 'manifest.json'
    atomic_write_text(path, json.dumps(manifest, indent=2, sort_keys=True) + '\n')
    if timings is not None:
        rounded = {key: round(value, 3) for key, value in sorted(timings.items())}
        atomic_write_text(out_dir / 'timings.json', json.dumps(rounded, indent=2) + '\n')
    return path


def write_json(path: PathLike, payload: dict):
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + '\n')
