import numpy as np
import pytest

from analytics.ml_models.events import BlobRegion, Event
from analytics.ml_models.synth import BenchmarkConfig, build_benchmark

FS = 2048.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def small_benchmark():
    """Two channels, 20 s, three events of each kind at 15 dB"""
    config = BenchmarkConfig(n_channels=2, duration_s=20.0, events_per_kind=3, snr_db=15.0,
                             resected_channels=(0,))
    record, annotations = build_benchmark(config)
    return config, record, annotations


def make_event(center_s, band='ripple', pixel_count=10, channel=0, source_epoch=0,
               crop=None, patch=None):
    """Event with a synthetic blob of pixel_count cells on one row"""
    pixels = np.column_stack([np.zeros(pixel_count, dtype=int), np.arange(pixel_count)])
    region = BlobRegion(label=1, pixel_count=pixel_count, centroid_t=0.0, centroid_f=150.0,
                        bbox=(0.0, 0.0, 150.0, 150.0), pixels=pixels)
    crop = np.sin(np.arange(410) * 0.3) if crop is None else crop
    patch = np.ones((20, 410)) if patch is None else patch
    return Event(channel=channel, center_s=center_s, crop=crop, band=band, tfd_patch=patch,
                 region=region, source_epoch=source_epoch, fs=FS, peak=12.0, salience=12.0)
