"""
SVG figures for evaluation, rate-ratio and feature-selection reports

Figures are rendered with the Agg backend; a fixed SVG hash salt and no date
metadata keep the bytes identical across reruns. Every figure is re-derivable
from the CSV the report command writes next to it.
"""

import io
import logging
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402
from scipy.cluster import hierarchy  # noqa: E402

from analytics.formats import atomic_write_text  # noqa: E402

logger = logging.getLogger(__name__)

SVG_HASH_SALT = 'hfo-tfec'
BAND_ORDER = ['ripple', 'fast_ripple']


def _save_svg(fig, path) -> Path:
    path = Path(path)
    buffer = io.StringIO()
    with matplotlib.rc_context({'svg.hashsalt': SVG_HASH_SALT, 'svg.fonttype': 'path'}):
        fig.savefig(buffer, format='svg', metadata={'Date': None}, bbox_inches='tight')
    plt.close(fig)
    atomic_write_text(path, buffer.getvalue())
    logger.info('Wrote figure %s', path)
    return path


def plot_placeholder(path, message: str = 'no events', title: Optional[str] = None) -> Path:
    """Empty axes carrying a centred message"""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.text(0.5, 0.5, message, ha='center', va='center', fontsize=14, transform=ax.transAxes)
    ax.set_axis_off()
    if title:
        ax.set_title(title)
    return _save_svg(fig, path)


def plot_scores_by_snr(frame: pd.DataFrame, path) -> Path:
    """
    F-score distribution per SNR level and band

    Args:
        frame: one row per recording and band (snr_db, band, f_score)
    """
    data = frame.dropna(subset=['snr_db']) if 'snr_db' in frame.columns else frame.iloc[0:0]
    if data.empty:
        return plot_placeholder(path, 'no SNR-tagged recordings', 'F-score by SNR')

    fig, ax = plt.subplots(figsize=(8, 5))
    sns.boxplot(data=data, x='snr_db', y='f_score', hue='band',
                hue_order=[band for band in BAND_ORDER if band in set(data['band'])], ax=ax)
    ax.set_xlabel('SNR (dB)')
    ax.set_ylabel('F-score')
    ax.set_ylim(0, 1.05)
    ax.set_title('F-score by SNR')
    ax.grid(True, alpha=0.3)
    return _save_svg(fig, path)


def plot_rate_ratios(frame: pd.DataFrame, path) -> Path:
    """
    Per-patient resection rate ratio, one marker per patient and band

    Args:
        frame: ratio table (patient, ripple_ratio, fast_ripple_ratio, outcome)
    """
    long = frame.melt(id_vars=['patient', 'outcome'],
                      value_vars=['ripple_ratio', 'fast_ripple_ratio'],
                      var_name='band', value_name='ratio').dropna(subset=['ratio'])
    if long.empty:
        return plot_placeholder(path, 'no events', 'Rate ratio')

    long['band'] = long['band'].str.replace('_ratio', '', regex=False)
    long['outcome'] = long['outcome'].replace('', 'unknown')
    fig, ax = plt.subplots(figsize=(8, 5))
    sns.stripplot(data=long, x='patient', y='ratio', hue='band', ax=ax, size=8, jitter=False,
                  hue_order=[band for band in BAND_ORDER if band in set(long['band'])])
    ax.axhline(0.0, color='grey', linewidth=0.8)
    ax.set_ylim(-1.05, 1.05)
    ax.set_ylabel('Rate ratio')
    ax.set_title('Resected vs non-resected HFO rates')
    ax.tick_params(axis='x', rotation=45)
    return _save_svg(fig, path)


def plot_outcome_groups(frame: pd.DataFrame, path) -> Path:
    """Rate ratio distribution for good and poor surgical outcome"""
    long = frame[frame['outcome'].isin(['good', 'poor'])].melt(
        id_vars=['outcome'], value_vars=['ripple_ratio', 'fast_ripple_ratio'],
        var_name='band', value_name='ratio').dropna(subset=['ratio'])
    if long.empty:
        return plot_placeholder(path, 'no outcome data', 'Rate ratio by outcome')
    long['band'] = long['band'].str.replace('_ratio', '', regex=False)
    fig, ax = plt.subplots(figsize=(6, 5))
    sns.boxplot(data=long, x='outcome', y='ratio', hue='band', order=['good', 'poor'], ax=ax)
    ax.set_ylim(-1.05, 1.05)
    ax.set_title('Rate ratio by outcome')
    return _save_svg(fig, path)


def plot_correlations(ranking: pd.Series, path) -> Path:
    """Correlation of each feature with the reference labels"""
    if ranking.empty:
        return plot_placeholder(path, 'no features', 'Feature correlation')
    fig, ax = plt.subplots(figsize=(8, max(3, 0.3 * len(ranking))))
    colors = np.where(ranking.to_numpy() >= 0, 'tab:blue', 'tab:red')
    ax.barh(ranking.index[::-1], ranking.to_numpy()[::-1], color=colors[::-1])
    ax.set_xlim(-1, 1)
    ax.set_xlabel('Correlation with labels')
    ax.set_title('Feature correlation')
    return _save_svg(fig, path)


def plot_selection_curve(curve: pd.DataFrame, path) -> Path:
    """Best F-score against subset size"""
    if curve.empty:
        return plot_placeholder(path, 'no selection steps', 'SFFS')
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(curve['subset_size'], curve['f_score'], 'o-')
    ax.set_xlabel('Number of features')
    ax.set_ylabel('F-score')
    ax.set_ylim(0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.set_title('SFFS')
    return _save_svg(fig, path)


def plot_dendrogram(merge_tree: pd.DataFrame, path, title: str = 'Event clustering') -> Path:
    """
    Dendrogram from a merge table (node_a, node_b, distance)

    Cluster sizes are rebuilt from the merge order, so the CSV alone is
    enough to redraw the tree.
    """
    if merge_tree.empty:
        return plot_placeholder(path, 'no events', title)
    n_leaves = len(merge_tree) + 1
    sizes = np.ones(2 * n_leaves - 1)
    linkage = np.zeros((len(merge_tree), 4))
    for i, (a, b, distance) in enumerate(merge_tree[['node_a', 'node_b', 'distance']].to_numpy()):
        sizes[n_leaves + i] = sizes[int(a)] + sizes[int(b)]
        linkage[i] = (a, b, distance, sizes[n_leaves + i])

    fig, ax = plt.subplots(figsize=(9, 5))
    hierarchy.dendrogram(linkage, ax=ax, truncate_mode='lastp', p=30, no_labels=True,
                         color_threshold=linkage[-1, 2] * 0.999 if len(linkage) else None)
    ax.set_ylabel('Ward distance')
    ax.set_title(title)
    return _save_svg(fig, path)


def plot_channel_counts(counts: pd.DataFrame, path) -> Path:
    """HFO count per channel, one bar group per band"""
    if counts.empty or counts['count'].sum() == 0:
        return plot_placeholder(path, 'no events', 'Detections per channel')
    fig, ax = plt.subplots(figsize=(9, 4))
    sns.barplot(data=counts, x='channel', y='count', hue='band', ax=ax,
                hue_order=[band for band in BAND_ORDER if band in set(counts['band'])])
    ax.set_ylabel('Detections')
    ax.set_title('Detections per channel')
    return _save_svg(fig, path)
