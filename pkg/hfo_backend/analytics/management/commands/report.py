"""
SVG figures, each next to the CSV it is drawn from
"""

from pathlib import Path

import pandas as pd

from analytics import reports
from analytics.exceptions import ConfigError, SchemaError
from analytics.formats import write_table
from analytics.management.base import TfecCommand


def read_csv(directory: Path, name: str, required=()) -> pd.DataFrame:
    path = directory / name
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise SchemaError(f'{path} does not exist') from exc
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame(columns=list(required))
    except (OSError, ValueError) as exc:
        raise SchemaError(f'Cannot parse {path}: {exc}') from exc
    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise SchemaError(f'{path}: missing column(s) {", ".join(missing)}')
    return frame


class Command(TfecCommand):
    help = 'Draw report figures from the outputs of evaluate, rate_ratio, select_features and detect'

    def add_command_arguments(self, parser):
        parser.add_argument('--evaluation', help='Output directory of evaluate')
        parser.add_argument('--rates', help='Output directory of rate_ratio')
        parser.add_argument('--selection', help='Output directory of select_features')
        parser.add_argument('--detection', help='Output directory of detect')

    def run(self, config, out_dir, /, **options):
        sources = {key: Path(options[key]) for key in ('evaluation', 'rates', 'selection', 'detection')
                   if options.get(key)}
        if not sources:
            raise ConfigError('Nothing to report: give --evaluation, --rates, --selection or --detection')
        out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs = []

        if 'evaluation' in sources:
            scores = read_csv(sources['evaluation'], 'scores_by_snr.csv', ('snr_db', 'band', 'f_score'))
            self.emit(out_dir, 'scores_by_snr', scores, reports.plot_scores_by_snr)
        if 'rates' in sources:
            ratios = read_csv(sources['rates'], 'rate_ratios.csv',
                              ('patient', 'ripple_ratio', 'fast_ripple_ratio', 'outcome'))
            ratios['outcome'] = ratios['outcome'].fillna('')
            self.emit(out_dir, 'rate_ratios', ratios, reports.plot_rate_ratios)
            self.emit(out_dir, 'outcome_groups', ratios, reports.plot_outcome_groups)
        if 'selection' in sources:
            correlations = read_csv(sources['selection'], 'correlations.csv', ('feature', 'r'))
            self.emit(out_dir, 'correlations', correlations,
                      lambda frame, path: reports.plot_correlations(frame.set_index('feature')['r'], path))
            curve = read_csv(sources['selection'], 'sffs_curve.csv', ('subset_size', 'f_score'))
            self.emit(out_dir, 'sffs_curve', curve, reports.plot_selection_curve)
        if 'detection' in sources:
            self.detection_figures(sources['detection'], out_dir)

        for name in self.outputs:
            self.stdout.write(f'Wrote {name}')
        inputs = {f'{key}_manifest': path / 'manifest.json' for key, path in sources.items()
                  if (path / 'manifest.json').exists()}
        self.finish(out_dir, config, inputs, self.outputs)

    def emit(self, out_dir: Path, name: str, frame: pd.DataFrame, plot):
        write_table(out_dir / f'{name}.csv', frame)
        plot(frame, out_dir / f'{name}.svg')
        self.outputs += [f'{name}.csv', f'{name}.svg']

    def detection_figures(self, source: Path, out_dir: Path):
        detections = read_csv(source, 'detections.csv', ('channel', 'band'))
        counts = (detections.groupby(['channel', 'band']).size().rename('count').reset_index()
                  if len(detections) else pd.DataFrame(columns=['channel', 'band', 'count']))
        self.emit(out_dir, 'channel_counts', counts, reports.plot_channel_counts)

        merges = read_csv(source, 'merge_tree.csv', ('band', 'node_a', 'node_b', 'distance'))
        keys = ['recording', 'band'] if 'recording' in merges.columns else ['band']
        if merges.empty:
            self.emit(out_dir, 'dendrogram', merges, reports.plot_dendrogram)
            return
        for key, group in merges.groupby(keys, sort=True):
            key = key if isinstance(key, tuple) else (key,)
            name = 'dendrogram_' + '_'.join(str(part) for part in key)
            self.emit(out_dir, name, group.reset_index(drop=True),
                      lambda frame, path, title=' '.join(map(str, key)):
                          reports.plot_dendrogram(frame, path, title=f'Event clustering, {title}'))
