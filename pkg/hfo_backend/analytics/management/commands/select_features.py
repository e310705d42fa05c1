"""
Wrapper feature selection on annotated events of one container
"""

from pathlib import Path

import pandas as pd

from analytics.formats import atomic_write_text, read_annotations, read_container, write_table
from analytics.management.base import TfecCommand
from analytics.ml_models.detector import TfecDetector
from analytics.ml_models.features import feature_frame
from analytics.ml_models.metrics import event_labels
from analytics.ml_models.selection import clustering_cost, correlation_ranking, sffs


class Command(TfecCommand):
    help = 'Select the clustering feature subset by SFFS against reference annotations'

    def add_command_arguments(self, parser):
        parser.add_argument('container', help='Container header (.json)')
        parser.add_argument('annotations', help='Reference annotations.csv of that container')

    def run(self, config, out_dir, /, **options):
        record = read_container(options['container'])
        references = read_annotations(options['annotations'], duration_s=record.duration_s)

        events = TfecDetector(config, n_jobs=config.threads).extract(record)
        frame = feature_frame(events)
        labels = event_labels(events, references, ci_s=config.ci_s)
        self.stdout.write(f'{len(events)} events of interest, {int(labels.sum())} confirm an annotation')

        cost = clustering_cost([event.crop for event in events], n_groups=config.n_groups,
                               groups=[event.band for event in events])
        trace = sffs(frame, labels, cost=cost, d_max=min(config.d_max, frame.shape[1]),
                     epsilon=config.selection_epsilon, n_jobs=config.threads)
        ranking = correlation_ranking(frame, labels)
        selected = ranking[ranking.index.isin(trace.best_subset)]

        out_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out_dir / 'selected_features.txt',
                          ''.join(f'{name}\n' for name in trace.best_subset))
        write_table(out_dir / 'sffs_trace.csv', trace.steps_frame())
        write_table(out_dir / 'sffs_curve.csv', trace.curve_frame())
        write_table(out_dir / 'correlations.csv', _ranking_frame(ranking))
        write_table(out_dir / 'selected_correlations.csv', _ranking_frame(selected))
        self.stdout.write(f'Selected {len(trace.best_subset)} features, F={trace.best_score:.3f}: '
                          f'{", ".join(trace.best_subset)}')

        inputs = {'container': options['container'], 'annotations': options['annotations']}
        if options.get('config'):
            inputs['config'] = options['config']
        self.finish(out_dir, config, {key: Path(value) for key, value in inputs.items()},
                    ['selected_features.txt', 'sffs_trace.csv', 'sffs_curve.csv',
                     'correlations.csv', 'selected_correlations.csv'],
                    extra={'best_score': round(trace.best_score, 10), 'n_events': len(events)})


def _ranking_frame(ranking: pd.Series) -> pd.DataFrame:
    return pd.DataFrame({'feature': ranking.index, 'r': ranking.to_numpy()})
