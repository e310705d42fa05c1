"""
Score detections against annotations: band scores, permutation p-values,
per-recording rows for suite runs and spike false positives
"""

from pathlib import Path

import pandas as pd

from analytics.exceptions import SchemaError
from analytics.formats import read_annotations, read_container, read_detections, write_json, write_table
from analytics.management.base import TfecCommand
from analytics.ml_models.metrics import evaluate


class Command(TfecCommand):
    help = 'Evaluate a detections table against a reference annotation table'

    def add_command_arguments(self, parser):
        parser.add_argument('detections', help='detections.csv written by detect')
        parser.add_argument('annotations', help='Reference annotations.csv')
        parser.add_argument('--container',
                            help='Container the tables refer to (checks channels and duration)')

    def run(self, config, out_dir, /, **options):
        inputs = {'detections': options['detections'], 'annotations': options['annotations']}
        duration_s = None
        n_channels = None
        if options.get('container'):
            record = read_container(options['container'])
            duration_s, n_channels = record.duration_s, record.n_channels
            inputs['container'] = options['container']

        detections = read_detections(options['detections'])
        references = read_annotations(options['annotations'], duration_s=duration_s)
        if n_channels is not None:
            for name, table in (('detections', detections), ('annotations', references)):
                outside = sorted(set(table['channel']) - set(range(n_channels)))
                if outside:
                    raise SchemaError(f'{name} refer to channel(s) {outside} of a '
                                      f'{n_channels}-channel container')
        if ('recording' in detections.columns) != ('recording' in references.columns):
            raise SchemaError('Either both tables carry a recording column or neither does')

        report = evaluate(detections, references, config, n_jobs=config.threads)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json(out_dir / 'eval_report.json', report.to_dict())
        write_table(out_dir / 'scores_by_snr.csv', report.recordings_frame())
        bands = pd.DataFrame([
            {'band': band, 'tp': row.tp, 'fp': row.fp, 'fn': row.fn, 'sensitivity': row.sensitivity,
             'precision': row.precision, 'f_score': row.f_score, 'p_value': row.p_value,
             'ci_low': row.score_ci[0], 'ci_high': row.score_ci[1]}
            for band, row in sorted(report.bands.items())
        ])
        write_table(out_dir / 'band_scores.csv', bands)

        for band, row in sorted(report.bands.items()):
            self.stdout.write(f'{band}: F={row.f_score:.3f} (sens {row.sensitivity:.3f}, '
                              f'prec {row.precision:.3f}), p={row.p_value:.4f}')
            if row.warning:
                self.stdout.write(self.style.WARNING(f'{band}: {row.warning}'))
        if options.get('config'):
            inputs['config'] = options['config']
        self.finish(out_dir, config, {key: Path(value) for key, value in inputs.items()},
                    ['eval_report.json', 'scores_by_snr.csv', 'band_scores.csv'])
