"""
Generate the synthetic benchmark: containers plus annotation tables
"""

import pandas as pd

from analytics.formats import write_annotations, write_container
from analytics.management.base import TfecCommand
from analytics.ml_models.synth import BenchmarkConfig, build_benchmark, build_suite, recording_name


class Command(TfecCommand):
    help = 'Simulate one benchmark recording (or the full SNR x background suite) with annotations'

    def add_command_arguments(self, parser):
        parser.add_argument('--suite', action='store_true',
                            help='Every background x SNR level combination instead of one recording')

    def run(self, config, out_dir, /, **options):
        benchmark = BenchmarkConfig.from_run_config(config)
        out_dir.mkdir(parents=True, exist_ok=True)
        inputs = {'config': options['config']} if options.get('config') else {}

        if not options.get('suite'):
            record, annotations = build_benchmark(benchmark, n_jobs=config.threads)
            write_container(out_dir / 'recording.json', record)
            write_annotations(out_dir / 'annotations.csv', annotations)
            self.stdout.write(f'{record.n_channels} channels, {record.duration_s:g} s, '
                              f'{len(annotations)} annotated events')
            self.finish(out_dir, config, inputs,
                        ['recording.json', 'recording.bin', 'annotations.csv'])
            return

        tables, outputs = [], []
        for snr_db, background_id, record, annotations in build_suite(benchmark, n_jobs=config.threads):
            name = recording_name(snr_db, background_id)
            write_container(out_dir / f'{name}.json', record)
            outputs += [f'{name}.json', f'{name}.bin']
            tables.append(annotations.assign(recording=name, snr_db=snr_db))
        write_annotations(out_dir / 'annotations.csv', pd.concat(tables, ignore_index=True))
        self.stdout.write(f'{len(tables)} recordings written')
        self.finish(out_dir, config, inputs, outputs + ['annotations.csv'],
                    extra={'recordings': len(tables)})
