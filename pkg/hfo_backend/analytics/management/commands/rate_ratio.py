"""
HFO rates per channel and the resected vs non-resected rate ratio
"""

from pathlib import Path

import numpy as np
import pandas as pd

from analytics.exceptions import SchemaError
from analytics.formats import read_container, read_detections, write_json, write_table
from analytics.management.base import TfecCommand
from analytics.ml_models.metrics import SCORED_BANDS, rate_ratio, rate_table, ratio_table

PATIENT_COLUMNS = ['patient', 'detections', 'container']


def read_patients(path: Path) -> pd.DataFrame:
    """patient, detections, container[, ilae]; paths relative to the table's directory"""
    try:
        frame = pd.read_csv(path, dtype={'patient': str, 'detections': str, 'container': str})
    except (OSError, ValueError) as exc:
        raise SchemaError(f'Cannot parse patient table {path}: {exc}') from exc
    missing = [column for column in PATIENT_COLUMNS if column not in frame.columns]
    if missing:
        raise SchemaError(f'{path}: missing column(s) {", ".join(missing)}')
    if frame.empty:
        raise SchemaError(f'{path}: no patients listed')
    for column in ('detections', 'container'):
        frame[column] = [path.parent / value for value in frame[column]]
    if 'ilae' not in frame.columns:
        frame['ilae'] = np.nan
    bad = frame['ilae'].dropna()
    if not bad.between(1, 6).all():
        raise SchemaError(f'{path}: ILAE classes must lie in 1..6')
    return frame


def patient_rates(detections_path: Path, container_path: Path):
    record = read_container(container_path)
    detections = read_detections(detections_path)
    if 'recording' in detections.columns:
        detections = detections[detections['recording'] == Path(container_path).stem]
    outside = sorted(set(detections['channel']) - set(range(record.n_channels)))
    if outside:
        raise SchemaError(f'{detections_path}: channel(s) {outside} not in {container_path}')
    return rate_table(detections, record)


class Command(TfecCommand):
    help = 'Compute the resection rate ratio for one patient or a table of patients'

    def add_command_arguments(self, parser):
        parser.add_argument('detections', nargs='?', help='detections.csv of one patient')
        parser.add_argument('container', nargs='?', help='The patient container (resected flags)')
        parser.add_argument('--ilae', type=int, choices=range(1, 7), help='ILAE surgical outcome class')
        parser.add_argument('--patients', help='CSV with patient, detections, container[, ilae] columns')

    def run(self, config, out_dir, /, **options):
        if options.get('patients'):
            patients = read_patients(Path(options['patients']))
            inputs = {'patients': Path(options['patients'])}
        elif options.get('detections') and options.get('container'):
            patients = pd.DataFrame([{
                'patient': Path(options['container']).stem,
                'detections': Path(options['detections']),
                'container': Path(options['container']),
                'ilae': options.get('ilae'),
            }])
            inputs = {'detections': Path(options['detections']), 'container': Path(options['container'])}
        else:
            raise SchemaError('Give a detections table and its container, or --patients')

        tables, rows = [], []
        for patient in patients.itertuples(index=False):
            rates = patient_rates(patient.detections, patient.container)
            ilae = None if patient.ilae is None or pd.isna(patient.ilae) else int(patient.ilae)
            rows.append((patient.patient, rates, ilae))
            tables.append(rates.frame.assign(patient=patient.patient))
        ratios = ratio_table(rows)

        out_dir.mkdir(parents=True, exist_ok=True)
        rate_frame = pd.concat(tables, ignore_index=True)
        write_table(out_dir / 'rate_table.csv', rate_frame[['patient'] + list(rows[0][1].frame.columns)])
        write_table(out_dir / 'rate_ratios.csv', ratios)
        summary = {}
        for patient, rates, ilae in rows:
            summary[patient] = {}
            for band in SCORED_BANDS:
                result = rate_ratio(rates, band)
                value = None if result.value is None else round(result.value, 10)
                summary[patient][band] = {'ratio': value, 'flag': result.flag}
                self.stdout.write(f'{patient} {band}: '
                                  f'{"no events" if value is None else f"{value:+.3f}"}')
        write_json(out_dir / 'rate_ratio.json', summary)

        if options.get('config'):
            inputs['config'] = Path(options['config'])
        self.finish(out_dir, config, inputs, ['rate_table.csv', 'rate_ratios.csv', 'rate_ratio.json'])
