"""
Run the clustering detector on one container or a directory of containers
"""

from pathlib import Path

import pandas as pd

from analytics.exceptions import DataContractError
from analytics.formats import payload_path, read_container, write_detections, write_table
from analytics.management.base import TfecCommand
from analytics.ml_models.detector import DETECTION_COLUMNS, TfecDetector


def find_containers(path: Path):
    """A header path, or every header in a directory that has its payload beside it"""
    if path.is_dir():
        headers = sorted(p for p in path.glob('*.json') if payload_path(p).exists())
        if not headers:
            raise DataContractError(f'No containers (.json with .bin) in {path}')
        return headers
    if not path.exists():
        raise DataContractError(f'Container {path} does not exist')
    return [path]


class Command(TfecCommand):
    help = 'Detect HFOs (ripples and fast ripples) in a signal container'

    def add_command_arguments(self, parser):
        parser.add_argument('container', help='Container header (.json) or a directory of containers')

    def run(self, config, out_dir, /, **options):
        source = Path(options['container'])
        headers = find_containers(source)
        batch = source.is_dir()
        detector = TfecDetector(config, n_jobs=config.threads)

        detections, features, merges = [], [], []
        offset = 0
        inputs = {}
        for header in headers:
            record = read_container(header)
            result = detector.detect(record)
            name = header.stem
            for key, value in result.timings.items():
                self.timings[key] = self.timings.get(key, 0.0) + value

            found = result.detections.assign(feature_row=result.detections['feature_row'] + offset)
            table = result.features
            for band, clusters in sorted(result.clusters.items()):
                merges.append(clusters.merge_frame().assign(band=band, recording=name))
            if batch:
                found = found.assign(recording=name)
                table = table.assign(recording=name)
            detections.append(found)
            features.append(table)
            offset += len(table)
            key = name if batch else 'container'
            inputs[key] = header
            inputs[f'{key}_payload'] = payload_path(header)
            self.stdout.write(f'{name}: {len(found)} HFOs among {len(table)} events of interest')

        detections = pd.concat(detections, ignore_index=True)
        features = pd.concat(features, ignore_index=True)
        merge_columns = (['recording'] if batch else []) + ['band', 'node_a', 'node_b', 'distance']
        merge_tree = (pd.concat(merges, ignore_index=True)[merge_columns] if merges
                      else pd.DataFrame(columns=merge_columns))

        out_dir.mkdir(parents=True, exist_ok=True)
        columns = DETECTION_COLUMNS + (['recording'] if batch else [])
        write_detections(out_dir / 'detections.csv', detections[columns])
        write_table(out_dir / 'features.csv', features)
        write_table(out_dir / 'merge_tree.csv', merge_tree)
        if options.get('config'):
            inputs['config'] = options['config']
        self.finish(out_dir, config, inputs, ['detections.csv', 'features.csv', 'merge_tree.csv'],
                    extra={'feature_subset': list(detector.subset), 'recordings': len(headers)})
