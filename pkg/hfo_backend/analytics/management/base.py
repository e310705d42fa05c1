"""
Shared plumbing of the detector's management commands

Every command resolves its RunConfig (defaults, --config file, TFEC_*
environment, CLI flags) before touching the output directory, so a bad
configuration leaves no partial output. Package errors become CommandError
with the exit code of the error class.
"""

import logging
import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from analytics.config import BANDS, RunConfig, load_config
from analytics.exceptions import TfecError
from analytics.formats import write_manifest, write_run_config

logger = logging.getLogger(__name__)


class TfecCommand(BaseCommand):
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', help='key = value run configuration file')
        parser.add_argument('--out', help='Output directory (default: TFEC_OUTPUT_DIR/<command>)')
        parser.add_argument('--band', choices=BANDS, help='Detection pass(es) to run')
        parser.add_argument('--seed', type=int, help='Root seed of every random stream')
        parser.add_argument('--threads', type=int, help='joblib workers (-1 for all cores)')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit('.', 1)[-1]

    def load_config(self, options) -> RunConfig:
        base = RunConfig(threads=getattr(settings, 'TFEC_THREADS', 1))
        return load_config(
            options.get('config'),
            prefix=getattr(settings, 'TFEC_ENV_PREFIX', 'TFEC_'),
            base=base,
            band=options.get('band'),
            seed=options.get('seed'),
            threads=options.get('threads'),
        )

    def output_dir(self, options) -> Path:
        if options.get('out'):
            return Path(options['out'])
        return Path(settings.TFEC_OUTPUT_DIR) / self.command_name

    def handle(self, *args, **options):
        self.started = time.perf_counter()
        self.timings = {}
        try:
            config = self.load_config(options)
            out_dir = self.output_dir(options)
            self.run(config, out_dir, **options)
        except TfecError as exc:
            logger.error('%s failed: %s', self.command_name, exc)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        self.stdout.write(self.style.SUCCESS(f'{self.command_name}: wrote {out_dir}'))

    def run(self, config: RunConfig, out_dir: Path, /, **options):
        raise NotImplementedError('subclasses of TfecCommand must provide a run() method')

    def finish(self, out_dir: Path, config: RunConfig, inputs, outputs, extra=None):
        """Write run_config.txt and manifest.json next to the command outputs"""
        out_dir.mkdir(parents=True, exist_ok=True)
        write_run_config(out_dir, config)
        outputs = list(outputs) + ['run_config.txt']
        self.timings['total_s'] = time.perf_counter() - self.started
        write_manifest(out_dir, self.command_name, config, inputs, outputs, extra=extra,
                       timings=self.timings)
