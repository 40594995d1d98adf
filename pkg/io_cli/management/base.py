import logging

from django.core.management.base import BaseCommand, CommandError

from dashboard.registry import record_run
from nvlio.exceptions import NvlioError

logger = logging.getLogger(__name__)


class NvlioCommand(BaseCommand):
    """
    Base de los comandos del toolkit.

    Las subclases implementan `execute_command(**options)`; cualquier NvlioError
    (o error de E/S) se registra como corrida fallida y sale como CommandError.
    """
    command_name = None

    def handle(self, *args, **options):
        try:
            return self.execute_command(**options)
        except (NvlioError, OSError) as exc:
            logger.error('%s falló: %s', self.command_name, exc)
            record_run(self.command_name, status='failed', **self.failure_fields(options))
            raise CommandError(str(exc)) from exc

    def execute_command(self, **options):
        raise NotImplementedError

    def failure_fields(self, options):
        return {
            'preset': options.get('preset'),
            'seed': options.get('seed'),
            'dataset': options.get('dataset'),
            'output_dir': options.get('output'),
        }
