from dashboard.registry import record_run
from io_cli.management.base import NvlioCommand
from io_cli.pipeline import evaluate


class Command(NvlioCommand):
    help = 'ATE RMSE (alineación rígida de Umeyama) entre dos trayectorias TUM'
    command_name = 'eval'

    def add_arguments(self, parser):
        parser.add_argument('estimate', help='Trayectoria estimada (TUM)')
        parser.add_argument('reference', help='Trayectoria de referencia (TUM)')

    def execute_command(self, **options):
        rmse = evaluate(options['estimate'], options['reference'])
        record_run('eval', config={'reference': options['reference']},
                   dataset=options['estimate'], rmse=rmse)
        self.stdout.write(f'ATE RMSE: {rmse:.6f} m')

    def failure_fields(self, options):
        return {'dataset': options.get('estimate')}
