from dashboard.registry import record_run
from io_cli.config import load_config
from io_cli.management.base import NvlioCommand
from io_cli.pipeline import run_dataset


class Command(NvlioCommand):
    help = 'Corre la odometría LiDAR-inercial sobre un dataset y escribe trayectoria, log y keyframes'
    command_name = 'run'

    def add_arguments(self, parser):
        parser.add_argument('--dataset', required=True, help='Directorio con scans.bin e imu.txt')
        parser.add_argument('--output', required=True, help='Directorio de salida')
        parser.add_argument('--config', help='Archivo de configuración (clave = valor)')
        parser.add_argument('--deterministic', action='store_true',
                            help='Modo secuencial: cierre de lazo en línea, salida reproducible')

    def execute_command(self, **options):
        overrides = {'deterministic': True} if options['deterministic'] else {}
        config = load_config(options['config'], **overrides)

        summary = run_dataset(options['dataset'], options['output'], config)

        record_run('run', config=config.as_dict(), dataset=options['dataset'],
                   output_dir=options['output'], scans=summary.scans,
                   keyframes=summary.keyframes, loops=summary.loops, rmse=summary.rmse)

        message = (f'{summary.scans} barridos, {summary.keyframes} keyframes, '
                   f'{summary.loops} lazos')
        if summary.rmse is not None:
            message += f', ATE RMSE {summary.rmse:.6f} m'
        self.stdout.write(self.style.SUCCESS(message))
