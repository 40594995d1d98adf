from dashboard.registry import record_run
from io_cli.management.base import NvlioCommand
from io_cli.pipeline import simulate_to_disk
from sim.datasets import PATHS


class Command(NvlioCommand):
    help = 'Genera un dataset sintético (barridos, IMU y ground truth) de una escena'
    command_name = 'simulate'

    def add_arguments(self, parser):
        parser.add_argument('--preset', required=True, choices=sorted(PATHS))
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--output', required=True, help='Directorio del dataset')
        parser.add_argument('--duration', type=float, default=None,
                            help='Recorta la trayectoria a estos segundos')
        parser.add_argument('--scan-rate', type=float, default=2.0, help='Barridos por segundo')

    def execute_command(self, **options):
        data = simulate_to_disk(options['preset'], options['seed'], options['output'],
                                duration=options['duration'], scan_rate=options['scan_rate'])

        record_run('simulate', config={'duration': options['duration'],
                                       'scan_rate': options['scan_rate']},
                   preset=options['preset'], seed=options['seed'],
                   dataset=options['output'], output_dir=options['output'],
                   scans=len(data.scans))

        self.stdout.write(self.style.SUCCESS(
            f'{options["preset"]} seed={options["seed"]}: {len(data.scans)} barridos, '
            f'{len(data.imu)} muestras IMU en {options["output"]}'))
