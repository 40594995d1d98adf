from pathlib import Path

from dashboard.registry import record_run
from io_cli.archive import KEYFRAMES_FILE, load_keyframes
from io_cli.config import load_config
from io_cli.management.base import NvlioCommand
from io_cli.ply import export_map

MAP_FILE = 'map.ply'


class Command(NvlioCommand):
    help = 'Exporta el mapa de una corrida (keyframes.npz) a PLY binario'
    command_name = 'export_map'

    def add_arguments(self, parser):
        parser.add_argument('--output', required=True, help='Directorio de la corrida')
        parser.add_argument('--config', help='Archivo de configuración; aporta voxel_size')
        parser.add_argument('--voxel', type=float, default=None,
                            help='Tamaño de vóxel del mapa (por defecto voxel_size)')
        parser.add_argument('--map', default=None, help=f'Destino (por defecto <output>/{MAP_FILE})')

    def execute_command(self, **options):
        voxel = options['voxel']
        if voxel is None:
            voxel = load_config(options['config']).voxel_size
        run_dir = Path(options['output'])
        target = Path(options['map']) if options['map'] else run_dir / MAP_FILE

        keyframes = load_keyframes(run_dir / KEYFRAMES_FILE)
        cloud = export_map(keyframes, voxel, target)

        record_run('export_map', config={'voxel': voxel}, output_dir=run_dir,
                   keyframes=len(keyframes))
        self.stdout.write(self.style.SUCCESS(f'{len(cloud)} puntos escritos en {target}'))
