"""
Configuración de una corrida.

El archivo usa el formato de entorno de python-decouple (`clave = valor`, '#'
comenta). Capas: valores por defecto de settings.NVLIO_DEFAULTS (que ya incluyen
las variables NVLIO_*) y encima el archivo. Claves desconocidas o valores fuera
de rango levantan ConfigError.
"""
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from decouple import Config, Csv, RepositoryEnv
from django.conf import settings

from nvlio.exceptions import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    fov_max_deg: float = 45.0
    fov_min_deg: float = -45.0
    image_height: int = 32
    image_width: int = 512
    normal_window: int = 3
    consensus_distance: float = 0.05
    range_jump: float = 0.3
    voxel_size: float = 0.4
    voxel_normal_coherence: float = 0.0
    distance_threshold: float = 0.5
    angle_threshold_deg: float = 30.0
    max_iterations: int = 30
    step_tolerance: float = 1e-6
    min_correspondences: int = 20
    max_candidates: int = 10
    submap_length: int = 5
    keyframe_angle_deg: float = 30.0
    keyframe_distance: float = 1.0
    loop_radius: float = 10.0
    loop_exclusion: int = 10
    loop_neighborhood: int = 3
    loop_radial_threshold: float = 0.3
    loop_angle_threshold_deg: float = 30.0
    loop_min_matches: int = 20
    lambda_threshold: float = 0.02
    covariance_scale: float = 0.01
    rotation_sigma: float = 0.01
    gyro_noise: float = 1.7e-4
    accel_noise: float = 2e-3
    gyro_bias_walk: float = 1e-5
    accel_bias_walk: float = 1e-4
    gravity_init_window: float = 1.0
    extrinsic_translation: tuple = (0.0, 0.0, 0.0)
    extrinsic_rpy_deg: tuple = (0.0, 0.0, 0.0)
    optimizer_iterations: int = 50
    deterministic: bool = False

    def __post_init__(self):
        validate(self)

    def as_dict(self):
        values = asdict(self)
        for key in ('extrinsic_translation', 'extrinsic_rpy_deg'):
            values[key] = list(values[key])
        return values


# (mínimo, máximo) inclusivos
BOUNDS = {
    'fov_max_deg': (-90.0, 90.0),
    'fov_min_deg': (-90.0, 90.0),
    'image_height': (2, 4096),
    'image_width': (8, 8192),
    'consensus_distance': (1e-6, 10.0),
    'range_jump': (1e-6, 100.0),
    'voxel_size': (1e-3, 10.0),
    'voxel_normal_coherence': (0.0, 1.0),
    'distance_threshold': (1e-6, 100.0),
    'angle_threshold_deg': (1e-3, 90.0),
    'max_iterations': (1, 1000),
    'step_tolerance': (1e-15, 1.0),
    'min_correspondences': (6, 10 ** 7),
    'max_candidates': (1, 1000),
    'submap_length': (1, 1000),
    'keyframe_angle_deg': (1e-3, 180.0),
    'keyframe_distance': (1e-3, 1000.0),
    'loop_radius': (1e-3, 1e4),
    'loop_exclusion': (0, 10 ** 6),
    'loop_neighborhood': (1, 99),
    'loop_radial_threshold': (1e-6, 100.0),
    'loop_angle_threshold_deg': (1e-3, 90.0),
    'loop_min_matches': (6, 10 ** 7),
    'lambda_threshold': (0.0, 1.0 / 3.0),
    'covariance_scale': (1e-12, 1e6),
    'rotation_sigma': (1e-12, 10.0),
    'gyro_noise': (1e-12, 1.0),
    'accel_noise': (1e-12, 10.0),
    'gyro_bias_walk': (1e-12, 1.0),
    'accel_bias_walk': (1e-12, 10.0),
    'gravity_init_window': (1e-3, 60.0),
    'optimizer_iterations': (1, 1000),
}

NORMAL_WINDOWS = (3, 5)

CASTS = {
    float: float,
    int: int,
    bool: bool,
    tuple: Csv(float, post_process=tuple),
}


def _field_types():
    return {f.name: type(f.default) for f in fields(RunConfig)}


def validate(config):
    for key, (low, high) in BOUNDS.items():
        value = getattr(config, key)
        if not low <= value <= high:
            raise ConfigError(f'{key} = {value} fuera de rango [{low}, {high}]')
    if not config.fov_max_deg > config.fov_min_deg:
        raise ConfigError('fov_max_deg debe ser mayor que fov_min_deg')
    if config.normal_window not in NORMAL_WINDOWS:
        raise ConfigError(f'normal_window debe ser 3 o 5, no {config.normal_window}')
    if config.loop_neighborhood % 2 == 0:
        raise ConfigError('loop_neighborhood debe ser impar')
    for key in ('extrinsic_translation', 'extrinsic_rpy_deg'):
        if len(getattr(config, key)) != 3:
            raise ConfigError(f'{key} necesita exactamente 3 valores')


def defaults():
    """Valores de settings.NVLIO_DEFAULTS normalizados a los tipos de RunConfig."""
    types = _field_types()
    values = {}
    for key, value in getattr(settings, 'NVLIO_DEFAULTS', {}).items():
        if key not in types:
            raise ConfigError(f'Clave de configuración desconocida en settings: {key}')
        values[key] = tuple(float(v) for v in value) if types[key] is tuple else types[key](value)
    return values


def read_config_file(path):
    """Valores del archivo, ya casteados; rechaza claves desconocidas."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'No existe el archivo de configuración {path}')
    repository = RepositoryEnv(str(path))
    types = _field_types()
    unknown = sorted(set(repository.data) - set(types))
    if unknown:
        raise ConfigError(f'Clave de configuración desconocida: {", ".join(unknown)}')

    source = Config(repository)
    values = {}
    for key in repository.data:
        try:
            values[key] = source(key, cast=CASTS[types[key]])
        except ValueError as exc:
            raise ConfigError(f'Valor inválido para {key}: {exc}') from None
    return values


def load_config(path=None, **overrides):
    values = defaults()
    if path is not None:
        values.update(read_config_file(path))
    unknown = sorted(set(overrides) - set(_field_types()))
    if unknown:
        raise ConfigError(f'Clave de configuración desconocida: {", ".join(unknown)}')
    values.update(overrides)
    config = RunConfig(**values)
    logger.debug('RunConfig cargada%s', f' desde {path}' if path else '')
    return config
