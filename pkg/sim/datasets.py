"""
Datasets sintéticos completos: escena + trayectoria + barridos + IMU + verdad de terreno.

Toda la aleatoriedad sale de un único numpy Generator sembrado con `seed`.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from imu.types import ImuBias
from io_cli.dataset import ScanRecord
from nvlio.exceptions import PreconditionError

from . import scene as scenes
from .imu import synthesize_imu
from .lidar import LidarModel, raycast_sweep
from .trajectory import TrajectorySpline, path_waypoints

logger = logging.getLogger(__name__)

HOLD = 1.5
RAMP = 1.0


def _room_path():
    return [(-1.0, -1.0, 0.0), (1.5, -1.0, 0.0), (1.5, 1.0, 0.0), (-1.0, 1.0, 0.0)], 0.5, 0.6


def _corridor_path():
    return [(0.0, 0.0, 0.0), (20.0, 0.0, 0.0)], 1.0, 0.5


def _two_room_path():
    return [(-4.5, -1.5, 0.0), (-2.0, -1.5, 0.0), (-2.0, 1.5, 0.0)], 0.5, 0.6


def _stairwell_path(floors=3):
    eye = 1.2
    lanes = {0: 0.95, 1: 3.05}
    vertices = [(0.5, lanes[0], eye)]
    for flight in range(floors):
        y = lanes[flight % 2]
        z0 = flight * scenes.FLOOR_HEIGHT + eye
        z1 = z0 + scenes.FLOOR_HEIGHT
        if flight % 2 == 0:
            vertices += [(scenes.STAIR_X0, y, z0), (scenes.STAIR_X1, y, z1), (7.5, y, z1)]
        else:
            vertices += [(scenes.STAIR_X1, y, z0), (scenes.STAIR_X0, y, z1), (0.5, y, z1)]
        if flight < floors - 1:
            vertices.append((vertices[-1][0], lanes[(flight + 1) % 2], z1))
    return vertices, 0.6, 0.4


def _loop_course_path(side=12.5, overlap=3.0):
    c = side / 2.0
    vertices = [(0.0, 0.0, 0.0), (c, 0.0, 0.0), (c, side, 0.0), (-c, side, 0.0),
                (-c, 0.0, 0.0), (overlap, 0.0, 0.0)]
    return vertices, 1.0, 1.0


PATHS = {
    'room': _room_path,
    'corridor': _corridor_path,
    'two_room': _two_room_path,
    'stairwell': _stairwell_path,
    'loop_course': _loop_course_path,
}


def preset_trajectory(preset, hold=HOLD, ramp=RAMP):
    try:
        vertices, speed, radius = PATHS[preset]()
    except KeyError:
        raise PreconditionError(f'Escena desconocida: {preset}') from None
    times, positions, euler = path_waypoints(vertices, speed=speed, corner_radius=radius)
    return TrajectorySpline(times, positions, euler, hold=hold, ramp=ramp)


@dataclass
class SimDataset:
    preset: str
    seed: int
    scene: object
    trajectory: TrajectorySpline
    model: LidarModel
    scans: list = field(default_factory=list)
    truth: list = field(default_factory=list)
    imu: list = field(default_factory=list)
    groundtruth: list = field(default_factory=list)


def simulate_dataset(preset, seed=0, model=None, scan_rate=2.0, imu_rate=200.0,
                     gyro_noise=1.7e-4, accel_noise=2e-3, bias=None, duration=None,
                     trajectory=None):
    """
    Genera el dataset de un preset.

    gyro_noise/accel_noise son densidades (unidad/√Hz); el desvío por muestra es
    densidad·√imu_rate. `truth` guarda cada SimScan con normales y superficies.
    """
    rng = np.random.default_rng(seed)
    model = model or LidarModel()
    scene = scenes.build_scene(preset)
    trajectory = trajectory or preset_trajectory(preset)
    bias = bias or ImuBias()
    end = trajectory.end if duration is None else min(trajectory.end, trajectory.start + duration)

    data = SimDataset(preset, seed, scene, trajectory, model)
    sqrt_rate = np.sqrt(imu_rate)
    data.imu = synthesize_imu(trajectory, imu_rate, bias, gyro_noise * sqrt_rate,
                              accel_noise * sqrt_rate, rng=rng, t1=end)
    imu_end = data.imu[-1].t

    k = 0
    t = trajectory.start
    while t + model.sweep_time <= imu_end:
        sim_scan = raycast_sweep(scene, trajectory, model, t, rng)
        data.truth.append(sim_scan)
        data.scans.append(ScanRecord(t, sim_scan.offsets, sim_scan.points))
        data.groundtruth.append((t, trajectory.pose(t)))
        k += 1
        t = trajectory.start + k / scan_rate

    logger.info('simulate_dataset %s seed=%d: %d barridos, %d muestras IMU',
                preset, seed, len(data.scans), len(data.imu))
    return data
