"""
Corridas completas sobre un directorio de dataset.

Los comandos de management son una capa fina sobre estas funciones.
"""
import logging
import shutil
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from geom.alignment import ate_rmse
from nvlio.exceptions import NvlioError, PreconditionError
from pose_graph.odometry import LidarInertialOdometry, OdometryParams
from sim.datasets import simulate_dataset

from .archive import KEYFRAMES_FILE, save_keyframes
from .dataset import GROUNDTRUTH_FILE, IMU_FILE, SCANS_FILE, read_dataset, write_dataset
from .files import atomic_write
from .trajectory import read_trajectory, write_trajectory

logger = logging.getLogger(__name__)

TRAJECTORY_FILE = 'trajectory.txt'
RUN_LOG_FILE = 'run_log.txt'


@contextmanager
def partial_outputs(directory, names=()):
    """
    Borra las salidas a medio escribir si el bloque falla.

    Se eliminan los `names` dentro de `directory` y el directorio mismo si lo
    creó este bloque.
    """
    directory = Path(directory)
    created = not directory.exists()
    directory.mkdir(parents=True, exist_ok=True)
    try:
        yield directory
    except BaseException:
        if created:
            shutil.rmtree(directory, ignore_errors=True)
        else:
            for name in names:
                (directory / name).unlink(missing_ok=True)
        raise


@dataclass
class RunSummary:
    scans: int
    keyframes: int
    loops: int
    skipped: int
    rmse: float = None


def log_lines(odometry):
    lines = [record.line() for record in odometry.records]
    for event in odometry.loop_events:
        lines.append(f'loop current={event.current} target={event.target} '
                     f'reason={event.reason} matches={event.matches}')
    return ''.join(line + '\n' for line in lines)


def run_dataset(dataset, output, config):
    """Odometría sobre `dataset`; escribe trayectoria, log y keyframes en `output`."""
    scans, samples = read_dataset(dataset)
    if not scans:
        raise PreconditionError(f'El dataset {dataset} no tiene barridos')

    params = OdometryParams.from_config(config)
    odometry = LidarInertialOdometry(params)
    odometry.initialize(samples)

    with partial_outputs(output, (TRAJECTORY_FILE, RUN_LOG_FILE, KEYFRAMES_FILE)) as out:
        trajectory = odometry.run(scans)
        write_trajectory(trajectory, out / TRAJECTORY_FILE)
        atomic_write(out / RUN_LOG_FILE, log_lines(odometry).encode('utf-8'))
        save_keyframes(odometry.keyframes, out / KEYFRAMES_FILE)

    summary = RunSummary(
        scans=len(scans),
        keyframes=len(odometry.keyframes),
        loops=len(odometry.graph.factors_of_kind('loop')),
        skipped=sum(1 for record in odometry.records if record.skipped),
    )

    groundtruth = Path(dataset) / GROUNDTRUTH_FILE
    if groundtruth.is_file():
        reference = [pose for _, pose in read_trajectory(groundtruth)]
        estimate = [pose for _, pose in trajectory]
        if len(reference) == len(estimate):
            try:
                summary.rmse = ate_rmse(estimate, reference)
            except NvlioError as exc:
                logger.warning('No se pudo calcular el ATE contra %s: %s', groundtruth, exc)
        else:
            logger.warning('%s tiene %d poses y la trayectoria %d; se omite el ATE',
                           groundtruth, len(reference), len(estimate))
    logger.info('run %s: barridos=%d keyframes=%d lazos=%d omitidos=%d', dataset,
                summary.scans, summary.keyframes, summary.loops, summary.skipped)
    return summary


def simulate_to_disk(preset, seed, output, duration=None, scan_rate=2.0):
    with partial_outputs(output, (SCANS_FILE, IMU_FILE, GROUNDTRUTH_FILE)):
        data = simulate_dataset(preset, seed=seed, duration=duration, scan_rate=scan_rate)
        write_dataset(output, data.scans, data.imu, data.groundtruth)
    return data


def evaluate(estimate_path, reference_path):
    estimate = [pose for _, pose in read_trajectory(estimate_path)]
    reference = [pose for _, pose in read_trajectory(reference_path)]
    return ate_rmse(estimate, reference)
