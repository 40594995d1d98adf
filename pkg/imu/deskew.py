"""
Compensación de movimiento de un barrido con la rotación integrada del giróscopo.

Cada punto se lleva al marco del LiDAR en el instante del primer punto:
p_inicio = R(t) · p, con R(t) la orientación del sensor en t relativa al inicio.
Solo rotación, sin traslación.

Convención de signos: con ω = (0, 0, 1) rad/s el sensor giró +0.05 rad a los
0.05 s, así que un punto fijo del entorno se mide girado −0.05 rad respecto de
sus coordenadas al inicio. La salida aplica el giro +0.05 y devuelve esas
coordenadas.
"""
import logging

import numpy as np
from scipy.spatial.transform import Rotation

from .types import ImuBuffer

logger = logging.getLogger(__name__)


def _rate_segments(buffer, t0, t1, bias, lidar_rotation):
    samples = buffer.window(t0, t1)
    times = np.array([s.t for s in samples])
    gyro = np.array([s.gyro for s in samples]) - bias.gyro
    if lidar_rotation is not None:
        # velocidad angular expresada en el marco del LiDAR
        gyro = gyro @ lidar_rotation
    rates = 0.5 * (gyro[:-1] + gyro[1:])
    return times, rates


def deskew(points, timestamps, samples, bias, lidar_rotation=None):
    """
    points (N, 3) en marco LiDAR, timestamps (N,) absolutos.

    `lidar_rotation` es la rotación LiDAR → IMU; None si los marcos coinciden.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    timestamps = np.asarray(timestamps, dtype=float).reshape(-1)
    if len(points) == 0:
        return points.copy()
    buffer = samples if isinstance(samples, ImuBuffer) else ImuBuffer(samples)

    t0, t1 = float(timestamps.min()), float(timestamps.max())
    if t1 <= t0:
        buffer.check_coverage(t0, t0)
        return points.copy()
    times, rates = _rate_segments(buffer, t0, t1, bias, lidar_rotation)
    if not np.any(rates):
        return points.copy()

    increments = Rotation.from_rotvec(rates * np.diff(times)[:, None])
    cumulative = [Rotation.identity()]
    for inc in increments:
        cumulative.append(cumulative[-1] * inc)
    cumulative = Rotation.concatenate(cumulative)

    logger.debug('deskew: %d puntos, rotación total %.4f rad', len(points),
                 float(np.linalg.norm(cumulative[-1].as_rotvec())))
    seg = np.clip(np.searchsorted(times, timestamps, side='right') - 1, 0, len(rates) - 1)
    partial = Rotation.from_rotvec(rates[seg] * (timestamps - times[seg])[:, None])
    return (cumulative[seg] * partial).apply(points)
