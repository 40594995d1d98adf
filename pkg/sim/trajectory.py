"""
Trayectorias analíticas C² para generar IMU exacta.

Posición y ángulos de Euler ZYX (yaw, pitch, roll) como CubicSpline de scipy sobre
un tiempo de movimiento τ. El tiempo real t se mapea a τ con una espera estática
seguida de una rampa g(x) = 2.5x⁴ − 3x⁵ + x⁶ (g'(0)=g''(0)=0, g'(1)=1, g''(1)=0),
y se frena con la rampa espejada al final.
"""
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial.transform import Rotation

from geom.se3 import Pose
from nvlio.exceptions import PreconditionError

RAMP_END = 0.5  # g(1)


def _ramp(x):
    return 2.5 * x ** 4 - 3.0 * x ** 5 + x ** 6, \
        10.0 * x ** 3 - 15.0 * x ** 4 + 6.0 * x ** 5, \
        30.0 * x ** 2 - 60.0 * x ** 3 + 30.0 * x ** 4


@dataclass(frozen=True)
class TrajectoryState:
    position: np.ndarray
    rotation: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    angular_velocity: np.ndarray

    @property
    def pose(self):
        return Pose(self.rotation, self.position)


class TrajectorySpline:
    def __init__(self, times, positions, euler_zyx=None, hold=0.0, ramp=0.0, t0=0.0):
        times = np.asarray(times, dtype=float)
        positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        if len(times) < 2 or np.any(np.diff(times) <= 0):
            raise PreconditionError('La trayectoria necesita al menos 2 tiempos crecientes')
        if euler_zyx is None:
            euler_zyx = np.zeros((len(times), 3))
        euler_zyx = np.asarray(euler_zyx, dtype=float).reshape(-1, 3)
        if hold < 0 or ramp < 0:
            raise PreconditionError('hold y ramp no pueden ser negativos')
        self.tau0 = times[0]
        self._position = CubicSpline(times, positions)
        self._euler = CubicSpline(times, euler_zyx)
        self.t0 = float(t0)
        self.hold = float(hold)
        self.ramp = float(ramp)
        self.span = float(times[-1] - times[0])
        if self.span < self.ramp:
            raise PreconditionError('La rampa es más larga que la trayectoria')
        # con rampa, cada extremo consume ramp segundos para recorrer ramp/2 de τ
        self.duration = self.hold + self.span + self.ramp

    @property
    def start(self):
        return self.t0

    @property
    def end(self):
        return self.t0 + self.duration

    @classmethod
    def stationary(cls, pose, duration, t0=0.0):
        euler = Rotation.from_matrix(pose.rotation).as_euler('ZYX')
        return cls([0.0, duration], [pose.translation] * 2, [euler] * 2, t0=t0)

    def warp(self, t):
        """τ(t) y sus derivadas primera y segunda."""
        x = np.asarray(t, dtype=float) - self.t0 - self.hold
        span = self.span
        R = self.ramp
        motion = self.duration - self.hold
        tau = np.clip(x, 0.0, span)
        dtau = ((x > 0) & (x < motion)).astype(float)
        ddtau = np.zeros_like(x)
        if R > 0:
            tau = np.where(x <= 0, 0.0, np.where(x >= motion, span, RAMP_END * R + (x - R)))
            rise = (x > 0) & (x < R)
            g, dg, ddg = _ramp(x[rise] / R)
            tau[rise] = R * g
            dtau[rise] = dg
            ddtau[rise] = ddg / R
            fall = (x > motion - R) & (x < motion)
            g, dg, ddg = _ramp((motion - x[fall]) / R)
            tau[fall] = span - R * g
            dtau[fall] = dg
            ddtau[fall] = -ddg / R
        return tau + self.tau0, dtau, ddtau

    def evaluate(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tau, dtau, ddtau = self.warp(t)

        p = self._position(tau)
        dp = self._position(tau, 1)
        ddp = self._position(tau, 2)
        velocity = dp * dtau[:, None]
        acceleration = ddp * dtau[:, None] ** 2 + dp * ddtau[:, None]

        e = self._euler(tau)
        de = self._euler(tau, 1) * dtau[:, None]
        yaw, pitch, roll = e[:, 0], e[:, 1], e[:, 2]
        dyaw, dpitch, droll = de[:, 0], de[:, 1], de[:, 2]
        omega = np.stack([
            droll - dyaw * np.sin(pitch),
            dpitch * np.cos(roll) + dyaw * np.sin(roll) * np.cos(pitch),
            -dpitch * np.sin(roll) + dyaw * np.cos(roll) * np.cos(pitch),
        ], axis=1)
        rotation = Rotation.from_euler('ZYX', e).as_matrix()

        if scalar:
            return TrajectoryState(p[0], rotation[0], velocity[0], acceleration[0], omega[0])
        return [TrajectoryState(p[i], rotation[i], velocity[i], acceleration[i], omega[i])
                for i in range(len(t))]

    def pose(self, t):
        return self.evaluate(t).pose

    def poses(self, times):
        """Rotaciones (N, 3, 3) y posiciones (N, 3) vectorizadas."""
        tau, _, _ = self.warp(np.asarray(times, dtype=float))
        return Rotation.from_euler('ZYX', self._euler(tau)).as_matrix(), self._position(tau)


def path_waypoints(vertices, speed=1.0, corner_radius=0.5, spacing=0.25):
    """
    Recorre una polilínea 3D con esquinas redondeadas en el plano xy.

    Devuelve (tiempos, posiciones, euler_zyx) muestreados cada `spacing` metros con
    el yaw siguiendo la tangente horizontal.
    """
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
    if len(vertices) < 2 or speed <= 0:
        raise PreconditionError('El camino necesita al menos 2 vértices y velocidad positiva')

    # puntos de corte de los filetes
    pieces = []
    current = vertices[0]
    for i in range(1, len(vertices) - 1):
        a, b, c = vertices[i - 1], vertices[i], vertices[i + 1]
        d_in = (b - a)[:2]
        d_out = (c - b)[:2]
        n_in, n_out = np.linalg.norm(d_in), np.linalg.norm(d_out)
        cross = d_in[0] * d_out[1] - d_in[1] * d_out[0]
        if n_in < 1e-9 or n_out < 1e-9 or abs(cross) < 1e-9 * n_in * n_out:
            continue
        d_in, d_out = d_in / n_in, d_out / n_out
        turn = np.arccos(np.clip(d_in @ d_out, -1.0, 1.0))
        cut = min(corner_radius * np.tan(turn / 2.0), 0.45 * n_in, 0.45 * n_out)
        radius = cut / np.tan(turn / 2.0)
        p_in = np.append(b[:2] - d_in * cut, b[2])
        p_out = np.append(b[:2] + d_out * cut, b[2])
        pieces.append(('line', current, p_in))
        side = np.sign(cross)
        center = b[:2] - d_in * cut + side * np.array([-d_in[1], d_in[0]]) * radius
        pieces.append(('arc', p_in, p_out, center, radius, side, turn))
        current = p_out
    pieces.append(('line', current, vertices[-1]))

    samples = []
    for piece in pieces:
        if piece[0] == 'line':
            _, a, b = piece
            length = np.linalg.norm(b - a)
            n = max(int(np.ceil(length / spacing)), 1)
            samples.extend(a + (b - a) * s for s in np.arange(n) / n)
        else:
            _, a, b, center, radius, side, turn = piece
            n = max(int(np.ceil(radius * turn / spacing)), 1)
            start = np.arctan2(a[1] - center[1], a[0] - center[0])
            for s in np.arange(n) / n:
                ang = start + side * turn * s
                samples.append(np.array([center[0] + radius * np.cos(ang),
                                         center[1] + radius * np.sin(ang), a[2]]))
    samples.append(vertices[-1])
    positions = np.array(samples)

    steps = np.linalg.norm(np.diff(positions, axis=0), axis=1)
    keep = np.concatenate([[True], steps > 1e-6])
    positions = positions[keep]
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(positions, axis=0), axis=1))])
    times = arc / speed

    tangent = np.gradient(positions[:, :2], arc, axis=0)
    yaw = np.unwrap(np.arctan2(tangent[:, 1], tangent[:, 0]))
    euler = np.zeros((len(positions), 3))
    euler[:, 0] = yaw
    return times, positions, euler
