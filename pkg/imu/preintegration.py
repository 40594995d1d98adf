"""
Preintegración IMU sobre la variedad con integración por punto medio.

Los incrementos (ΔR, Δv, Δp) están expresados en el marco del cuerpo al inicio
del intervalo y no dependen de la gravedad; ésta entra recién en predict() y en
el residuo del factor IMU. El error de ΔR es a derecha (ΔR·Exp(δφ)) y el de Δv,
Δp es aditivo; la covarianza está ordenada (φ, v, p).
"""
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation

from geom.se3 import Pose, right_jacobian, skew, so3_exp
from nvlio.exceptions import PreconditionError

from .types import ImuBias, NavState

logger = logging.getLogger(__name__)

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class PreintegratedImu:
    dt: float
    delta_R: np.ndarray
    delta_v: np.ndarray
    delta_p: np.ndarray
    bias: ImuBias
    d_R_d_bg: np.ndarray
    d_v_d_ba: np.ndarray
    d_v_d_bg: np.ndarray
    d_p_d_ba: np.ndarray
    d_p_d_bg: np.ndarray
    covariance: np.ndarray

    @classmethod
    def identity(cls, bias=None):
        z = np.zeros((3, 3))
        return cls(0.0, np.eye(3), np.zeros(3), np.zeros(3), bias or ImuBias(),
                   z, z, z, z, z, np.zeros((9, 9)))

    def compose(self, other):
        """Incrementos de self seguidos de other (other debe estar linealizado en el mismo sesgo)."""
        R1 = self.delta_R
        dv2x = skew(other.delta_v)
        dp2x = skew(other.delta_p)
        t2 = other.dt

        A = np.eye(9)
        A[0:3, 0:3] = other.delta_R.T
        A[3:6, 0:3] = -R1 @ dv2x
        A[6:9, 0:3] = -R1 @ dp2x
        A[6:9, 3:6] = t2 * np.eye(3)
        B = np.zeros((9, 9))
        B[0:3, 0:3] = np.eye(3)
        B[3:6, 3:6] = R1
        B[6:9, 6:9] = R1
        cov = A @ self.covariance @ A.T + B @ other.covariance @ B.T

        return PreintegratedImu(
            dt=self.dt + t2,
            delta_R=R1 @ other.delta_R,
            delta_v=self.delta_v + R1 @ other.delta_v,
            delta_p=self.delta_p + self.delta_v * t2 + R1 @ other.delta_p,
            bias=self.bias,
            d_R_d_bg=other.delta_R.T @ self.d_R_d_bg + other.d_R_d_bg,
            d_v_d_ba=self.d_v_d_ba + R1 @ other.d_v_d_ba,
            d_v_d_bg=self.d_v_d_bg - R1 @ dv2x @ self.d_R_d_bg + R1 @ other.d_v_d_bg,
            d_p_d_ba=self.d_p_d_ba + self.d_v_d_ba * t2 + R1 @ other.d_p_d_ba,
            d_p_d_bg=(self.d_p_d_bg + self.d_v_d_bg * t2
                      - R1 @ dp2x @ self.d_R_d_bg + R1 @ other.d_p_d_bg),
            covariance=0.5 * (cov + cov.T),
        )

    def bias_delta(self, bias):
        return bias.accel - self.bias.accel, bias.gyro - self.bias.gyro

    def corrected(self, bias):
        """Incrementos re-linealizados a primer orden en otro sesgo."""
        d_ba, d_bg = self.bias_delta(bias)
        return replace(
            self,
            delta_R=self.delta_R @ so3_exp(self.d_R_d_bg @ d_bg),
            delta_v=self.delta_v + self.d_v_d_ba @ d_ba + self.d_v_d_bg @ d_bg,
            delta_p=self.delta_p + self.d_p_d_ba @ d_ba + self.d_p_d_bg @ d_bg,
            bias=bias,
        )


def _check_samples(samples):
    if len(samples) < 2:
        raise PreconditionError('La preintegración requiere al menos 2 muestras')
    times = np.array([s.t for s in samples], dtype=float)
    if np.any(np.diff(times) <= 0.0):
        raise PreconditionError('Las marcas de tiempo IMU deben ser estrictamente crecientes')
    return times


def preintegrate(samples, bias=None, gyro_noise=1.7e-4, accel_noise=2e-3):
    samples = list(samples)
    times = _check_samples(samples)
    bias = bias or ImuBias()
    gyro = np.array([s.gyro for s in samples]) - bias.gyro
    accel = np.array([s.accel for s in samples]) - bias.accel

    R = np.eye(3)
    v = np.zeros(3)
    p = np.zeros(3)
    Rbg = np.zeros((3, 3))
    Vba = np.zeros((3, 3))
    Vbg = np.zeros((3, 3))
    Pba = np.zeros((3, 3))
    Pbg = np.zeros((3, 3))
    cov = np.zeros((9, 9))
    I3 = np.eye(3)

    for k in range(len(samples) - 1):
        dt = times[k + 1] - times[k]
        w = 0.5 * (gyro[k] + gyro[k + 1])
        dR = so3_exp(w * dt)
        Jr = right_jacobian(w * dt)
        R_next = R @ dR
        a_w = 0.5 * (R @ accel[k] + R_next @ accel[k + 1])

        Rbg_next = dR.T @ Rbg - Jr * dt
        da_dbg = -0.5 * (R @ skew(accel[k]) @ Rbg + R_next @ skew(accel[k + 1]) @ Rbg_next)
        da_dba = -0.5 * (R + R_next)

        # propagación de la covarianza (φ, v, p)
        A = np.eye(9)
        A[0:3, 0:3] = dR.T
        A[3:6, 0:3] = -skew(a_w) @ R * dt
        A[6:9, 0:3] = -0.5 * skew(a_w) @ R * dt * dt
        A[6:9, 3:6] = I3 * dt
        Bg = np.zeros((9, 3))
        Bg[0:3] = Jr * dt
        Ba = np.zeros((9, 3))
        Ba[3:6] = R * dt
        Ba[6:9] = 0.5 * R * dt * dt
        cov = (A @ cov @ A.T
               + (gyro_noise ** 2 / dt) * Bg @ Bg.T
               + (accel_noise ** 2 / dt) * Ba @ Ba.T)

        Pba = Pba + Vba * dt + 0.5 * da_dba * dt * dt
        Pbg = Pbg + Vbg * dt + 0.5 * da_dbg * dt * dt
        Vba = Vba + da_dba * dt
        Vbg = Vbg + da_dbg * dt
        Rbg = Rbg_next

        p = p + v * dt + 0.5 * a_w * dt * dt
        v = v + a_w * dt
        R = R_next

    # reproyección a SO(3) para que el error numérico no se acumule
    R = Rotation.from_matrix(R).as_matrix()
    result = PreintegratedImu(float(times[-1] - times[0]), R, v, p, bias,
                              Rbg, Vba, Vbg, Pba, Pbg, 0.5 * (cov + cov.T))
    logger.debug('preintegrate: %d muestras, dt=%.3f s', len(samples), result.dt)
    return result


def predict(state, preint, gravity=GRAVITY):
    preint = preint.corrected(state.bias)
    gravity = np.asarray(gravity, dtype=float)
    R_i = state.pose.rotation
    dt = preint.dt
    rotation = R_i @ preint.delta_R
    velocity = state.velocity + gravity * dt + R_i @ preint.delta_v
    position = (state.pose.translation + state.velocity * dt
                + 0.5 * gravity * dt * dt + R_i @ preint.delta_p)
    return NavState(Pose(rotation, position), velocity, state.bias)


@dataclass(frozen=True)
class GravityEstimate:
    rotation: np.ndarray
    gravity: np.ndarray
    gyro_bias: np.ndarray


def estimate_gravity(samples, duration=1.0):
    """
    Arranque estático: promedia el primer `duration` de acelerómetro y giróscopo.

    Devuelve roll/pitch iniciales (yaw cero), el vector de gravedad (0, 0, −|ā|)
    y el sesgo del giróscopo.
    """
    samples = list(samples)
    if not samples:
        raise PreconditionError('No hay muestras IMU para estimar la gravedad')
    t0 = samples[0].t
    window = [s for s in samples if s.t <= t0 + duration]
    accel = np.mean([s.accel for s in window], axis=0)
    gyro = np.mean([s.gyro for s in window], axis=0)
    roll = np.arctan2(accel[1], accel[2])
    pitch = np.arctan2(-accel[0], np.hypot(accel[1], accel[2]))
    rotation = Rotation.from_euler('ZYX', [0.0, pitch, roll]).as_matrix()
    gravity = np.array([0.0, 0.0, -np.linalg.norm(accel)])
    logger.info('Gravedad inicial |g|=%.4f, roll=%.4f, pitch=%.4f', -gravity[2], roll, pitch)
    return GravityEstimate(rotation, gravity, gyro)
