import numpy as np

from imu.preintegration import GRAVITY
from imu.types import ImuBias, ImuSample
from nvlio.exceptions import PreconditionError


def synthesize_imu(trajectory, rate, bias=None, gyro_noise=0.0, accel_noise=0.0,
                   gravity=GRAVITY, rng=None, t0=None, t1=None):
    """
    Muestras IMU exactas de la trayectoria (derivadas analíticas del spline).

    ω = velocidad angular en el cuerpo + b_g + ruido;
    a = Rᵀ(p̈ − g) + b_a + ruido. El ruido es desvío por muestra.
    """
    if rate <= 0:
        raise PreconditionError('La frecuencia IMU debe ser positiva')
    if (gyro_noise > 0 or accel_noise > 0) and rng is None:
        raise PreconditionError('Con ruido IMU hace falta un generador aleatorio')
    bias = bias or ImuBias()
    gravity = np.asarray(gravity, dtype=float)
    t0 = trajectory.start if t0 is None else t0
    t1 = trajectory.end if t1 is None else t1
    n = int(np.floor((t1 - t0) * rate + 1e-9)) + 1
    times = t0 + np.arange(n) / rate

    states = trajectory.evaluate(times)
    gyro = np.array([s.angular_velocity for s in states]) + bias.gyro
    accel = np.array([s.rotation.T @ (s.acceleration - gravity) for s in states]) + bias.accel
    if gyro_noise > 0:
        gyro = gyro + rng.normal(0.0, gyro_noise, gyro.shape)
    if accel_noise > 0:
        accel = accel + rng.normal(0.0, accel_noise, accel.shape)
    return [ImuSample(float(t), w, a) for t, w, a in zip(times, gyro, accel)]
