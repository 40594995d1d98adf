from dataclasses import dataclass, field

import numpy as np

from geom.se3 import Pose
from nvlio.exceptions import ImuCoverageError, PreconditionError


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'gyro', np.asarray(self.gyro, dtype=float).reshape(3))
        object.__setattr__(self, 'accel', np.asarray(self.accel, dtype=float).reshape(3))


@dataclass(frozen=True)
class ImuBias:
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, 'accel', np.asarray(self.accel, dtype=float).reshape(3))
        object.__setattr__(self, 'gyro', np.asarray(self.gyro, dtype=float).reshape(3))

    def vector(self):
        """[b_a, b_g]."""
        return np.concatenate([self.accel, self.gyro])

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:3], vec[3:6])


@dataclass(frozen=True)
class NavState:
    pose: Pose
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias: ImuBias = field(default_factory=ImuBias)

    def __post_init__(self):
        object.__setattr__(self, 'velocity', np.asarray(self.velocity, dtype=float).reshape(3))

    @classmethod
    def identity(cls):
        return cls(Pose.identity())


class ImuBuffer:
    """
    Cola de muestras IMU de solo agregado.

    Un único productor agrega; los lectores (deskew, preintegración) consultan
    ventanas de tiempo.
    """

    def __init__(self, samples=()):
        self._t = []
        self._gyro = []
        self._accel = []
        self.extend(samples)

    def __len__(self):
        return len(self._t)

    def __getitem__(self, i):
        return ImuSample(self._t[i], self._gyro[i], self._accel[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def append(self, sample):
        if self._t and not sample.t > self._t[-1]:
            raise PreconditionError(
                f'Muestra IMU fuera de orden: {sample.t} después de {self._t[-1]}')
        self._t.append(float(sample.t))
        self._gyro.append(sample.gyro)
        self._accel.append(sample.accel)

    def extend(self, samples):
        for sample in samples:
            self.append(sample)

    @property
    def times(self):
        return np.asarray(self._t, dtype=float)

    @property
    def gyro(self):
        return np.asarray(self._gyro, dtype=float).reshape(-1, 3)

    @property
    def accel(self):
        return np.asarray(self._accel, dtype=float).reshape(-1, 3)

    @property
    def start(self):
        return self._t[0] if self._t else None

    @property
    def end(self):
        return self._t[-1] if self._t else None

    def covers(self, t0, t1):
        return bool(self._t) and self._t[0] <= t0 and t1 <= self._t[-1]

    def check_coverage(self, t0, t1):
        if not self._t:
            raise ImuCoverageError(t0, t1)
        if t0 < self._t[0]:
            raise ImuCoverageError(t0, min(self._t[0], t1))
        if t1 > self._t[-1]:
            raise ImuCoverageError(max(self._t[-1], t0), t1)

    def interpolate(self, t):
        times = self.times
        gyro = np.array([np.interp(t, times, self.gyro[:, i]) for i in range(3)])
        accel = np.array([np.interp(t, times, self.accel[:, i]) for i in range(3)])
        return ImuSample(t, gyro, accel)

    def window(self, t0, t1):
        """Muestras en [t0, t1] con extremos interpolados linealmente."""
        if not t1 > t0:
            raise PreconditionError('La ventana IMU debe tener duración positiva')
        self.check_coverage(t0, t1)
        times = self.times
        lo = np.searchsorted(times, t0, side='right')
        hi = np.searchsorted(times, t1, side='left')
        inner = [self[i] for i in range(lo, hi)]
        return [self.interpolate(t0)] + inner + [self.interpolate(t1)]
