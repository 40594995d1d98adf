"""
Álgebra de cuerpo rígido: SO(3) y SE(3) con mapas exponencial y logarítmico.

Convención de twist: (phi, rho) con la parte de rotación primero, en radianes.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

SMALL_ANGLE = 1e-8


def skew(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def so3_exp(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + K + 0.5 * K @ K
    return (np.eye(3)
            + np.sin(theta) / theta * K
            + (1.0 - np.cos(theta)) / theta ** 2 * K @ K)


def so3_log(R):
    return Rotation.from_matrix(R).as_rotvec()


def left_jacobian(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * K + K @ K / 6.0
    return (np.eye(3)
            + (1.0 - np.cos(theta)) / theta ** 2 * K
            + (theta - np.sin(theta)) / theta ** 3 * K @ K)


def left_jacobian_inverse(phi):
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = skew(phi)
    if theta < SMALL_ANGLE:
        return np.eye(3) - 0.5 * K + K @ K / 12.0
    coeff = 1.0 / theta ** 2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * K + coeff * K @ K


def right_jacobian(phi):
    return left_jacobian(-np.asarray(phi, dtype=float))


def rotation_angle(R):
    """Ángulo geodésico de una rotación, en radianes."""
    return float(np.linalg.norm(so3_log(R)))


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'rotation', np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, 'translation', np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)):
        return cls(so3_exp(rotvec), translation)

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def compose(self, other):
        """self ∘ other."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def inverse(self):
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def act(self, points):
        """Transforma puntos (N, 3) o un único punto."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def rotate(self, vectors):
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def is_valid(self, tol=1e-9):
        R = self.rotation
        return (np.allclose(R.T @ R, np.eye(3), atol=tol)
                and abs(np.linalg.det(R) - 1.0) <= tol
                and np.all(np.isfinite(self.translation)))


def se3_exp(twist):
    twist = np.asarray(twist, dtype=float).reshape(6)
    phi, rho = twist[:3], twist[3:]
    return Pose(so3_exp(phi), left_jacobian(phi) @ rho)


def se3_log(pose):
    phi = so3_log(pose.rotation)
    rho = left_jacobian_inverse(phi) @ pose.translation
    return np.concatenate([phi, rho])


def pose_error(a, b):
    """Error [traslación, rotación] de b visto desde a (6,)."""
    delta = a.inverse() @ b
    return np.concatenate([delta.translation, so3_log(delta.rotation)])
