"""
Degeneración geométrica a partir de las normales emparejadas.

C = (1/m) Σ n nᵀ; si su menor autovalor cae bajo el umbral, la dirección del
autovector correspondiente queda sin restricción de traslación. La covarianza de
medición se arma con la inversa del espectro de C (escalada por s), de modo que
la dirección débil recibe la mayor varianza.
"""
from dataclasses import dataclass

import numpy as np

from nvlio.exceptions import PreconditionError

DEFAULT_LAMBDA_THRESHOLD = 0.02
DEFAULT_SCALE = 0.01
DEFAULT_ROTATION_SIGMA = 0.01
EIGEN_FLOOR = 1e-4


@dataclass(frozen=True)
class DegeneracyReport:
    covariance: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degenerate: bool
    threshold: float

    @property
    def axis(self):
        """Autovector del menor autovalor (dirección peor restringida)."""
        return self.eigenvectors[:, 0]

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0])


@dataclass(frozen=True)
class MeasurementCovariance:
    """Q de 6×6 con la traslación primero y la rotación después."""
    Q: np.ndarray
    scale: float

    @property
    def translation(self):
        return self.Q[:3, :3]

    @property
    def rotation(self):
        return self.Q[3:, 3:]

    def information(self):
        return np.linalg.inv(self.Q)


def normal_covariance(correspondences):
    """Acepta un CorrespondenceSet o directamente un arreglo (m, 3) de normales."""
    normals = getattr(correspondences, 'normals', correspondences)
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    if len(normals) == 0:
        raise PreconditionError('La covarianza de normales necesita al menos un par')
    return normals.T @ normals / len(normals)


def analyze(C, threshold=DEFAULT_LAMBDA_THRESHOLD):
    C = np.asarray(C, dtype=float)
    if C.shape != (3, 3) or not np.all(np.isfinite(C)):
        raise PreconditionError('Se esperaba una matriz 3×3 finita')
    if not np.allclose(C, C.T, rtol=0.0, atol=1e-12):
        raise PreconditionError('La matriz de covarianza no es simétrica')
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (C + C.T))
    return DegeneracyReport(C, eigenvalues, eigenvectors,
                            bool(eigenvalues[0] < threshold), threshold)


def measurement_covariance(report, scale=DEFAULT_SCALE, rotation_sigma=DEFAULT_ROTATION_SIGMA):
    if scale <= 0 or rotation_sigma <= 0:
        raise PreconditionError('La escala y el desvío de rotación deben ser positivos')
    V = report.eigenvectors
    inverse = 1.0 / np.maximum(report.eigenvalues, EIGEN_FLOOR)
    Q = np.zeros((6, 6))
    Q[:3, :3] = scale * (V * inverse) @ V.T
    Q[3:, 3:] = rotation_sigma ** 2 * np.eye(3)
    return MeasurementCovariance(0.5 * (Q + Q.T), scale)
