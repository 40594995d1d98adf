"""
Alineación rígida de trayectorias (Umeyama sin escala) y ATE RMSE.

model = R * data + t, con R corregida para que det(R) = +1.
"""
import numpy as np

from nvlio.exceptions import DegenerateGeometryError, PreconditionError

from .se3 import Pose

RANK_TOLERANCE = 1e-10


def _positions(trajectory):
    if isinstance(trajectory, np.ndarray):
        return np.asarray(trajectory, dtype=float).reshape(-1, 3)
    return np.array([pose.translation for pose in trajectory], dtype=float).reshape(-1, 3)


def umeyama_align(estimate, reference):
    """Pose T que minimiza Σ‖T·t_est − t_ref‖² sobre las traslaciones."""
    data = _positions(estimate)
    model = _positions(reference)
    if len(data) != len(model):
        raise PreconditionError(
            f'Las trayectorias tienen distinto largo ({len(data)} vs {len(model)})')
    if len(data) < 3:
        raise PreconditionError('Se necesitan al menos 3 poses para alinear')

    mu_m = model.mean(axis=0)
    mu_d = data.mean(axis=0)
    model_zc = model - mu_m
    data_zc = data - mu_d

    C = model_zc.T @ data_zc / len(data)
    U, D, Vt = np.linalg.svd(C)
    if D[0] <= 0.0 or D[1] <= RANK_TOLERANCE * D[0]:
        raise DegenerateGeometryError('Traslaciones colineales: la alineación no está determinada')

    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    t = mu_m - R @ mu_d
    return Pose(R, t)


def alignment_residuals(estimate, reference, alignment=None):
    alignment = alignment or umeyama_align(estimate, reference)
    return alignment.act(_positions(estimate)) - _positions(reference)


def ate_rmse(estimate, reference):
    residuals = alignment_residuals(estimate, reference)
    return float(np.sqrt(np.mean(np.sum(residuals ** 2, axis=1))))
