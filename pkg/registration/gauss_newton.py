"""
Registro punto-a-plano de una nube de consulta contra el submapa.

La pose estimada lleva puntos del submapa al marco de la consulta:
R·p_t + t ≈ p_q. Se minimiza Σ (n_q·(R·p_t + t − p_q))² con Gauss-Newton y
perturbación a izquierda, re-asociando pares en cada iteración.
"""
import logging

import numpy as np

from geom.kdtree import KdTree
from geom.se3 import Pose, se3_exp
from geom.voxel import voxel_downsample
from nvlio.exceptions import InsufficientOverlapError, NumericalError, PreconditionError

from .correspondence import find_correspondences
from .types import CorrespondenceSet, RegistrationParams, RegistrationResult

logger = logging.getLogger(__name__)

DAMPING = 1e-6
MAX_HALVINGS = 12


def _associate(query, submap, pose, params, tree):
    # buscar en el marco del submapa equivale a llevar el submapa a la consulta
    moved = query.transformed(pose.inverse())
    pairs = find_correspondences(moved, submap, params.distance_threshold,
                                 params.angle_threshold, tree, params.max_candidates)
    return CorrespondenceSet.from_indices(query, submap, pairs.query_index, pairs.target_index)


def _check_overlap(pairs, params):
    if len(pairs) < params.min_correspondences:
        raise InsufficientOverlapError(len(pairs), params.min_correspondences)


def _normal_equations(pairs, pose):
    residuals = pairs.residuals(pose)
    moved = pose.act(pairs.target_points)
    J = np.hstack([np.cross(moved, pairs.normals), pairs.normals])
    H = J.T @ J + DAMPING * np.eye(6)
    g = J.T @ residuals
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(g))):
        raise NumericalError('Ecuaciones normales no finitas en el registro')
    return H, g, residuals


def register(query, submap, init=None, params=None, downsample=True, tree=None):
    """
    Devuelve un RegistrationResult con la pose submapa → consulta.

    Con `downsample` la consulta se filtra al mismo vóxel que el submapa; el
    submapa se asume ya filtrado. `tree` permite reutilizar el KdTree del submapa.
    Si ningún paso de la búsqueda lineal baja el costo, el resultado sale con
    `stalled` y sin `converged`.
    """
    params = params or RegistrationParams()
    init = init or Pose.identity()
    if len(query) == 0 or len(submap) == 0:
        raise PreconditionError('El registro necesita nubes no vacías')
    if not init.is_valid(1e-6):
        raise PreconditionError('Pose inicial inválida')
    if downsample:
        query = voxel_downsample(query, params.voxel_size, params.coherence)
        if len(query) == 0:
            raise InsufficientOverlapError(0, params.min_correspondences)
    tree = tree or KdTree(submap.points)

    pose = init
    initial_residual = None
    converged = stalled = False
    iteration = 0
    for iteration in range(1, params.max_iterations + 1):
        pairs = _associate(query, submap, pose, params, tree)
        _check_overlap(pairs, params)
        H, g, residuals = _normal_equations(pairs, pose)
        cost = float(residuals @ residuals)
        if initial_residual is None:
            initial_residual = float(np.mean(np.abs(residuals)))

        step = -np.linalg.solve(H, g)
        if not np.all(np.isfinite(step)):
            raise NumericalError('Paso de Gauss-Newton no finito')
        if float(np.linalg.norm(step)) < params.step_tolerance:
            converged = True
            break

        # medio paso hasta que el costo no suba con los pares actuales
        scale = 1.0
        for _ in range(MAX_HALVINGS):
            candidate = se3_exp(scale * step) @ pose
            trial = pairs.residuals(candidate)
            if float(trial @ trial) <= cost:
                pose = candidate
                break
            scale *= 0.5
        else:
            logger.warning('register it=%d: ningún paso reduce el costo %.6g, registro estancado',
                           iteration, cost)
            stalled = True
            break

        step_norm = float(np.linalg.norm(scale * step))
        logger.debug('register it=%d pares=%d costo=%.6g paso=%.3g',
                     iteration, len(pairs), cost, step_norm)
        if step_norm < params.step_tolerance:
            converged = True
            break

    pairs = _associate(query, submap, pose, params, tree)
    _check_overlap(pairs, params)
    mean_residual = float(np.mean(np.abs(pairs.residuals(pose))))
    return RegistrationResult(pose, pairs, iteration, converged, mean_residual, initial_residual,
                              stalled)
