"""
Cierre de lazo por punto de vista.

Por cada keyframe nuevo: candidato más cercano, reproyección del objetivo,
filtro de visibilidad, emparejamiento por píxel, registro sobre los pares y
verificación de degeneración. Solo un registro convergido y no degenerado
produce factor.
"""
import logging
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from degeneracy.analysis import (
    DEFAULT_LAMBDA_THRESHOLD, DEFAULT_ROTATION_SIGMA, DEFAULT_SCALE,
    analyze, measurement_covariance, normal_covariance,
)
from geom.se3 import Pose
from geom.voxel import voxel_downsample
from nvlio.exceptions import InsufficientOverlapError, NumericalError
from range_image.params import ProjectionParams
from registration.gauss_newton import register
from registration.types import RegistrationParams

from .candidates import find_candidate
from .projection import match_projections, project_target, visibility_filter

logger = logging.getLogger(__name__)

NO_CANDIDATE = 'no-candidate'
INSUFFICIENT_MATCHES = 'insufficient-matches'
DIVERGED = 'diverged'
DEGENERATE = 'degenerate'
ACCEPTED = 'accepted'


@dataclass(frozen=True)
class LoopParams:
    projection: ProjectionParams = field(
        default_factory=lambda: ProjectionParams.from_degrees(45.0, -45.0, 32, 512))
    registration: RegistrationParams = field(default_factory=RegistrationParams)
    radius: float = 10.0
    exclusion: int = 10
    neighborhood: int = 3
    radial_threshold: float = 0.3
    angle_threshold: float = np.radians(30.0)
    min_matches: int = 20
    lambda_threshold: float = DEFAULT_LAMBDA_THRESHOLD
    covariance_scale: float = DEFAULT_SCALE
    rotation_sigma: float = DEFAULT_ROTATION_SIGMA

    @classmethod
    def from_config(cls, config):
        return cls(
            projection=ProjectionParams.from_degrees(config.fov_max_deg, config.fov_min_deg,
                                                     config.image_height, config.image_width),
            registration=RegistrationParams.from_config(config),
            radius=config.loop_radius,
            exclusion=config.loop_exclusion,
            neighborhood=config.loop_neighborhood,
            radial_threshold=config.loop_radial_threshold,
            angle_threshold=np.radians(config.loop_angle_threshold_deg),
            min_matches=config.loop_min_matches,
            lambda_threshold=config.lambda_threshold,
            covariance_scale=config.covariance_scale,
            rotation_sigma=config.rotation_sigma,
        )


@dataclass(frozen=True)
class LoopFactor:
    """`relative` es la pose del keyframe actual vista desde el objetivo."""
    target: int
    current: int
    relative: Pose
    covariance: np.ndarray
    matches: int = 0


@dataclass(frozen=True)
class LoopOutcome:
    factor: LoopFactor = None
    reason: str = NO_CANDIDATE
    current: int = -1
    target: int = -1
    matches: int = 0

    @property
    def accepted(self):
        return self.factor is not None


def close_loop(current, candidate, keyframes, params=None):
    """
    `current` es el Keyframe nuevo, `keyframes` admite indexado por id.

    Devuelve siempre un LoopOutcome; el motivo explica el rechazo.
    """
    params = params or LoopParams()
    if candidate is None:
        return LoopOutcome(reason=NO_CANDIDATE, current=current.id)
    target = keyframes[candidate.target]

    def rejected(reason, matches=0):
        logger.info('lazo %d→%d rechazado: %s (pares=%d)', current.id, target.id, reason, matches)
        return LoopOutcome(None, reason, current.id, target.id, matches)

    reg = params.registration
    query = voxel_downsample(current.cloud, reg.voxel_size, reg.coherence)
    current_view = project_target(query, Pose.identity(), params.projection)
    target_view = visibility_filter(
        project_target(target.cloud, candidate.initial, params.projection), params.neighborhood)
    pairs = match_projections(current_view, target_view, params.radial_threshold,
                              params.angle_threshold)
    if len(pairs) < params.min_matches:
        return rejected(INSUFFICIENT_MATCHES, len(pairs))

    matched_query = query.select(np.unique(pairs.query_index))
    matched_target = target.cloud.select(np.unique(pairs.target_index))
    try:
        result = register(matched_query, matched_target, candidate.initial, reg, downsample=False)
    except InsufficientOverlapError:
        return rejected(INSUFFICIENT_MATCHES, len(pairs))
    except NumericalError:
        return rejected(DIVERGED, len(pairs))
    if not result.converged:
        return rejected(DIVERGED, len(pairs))

    report = analyze(normal_covariance(result.correspondences), params.lambda_threshold)
    if report.degenerate:
        return rejected(DEGENERATE, len(pairs))

    covariance = measurement_covariance(report, params.covariance_scale, params.rotation_sigma)
    factor = LoopFactor(target.id, current.id, result.pose.inverse(), covariance.Q,
                        len(result.correspondences))
    logger.info('lazo %d→%d aceptado: pares=%d residuo=%.4f', current.id, target.id,
                factor.matches, result.mean_residual)
    return LoopOutcome(factor, ACCEPTED, current.id, target.id, len(pairs))


def detect_loop(keyframes, current_id, params=None):
    """Busca candidato e intenta cerrar el lazo sobre una instantánea de keyframes."""
    params = params or LoopParams()
    candidate = find_candidate([kf.pose for kf in keyframes], current_id,
                               params.exclusion, params.radius)
    return close_loop(keyframes[current_id], candidate, keyframes, params)


class LoopCloser:
    """
    Ejecuta detect_loop en línea (modo determinista) o en un hilo aparte.

    Cada envío toma una tupla inmutable de keyframes; los resultados se drenan
    en el orden de envío.
    """

    def __init__(self, params=None, deterministic=False):
        self.params = params or LoopParams()
        self.deterministic = deterministic
        self._executor = None if deterministic else ThreadPoolExecutor(
            max_workers=1, thread_name_prefix='loop-closure')
        self._pending = []

    def submit(self, keyframes, current_id):
        snapshot = tuple(keyframes)
        if self._executor is None:
            future = Future()
            future.set_result(detect_loop(snapshot, current_id, self.params))
            self._pending.append(future)
        else:
            self._pending.append(self._executor.submit(detect_loop, snapshot, current_id,
                                                       self.params))

    def drain(self, wait=False):
        """Resultados listos, respetando el orden de envío."""
        outcomes = []
        while self._pending and (wait or self._pending[0].done()):
            outcomes.append(self._pending.pop(0).result())
        return outcomes

    @property
    def pending(self):
        return len(self._pending)

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

