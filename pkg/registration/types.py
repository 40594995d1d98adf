from dataclasses import dataclass, field

import numpy as np

from geom.se3 import Pose
from geom.voxel import DEFAULT_COHERENCE
from range_image.cloud import NormalCloud


@dataclass(frozen=True)
class Keyframe:
    """Instantánea inmutable; una pose optimizada se publica con dataclasses.replace."""
    id: int
    pose: Pose
    cloud: NormalCloud
    timestamp: float

    def __post_init__(self):
        if len(self.cloud) == 0:
            raise ValueError(f'El keyframe {self.id} no tiene puntos')


@dataclass(frozen=True)
class Correspondence:
    query: int
    target: int
    normal: np.ndarray
    query_point: np.ndarray
    target_point: np.ndarray


@dataclass
class CorrespondenceSet:
    """
    Pares consulta-objetivo en forma de arreglos.

    `query_points`/`normals` en el marco de la consulta y `target_points` en el del
    objetivo (submapa); `target_normals` acompaña para el diagnóstico.
    """
    query_index: np.ndarray
    target_index: np.ndarray
    query_points: np.ndarray
    normals: np.ndarray
    target_points: np.ndarray
    target_normals: np.ndarray

    @classmethod
    def empty(cls):
        idx = np.empty(0, dtype=np.int64)
        pts = np.empty((0, 3))
        return cls(idx, idx.copy(), pts, pts.copy(), pts.copy(), pts.copy())

    @classmethod
    def from_indices(cls, query, target, query_index, target_index):
        return cls(query_index, target_index,
                   query.points[query_index], query.normals[query_index],
                   target.points[target_index], target.normals[target_index])

    def __len__(self):
        return len(self.query_index)

    def __iter__(self):
        for k in range(len(self)):
            yield Correspondence(int(self.query_index[k]), int(self.target_index[k]),
                                 self.normals[k], self.query_points[k], self.target_points[k])

    def residuals(self, pose):
        """n_q·(R p_t + t − p_q) por par."""
        moved = pose.act(self.target_points)
        return np.einsum('ij,ij->i', self.normals, moved - self.query_points)


@dataclass(frozen=True)
class RegistrationParams:
    distance_threshold: float = 0.5
    angle_threshold: float = np.radians(30.0)
    max_iterations: int = 30
    step_tolerance: float = 1e-6
    min_correspondences: int = 20
    max_candidates: int = 10
    voxel_size: float = 0.4
    coherence: float = DEFAULT_COHERENCE

    @classmethod
    def from_config(cls, config):
        return cls(
            distance_threshold=config.distance_threshold,
            angle_threshold=np.radians(config.angle_threshold_deg),
            max_iterations=config.max_iterations,
            step_tolerance=config.step_tolerance,
            min_correspondences=config.min_correspondences,
            max_candidates=config.max_candidates,
            voxel_size=config.voxel_size,
            coherence=config.voxel_normal_coherence,
        )


@dataclass
class RegistrationResult:
    pose: Pose
    correspondences: CorrespondenceSet = field(default_factory=CorrespondenceSet.empty)
    iterations: int = 0
    converged: bool = False
    mean_residual: float = 0.0
    initial_residual: float = 0.0
    stalled: bool = False
