from dataclasses import dataclass

import numpy as np

from geom.kdtree import KdTree
from geom.se3 import Pose
from nvlio.exceptions import PreconditionError


@dataclass(frozen=True)
class LoopCandidate:
    current: int
    target: int
    initial: Pose
    distance: float


def find_candidate(poses, current_id, exclusion=10, radius=10.0):
    """
    Keyframe más cercano al actual por posición, fuera de los `exclusion` previos.

    `poses[i]` es la pose del keyframe i. La pose inicial del candidato lleva el
    marco del objetivo al del actual. A igual distancia gana el id menor. Sin
    keyframes elegibles o fuera de `radius` devuelve None.
    """
    if not 0 <= current_id < len(poses):
        raise PreconditionError(f'Keyframe {current_id} inexistente')
    if radius <= 0 or exclusion < 0:
        raise PreconditionError('Radio y exclusión de lazo fuera de rango')
    eligible = current_id - exclusion
    if eligible <= 0:
        return None

    positions = np.array([pose.translation for pose in poses[:eligible]])
    current = poses[current_id]
    found = KdTree(positions).radius_search(current.translation, radius)
    if len(found) == 0:
        return None
    target = int(found[0])
    distance = float(np.linalg.norm(positions[target] - current.translation))
    return LoopCandidate(current_id, target, current.inverse() @ poses[target], distance)
