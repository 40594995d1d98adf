from dataclasses import dataclass

import numpy as np

from geom.se3 import rotation_angle
from nvlio.exceptions import PreconditionError


@dataclass(frozen=True)
class KeyframePolicy:
    angle: float = np.radians(30.0)
    distance: float = 1.0

    def __post_init__(self):
        if not (self.angle > 0 and self.distance > 0):
            raise PreconditionError('Los umbrales de keyframe deben ser positivos')

    @classmethod
    def from_config(cls, config):
        return cls(np.radians(config.keyframe_angle_deg), config.keyframe_distance)


def should_insert_keyframe(current, last_keyframe, policy=None):
    """Verdadero si el giro geodésico o el desplazamiento superan el umbral."""
    policy = policy or KeyframePolicy()
    delta = last_keyframe.inverse() @ current
    return (rotation_angle(delta.rotation) > policy.angle
            or float(np.linalg.norm(delta.translation)) > policy.distance)
