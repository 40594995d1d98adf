from dataclasses import dataclass

import numpy as np

from nvlio.exceptions import PreconditionError


@dataclass(frozen=True)
class ProjectionParams:
    """Geometría de la imagen de profundidad (ángulos en radianes)."""
    fov_max: float
    fov_min: float
    height: int
    width: int

    def __post_init__(self):
        if not self.fov_max > self.fov_min:
            raise PreconditionError('fov_max debe ser mayor que fov_min')
        if self.height < 2 or self.width < 8:
            raise PreconditionError('La imagen debe tener al menos 2 filas y 8 columnas')

    @classmethod
    def from_degrees(cls, fov_max_deg, fov_min_deg, height, width):
        return cls(np.radians(fov_max_deg), np.radians(fov_min_deg), int(height), int(width))

    @property
    def ver_res(self):
        return (self.fov_max - self.fov_min) / self.height

    @property
    def hor_res(self):
        return 2.0 * np.pi / self.width

    @property
    def shape(self):
        return (self.height, self.width)
