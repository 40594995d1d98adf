"""
Reproyección de la nube del keyframe objetivo en la vista del keyframe actual.

Cada píxel guarda el punto de menor rango. Un punto es N⁺ si su normal mira al
rayo (n·r̂ ≤ 0) y N⁻ si no; los N⁻ detrás de un N⁺ vecino son la cara trasera de
una pared vista a través de la delantera y se descartan.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from geom.se3 import Pose
from range_image.normals import shift_pixels
from range_image.projection import project
from registration.types import CorrespondenceSet

logger = logging.getLogger(__name__)


@dataclass
class ProjectedView:
    image: object
    normals: np.ndarray
    front: np.ndarray
    cloud: object

    @property
    def valid(self):
        return self.image.valid

    @property
    def index(self):
        """Índice del punto de `cloud` (marco propio) que ocupa cada píxel; -1 si vacío."""
        return np.where(self.image.valid, self.image.index, -1)

    def labels(self):
        if self.cloud.labels is None:
            return None
        labels = np.full(self.image.valid.shape, -1, dtype=np.int64)
        labels[self.valid] = self.cloud.labels[self.image.index[self.valid]]
        return labels


def project_target(cloud, relative_pose, params):
    """`relative_pose` lleva el marco de `cloud` al del sensor actual."""
    relative_pose = relative_pose or Pose.identity()
    moved = cloud.transformed(relative_pose)
    image = project(moved.points, params)
    normals = np.zeros(image.points.shape)
    normals[image.valid] = moved.normals[image.index[image.valid]]
    facing = np.einsum('hwi,hwi->hw', normals, image.points)
    front = image.valid & (facing <= 0.0)
    return ProjectedView(image, normals, front, cloud)


def visibility_filter(view, neighborhood=3):
    """Invalida los N⁻ con algún N⁺ más cercano dentro de la ventana cuadrada."""
    k = neighborhood // 2
    ranges = view.image.ranges
    back = view.valid & ~view.front
    front_range = np.where(view.front, ranges, np.inf)

    nearest_front = np.full(ranges.shape, np.inf)
    for dv in range(-k, k + 1):
        for du in range(-k, k + 1):
            shifted = shift_pixels(front_range, dv, du)
            # las filas fuera de la imagen vuelven como 0, no como N⁺
            if dv:
                rows = slice(None, -dv) if dv > 0 else slice(-dv, None)
                mask = np.zeros(ranges.shape, dtype=bool)
                mask[rows] = True
                shifted = np.where(mask, shifted, np.inf)
            nearest_front = np.minimum(nearest_front, shifted)

    hidden = back & (ranges > nearest_front)
    if np.any(hidden):
        logger.debug('visibility_filter: %d puntos N⁻ ocultos', int(hidden.sum()))
    image = replace(view.image, valid=view.valid & ~hidden)
    return ProjectedView(image, view.normals, view.front & image.valid, view.cloud)


def match_projections(current, target, radial_threshold, angle_threshold):
    """
    Pares píxel a píxel entre dos vistas de igual geometría.

    Devuelve un CorrespondenceSet con los puntos del actual en su marco y los del
    objetivo en el marco del keyframe objetivo.
    """
    if current.image.ranges.shape != target.image.ranges.shape:
        raise ValueError('Las vistas deben tener la misma resolución')
    both = current.valid & target.valid
    radial = np.abs(current.image.ranges - target.image.ranges) <= radial_threshold
    cosines = np.einsum('hwi,hwi->hw', current.normals, target.normals)
    ok = both & radial & (cosines >= np.cos(angle_threshold))
    query_index = current.image.index[ok]
    target_index = target.image.index[ok]
    return CorrespondenceSet.from_indices(current.cloud, target.cloud, query_index, target_index)
