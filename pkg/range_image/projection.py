"""
Proyección esférica de un barrido LiDAR a imagen de profundidad.

u = (π − atan2(y, x)) / hor_res, v = (fov_max − atan2(z, √(x² + y²))) / ver_res,
truncados a enteros; u es periódico y v fuera de rango se descarta.
"""
import logging
from dataclasses import dataclass

import numpy as np

from nvlio.exceptions import PreconditionError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass
class RangeImage:
    ranges: np.ndarray
    points: np.ndarray
    valid: np.ndarray
    index: np.ndarray
    params: object
    dropped: int = 0

    @classmethod
    def empty(cls, params):
        h, w = params.shape
        return cls(np.zeros((h, w)), np.zeros((h, w, 3)), np.zeros((h, w), dtype=bool),
                   np.full((h, w), -1, dtype=np.int64), params)

    @property
    def valid_count(self):
        return int(np.count_nonzero(self.valid))

    def pixels(self):
        """(v, u) de los píxeles válidos en orden de filas."""
        return np.nonzero(self.valid)


def pixel_coordinates(points, params):
    """Coordenadas (u, v) en punto flotante, sin truncar ni recortar."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    azimuth = np.arctan2(points[:, 1], points[:, 0])
    elevation = np.arctan2(points[:, 2], np.hypot(points[:, 0], points[:, 1]))
    u = (np.pi - azimuth) * params.width / TWO_PI
    v = (params.fov_max - elevation) * params.height / (params.fov_max - params.fov_min)
    return u, v


def project(points, params):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    img = RangeImage.empty(params)
    if len(points) == 0:
        return img
    h, w = params.shape

    ranges = np.linalg.norm(points, axis=1)
    u, v = pixel_coordinates(points, params)
    u = np.floor(u).astype(np.int64) % w
    v = np.floor(v).astype(np.int64)
    inside = (v >= 0) & (v < h) & (ranges > 0.0)
    img.dropped = int(np.count_nonzero(~inside))

    src = np.flatnonzero(inside)
    flat = v[src] * w + u[src]
    # z-buffer: el rango más corto gana; a igual rango, el índice más bajo
    order = np.lexsort((src, ranges[src], flat))
    flat, src = flat[order], src[order]
    _, first = np.unique(flat, return_index=True)
    flat, src = flat[first], src[first]

    img.ranges.reshape(-1)[flat] = ranges[src]
    img.points.reshape(-1, 3)[flat] = points[src]
    img.valid.reshape(-1)[flat] = True
    img.index.reshape(-1)[flat] = src
    if img.dropped:
        logger.debug('project: %d puntos fuera del campo de visión', img.dropped)
    return img


def pixel_angles(params, center=True):
    """Elevación por fila y azimut por columna, en el centro de celda o en su borde."""
    offset = 0.5 if center else 0.0
    elevation = params.fov_max - (np.arange(params.height) + offset) * params.ver_res
    azimuth = np.pi - (np.arange(params.width) + offset) * params.hor_res
    return elevation, azimuth


def unproject(u, v, r, params):
    if r <= 0:
        raise PreconditionError('El rango debe ser positivo')
    if not (0 <= v < params.height and 0 <= u < params.width):
        raise PreconditionError(f'Píxel ({u}, {v}) fuera de la imagen')
    elevation = params.fov_max - (v + 0.5) * params.ver_res
    azimuth = np.pi - (u + 0.5) * params.hor_res
    return r * np.array([np.cos(elevation) * np.cos(azimuth),
                         np.cos(elevation) * np.sin(azimuth),
                         np.sin(elevation)])


def spherical_to_cartesian_table(params, center=False):
    """
    Matrices T(θ, ψ) por píxel, forma (h, w, 3, 3).

    θ es el ángulo polar (π/2 − elevación) y ψ el azimut. La tercera columna es la
    dirección del rayo. Con center=False se evalúa en el borde de la celda
    (θ = π/2 − (fov_max − v·ver_res), ψ = π − u·hor_res).
    """
    elevation, azimuth = pixel_angles(params, center)
    theta = (np.pi / 2 - elevation)[:, None]
    psi = azimuth[None, :]
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(psi), np.cos(psi)
    zeros = np.zeros((params.height, params.width))

    table = np.empty((params.height, params.width, 3, 3))
    table[..., 0, 0] = -sp + zeros
    table[..., 0, 1] = cp * ct
    table[..., 0, 2] = cp * st
    table[..., 1, 0] = cp + zeros
    table[..., 1, 1] = sp * ct
    table[..., 1, 2] = sp * st
    table[..., 2, 0] = zeros
    table[..., 2, 1] = -st + zeros
    table[..., 2, 2] = ct + zeros
    return table
