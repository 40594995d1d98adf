"""Filtro de grilla de vóxeles sobre nubes de normales."""
import logging

import numpy as np

from nvlio.exceptions import PreconditionError
from range_image.cloud import NormalCloud

logger = logging.getLogger(__name__)

DEFAULT_COHERENCE = 0.0


def voxel_key(points, voxel):
    """Índices enteros (ix, iy, iz) del cubo semiabierto [i·v, (i+1)·v)."""
    return np.floor(np.asarray(points, dtype=float) / voxel).astype(np.int64)


def voxel_downsample(cloud, voxel, coherence=DEFAULT_COHERENCE):
    """
    Un punto por vóxel ocupado: centroide de posiciones y media renormalizada de normales.

    Sólo se descarta el vóxel cuyas normales se cancelan (media de norma nula). Con
    `coherence` > 0 también caen los vóxeles cuya normal media tiene norma menor,
    como los de aristas y esquinas. La salida queda ordenada por clave de vóxel.
    """
    if voxel <= 0:
        raise PreconditionError('El tamaño de vóxel debe ser positivo')
    if len(cloud) == 0:
        return NormalCloud.empty(cloud.frame)

    keys = voxel_key(cloud.points, voxel)
    _, first, inverse, counts = np.unique(keys, axis=0, return_index=True,
                                          return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    n_vox = len(counts)

    centroids = np.zeros((n_vox, 3))
    mean_normals = np.zeros((n_vox, 3))
    for axis in range(3):
        centroids[:, axis] = np.bincount(inverse, weights=cloud.points[:, axis], minlength=n_vox)
        mean_normals[:, axis] = np.bincount(inverse, weights=cloud.normals[:, axis], minlength=n_vox)
    centroids /= counts[:, None]
    mean_normals /= counts[:, None]

    norms = np.linalg.norm(mean_normals, axis=1)
    keep = norms >= max(coherence, 1e-12)
    if not np.all(keep):
        logger.debug('voxel_downsample: %d vóxeles descartados por normales incoherentes',
                     int(np.count_nonzero(~keep)))

    labels = cloud.labels[first][keep] if cloud.labels is not None else None
    return NormalCloud(centroids[keep], mean_normals[keep] / norms[keep, None],
                       cloud.frame, labels)
