import numpy as np

from geom.kdtree import KdTree
from nvlio.exceptions import PreconditionError

from .types import CorrespondenceSet


def find_correspondences(query, target, distance_threshold, angle_threshold,
                         tree=None, max_candidates=10):
    """
    Un par por punto de consulta como máximo.

    Los candidatos dentro de `distance_threshold` se recorren por distancia creciente
    y se acepta el primero cuya normal difiere en no más de `angle_threshold`. Ambas
    nubes deben estar en el mismo marco; `tree` es el KdTree de target.points.
    """
    if distance_threshold <= 0 or angle_threshold <= 0:
        raise PreconditionError('Los umbrales de correspondencia deben ser positivos')
    if len(query) == 0 or len(target) == 0:
        return CorrespondenceSet.empty()
    tree = tree or KdTree(target.points)

    # cKDTree excluye la cota; se corre un ulp para aceptar distancia == umbral
    radius = np.nextafter(distance_threshold, np.inf)
    dist, idx = tree.nearest_within(query.points, radius, max_candidates)

    padded = np.vstack([target.normals, np.zeros((1, 3))])
    cosines = np.einsum('mkj,mj->mk', padded[idx], query.normals)
    ok = np.isfinite(dist) & (cosines >= np.cos(angle_threshold))

    matched = ok.any(axis=1)
    first = np.argmax(ok, axis=1)
    query_index = np.flatnonzero(matched)
    target_index = idx[query_index, first[query_index]]
    return CorrespondenceSet.from_indices(query, target, query_index, target_index)
