"""Búsqueda espacial sobre nubes de puntos (cKDTree de scipy, inmutable)."""
import numpy as np
from scipy.spatial import cKDTree

from nvlio.exceptions import PreconditionError


class KdTree:
    def __init__(self, points):
        self.points = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
        self._tree = cKDTree(self.points) if len(self.points) else None

    def __len__(self):
        return len(self.points)

    def radius_search(self, query, radius):
        """Índices con distancia <= radius, ordenados por distancia y luego por índice."""
        if radius <= 0:
            raise PreconditionError('El radio de búsqueda debe ser positivo')
        if self._tree is None:
            return np.empty(0, dtype=np.int64)
        query = np.asarray(query, dtype=float).reshape(3)
        idx = np.asarray(self._tree.query_ball_point(query, radius), dtype=np.int64)
        if idx.size == 0:
            return idx
        dist = np.linalg.norm(self.points[idx] - query, axis=1)
        keep = dist <= radius
        idx, dist = idx[keep], dist[keep]
        order = np.lexsort((idx, dist))
        return idx[order]

    def nearest_within(self, queries, radius, k):
        """
        Hasta k vecinos por consulta dentro de radius, en orden de distancia.

        Devuelve (dist, idx) de forma (M, k); los huecos tienen dist=inf e idx=len(self).
        """
        queries = np.asarray(queries, dtype=float).reshape(-1, 3)
        if self._tree is None or len(queries) == 0:
            return (np.full((len(queries), k), np.inf),
                    np.full((len(queries), k), len(self), dtype=np.int64))
        dist, idx = self._tree.query(queries, k=k, distance_upper_bound=radius)
        dist = np.asarray(dist, dtype=float).reshape(len(queries), k)
        idx = np.asarray(idx, dtype=np.int64).reshape(len(queries), k)
        return dist, idx


def kdtree_radius_search(tree, query, radius):
    return tree.radius_search(query, radius).tolist()
