"""Nubes de normales: puntos 3D con su normal unitaria."""
from dataclasses import dataclass, field

import numpy as np

FRAMES = ('sensor', 'keyframe', 'world', 'body')


@dataclass(frozen=True)
class NormalPoint:
    p: np.ndarray
    n: np.ndarray


@dataclass
class NormalCloud:
    points: np.ndarray
    normals: np.ndarray
    frame: str = 'sensor'
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        if len(self.points) != len(self.normals):
            raise ValueError('points y normals deben tener la misma cantidad de filas')
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if len(self.labels) != len(self.points):
                raise ValueError('labels debe tener una etiqueta por punto')

    @classmethod
    def empty(cls, frame='sensor'):
        return cls(np.empty((0, 3)), np.empty((0, 3)), frame)

    @classmethod
    def from_points(cls, normal_points, frame='sensor'):
        normal_points = list(normal_points)
        if not normal_points:
            return cls.empty(frame)
        return cls([np_.p for np_ in normal_points], [np_.n for np_ in normal_points], frame)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        for p, n in zip(self.points, self.normals):
            yield NormalPoint(p, n)

    def transformed(self, pose, frame=None):
        """Puntos por la pose completa, normales solo por su rotación."""
        return NormalCloud(pose.act(self.points), pose.rotate(self.normals),
                           frame or self.frame, self.labels)

    def select(self, mask):
        labels = self.labels[mask] if self.labels is not None else None
        return NormalCloud(self.points[mask], self.normals[mask], self.frame, labels)

    @staticmethod
    def concatenate(clouds, frame=None):
        clouds = list(clouds)
        if not clouds:
            return NormalCloud.empty(frame or 'sensor')
        labels = None
        if all(c.labels is not None for c in clouds):
            labels = np.concatenate([c.labels for c in clouds])
        return NormalCloud(np.concatenate([c.points for c in clouds]),
                           np.concatenate([c.normals for c in clouds]),
                           frame or clouds[0].frame, labels)
