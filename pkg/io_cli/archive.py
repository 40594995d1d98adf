"""keyframes.npz: poses y nubes de los keyframes de una corrida, para export_map."""
import io

import numpy as np

from geom.se3 import Pose
from nvlio.exceptions import DatasetFormatError
from range_image.cloud import NormalCloud
from registration.types import Keyframe

from .files import atomic_write

KEYFRAMES_FILE = 'keyframes.npz'
ARRAYS = ('ids', 'timestamps', 'poses', 'counts', 'points', 'normals')


def save_keyframes(keyframes, path):
    keyframes = list(keyframes)
    buffer = io.BytesIO()
    np.savez_compressed(
        buffer,
        ids=np.array([kf.id for kf in keyframes], dtype=np.int64),
        timestamps=np.array([kf.timestamp for kf in keyframes], dtype=float),
        poses=np.array([kf.pose.matrix() for kf in keyframes], dtype=float).reshape(-1, 4, 4),
        counts=np.array([len(kf.cloud) for kf in keyframes], dtype=np.int64),
        points=np.concatenate([kf.cloud.points for kf in keyframes] or [np.empty((0, 3))]),
        normals=np.concatenate([kf.cloud.normals for kf in keyframes] or [np.empty((0, 3))]),
    )
    return atomic_write(path, buffer.getvalue())


def load_keyframes(path):
    try:
        with np.load(path) as data:
            arrays = {name: data[name] for name in ARRAYS}
    except FileNotFoundError:
        raise DatasetFormatError(f'Falta el archivo {path}') from None
    except (KeyError, ValueError, OSError) as exc:
        raise DatasetFormatError(f'{path}: archivo de keyframes inválido ({exc})') from None

    bounds = np.concatenate([[0], np.cumsum(arrays['counts'])])
    if bounds[-1] != len(arrays['points']):
        raise DatasetFormatError(f'{path}: los conteos no coinciden con los puntos')
    keyframes = []
    for i, kf_id in enumerate(arrays['ids']):
        sl = slice(bounds[i], bounds[i + 1])
        cloud = NormalCloud(arrays['points'][sl], arrays['normals'][sl], 'body')
        keyframes.append(Keyframe(int(kf_id), Pose.from_matrix(arrays['poses'][i]), cloud,
                                  float(arrays['timestamps'][i])))
    return keyframes
