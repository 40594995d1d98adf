"""Trayectorias en formato TUM: 't x y z qx qy qz qw' por línea."""
import numpy as np
from scipy.spatial.transform import Rotation

from geom.se3 import Pose
from nvlio.exceptions import DatasetFormatError, NvlioError, TimeOrderError

from .files import atomic_write


def _number(value):
    text = f'{value:.9g}'
    return '0' if text == '-0' else text


def pose_quaternion(rotation):
    """Cuaternión unitario (x, y, z, w) con w ≥ 0."""
    q = np.asarray(rotation, dtype=float)
    if q.shape == (3, 3):
        q = Rotation.from_matrix(q).as_quat()
    q = q / np.linalg.norm(q)
    if q[3] < 0:
        q = -q
    return q


def format_line(t, pose, quaternion=None):
    q = pose_quaternion(pose.rotation if quaternion is None else quaternion)
    fields = [_number(v) for v in pose.translation] + [_number(v) for v in q]
    return f'{t:.9f} ' + ' '.join(fields)


def write_trajectory(poses, path):
    """poses: secuencia de (t, Pose) o (t, Pose, cuaternión)."""
    lines = []
    for item in poses:
        t, pose = item[0], item[1]
        quaternion = item[2] if len(item) > 2 else None
        lines.append(format_line(t, pose, quaternion) + '\n')
    try:
        return atomic_write(path, ''.join(lines).encode('utf-8'))
    except OSError as exc:
        raise NvlioError(f'No se pudo escribir la trayectoria en {path}: {exc}') from exc


def read_trajectory(path):
    trajectory = []
    last_t = None
    with open(path, encoding='utf-8') as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 8:
                raise DatasetFormatError(f'{path}: se esperaban 8 campos', lineno)
            try:
                values = np.array([float(f) for f in fields])
            except ValueError:
                raise DatasetFormatError(f'{path}: valor no numérico', lineno) from None
            if last_t is not None and values[0] <= last_t:
                raise TimeOrderError(f'{path}: marca de tiempo no creciente', lineno)
            last_t = values[0]
            q = values[4:8]
            if not np.linalg.norm(q) > 0:
                raise DatasetFormatError(f'{path}: cuaternión nulo', lineno)
            rotation = Rotation.from_quat(q / np.linalg.norm(q)).as_matrix()
            trajectory.append((float(values[0]), Pose(rotation, values[1:4])))
    return trajectory
