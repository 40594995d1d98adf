"""Mapa de keyframes a PLY binario little-endian (x y z nx ny nz en float32)."""
import logging

import numpy as np

from geom.voxel import voxel_downsample
from nvlio.exceptions import DatasetFormatError, NvlioError, PreconditionError
from range_image.cloud import NormalCloud

from .files import atomic_write

logger = logging.getLogger(__name__)

FIELDS = ('x', 'y', 'z', 'nx', 'ny', 'nz')
VERTEX = np.dtype([(name, '<f4') for name in FIELDS])


def ply_bytes(cloud):
    header = '\n'.join([
        'ply',
        'format binary_little_endian 1.0',
        f'element vertex {len(cloud)}',
        *[f'property float {name}' for name in FIELDS],
        'end_header',
    ]) + '\n'
    body = np.zeros(len(cloud), dtype=VERTEX)
    for i, name in enumerate(FIELDS[:3]):
        body[name] = cloud.points[:, i]
    for i, name in enumerate(FIELDS[3:]):
        body[name] = cloud.normals[:, i]
    return header.encode('ascii') + body.tobytes()


def world_map(keyframes, voxel):
    keyframes = list(keyframes)
    if not keyframes:
        raise PreconditionError('Exportar el mapa requiere al menos un keyframe')
    clouds = [kf.cloud.transformed(kf.pose, 'world') for kf in keyframes]
    merged = NormalCloud.concatenate(clouds, 'world')
    if voxel and voxel > 0:
        merged = voxel_downsample(merged, voxel)
    return merged


def export_map(keyframes, voxel, path):
    """Une las nubes en el marco mundo, las filtra por vóxel y escribe el PLY."""
    cloud = world_map(keyframes, voxel)
    try:
        atomic_write(path, ply_bytes(cloud))
    except OSError as exc:
        raise NvlioError(f'No se pudo escribir el mapa en {path}: {exc}') from exc
    logger.info('Mapa exportado: %d puntos en %s', len(cloud), path)
    return cloud


def read_ply(path):
    """Lector mínimo del formato que escribe export_map."""
    with open(path, 'rb') as fh:
        data = fh.read()
    end = data.find(b'end_header\n')
    if not data.startswith(b'ply\n') or end < 0:
        raise DatasetFormatError(f'{path}: encabezado PLY inválido')
    header = data[:end].decode('ascii').splitlines()
    if 'format binary_little_endian 1.0' not in header:
        raise DatasetFormatError(f'{path}: solo se admite binary_little_endian')
    count = next((int(line.split()[2]) for line in header if line.startswith('element vertex')), None)
    if count is None:
        raise DatasetFormatError(f'{path}: falta element vertex')
    body = np.frombuffer(data, dtype=VERTEX, count=count, offset=end + len(b'end_header\n'))
    points = np.column_stack([body[name] for name in FIELDS[:3]]).astype(float)
    normals = np.column_stack([body[name] for name in FIELDS[3:]]).astype(float)
    return NormalCloud(points, normals, 'world')
