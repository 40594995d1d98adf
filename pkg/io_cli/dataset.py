"""
Formato de dataset en disco.

  scans.bin  registros little-endian: f8 inicio, u4 cantidad, cantidad × 4 f8 (t_offset, x, y, z)
  imu.txt    una muestra por línea: t gx gy gz ax ay az ('#' comenta)
  groundtruth.txt  trayectoria TUM (solo en datasets simulados)
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from imu.types import ImuBuffer, ImuSample
from nvlio.exceptions import DatasetFormatError, TimeOrderError

from .files import atomic_write
from .trajectory import write_trajectory

logger = logging.getLogger(__name__)

SCANS_FILE = 'scans.bin'
IMU_FILE = 'imu.txt'
GROUNDTRUTH_FILE = 'groundtruth.txt'

HEADER = np.dtype([('start', '<f8'), ('count', '<u4')])
POINT = np.dtype('<f8')


@dataclass
class ScanRecord:
    start: float
    offsets: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=float).reshape(-1)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(self.offsets) != len(self.points):
            raise DatasetFormatError('Cada punto del barrido necesita su t_offset')

    def __len__(self):
        return len(self.points)

    @property
    def times(self):
        return self.start + self.offsets

    @property
    def end(self):
        return self.start + (float(self.offsets.max()) if len(self.offsets) else 0.0)


def encode_scans(scans):
    chunks = []
    for scan in scans:
        header = np.zeros(1, dtype=HEADER)
        header['start'] = scan.start
        header['count'] = len(scan)
        body = np.column_stack([scan.offsets, scan.points]).astype('<f8')
        chunks.append(header.tobytes() + body.tobytes())
    return b''.join(chunks)


def iter_scans(data):
    """Decodifica scans.bin registro a registro."""
    pos = 0
    index = 0
    while pos < len(data):
        index += 1
        if pos + HEADER.itemsize > len(data):
            raise DatasetFormatError(f'{SCANS_FILE}: encabezado truncado en el registro {index}')
        header = np.frombuffer(data, dtype=HEADER, count=1, offset=pos)[0]
        pos += HEADER.itemsize
        count = int(header['count'])
        size = count * 4 * POINT.itemsize
        if pos + size > len(data):
            raise DatasetFormatError(f'{SCANS_FILE}: registro {index} truncado')
        body = np.frombuffer(data, dtype=POINT, count=count * 4, offset=pos).reshape(count, 4)
        pos += size
        offsets = body[:, 0].copy()
        if np.any(np.diff(offsets) < 0):
            raise TimeOrderError(f'{SCANS_FILE}: t_offset decreciente en el registro {index}')
        yield ScanRecord(float(header['start']), offsets, body[:, 1:].copy())


def format_imu_line(sample):
    values = [sample.t, *sample.gyro, *sample.accel]
    return ' '.join(repr(float(v)) for v in values)


def parse_imu(lines):
    samples = []
    last_t = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 7:
            raise DatasetFormatError(f'{IMU_FILE}: se esperaban 7 campos y hay {len(fields)}', lineno)
        try:
            values = [float(f) for f in fields]
        except ValueError:
            raise DatasetFormatError(f'{IMU_FILE}: valor no numérico', lineno) from None
        if not np.all(np.isfinite(values)):
            raise DatasetFormatError(f'{IMU_FILE}: valor no finito', lineno)
        if last_t is not None and values[0] <= last_t:
            raise TimeOrderError(f'{IMU_FILE}: marca de tiempo no creciente {values[0]!r}', lineno)
        last_t = values[0]
        samples.append(ImuSample(values[0], values[1:4], values[4:7]))
    return samples


def read_dataset(path):
    """Devuelve (barridos, muestras IMU), ordenados por tiempo y con cobertura IMU validada."""
    path = Path(path)
    scans_path = path / SCANS_FILE
    imu_path = path / IMU_FILE
    for required in (scans_path, imu_path):
        if not required.is_file():
            raise DatasetFormatError(f'Falta el archivo {required}')

    scans = list(iter_scans(scans_path.read_bytes()))
    for i in range(1, len(scans)):
        if scans[i].start < scans[i - 1].start:
            raise TimeOrderError(f'{SCANS_FILE}: el registro {i + 1} empieza antes que el anterior')
    with imu_path.open(encoding='utf-8') as fh:
        samples = parse_imu(fh)

    if scans:
        buffer = ImuBuffer(samples)
        t0 = scans[0].start
        t1 = max(scan.end for scan in scans)
        buffer.check_coverage(t0, t1)
    logger.info('Dataset %s: %d barridos, %d muestras IMU', path, len(scans), len(samples))
    return scans, samples


def write_dataset(path, scans, samples, groundtruth=None):
    """Escribe el dataset; groundtruth es una lista de (t, Pose)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    atomic_write(path / SCANS_FILE, encode_scans(scans))
    text = ''.join(format_imu_line(s) + '\n' for s in samples)
    atomic_write(path / IMU_FILE, text.encode('utf-8'))
    if groundtruth is not None:
        write_trajectory(groundtruth, path / GROUNDTRUTH_FILE)
    return path
