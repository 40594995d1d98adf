"""LiDAR giratorio simulado sobre escenas analíticas."""
from dataclasses import dataclass

import numpy as np

from nvlio.exceptions import PreconditionError
from range_image.params import ProjectionParams


@dataclass(frozen=True)
class LidarModel:
    channels: int = 32
    columns: int = 512
    fov_max: float = np.radians(45.0)
    fov_min: float = np.radians(-45.0)
    spin_rate: float = 10.0
    range_noise: float = 0.0
    max_range: float = 30.0
    min_range: float = 0.3

    def __post_init__(self):
        if self.channels < 2 or self.columns < 8:
            raise PreconditionError('El LiDAR necesita al menos 2 canales y 8 columnas')
        if not self.fov_max > self.fov_min:
            raise PreconditionError('fov_max debe ser mayor que fov_min')
        if self.spin_rate <= 0 or self.max_range <= 0 or self.range_noise < 0:
            raise PreconditionError('Parámetros del LiDAR fuera de rango')

    def projection_params(self):
        return ProjectionParams(self.fov_max, self.fov_min, self.channels, self.columns)

    @property
    def sweep_time(self):
        return 1.0 / self.spin_rate

    def beam_directions(self):
        """Direcciones unitarias (channels, columns, 3) en los centros de celda."""
        params = self.projection_params()
        elevation = params.fov_max - (np.arange(self.channels) + 0.5) * params.ver_res
        azimuth = np.pi - (np.arange(self.columns) + 0.5) * params.hor_res
        el = elevation[:, None]
        az = azimuth[None, :]
        return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az),
                         np.sin(el) * np.ones_like(az)], axis=-1)

    def column_offsets(self):
        """Desfase temporal de cada columna dentro de la vuelta."""
        return np.arange(self.columns) * self.sweep_time / self.columns


@dataclass
class SimScan:
    """Puntos en el marco del sensor con su verdad de terreno."""
    points: np.ndarray
    times: np.ndarray
    normals: np.ndarray
    surface_ids: np.ndarray
    rooms: np.ndarray
    start: float

    def __len__(self):
        return len(self.points)

    @property
    def offsets(self):
        return self.times - self.start


def _noisy_ranges(dist, model, rng):
    if model.range_noise > 0:
        if rng is None:
            raise PreconditionError('Con ruido de rango hace falta un generador aleatorio')
        return dist + rng.normal(0.0, model.range_noise, dist.shape)
    return dist


def _assemble(scene, dirs_local, dist, hit, times, model, rng, rotations, t0):
    ok = np.isfinite(dist)
    dirs_local, dist, hit, times = dirs_local[ok], dist[ok], hit[ok], times[ok]
    rotations = rotations[ok] if rotations.ndim == 3 else rotations

    ranges = _noisy_ranges(dist, model, rng)
    points = dirs_local * ranges[:, None]
    normals_world = scene.normals()[hit]
    if rotations.ndim == 3:
        normals = np.einsum('nji,nj->ni', rotations, normals_world)
    else:
        normals = normals_world @ rotations
    # la normal de verdad mira al sensor
    flip = np.einsum('ni,ni->n', normals, dirs_local) > 0
    normals[flip] *= -1.0
    return SimScan(points, times, normals, hit, scene.rooms[hit], t0)


def raycast_scan(scene, pose, model, t0=0.0, rng=None):
    """Un rayo por (canal, columna) desde una pose fija; orden canal-mayor."""
    dirs_local = model.beam_directions().reshape(-1, 3)
    times = t0 + np.tile(model.column_offsets(), model.channels)
    dirs_world = dirs_local @ pose.rotation.T
    dist, hit = scene.raycast(pose.translation, dirs_world, model.max_range, model.min_range)
    return _assemble(scene, dirs_local, dist, hit, times, model, rng, pose.rotation, t0)


def raycast_sweep(scene, trajectory, model, t0, rng=None):
    """Barrido con el sensor en movimiento: la pose se evalúa en el instante de cada columna."""
    dirs = model.beam_directions()
    col_times = t0 + model.column_offsets()
    rotations, positions = trajectory.poses(col_times)

    dirs_world = np.einsum('cij,rcj->rci', rotations, dirs)
    origins = np.broadcast_to(positions[None, :, :], dirs.shape)
    dist, hit = scene.raycast(origins.reshape(-1, 3), dirs_world.reshape(-1, 3),
                              model.max_range, model.min_range)
    times = np.tile(col_times, model.channels)
    per_ray_rot = np.broadcast_to(rotations[None], (model.channels,) + rotations.shape)
    return _assemble(scene, dirs.reshape(-1, 3), dist, hit, times, model, rng,
                     per_ray_rot.reshape(-1, 3, 3), t0)
