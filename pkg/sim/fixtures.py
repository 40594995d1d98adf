"""Atajos de prueba: nubes de normales de un barrido simulado desde una pose fija."""
from range_image.cloud import NormalCloud
from range_image.normals import compute_normals
from range_image.projection import project

from .lidar import LidarModel, raycast_scan

MODEL = LidarModel()


def scan_cloud(scene, pose, model=MODEL, window=3, rng=None):
    """Normales estimadas sobre la imagen de profundidad, con etiqueta de superficie."""
    scan = raycast_scan(scene, pose, model, rng=rng)
    img = project(scan.points, model.projection_params())
    return compute_normals(img, window, labels=scan.surface_ids)


def truth_cloud(scene, pose, model=MODEL):
    """Normales de verdad de terreno orientadas al sensor."""
    scan = raycast_scan(scene, pose, model)
    return NormalCloud(scan.points, scan.normals, labels=scan.surface_ids)
