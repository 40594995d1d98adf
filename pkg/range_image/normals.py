"""
Extracción de normales sobre la imagen de profundidad.

Por píxel se promedian las derivadas de rango de los pares adyacentes dentro de la
ventana, se arma la normal en coordenadas esféricas y se lleva a cartesianas con
la tabla T(θ, ψ). Luego se orienta hacia el sensor y se valida por consenso de
vecinos (distancia punto-plano).

El promedio pondera cada par según su posición en la fila (o columna) con los
pesos que reproducen la pendiente de mínimos cuadrados, así el ruido de rango se
reparte sobre toda la ventana y no solo sobre los extremos. Un par entra sólo si
se llega a él desde el píxel central sin cruzar un salto de rango ni una arista
(pliegue entre dos superficies sin salto de rango).
"""
import logging
import math

import numpy as np

from nvlio.exceptions import PreconditionError

from .cloud import NormalCloud
from .projection import pixel_angles, spherical_to_cartesian_table

logger = logging.getLogger(__name__)

WINDOWS = (3, 5)
DEFAULT_RANGE_JUMP = 0.3
DEFAULT_CONSENSUS_DISTANCE = 0.05
DEFAULT_CREASE_DISTANCE = 0.03


def shift_pixels(arr, dv, du):
    """out[v, u] = arr[v + dv, (u + du) mod w]; filas fuera de la imagen quedan en cero."""
    h = arr.shape[0]
    rolled = np.roll(arr, -du, axis=1)
    out = np.zeros_like(arr)
    if abs(dv) >= h:
        return out
    if dv >= 0:
        out[:h - dv] = rolled[dv:]
    else:
        out[-dv:] = rolled[:h + dv]
    return out


def pair_weights(window):
    """Pesos por posición de los pares adyacentes de una fila de `window` píxeles.

    El promedio ponderado de las diferencias con estos pesos es la pendiente de
    mínimos cuadrados de la fila completa.
    """
    return [(i + 1) * (window - 1 - i) for i in range(window - 1)]


def _crease_pixels(img, dv, du, crease_distance):
    """Píxeles cuyo punto se aparta más de `crease_distance` de la cuerda entre sus dos vecinos."""
    valid = img.valid & shift_pixels(img.valid, -dv, -du) & shift_pixels(img.valid, dv, du)
    prev = shift_pixels(img.points, -dv, -du)
    chord = shift_pixels(img.points, dv, du) - prev
    length = np.linalg.norm(chord, axis=-1)
    offset = np.linalg.norm(np.cross(img.points - prev, chord), axis=-1)
    deviation = np.where(length > 0.0, offset / np.where(length > 0.0, length, 1.0), 0.0)
    return valid & (deviation > crease_distance)


def _pair_gradients(img, range_jump, crease_distance):
    """Derivadas normalizadas por longitud de arco de los pares horizontales y verticales.

    Un par se descarta si le falta un extremo, si el rango salta más de `range_jump`
    o si ambos extremos quedan sobre una arista.
    """
    params = img.params
    r, valid = img.ranges, img.valid
    elevation, _ = pixel_angles(params, center=True)

    r_next = np.roll(r, -1, axis=1)
    ok_h = valid & np.roll(valid, -1, axis=1) & (np.abs(r_next - r) <= range_jump)
    crease_h = _crease_pixels(img, 0, 1, crease_distance)
    ok_h &= ~(crease_h & np.roll(crease_h, -1, axis=1))
    arc_h = 0.5 * (r + r_next) * np.cos(elevation)[:, None] * params.hor_res
    grad_h = np.where(ok_h, (r_next - r) / np.where(ok_h, arc_h, 1.0), 0.0)

    ok_v = np.zeros_like(valid)
    grad_v = np.zeros_like(r)
    ok_v[:-1] = valid[:-1] & valid[1:] & (np.abs(r[1:] - r[:-1]) <= range_jump)
    crease_v = _crease_pixels(img, 1, 0, crease_distance)
    ok_v[:-1] &= ~(crease_v[:-1] & crease_v[1:])
    arc_v = 0.5 * (r[:-1] + r[1:]) * params.ver_res
    grad_v[:-1] = np.where(ok_v[:-1], (r[1:] - r[:-1]) / np.where(ok_v[:-1], arc_v, 1.0), 0.0)
    return grad_h, ok_h, grad_v, ok_v


def _outward(k):
    """Desplazamientos 1..k y -1..-k, de adentro hacia afuera."""
    return list(range(1, k + 1)) + list(range(-1, -k - 1, -1))


def _inner(d):
    return d - 1 if d > 0 else d + 1


def _horizontal_pair(ok_h, dv, du):
    """Validez del par que une la columna du con la anterior, más cerca del centro."""
    return shift_pixels(ok_h, dv, du - 1 if du > 0 else du)


def _vertical_pair(ok_v, dv, du):
    return shift_pixels(ok_v, dv - 1 if dv > 0 else dv, du)


def _reachable(ok_h, ok_v, k, columns_first):
    """{(dv, du): máscara} de los vecinos a los que se llega desde el centro por pares válidos.

    Con `columns_first` el camino recorre la columna central y luego la fila;
    si no, primero la fila central y luego la columna.
    """
    reach = {(0, 0): np.ones(ok_h.shape, dtype=bool)}
    if columns_first:
        for dv in _outward(k):
            reach[dv, 0] = reach[_inner(dv), 0] & _vertical_pair(ok_v, dv, 0)
        for dv in range(-k, k + 1):
            for du in _outward(k):
                reach[dv, du] = reach[dv, _inner(du)] & _horizontal_pair(ok_h, dv, du)
    else:
        for du in _outward(k):
            reach[0, du] = reach[0, _inner(du)] & _horizontal_pair(ok_h, 0, du)
        for du in range(-k, k + 1):
            for dv in _outward(k):
                reach[dv, du] = reach[_inner(dv), du] & _vertical_pair(ok_v, dv, du)
    return reach


def compute_normal_map(img, window=3, range_jump=DEFAULT_RANGE_JUMP,
                       consensus_distance=DEFAULT_CONSENSUS_DISTANCE,
                       crease_distance=DEFAULT_CREASE_DISTANCE):
    """Devuelve (normales (h, w, 3), máscara de validez (h, w))."""
    if window not in WINDOWS:
        raise PreconditionError(f'Ventana {window} no soportada (use 3 o 5)')
    k = window // 2
    weights = pair_weights(window)
    grad_h, ok_h, grad_v, ok_v = _pair_gradients(img, range_jump, crease_distance)
    along_rows = _reachable(ok_h, ok_v, k, columns_first=True)
    along_columns = _reachable(ok_h, ok_v, k, columns_first=False)

    sum_h = np.zeros_like(grad_h)
    weight_h = np.zeros_like(grad_h)
    cnt_h = np.zeros(grad_h.shape, dtype=np.int64)
    sum_v = np.zeros_like(grad_v)
    weight_v = np.zeros_like(grad_v)
    cnt_v = np.zeros(grad_v.shape, dtype=np.int64)
    for dv in range(-k, k + 1):
        # pares horizontales con ambos extremos dentro de la ventana
        for du in range(-k, k):
            use = along_rows[dv, du] & along_rows[dv, du + 1]
            w = np.where(use, float(weights[du + k]), 0.0)
            sum_h += w * shift_pixels(grad_h, dv, du)
            weight_h += w
            cnt_h += use
    for dv in range(-k, k):
        for du in range(-k, k + 1):
            use = along_columns[dv, du] & along_columns[dv + 1, du]
            w = np.where(use, float(weights[dv + k]), 0.0)
            sum_v += w * shift_pixels(grad_v, dv, du)
            weight_v += w
            cnt_v += use

    mask = img.valid & (cnt_h >= 2) & (cnt_v >= 2)
    d_u = np.where(mask, sum_h / np.maximum(weight_h, 1.0), 0.0)
    d_v = np.where(mask, sum_v / np.maximum(weight_v, 1.0), 0.0)

    n_s = np.stack([d_u, -d_v, np.ones_like(d_u)], axis=-1)
    n_s /= np.linalg.norm(n_s, axis=-1, keepdims=True)
    table = spherical_to_cartesian_table(img.params, center=True)
    normals = np.einsum('hwij,hwj->hwi', table, n_s)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)

    # orientadas hacia el sensor
    facing = np.einsum('hwi,hwi->hw', normals, img.points)
    normals[facing > 0] *= -1.0

    support = np.zeros(img.ranges.shape, dtype=np.int64)
    for dv in range(-k, k + 1):
        for du in range(-k, k + 1):
            if dv == 0 and du == 0:
                continue
            nb_valid = shift_pixels(img.valid, dv, du)
            nb_points = shift_pixels(img.points, dv, du)
            dist = np.abs(np.einsum('hwi,hwi->hw', normals, nb_points - img.points))
            support += nb_valid & (dist <= consensus_distance)
    mask &= support >= math.ceil(window * window / 3)

    normals[~mask] = 0.0
    return normals, mask


def compute_normals(img, window=3, range_jump=DEFAULT_RANGE_JUMP,
                    consensus_distance=DEFAULT_CONSENSUS_DISTANCE, labels=None,
                    crease_distance=DEFAULT_CREASE_DISTANCE):
    """Nube de normales válidas en orden de filas; `labels` se indexa por punto de origen."""
    normals, mask = compute_normal_map(img, window, range_jump, consensus_distance, crease_distance)
    point_labels = None
    if labels is not None:
        point_labels = np.asarray(labels)[img.index[mask]]
    logger.debug('compute_normals: %d de %d píxeles válidos', int(mask.sum()), img.valid_count)
    return NormalCloud(img.points[mask], normals[mask], 'sensor', point_labels)
