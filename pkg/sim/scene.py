"""
Escenas analíticas: rectángulos planos con id de superficie y etiqueta de habitación.

Las cajas se expanden a sus seis caras. El trazado de rayos es a dos caras: un
rayo corta el rectángulo desde cualquier lado y la normal reportada mira al sensor.
"""
from dataclasses import dataclass, field

import numpy as np

from nvlio.exceptions import PreconditionError

NO_ROOM = 0
RAY_EPS = 1e-9


@dataclass(frozen=True)
class Rectangle:
    center: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    half_u: float
    half_v: float
    surface_id: int = 0
    room: int = NO_ROOM

    @property
    def normal(self):
        n = np.cross(self.axis_u, self.axis_v)
        return n / np.linalg.norm(n)


def axis_rect(axis, offset, lo, hi, normal_sign, surface_id=0, room=NO_ROOM):
    """
    Rectángulo perpendicular a un eje (0=x, 1=y, 2=z) en la coordenada `offset`.

    lo/hi son las esquinas sobre los otros dos ejes en orden creciente de eje;
    la normal apunta hacia normal_sign en `axis`.
    """
    others = [a for a in range(3) if a != axis]
    center = np.zeros(3)
    center[axis] = offset
    center[others[0]] = 0.5 * (lo[0] + hi[0])
    center[others[1]] = 0.5 * (lo[1] + hi[1])
    eu = np.zeros(3)
    ev = np.zeros(3)
    eu[others[0]] = 1.0
    ev[others[1]] = 1.0
    if np.cross(eu, ev)[axis] * normal_sign < 0:
        ev = -ev
    return Rectangle(center, eu, ev, 0.5 * abs(hi[0] - lo[0]), 0.5 * abs(hi[1] - lo[1]),
                     surface_id, room)


def box_faces(lo, hi, outward=True, room=NO_ROOM):
    """Seis caras de una caja alineada a los ejes; outward=False las orienta hacia adentro."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    sign = 1.0 if outward else -1.0
    faces = []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        span_lo = (lo[others[0]], lo[others[1]])
        span_hi = (hi[others[0]], hi[others[1]])
        faces.append(axis_rect(axis, lo[axis], span_lo, span_hi, -sign, room=room))
        faces.append(axis_rect(axis, hi[axis], span_lo, span_hi, sign, room=room))
    return faces


@dataclass
class Scene:
    rectangles: list = field(default_factory=list)
    name: str = ''

    def add(self, *rects):
        for rect in rects:
            rect = Rectangle(rect.center, rect.axis_u, rect.axis_v, rect.half_u, rect.half_v,
                             len(self.rectangles), rect.room)
            self.rectangles.append(rect)
        return self

    def extend(self, rects):
        return self.add(*rects)

    @property
    def rooms(self):
        return np.array([r.room for r in self.rectangles], dtype=np.int64)

    def normals(self):
        return np.array([r.normal for r in self.rectangles])

    def raycast(self, origins, directions, max_range=np.inf, min_range=0.0):
        """
        Intersección más cercana por rayo.

        origins (N, 3) o (3,), directions (N, 3) unitarias. Devuelve (dist, surface_id)
        con dist = inf y surface_id = -1 donde no hay impacto.
        """
        directions = np.asarray(directions, dtype=float).reshape(-1, 3)
        origins = np.broadcast_to(np.asarray(origins, dtype=float), directions.shape)
        best = np.full(len(directions), np.inf)
        hit = np.full(len(directions), -1, dtype=np.int64)
        for rect in self.rectangles:
            n = rect.normal
            denom = directions @ n
            with np.errstate(divide='ignore', invalid='ignore'):
                t = ((rect.center - origins) @ n) / denom
            ok = (np.abs(denom) > 1e-12) & (t > max(min_range, RAY_EPS)) & (t <= max_range) & (t < best)
            if not np.any(ok):
                continue
            q = origins[ok] + t[ok, None] * directions[ok] - rect.center
            inside = (np.abs(q @ rect.axis_u) <= rect.half_u + 1e-12) & \
                     (np.abs(q @ rect.axis_v) <= rect.half_v + 1e-12)
            idx = np.flatnonzero(ok)[inside]
            best[idx] = t[idx]
            hit[idx] = rect.surface_id
        return best, hit


def _check_dims(*dims):
    if any(d <= 0 for d in dims):
        raise PreconditionError('Las dimensiones de la escena deben ser positivas')


def room(length=10.0, width=8.0, height=3.0):
    """Habitación centrada en el origen, caras orientadas hacia adentro."""
    _check_dims(length, width, height)
    half = np.array([length, width, height]) / 2.0
    return Scene(name='room').extend(box_faces(-half, half, outward=False, room=1))


def corridor(length=40.0, width=2.0, height=2.5, end_walls=False, start=-10.0):
    """Pasillo a lo largo de x desde `start`; sin paredes de fondo salvo end_walls."""
    _check_dims(length, width, height)
    x0, x1 = start, start + length
    hw, hh = width / 2.0, height / 2.0
    scene = Scene(name='corridor')
    scene.add(
        axis_rect(1, -hw, (x0, -hh), (x1, hh), +1),
        axis_rect(1, hw, (x0, -hh), (x1, hh), -1),
        axis_rect(2, -hh, (x0, -hw), (x1, hw), +1),
        axis_rect(2, hh, (x0, -hw), (x1, hw), -1),
    )
    if end_walls:
        scene.add(axis_rect(0, x0, (-hw, -hh), (hw, hh), +1),
                  axis_rect(0, x1, (-hw, -hh), (hw, hh), -1))
    return scene


ROOM_A = 1
ROOM_B = 2


def _wall_with_door(x, normal_sign, half_width, z0, z1, door, room_label):
    """Cara de la pared compartida; con puerta se parte alrededor del vano."""
    if door is None:
        return [axis_rect(0, x, (-half_width, z0), (half_width, z1), normal_sign, room=room_label)]
    dy, dz = door
    return [
        axis_rect(0, x, (-half_width, z0), (-dy, z1), normal_sign, room=room_label),
        axis_rect(0, x, (dy, z0), (half_width, z1), normal_sign, room=room_label),
        axis_rect(0, x, (-dy, dz), (dy, z1), normal_sign, room=room_label),
    ]


def two_room(room_length=6.0, width=8.0, height=3.0, wall=0.2, doorway=False):
    """
    Dos habitaciones separadas por una pared de espesor `wall`.

    A ocupa x ∈ [−room_length − wall/2, −wall/2] y B el simétrico. Cada cara de la
    pared compartida pertenece a su habitación; piso y techo son comunes (sin etiqueta).
    """
    _check_dims(room_length, width, height, wall)
    hw, hh = width / 2.0, height / 2.0
    a0, a1 = -room_length - wall / 2, -wall / 2
    b0, b1 = wall / 2, room_length + wall / 2
    door = (0.5, -hh + 2.0) if doorway else None
    scene = Scene(name='two_room')
    scene.add(
        axis_rect(2, -hh, (a0, -hw), (b1, hw), +1),
        axis_rect(2, hh, (a0, -hw), (b1, hw), -1),
        axis_rect(0, a0, (-hw, -hh), (hw, hh), +1, room=ROOM_A),
        axis_rect(1, -hw, (a0, -hh), (a1, hh), +1, room=ROOM_A),
        axis_rect(1, hw, (a0, -hh), (a1, hh), -1, room=ROOM_A),
        axis_rect(0, b1, (-hw, -hh), (hw, hh), -1, room=ROOM_B),
        axis_rect(1, -hw, (b0, -hh), (b1, hh), +1, room=ROOM_B),
        axis_rect(1, hw, (b0, -hh), (b1, hh), -1, room=ROOM_B),
    )
    scene.extend(_wall_with_door(a1, -1, hw, -hh, hh, door, ROOM_A))
    scene.extend(_wall_with_door(b0, +1, hw, -hh, hh, door, ROOM_B))
    if doorway:
        dy, dz = door
        scene.add(axis_rect(1, -dy, (a1, -hh), (b0, dz), +1),
                  axis_rect(1, dy, (a1, -hh), (b0, dz), -1),
                  axis_rect(2, dz, (a1, -dy), (b0, dy), -1))
    return scene


STAIR_STEPS = 10
STAIR_RUN = 0.6
STAIR_RISE = 0.3
FLOOR_HEIGHT = STAIR_STEPS * STAIR_RISE
STAIR_X0 = 1.0
STAIR_X1 = STAIR_X0 + STAIR_STEPS * STAIR_RUN
LANE_1 = (0.0, 1.9)
LANE_2 = (2.1, 4.0)


def stair_lane(flight):
    return LANE_1 if flight % 2 == 0 else LANE_2


def _flight(flight):
    """Huellas y contrahuellas del tramo `flight` (sube de 3k a 3k+3)."""
    y0, y1 = stair_lane(flight)
    base = flight * FLOOR_HEIGHT
    forward = flight % 2 == 0
    rects = []
    for i in range(STAIR_STEPS):
        if forward:
            xa, xb = STAIR_X0 + i * STAIR_RUN, STAIR_X0 + (i + 1) * STAIR_RUN
            riser_x, riser_sign = xa, -1
        else:
            xa, xb = STAIR_X1 - (i + 1) * STAIR_RUN, STAIR_X1 - i * STAIR_RUN
            riser_x, riser_sign = xb, +1
        z_top = base + (i + 1) * STAIR_RISE
        rects.append(axis_rect(2, z_top, (xa, y0), (xb, y1), +1))
        rects.append(axis_rect(0, riser_x, (y0, z_top - STAIR_RISE), (y1, z_top), riser_sign))
    return rects


def _slab(level, slab=0.2, size=(8.0, 4.0)):
    """Losa del nivel `level` con el hueco sobre el tramo que llega a ese nivel."""
    z = level * FLOOR_HEIGHT
    sx, sy = size
    oy0, oy1 = stair_lane(level - 1)
    pieces = [((0.0, 0.0), (STAIR_X0, sy)), ((STAIR_X1, 0.0), (sx, sy))]
    if oy0 > 0.0:
        pieces.append(((STAIR_X0, 0.0), (STAIR_X1, oy0)))
    if oy1 < sy:
        pieces.append(((STAIR_X0, oy1), (STAIR_X1, sy)))
    rects = []
    for lo, hi in pieces:
        rects.append(axis_rect(2, z, lo, hi, +1))
        rects.append(axis_rect(2, z - slab, lo, hi, -1))
    # bordes del hueco
    rects.append(axis_rect(0, STAIR_X0, (oy0, z - slab), (oy1, z), +1))
    rects.append(axis_rect(0, STAIR_X1, (oy0, z - slab), (oy1, z), -1))
    if oy0 > 0.0:
        rects.append(axis_rect(1, oy0, (STAIR_X0, z - slab), (STAIR_X1, z), +1))
    if oy1 < sy:
        rects.append(axis_rect(1, oy1, (STAIR_X0, z - slab), (STAIR_X1, z), -1))
    return rects


def stairwell(floors=3, size=(8.0, 4.0), slab=0.2, wall=0.2):
    """
    Escalera de tramos en U: un tramo de 10 escalones (0.6 × 0.3 m) por piso,
    alternando carriles separados por un tabique de espesor `wall`, con losas
    entre pisos.
    """
    _check_dims(floors, slab, wall, *size)
    sx, sy = size
    top = (floors + 1) * FLOOR_HEIGHT
    scene = Scene(name='stairwell')
    scene.add(
        axis_rect(2, 0.0, (0.0, 0.0), (sx, sy), +1),
        axis_rect(2, top, (0.0, 0.0), (sx, sy), -1),
        axis_rect(0, 0.0, (0.0, 0.0), (sy, top), +1),
        axis_rect(0, sx, (0.0, 0.0), (sy, top), -1),
        axis_rect(1, 0.0, (0.0, 0.0), (sx, top), +1),
        axis_rect(1, sy, (0.0, 0.0), (sx, top), -1),
    )
    # tabique entre carriles
    scene.add(
        axis_rect(1, LANE_1[1], (STAIR_X0, 0.0), (STAIR_X1, top), -1),
        axis_rect(1, LANE_2[0], (STAIR_X0, 0.0), (STAIR_X1, top), +1),
        axis_rect(0, STAIR_X0, (LANE_1[1], 0.0), (LANE_2[0], top), -1),
        axis_rect(0, STAIR_X1, (LANE_1[1], 0.0), (LANE_2[0], top), +1),
    )
    for flight in range(floors):
        scene.extend(_flight(flight))
    for level in range(1, floors + 1):
        scene.extend(_slab(level, slab, size))
    return scene


def loop_course(side=12.5, width=2.0, height=2.5):
    """Pasillo cuadrado en anillo; la línea central mide 4·side y pasa por el origen."""
    _check_dims(side, width, height)
    c = side / 2.0
    outer = c + width / 2.0
    inner = c - width / 2.0
    hh = height / 2.0
    cy = c
    scene = Scene(name='loop_course')
    # el anillo está centrado en (0, c) para que el lado inferior pase por el origen
    scene.add(
        axis_rect(2, -hh, (-outer, cy - outer), (outer, cy + outer), +1),
        axis_rect(2, hh, (-outer, cy - outer), (outer, cy + outer), -1),
        axis_rect(0, -outer, (cy - outer, -hh), (cy + outer, hh), +1),
        axis_rect(0, outer, (cy - outer, -hh), (cy + outer, hh), -1),
        axis_rect(1, cy - outer, (-outer, -hh), (outer, hh), +1),
        axis_rect(1, cy + outer, (-outer, -hh), (outer, hh), -1),
        axis_rect(0, -inner, (cy - inner, -hh), (cy + inner, hh), -1),
        axis_rect(0, inner, (cy - inner, -hh), (cy + inner, hh), +1),
        axis_rect(1, cy - inner, (-inner, -hh), (inner, hh), -1),
        axis_rect(1, cy + inner, (-inner, -hh), (inner, hh), +1),
    )
    return scene


PRESETS = {
    'room': room,
    'corridor': corridor,
    'two_room': two_room,
    'stairwell': stairwell,
    'loop_course': loop_course,
}


def build_scene(preset, **dims):
    try:
        builder = PRESETS[preset]
    except KeyError:
        raise PreconditionError(f'Escena desconocida: {preset}') from None
    return builder(**dims)
