import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from geom.se3 import Pose
from nvlio.exceptions import PreconditionError
from sim import scene as scenes
from sim.lidar import LidarModel, raycast_scan

from .cloud import NormalCloud
from .normals import compute_normal_map, compute_normals, pair_weights, shift_pixels
from .params import ProjectionParams
from .projection import pixel_coordinates, project, spherical_to_cartesian_table, unproject

MODEL = LidarModel()
PARAMS = MODEL.projection_params()


def angle_deg(a, b):
    cos = np.einsum('ij,ij->i', a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def plane_points(normal, offset, min_cos=0.4):
    """Impactos exactos de los rayos del modelo sobre el plano n·p = offset."""
    dirs = MODEL.beam_directions().reshape(-1, 3)
    normal = np.asarray(normal, dtype=float)
    denom = dirs @ normal
    hit = denom * np.sign(offset) > min_cos
    return dirs[hit] * (offset / denom[hit])[:, None]


def nearest_plane_points(planes, max_azimuth):
    """Impacto más cercano de cada rayo sobre varios planos (n, offset), con su índice de plano."""
    dirs = MODEL.beam_directions().reshape(-1, 3)
    dirs = dirs[np.abs(np.arctan2(dirs[:, 1], dirs[:, 0])) <= max_azimuth]
    dist = np.full(len(dirs), np.inf)
    label = np.full(len(dirs), -1)
    for i, (normal, offset) in enumerate(planes):
        denom = dirs @ np.asarray(normal, dtype=float)
        t = np.full(len(dirs), np.inf)
        ahead = denom * np.sign(offset) > 1e-6
        t[ahead] = offset / denom[ahead]
        closer = t < dist
        dist[closer] = t[closer]
        label[closer] = i
    hit = np.isfinite(dist)
    return dirs[hit] * dist[hit][:, None], label[hit]


def room_normal_errors(window, model=MODEL, rng=None):
    """Error angular (°) de las normales válidas cuya ventana cae sobre una sola superficie."""
    scene = scenes.room()
    scan = raycast_scan(scene, Pose.identity(), model, rng=rng)
    params = model.projection_params()
    img = project(scan.points, params)
    normals, mask = compute_normal_map(img, window)

    labels = np.zeros(params.shape, dtype=np.int64)
    labels[img.valid] = scan.surface_ids[img.index[img.valid]] + 1
    interior = img.valid.copy()
    k = window // 2
    for dv in range(-k, k + 1):
        for du in range(-k, k + 1):
            interior &= shift_pixels(labels, dv, du) == labels

    check = interior & mask
    truth = scene.normals()[labels[check] - 1]
    truth[np.einsum('ij,ij->i', truth, img.points[check]) > 0] *= -1.0
    return angle_deg(normals[check], truth)


class ProjectionParamsTests(SimpleTestCase):
    def test_resolutions(self):
        params = ProjectionParams.from_degrees(15.0, -15.0, 16, 1024)
        self.assertAlmostEqual(params.ver_res, np.radians(30.0) / 16)
        self.assertAlmostEqual(params.hor_res, 2 * np.pi / 1024)
        self.assertEqual(params.shape, (16, 1024))

    def test_invalid(self):
        with self.assertRaises(PreconditionError):
            ProjectionParams.from_degrees(-15.0, 15.0, 16, 1024)
        with self.assertRaises(PreconditionError):
            ProjectionParams.from_degrees(15.0, -15.0, 1, 1024)
        with self.assertRaises(PreconditionError):
            ProjectionParams.from_degrees(15.0, -15.0, 16, 4)


class ProjectTests(SimpleTestCase):
    params = ProjectionParams.from_degrees(15.0, -15.0, 16, 1024)

    def test_forward_axis(self):
        img = project([[10.0, 0.0, 0.0]], self.params)
        self.assertTrue(img.valid[8, 512])
        self.assertEqual(img.valid_count, 1)
        self.assertEqual(img.ranges[8, 512], 10.0)
        self.assertEqual(img.index[8, 512], 0)

    def test_left_axis(self):
        img = project([[0.0, 10.0, 0.0]], self.params)
        self.assertTrue(img.valid[8, 256])

    def test_nearest_range_wins(self):
        img = project([[7.0, 0.0, 0.0], [5.0, 0.0, 0.0]], self.params)
        self.assertEqual(img.ranges[8, 512], 5.0)
        self.assertEqual(img.index[8, 512], 1)
        self.assertEqual(img.valid_count, 1)

    def test_outside_fov_is_counted(self):
        img = project([[1.0, 0.0, 5.0], [10.0, 0.0, 0.0], [1.0, 0.0, -5.0]], self.params)
        self.assertEqual(img.dropped, 2)
        self.assertEqual(img.valid_count, 1)

    def test_azimuth_wraps(self):
        # atan2(-0.0, -10) = -π cae en u = w, que vuelve a la columna 0
        img = project([[-10.0, -0.0, 0.0]], self.params)
        self.assertTrue(img.valid[8, 0])

    def test_stored_points_reproject_to_their_cell(self):
        rng = np.random.default_rng(0)
        points = rng.uniform(-20.0, 20.0, (5000, 3))
        points[:, 2] *= 0.1
        img = project(points, self.params)
        v, u = img.pixels()
        pu, pv = pixel_coordinates(img.points[v, u], self.params)
        assert_allclose(np.floor(pu).astype(int) % self.params.width, u)
        assert_allclose(np.floor(pv).astype(int), v)
        assert_allclose(img.ranges[v, u], np.linalg.norm(img.points[v, u], axis=1), atol=1e-6)

    def test_empty_cloud(self):
        img = project(np.empty((0, 3)), self.params)
        self.assertEqual(img.valid_count, 0)


class UnprojectTests(SimpleTestCase):
    params = ProjectionParams.from_degrees(15.0, -15.0, 16, 1024)

    def test_forward_cell(self):
        p = unproject(512, 8, 10.0, self.params)
        self.assertAlmostEqual(np.linalg.norm(p), 10.0)
        cell = np.hypot(self.params.ver_res, self.params.hor_res)
        assert_allclose(p, [10.0, 0.0, 0.0], atol=10.0 * cell)

    def test_round_trip_within_one_cell(self):
        rng = np.random.default_rng(1)
        directions = rng.normal(size=(10000, 3))
        directions[:, 2] = 0.0
        elevation = rng.uniform(np.radians(-14.9), np.radians(14.9), 10000)
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        directions = np.column_stack([directions[:, :2] * np.cos(elevation)[:, None],
                                      np.sin(elevation)])
        points = directions * rng.uniform(1.0, 30.0, (10000, 1))

        u, v = pixel_coordinates(points, self.params)
        u = np.floor(u).astype(int) % self.params.width
        v = np.floor(v).astype(int)
        back = np.array([unproject(uu, vv, np.linalg.norm(p), self.params)
                         for uu, vv, p in zip(u, v, points)])
        cell = np.degrees(np.hypot(self.params.ver_res, self.params.hor_res))
        self.assertLessEqual(angle_deg(back, points).max(), cell)

    def test_preconditions(self):
        with self.assertRaises(PreconditionError):
            unproject(0, 0, 0.0, self.params)
        with self.assertRaises(PreconditionError):
            unproject(1024, 0, 1.0, self.params)
        with self.assertRaises(PreconditionError):
            unproject(0, 16, 1.0, self.params)


class CartesianTableTests(SimpleTestCase):
    def test_equator_at_first_column(self):
        # fov_max = 0: la fila 0 está en θ = π/2 y la columna 0 en ψ = π
        params = ProjectionParams(0.0, -np.pi / 4, 8, 16)
        table = spherical_to_cartesian_table(params)
        expected = np.array([[0.0, 0.0, -1.0],
                             [-1.0, 0.0, 0.0],
                             [0.0, -1.0, 0.0]])
        assert_allclose(table[0, 0], expected, atol=1e-15)

    def test_orthonormal(self):
        for center in (False, True):
            table = spherical_to_cartesian_table(PARAMS, center=center)
            gram = np.einsum('hwji,hwjk->hwik', table, table)
            assert_allclose(gram, np.broadcast_to(np.eye(3), gram.shape), atol=1e-9)

    def test_third_column_is_ray_direction(self):
        table = spherical_to_cartesian_table(PARAMS, center=True)
        assert_allclose(table[..., :, 2], MODEL.beam_directions(), atol=1e-12)

        edge = spherical_to_cartesian_table(PARAMS)
        theta = np.pi / 2 - (PARAMS.fov_max - np.arange(PARAMS.height) * PARAMS.ver_res)
        psi = np.pi - np.arange(PARAMS.width) * PARAMS.hor_res
        rays = np.stack([np.cos(psi)[None] * np.sin(theta)[:, None],
                         np.sin(psi)[None] * np.sin(theta)[:, None],
                         np.cos(theta)[:, None] * np.ones(PARAMS.width)[None]], axis=-1)
        assert_allclose(edge[..., :, 2], rays, atol=1e-12)


class NormalTests(SimpleTestCase):
    def assertNormals(self, cloud, expected, degrees=2.0):
        self.assertGreater(len(cloud), 0)
        errors = angle_deg(cloud.normals, np.tile(expected, (len(cloud), 1)))
        self.assertLessEqual(errors.max(), degrees)

    def assertValidCloud(self, cloud):
        assert_allclose(np.linalg.norm(cloud.normals, axis=1), 1.0, atol=1e-6)
        self.assertTrue(np.all(np.einsum('ij,ij->i', cloud.normals, cloud.points) <= 1e-9))

    def test_wall_in_front(self):
        # en las filas de borde la derivada vertical es de un solo lado
        for window, degrees in ((3, 2.0), (5, 3.0)):
            cloud = compute_normals(project(plane_points([1.0, 0.0, 0.0], 5.0), PARAMS), window)
            self.assertNormals(cloud, [-1.0, 0.0, 0.0], degrees)
            self.assertValidCloud(cloud)

    def test_floor_faces_up(self):
        cloud = compute_normals(project(plane_points([0.0, 0.0, 1.0], -1.0), PARAMS))
        self.assertNormals(cloud, [0.0, 0.0, 1.0])
        self.assertValidCloud(cloud)

    def test_isolated_pixel_has_no_normal(self):
        cloud = compute_normals(project([[5.0, 0.0, 0.0]], PARAMS))
        self.assertEqual(len(cloud), 0)
        self.assertEqual(cloud.frame, 'sensor')

    def test_depth_step_does_not_tilt_normals(self):
        points = plane_points([1.0, 0.0, 0.0], 5.0)
        far = plane_points([1.0, 0.0, 0.0], 8.0)
        points = np.vstack([points[points[:, 1] < 0], far[far[:, 1] >= 0]])
        cloud = compute_normals(project(points, PARAMS))
        self.assertNormals(cloud, [-1.0, 0.0, 0.0])

    def test_window_stops_at_depth_step(self):
        # pared cercana x = 5 a la derecha, pared oblicua x + y = 6 un metro más atrás
        near = plane_points([1.0, 0.0, 0.0], 5.0)
        tilted = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
        far = plane_points(tilted, 6.0 / np.sqrt(2.0))
        points = np.vstack([near[near[:, 1] < 0], far[far[:, 1] >= 0]])
        for window, degrees in ((3, 2.0), (5, 3.0)):
            cloud = compute_normals(project(points, PARAMS), window)
            left = cloud.points[:, 1] >= 0
            self.assertNormals(cloud.select(~left), [-1.0, 0.0, 0.0], degrees)
            self.assertNormals(cloud.select(left), -tilted, degrees)

    def test_crease_pairs_are_not_mixed(self):
        # pared x = 2.5 sobre piso z = -1.5: la arista no tiene salto de rango
        planes = [([1.0, 0.0, 0.0], 2.5), ([0.0, 0.0, 1.0], -1.5)]
        points, label = nearest_plane_points(planes, np.radians(8.0))
        expected = np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        for window, degrees in ((3, 2.0), (5, 3.0)):
            cloud = compute_normals(project(points, PARAMS), window, labels=label)
            self.assertEqual(set(cloud.labels), {0, 1})
            errors = angle_deg(cloud.normals, expected[cloud.labels])
            self.assertLessEqual(errors.max(), degrees, msg=f'ventana {window}')

    def test_pair_weights_give_least_squares_slope(self):
        self.assertEqual(pair_weights(3), [2, 2])
        self.assertEqual(pair_weights(5), [4, 6, 6, 4])
        row = np.random.default_rng(4).normal(size=5)
        slope = np.average(np.diff(row), weights=pair_weights(5))
        self.assertAlmostEqual(slope, np.polyfit(np.arange(5), row, 1)[0])

    def test_unsupported_window(self):
        img = project(plane_points([1.0, 0.0, 0.0], 5.0), PARAMS)
        with self.assertRaises(PreconditionError):
            compute_normal_map(img, 4)

    def test_labels_follow_source_points(self):
        scan = raycast_scan(scenes.room(), Pose.identity(), MODEL)
        cloud = compute_normals(project(scan.points, PARAMS), labels=scan.surface_ids)
        self.assertEqual(len(cloud.labels), len(cloud))
        self.assertTrue(set(cloud.labels) <= set(range(6)))
        truth = scenes.room().normals()[cloud.labels]
        truth[np.einsum('ij,ij->i', truth, cloud.points) > 0] *= -1.0
        self.assertGreater(np.mean(angle_deg(cloud.normals, truth) < 5.0), 0.75)

    def test_room_interior_pixels_accurate(self):
        errors = room_normal_errors(3)
        self.assertGreater(len(errors), 2000)
        self.assertGreaterEqual(np.mean(errors <= 2.0), 0.95)

    def test_room_with_1024_columns(self):
        errors = room_normal_errors(3, LidarModel(columns=1024))
        self.assertGreater(len(errors), 4000)
        self.assertGreaterEqual(np.mean(errors <= 2.0), 0.95)

    def test_noisy_room_wide_window(self):
        # σ = 1 cm de ruido de rango; la ventana 5×5 reparte el ruido en 25 píxeles
        noisy = LidarModel(range_noise=0.01)
        errors = room_normal_errors(5, noisy, np.random.default_rng(0))
        self.assertGreater(len(errors), 2000)
        self.assertGreaterEqual(np.mean(errors <= 5.0), 0.9)


class NormalCloudTests(SimpleTestCase):
    def cloud(self):
        return NormalCloud([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
                           [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]], 'sensor', [3, 4])

    def test_transformed_rotates_normals_only(self):
        pose = Pose.from_rotvec([0.0, 0.0, np.pi / 2], [1.0, 0.0, 0.0])
        moved = self.cloud().transformed(pose, 'world')
        assert_allclose(moved.points[0], [1.0, 1.0, 0.0], atol=1e-12)
        assert_allclose(moved.normals[0], [0.0, -1.0, 0.0], atol=1e-12)
        self.assertEqual(moved.frame, 'world')
        assert_allclose(moved.labels, [3, 4])

    def test_iteration_and_select(self):
        cloud = self.cloud()
        self.assertEqual([len(p.p) for p in cloud], [3, 3])
        picked = cloud.select(np.array([False, True]))
        self.assertEqual(len(picked), 1)
        assert_allclose(picked.labels, [4])

    def test_concatenate_and_mismatch(self):
        merged = NormalCloud.concatenate([self.cloud(), self.cloud()])
        self.assertEqual(len(merged), 4)
        self.assertEqual(len(NormalCloud.concatenate([], 'world')), 0)
        with self.assertRaises(ValueError):
            NormalCloud([[0.0, 0.0, 1.0]], np.empty((0, 3)))
