import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from nvlio.exceptions import DegenerateGeometryError, PreconditionError
from range_image.cloud import NormalCloud

from .alignment import alignment_residuals, ate_rmse, umeyama_align
from .kdtree import KdTree, kdtree_radius_search
from .se3 import Pose, pose_error, se3_exp, se3_log, so3_exp, so3_log
from .voxel import voxel_downsample, voxel_key


def random_pose(rng, scale=5.0):
    return Pose(Rotation.random(random_state=rng.integers(1 << 31)).as_matrix(),
                rng.uniform(-scale, scale, 3))


class Se3Tests(SimpleTestCase):
    def test_zero_twist_is_identity(self):
        pose = se3_exp(np.zeros(6))
        assert_allclose(pose.rotation, np.eye(3), atol=1e-15)
        assert_allclose(pose.translation, np.zeros(3), atol=1e-15)

    def test_quarter_turn_about_z(self):
        pose = se3_exp([0, 0, np.pi / 2, 0, 0, 0])
        assert_allclose(pose.rotate([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)
        assert_allclose(pose.translation, np.zeros(3), atol=1e-15)

    def test_exp_log_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            twist = np.concatenate([axis * rng.uniform(0.0, 3.0), rng.uniform(-5, 5, 3)])
            assert_allclose(se3_log(se3_exp(twist)), twist, atol=1e-9)

    def test_small_angle_branch(self):
        phi = np.array([1e-10, -2e-10, 3e-10])
        assert_allclose(so3_log(so3_exp(phi)), phi, rtol=1e-6, atol=0)

    def test_compose_with_inverse_is_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            pose = random_pose(rng)
            ident = pose @ pose.inverse()
            assert_allclose(ident.rotation, np.eye(3), atol=1e-9)
            assert_allclose(ident.translation, np.zeros(3), atol=1e-9)
            self.assertTrue(pose.is_valid())

    def test_pose_error_of_equal_poses_is_zero(self):
        pose = random_pose(np.random.default_rng(2))
        assert_allclose(pose_error(pose, pose), np.zeros(6), atol=1e-12)


class VoxelTests(SimpleTestCase):
    def cloud(self, points, normals=None):
        points = np.asarray(points, dtype=float)
        if normals is None:
            normals = np.tile([0.0, 0.0, 1.0], (len(points), 1))
        return NormalCloud(points, normals)

    def test_same_cell_centroid(self):
        out = voxel_downsample(self.cloud([[0.01, 0, 0], [0.02, 0, 0]]), 0.4)
        self.assertEqual(len(out), 1)
        assert_allclose(out.points[0], [0.015, 0.0, 0.0], atol=1e-15)

    def test_adjacent_cells(self):
        out = voxel_downsample(self.cloud([[0.1, 0, 0], [0.5, 0, 0]]), 0.4)
        self.assertEqual(len(out), 2)

    def test_cancelling_normals_drop_point(self):
        out = voxel_downsample(self.cloud([[0.1, 0.1, 0.1]] * 2, [[1, 0, 0], [-1, 0, 0]]), 0.4)
        self.assertEqual(len(out), 0)

    def test_spread_normals_keep_their_voxel(self):
        tilt = np.radians(35.0)
        normals = [[np.sin(tilt), 0.0, np.cos(tilt)], [-np.sin(tilt), 0.0, np.cos(tilt)]]
        cloud = self.cloud([[0.2, 0.2, 0.2], [0.7, 0.7, 0.7]], normals)
        out = voxel_downsample(cloud, 1.0)
        self.assertEqual(len(out), 1)
        assert_allclose(out.normals[0], [0.0, 0.0, 1.0], atol=1e-12)
        # el piso de coherencia es opcional: 0.9 descarta la media de norma cos 35°
        self.assertEqual(len(voxel_downsample(cloud, 1.0, coherence=0.9)), 0)

    def test_key_is_half_open(self):
        keys = voxel_key([[0.0, 0.0, 0.0], [0.3999, 0.0, 0.0], [0.4, 0.0, 0.0], [-0.0001, 0, 0]], 0.4)
        assert_allclose(keys[:, 0], [0, 0, 1, -1])

    def test_output_normals_unit_and_not_larger(self):
        rng = np.random.default_rng(3)
        points = rng.uniform(-2, 2, (2000, 3))
        normals = rng.normal(size=(2000, 3)) * 0.1 + [0, 0, 1]
        normals /= np.linalg.norm(normals, axis=1)[:, None]
        out = voxel_downsample(self.cloud(points, normals), 0.5)
        self.assertLessEqual(len(out), 2000)
        assert_allclose(np.linalg.norm(out.normals, axis=1), 1.0, atol=1e-9)

    def test_labels_carried(self):
        cloud = NormalCloud([[0.1, 0, 0], [0.2, 0, 0], [0.9, 0, 0]],
                            np.tile([0, 0, 1.0], (3, 1)), labels=[7, 8, 9])
        out = voxel_downsample(cloud, 0.4)
        self.assertEqual(out.labels.tolist(), [7, 9])

    def test_empty_and_invalid_voxel(self):
        self.assertEqual(len(voxel_downsample(NormalCloud.empty(), 0.4)), 0)
        with self.assertRaises(PreconditionError):
            voxel_downsample(NormalCloud.empty(), 0.0)


class KdTreeTests(SimpleTestCase):
    def test_small_radius(self):
        tree = KdTree([[0, 0, 0], [1, 0, 0]])
        self.assertEqual(kdtree_radius_search(tree, [0, 0, 0], 0.5), [0])
        self.assertEqual(kdtree_radius_search(tree, [0, 0, 0], 1.5), [0, 1])

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(4)
        points = rng.uniform(0, 10, (10000, 3))
        tree = KdTree(points)
        for query in rng.uniform(0, 10, (100, 3)):
            dist = np.linalg.norm(points - query, axis=1)
            inside = np.flatnonzero(dist <= 0.8)
            expected = inside[np.lexsort((inside, dist[inside]))]
            self.assertEqual(tree.radius_search(query, 0.8).tolist(), expected.tolist())

    def test_ties_broken_by_index(self):
        tree = KdTree([[1, 0, 0], [-1, 0, 0], [0, 1, 0]])
        self.assertEqual(kdtree_radius_search(tree, [0, 0, 0], 1.5), [0, 1, 2])

    def test_nearest_within_pads_misses(self):
        tree = KdTree([[0, 0, 0], [0.1, 0, 0]])
        dist, idx = tree.nearest_within([[0, 0, 0], [5, 5, 5]], 0.5, 3)
        self.assertEqual(idx[0, :2].tolist(), [0, 1])
        self.assertEqual(idx[0, 2], 2)
        self.assertTrue(np.all(np.isinf(dist[1])))

    def test_non_positive_radius(self):
        with self.assertRaises(PreconditionError):
            KdTree([[0, 0, 0]]).radius_search([0, 0, 0], 0.0)


class AlignmentTests(SimpleTestCase):
    def trajectory(self, rng, n=50):
        return [Pose.from_rotvec(rng.normal(size=3) * 0.1, rng.uniform(-10, 10, 3)) for _ in range(n)]

    def test_identical_trajectories(self):
        traj = self.trajectory(np.random.default_rng(5))
        T = umeyama_align(traj, traj)
        assert_allclose(T.matrix(), np.eye(4), atol=1e-9)
        self.assertAlmostEqual(ate_rmse(traj, traj), 0.0, places=12)

    def test_recovers_known_transform(self):
        rng = np.random.default_rng(6)
        traj = self.trajectory(rng)
        T = random_pose(rng, 20.0)
        reference = [T @ pose for pose in traj]
        recovered = umeyama_align(traj, reference)
        assert_allclose(recovered.rotation, T.rotation, atol=1e-9)
        assert_allclose(recovered.translation, T.translation, atol=1e-9)
        self.assertAlmostEqual(np.linalg.det(recovered.rotation), 1.0, places=12)

    def test_constant_offset_is_absorbed(self):
        traj = self.trajectory(np.random.default_rng(7))
        shifted = [Pose(p.rotation, p.translation + [3.0, -1.0, 2.0]) for p in traj]
        self.assertAlmostEqual(ate_rmse(traj, shifted), 0.0, places=9)

    def test_noisy_estimate_against_direct_formula(self):
        rng = np.random.default_rng(8)
        reference = self.trajectory(rng, 400)
        sigma = 0.01 / np.sqrt(3.0)
        estimate = [Pose(p.rotation, p.translation + rng.normal(0, sigma, 3)) for p in reference]
        T = umeyama_align(estimate, reference)
        direct = np.sqrt(np.mean([np.sum((T.act(e.translation) - r.translation) ** 2)
                                  for e, r in zip(estimate, reference)]))
        rmse = ate_rmse(estimate, reference)
        self.assertAlmostEqual(rmse, direct, places=12)
        self.assertGreater(rmse, 0.01 * np.sqrt(2.0 / 3.0))
        self.assertLess(rmse, 0.011)
        self.assertEqual(alignment_residuals(estimate, reference, T).shape, (400, 3))

    def test_collinear_is_degenerate(self):
        line = [Pose.from_rotvec(np.zeros(3), [i, 2 * i, 0]) for i in range(10)]
        with self.assertRaises(DegenerateGeometryError):
            umeyama_align(line, line)

    def test_length_mismatch_and_short(self):
        traj = self.trajectory(np.random.default_rng(9), 5)
        with self.assertRaises(PreconditionError):
            umeyama_align(traj, traj[:4])
        with self.assertRaises(PreconditionError):
            umeyama_align(traj[:2], traj[:2])
