from unittest import mock

import numpy as np
from django.test import SimpleTestCase, tag
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from degeneracy.analysis import analyze, normal_covariance
from geom.kdtree import KdTree
from geom.se3 import Pose, pose_error
from geom.voxel import voxel_downsample
from nvlio.exceptions import InsufficientOverlapError, PreconditionError
from range_image.cloud import NormalCloud
from sim import scene as scenes
from sim.fixtures import scan_cloud, truth_cloud

from .correspondence import find_correspondences
from .gauss_newton import register
from .submap import build_submap
from .types import Keyframe


def displaced(dx=0.1, yaw_deg=5.0, direction=(1.0, 0.0, 0.0)):
    direction = np.asarray(direction, dtype=float)
    return Pose.from_rotvec([0.0, 0.0, np.radians(yaw_deg)], dx * direction / np.linalg.norm(direction))


def plane_grid(x, normal_sign, spacing=0.1, half=2.0):
    ys, zs = np.meshgrid(np.arange(-half, half + 1e-9, spacing), np.arange(-half, half + 1e-9, spacing))
    points = np.column_stack([np.full(ys.size, x), ys.ravel(), zs.ravel()])
    return points, np.tile([normal_sign, 0.0, 0.0], (len(points), 1))


class CorrespondenceTests(SimpleTestCase):
    def test_coincident_point_same_normal_matches(self):
        cloud = NormalCloud([[1.0, 2.0, 3.0]], [[0.0, 0.0, 1.0]])
        pairs = find_correspondences(cloud, cloud, 0.5, np.radians(30))
        self.assertEqual(len(pairs), 1)
        self.assertEqual(pairs.target_index[0], 0)

    def test_opposite_normals_rejected(self):
        query = NormalCloud([[1.0, 0.0, 0.0]], [[1.0, 0.0, 0.0]])
        target = NormalCloud([[1.0, 0.0, 0.0]], [[-1.0, 0.0, 0.0]])
        self.assertEqual(len(find_correspondences(query, target, 0.5, np.radians(30))), 0)

    def test_second_nearest_chosen_when_nearest_fails_angle(self):
        query = NormalCloud([[0.0, 0.0, 0.0]], [[0.0, 0.0, 1.0]])
        target = NormalCloud([[0.1, 0.0, 0.0], [0.2, 0.0, 0.0], [0.3, 0.0, 0.0]],
                             [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        pairs = find_correspondences(query, target, 0.5, np.radians(30))
        self.assertEqual(pairs.target_index.tolist(), [1])
        match = next(iter(pairs))
        assert_allclose(match.target_point, [0.2, 0.0, 0.0])

    def test_distance_gate(self):
        query = NormalCloud([[0.0, 0.0, 0.0]], [[0.0, 0.0, 1.0]])
        target = NormalCloud([[0.6, 0.0, 0.0]], [[0.0, 0.0, 1.0]])
        self.assertEqual(len(find_correspondences(query, target, 0.5, np.radians(30))), 0)

    def test_empty_inputs_and_bad_thresholds(self):
        cloud = NormalCloud([[0.0, 0.0, 0.0]], [[0.0, 0.0, 1.0]])
        self.assertEqual(len(find_correspondences(NormalCloud.empty(), cloud, 0.5, 0.5)), 0)
        with self.assertRaises(PreconditionError):
            find_correspondences(cloud, cloud, 0.0, 0.5)

    def test_two_faces_of_thin_wall_never_pair(self):
        scene = scenes.two_room(wall=0.2)
        a = truth_cloud(scene, Pose(np.eye(3), [-3.0, 0.0, 0.0]))
        b = truth_cloud(scene, Pose(np.eye(3), [3.0, 0.0, 0.0]))
        a_world = a.transformed(Pose(np.eye(3), [-3.0, 0.0, 0.0]), 'world')
        b_world = b.transformed(Pose(np.eye(3), [3.0, 0.0, 0.0]), 'world')
        face_a, face_b = len(scene.rectangles) - 2, len(scene.rectangles) - 1

        # las caras están dentro del radio: el rechazo lo decide el ángulo
        on_a = a_world.select(a_world.labels == face_a)
        on_b = b_world.select(b_world.labels == face_b)
        self.assertGreater(len(on_a), 0)
        self.assertGreater(len(on_b), 0)
        tree = KdTree(on_b.points)
        self.assertGreater(len(tree.radius_search(on_a.points[0], 0.5)), 0)

        pairs = find_correspondences(a_world, b_world, 0.5, np.radians(30), max_candidates=50)
        labels = np.column_stack([a_world.labels[pairs.query_index],
                                  b_world.labels[pairs.target_index]])
        crossing = (labels[:, 0] == face_a) & (labels[:, 1] == face_b)
        self.assertEqual(int(np.count_nonzero(crossing)), 0)
        self.assertGreater(len(pairs), 0)


class SubmapTests(SimpleTestCase):
    def setUp(self):
        self.scene = scenes.room()
        self.cloud = scan_cloud(self.scene, Pose.identity())

    def test_single_keyframe_equals_downsampled_cloud(self):
        submap = build_submap([Keyframe(0, Pose.identity(), self.cloud, 0.0)], 0.4)
        expected = voxel_downsample(self.cloud, 0.4)
        assert_allclose(submap.points, expected.points)
        assert_allclose(submap.normals, expected.normals)
        self.assertEqual(submap.frame, 'keyframe')

    def test_identical_keyframes_deduplicate(self):
        kf = Keyframe(0, Pose.identity(), self.cloud, 0.0)
        single = build_submap([kf], 0.4)
        double = build_submap([kf, Keyframe(1, Pose.identity(), self.cloud, 0.5)], 0.4)
        self.assertEqual(len(single), len(double))
        assert_allclose(double.points, single.points, atol=1e-12)

    def test_older_keyframe_lands_on_same_planes(self):
        older_pose = Pose.from_rotvec([0, 0, 0.2], [0.5, -0.3, 0.0])
        newer_pose = Pose.from_rotvec([0, 0, -0.1], [-0.4, 0.6, 0.1])
        keyframes = [Keyframe(0, older_pose, truth_cloud(self.scene, older_pose), 0.0),
                     Keyframe(1, newer_pose, truth_cloud(self.scene, newer_pose), 0.5)]
        submap = build_submap(keyframes, 0.01, coherence=0.999)
        world = submap.transformed(newer_pose, 'world')
        # cara 1 de la habitación: pared x = +5
        on_wall = world.labels == 1
        self.assertGreater(int(on_wall.sum()), 100)
        assert_allclose(world.points[on_wall, 0], 5.0, atol=1e-6)

    def test_empty_keyframe_list(self):
        with self.assertRaises(PreconditionError):
            build_submap([], 0.4)


class RegisterTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scene = scenes.room()
        cls.reference = scan_cloud(cls.scene, Pose.identity())
        cls.submap = build_submap([Keyframe(0, Pose.identity(), cls.reference, 0.0)], 0.4)

    def assertRecovers(self, result, expected, meters=1e-3, degrees=0.05):
        error = pose_error(result.pose, expected)
        self.assertLess(np.linalg.norm(error[:3]), meters)
        self.assertLess(np.degrees(np.linalg.norm(error[3:])), degrees)

    def test_self_registration_is_identity(self):
        result = register(self.submap, self.submap, downsample=False)
        self.assertTrue(result.converged)
        self.assertLessEqual(result.iterations, 2)
        assert_allclose(result.pose.rotation, np.eye(3), atol=1e-9)
        assert_allclose(result.pose.translation, np.zeros(3), atol=1e-9)

    def test_recovers_inverse_displacement(self):
        motion = displaced()
        query = scan_cloud(self.scene, motion)
        result = register(query, self.submap)
        self.assertTrue(result.converged)
        self.assertLessEqual(result.iterations, 15)
        self.assertRecovers(result, motion.inverse())
        self.assertLessEqual(result.mean_residual, result.initial_residual)

    def test_line_search_stall_is_not_convergence(self):
        query = scan_cloud(self.scene, displaced())
        # cada paso candidato cae lejos de la habitación y sube el costo
        away = Pose.from_rotvec([0.0, 0.0, 0.5], [2.0, 0.0, 0.0])
        with mock.patch('registration.gauss_newton.se3_exp', return_value=away):
            result = register(query, self.submap)
        self.assertTrue(result.stalled)
        self.assertFalse(result.converged)
        self.assertEqual(result.iterations, 1)
        np.testing.assert_array_equal(result.pose.translation, np.zeros(3))

    def test_equivariance_under_rigid_transform(self):
        motion = displaced(0.08, 3.0, (1.0, 1.0, 0.0))
        query = voxel_downsample(scan_cloud(self.scene, motion), 0.4)
        T = Pose(Rotation.from_euler('zyx', [40, 10, -5], degrees=True).as_matrix(), [2.0, -1.0, 0.5])
        base = register(query, self.submap, downsample=False)
        moved = register(query.transformed(T), self.submap.transformed(T), downsample=False)
        expected = T @ base.pose @ T.inverse()
        assert_allclose(moved.pose.rotation, expected.rotation, atol=1e-6)
        assert_allclose(moved.pose.translation, expected.translation, atol=1e-6)

    def test_two_walls_leave_null_space_untouched(self):
        p1, n1 = plane_grid(2.0, -1.0)
        p2, n2 = plane_grid(-2.0, 1.0)
        target = NormalCloud(np.vstack([p1, p2]), np.vstack([n1, n2]))
        offset = np.array([0.1, 0.05, -0.05])
        query = NormalCloud(target.points - offset, target.normals)
        result = register(query, target, downsample=False)

        self.assertTrue(result.converged)
        self.assertAlmostEqual(result.pose.translation[0], -0.1, places=6)
        self.assertLess(abs(result.pose.translation[1]), 1e-6)
        self.assertLess(abs(result.pose.translation[2]), 1e-6)
        report = analyze(normal_covariance(result.correspondences))
        self.assertTrue(report.degenerate)
        self.assertLess(abs(report.axis[0]), 1e-9)

    def test_no_overlap_raises(self):
        far = self.submap.transformed(Pose(np.eye(3), [100.0, 0.0, 0.0]))
        with self.assertRaises(InsufficientOverlapError) as ctx:
            register(far, self.submap, downsample=False)
        self.assertEqual(ctx.exception.found, 0)

    def test_empty_cloud_rejected(self):
        with self.assertRaises(PreconditionError):
            register(NormalCloud.empty(), self.submap)

    @tag('slow')
    def test_hundred_seeded_perturbations(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            heading = rng.uniform(0.0, 2.0 * np.pi)
            direction = (np.cos(heading), np.sin(heading), 0.0)
            motion = displaced(0.1, rng.choice([-5.0, 5.0]), direction)
            result = register(scan_cloud(self.scene, motion), self.submap)
            self.assertLessEqual(result.iterations, 15)
            self.assertRecovers(result, motion.inverse())
