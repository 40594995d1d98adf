import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from geom.se3 import Pose, pose_error
from geom.voxel import voxel_downsample
from range_image.cloud import NormalCloud
from range_image.normals import compute_normal_map
from range_image.params import ProjectionParams
from range_image.projection import project, unproject
from registration.gauss_newton import register
from registration.types import Keyframe
from sim import scene as scenes
from sim.fixtures import MODEL, scan_cloud, truth_cloud
from sim.lidar import raycast_scan

from .candidates import LoopCandidate, find_candidate
from .closure import (
    ACCEPTED, DEGENERATE, INSUFFICIENT_MATCHES, NO_CANDIDATE,
    LoopCloser, LoopParams, close_loop,
)
from .projection import match_projections, project_target, visibility_filter

PARAMS = MODEL.projection_params()
SMALL = ProjectionParams.from_degrees(45.0, -45.0, 16, 64)


def at(x, y=0.0, z=0.0, yaw_deg=0.0):
    return Pose.from_rotvec([0.0, 0.0, np.radians(yaw_deg)], [x, y, z])


def pixel_point(u, v, r, params=SMALL, front=True):
    p = unproject(u, v, r, params)
    n = -p / r if front else p / r
    return p, n


def loop_keyframes(scene, target_pose, current_pose, filler=10):
    """Objetivo en id 0, relleno lejano y el keyframe actual al final."""
    target = Keyframe(0, target_pose, scan_cloud(scene, target_pose), 0.0)
    dummy = NormalCloud([[1.0, 0.0, 0.0]], [[-1.0, 0.0, 0.0]])
    fill = [Keyframe(i, at(100.0 + i), dummy, float(i)) for i in range(1, filler + 1)]
    current = Keyframe(filler + 1, current_pose, scan_cloud(scene, current_pose), filler + 1.0)
    return [target] + fill + [current]


class FindCandidateTests(SimpleTestCase):
    def test_recent_keyframes_are_excluded(self):
        poses = [at(20.0 - i) for i in range(21)]
        self.assertIsNone(find_candidate(poses, 20, exclusion=10, radius=10.0))

    def test_returning_trajectory_finds_start(self):
        angles = np.linspace(0.0, 2.0 * np.pi, 30, endpoint=False)
        poses = [at(8.0 * np.sin(a), 8.0 * (1.0 - np.cos(a))) for a in angles] + [at(0.3, 0.2)]
        candidate = find_candidate(poses, len(poses) - 1, exclusion=10, radius=10.0)
        self.assertEqual(candidate.target, 0)
        self.assertLess(candidate.distance, 1.0)
        assert_allclose(candidate.initial.translation, [-0.3, -0.2, 0.0], atol=1e-12)

    def test_tie_goes_to_lower_id(self):
        poses = [at(1.0), at(-1.0)] + [at(50.0 + i) for i in range(10)] + [at(0.0)]
        candidate = find_candidate(poses, 12, exclusion=10, radius=10.0)
        self.assertEqual(candidate.target, 0)

    def test_not_enough_keyframes(self):
        self.assertIsNone(find_candidate([at(0.0)] * 5, 4, exclusion=10))


class ProjectTargetTests(SimpleTestCase):
    def test_self_projection_reproduces_range_image(self):
        scan = raycast_scan(scenes.room(), Pose.identity(), MODEL)
        img = project(scan.points, PARAMS)
        _, mask = compute_normal_map(img)
        view = project_target(scan_cloud(scenes.room(), Pose.identity()), Pose.identity(), PARAMS)
        self.assertTrue(np.array_equal(view.valid, mask))
        assert_allclose(view.image.ranges[mask], img.ranges[mask])
        self.assertTrue(np.all(view.front[mask]))

    def test_nearest_point_wins_regardless_of_facing(self):
        near_front, n1 = pixel_point(10, 8, 5.0)
        far_back = near_front * 6.0 / 5.0
        view = project_target(NormalCloud([far_back, near_front], [-n1, n1]), None, SMALL)
        self.assertTrue(view.front[8, 10])
        self.assertAlmostEqual(view.image.ranges[8, 10], 5.0)

        near_back = near_front
        far_front = far_back
        view = project_target(NormalCloud([far_front, near_back], [n1, -n1]), None, SMALL)
        self.assertTrue(view.valid[8, 10])
        self.assertFalse(view.front[8, 10])

    def test_empty_target(self):
        view = project_target(NormalCloud.empty(), Pose.identity(), SMALL)
        self.assertEqual(int(view.valid.sum()), 0)


class VisibilityFilterTests(SimpleTestCase):
    def view(self, back_range, back_u=12):
        p1, n1 = pixel_point(10, 8, 5.0)
        p2, n2 = pixel_point(back_u, 8, back_range, front=False)
        return project_target(NormalCloud([p1, p2], [n1, n2]), Pose.identity(), SMALL)

    def test_hidden_back_face_removed(self):
        filtered = visibility_filter(self.view(6.0), neighborhood=5)
        self.assertFalse(filtered.valid[8, 12])
        self.assertTrue(filtered.valid[8, 10])

    def test_outside_neighborhood_kept(self):
        filtered = visibility_filter(self.view(6.0), neighborhood=3)
        self.assertTrue(filtered.valid[8, 12])

    def test_nearer_back_face_kept(self):
        filtered = visibility_filter(self.view(4.0), neighborhood=5)
        self.assertTrue(filtered.valid[8, 12])

    def test_wraps_around_the_seam(self):
        p1, n1 = pixel_point(63, 8, 5.0)
        p2, n2 = pixel_point(0, 8, 6.0, front=False)
        view = project_target(NormalCloud([p1, p2], [n1, n2]), Pose.identity(), SMALL)
        self.assertFalse(visibility_filter(view, 3).valid[8, 0])

    def test_front_points_never_removed(self):
        view = project_target(scan_cloud(scenes.two_room(), at(-3.0)), Pose.identity(), PARAMS)
        filtered = visibility_filter(view, 3)
        self.assertTrue(np.array_equal(filtered.front, view.front))

    def test_hidden_room_disappears(self):
        scene = scenes.two_room(wall=0.2)
        pose_a, pose_b = at(-3.0), at(3.0)
        own = truth_cloud(scene, pose_a)
        other = scan_cloud(scene, pose_b).transformed(pose_a.inverse() @ pose_b)
        target = NormalCloud.concatenate([own, other])
        filtered = visibility_filter(project_target(target, Pose.identity(), PARAMS), 3)

        labels = filtered.labels()
        rooms = np.where(labels >= 0, scene.rooms[np.maximum(labels, 0)], -1)
        self.assertEqual(int(np.count_nonzero(rooms[filtered.valid] == scenes.ROOM_B)), 0)

        current = project_target(scan_cloud(scene, pose_a), Pose.identity(), PARAMS)
        pairs = match_projections(current, filtered, 0.3, np.radians(30))
        self.assertGreater(len(pairs), 0)
        target_rooms = scene.rooms[target.labels[pairs.target_index]]
        self.assertEqual(int(np.count_nonzero(target_rooms == scenes.ROOM_B)), 0)


class MatchProjectionsTests(SimpleTestCase):
    def setUp(self):
        self.cloud = scan_cloud(scenes.room(), Pose.identity())
        self.view = project_target(self.cloud, Pose.identity(), PARAMS)

    def test_identical_views_match_everywhere(self):
        pairs = match_projections(self.view, self.view, 0.3, np.radians(30))
        self.assertEqual(len(pairs), int(self.view.valid.sum()))

    def test_radial_shift_rejects_all(self):
        pushed = NormalCloud(self.cloud.points * (1.0 + 1.0 / np.linalg.norm(
            self.cloud.points, axis=1, keepdims=True)), self.cloud.normals)
        shifted = project_target(pushed, Pose.identity(), PARAMS)
        self.assertEqual(len(match_projections(self.view, shifted, 0.5, np.radians(30))), 0)

    def test_revisit_with_pose_error(self):
        scene = scenes.room()
        target_pose, current_pose = at(-0.5, 0.5, yaw_deg=10.0), at(0.0)
        truth = current_pose.inverse() @ target_pose
        error = Pose(np.eye(3), 0.3 * np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0))
        initial = error @ truth

        target = scan_cloud(scene, target_pose)
        query = voxel_downsample(scan_cloud(scene, current_pose), 0.4)
        current_view = project_target(query, Pose.identity(), PARAMS)
        target_view = visibility_filter(project_target(target, initial, PARAMS), 3)
        pairs = match_projections(current_view, target_view, 0.3, np.radians(30))
        covisible = int(np.count_nonzero(current_view.valid & target_view.valid))
        self.assertGreaterEqual(len(pairs), 0.5 * covisible)

        result = register(query.select(np.unique(pairs.query_index)),
                          target.select(np.unique(pairs.target_index)), initial,
                          downsample=False)
        self.assertLess(np.linalg.norm(pose_error(result.pose, truth)[:3]), 0.02)


class CloseLoopTests(SimpleTestCase):
    def candidate(self, keyframes):
        current, target = keyframes[-1], keyframes[0]
        return LoopCandidate(current.id, target.id, current.pose.inverse() @ target.pose, 0.0)

    def test_revisit_produces_factor(self):
        scene = scenes.loop_course()
        keyframes = loop_keyframes(scene, at(0.0), at(0.2, 0.1, yaw_deg=3.0))
        outcome = close_loop(keyframes[-1], self.candidate(keyframes), keyframes)
        self.assertEqual(outcome.reason, ACCEPTED)
        truth = keyframes[0].pose.inverse() @ keyframes[-1].pose
        error = pose_error(outcome.factor.relative, truth)
        self.assertLess(np.linalg.norm(error[:3]), 1e-3)
        self.assertLess(np.linalg.norm(error[3:]), 1e-3)
        self.assertEqual(outcome.factor.covariance.shape, (6, 6))

    def test_other_side_of_wall_rejected(self):
        keyframes = loop_keyframes(scenes.two_room(), at(3.0), at(-3.0))
        outcome = close_loop(keyframes[-1], self.candidate(keyframes), keyframes)
        self.assertIsNone(outcome.factor)
        self.assertEqual(outcome.reason, INSUFFICIENT_MATCHES)

    def test_degenerate_geometry_rejected(self):
        keyframes = loop_keyframes(scenes.corridor(), at(0.0), at(1.0))
        outcome = close_loop(keyframes[-1], self.candidate(keyframes), keyframes)
        self.assertIsNone(outcome.factor)
        self.assertEqual(outcome.reason, DEGENERATE)

    def test_no_candidate(self):
        keyframes = loop_keyframes(scenes.room(), at(0.0), at(0.5), filler=1)
        outcome = close_loop(keyframes[-1], None, keyframes)
        self.assertEqual(outcome.reason, NO_CANDIDATE)
        self.assertFalse(outcome.accepted)


class LoopCloserTests(SimpleTestCase):
    def test_threaded_matches_deterministic(self):
        keyframes = loop_keyframes(scenes.room(), at(0.0), at(0.3, -0.2, yaw_deg=5.0))
        params = LoopParams()
        inline = LoopCloser(params, deterministic=True)
        threaded = LoopCloser(params)
        try:
            for closer in (inline, threaded):
                closer.submit(keyframes[:2], 1)
                closer.submit(keyframes, len(keyframes) - 1)
            a = inline.drain()
            b = threaded.drain(wait=True)
        finally:
            threaded.close()
        self.assertEqual([o.reason for o in a], [NO_CANDIDATE, ACCEPTED])
        self.assertEqual([o.reason for o in b], [o.reason for o in a])
        assert_allclose(b[1].factor.relative.matrix(), a[1].factor.relative.matrix(), atol=1e-12)
        self.assertEqual(threaded.pending, 0)
