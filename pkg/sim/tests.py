import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose

from geom.se3 import Pose, so3_log
from imu.deskew import deskew
from imu.types import ImuBias
from nvlio.exceptions import PreconditionError

from . import scene as scenes
from .datasets import HOLD, PATHS, preset_trajectory, simulate_dataset
from .imu import synthesize_imu
from .lidar import LidarModel, raycast_scan, raycast_sweep
from .trajectory import TrajectorySpline

MODEL = LidarModel()


def plane_distances(scene, points, surface_ids):
    """Distancia con signo de cada punto (mundo) al plano de su superficie."""
    centers = np.array([rect.center for rect in scene.rectangles])[surface_ids]
    normals = scene.normals()[surface_ids]
    return np.einsum('ij,ij->i', points - centers, normals)


class SceneTests(SimpleTestCase):
    def test_room_wall_hit(self):
        room = scenes.room()
        dist, hit = room.raycast(np.zeros(3), [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert_allclose(dist, [5.0, 1.5])
        assert_allclose(room.normals()[hit[0]], [-1.0, 0.0, 0.0])
        assert_allclose(room.normals()[hit[1]], [0.0, 0.0, -1.0])

    def test_out_of_range(self):
        dist, hit = scenes.room().raycast(np.zeros(3), [[1.0, 0.0, 0.0]], max_range=4.0)
        self.assertEqual(dist[0], np.inf)
        self.assertEqual(hit[0], -1)

    def test_surface_ids_follow_insertion(self):
        scene = scenes.two_room()
        ids = [rect.surface_id for rect in scene.rectangles]
        self.assertEqual(ids, list(range(len(scene.rectangles))))
        self.assertEqual(set(scene.rooms), {scenes.NO_ROOM, scenes.ROOM_A, scenes.ROOM_B})

    def test_shared_wall_faces_belong_to_each_room(self):
        scene = scenes.two_room()
        _, hit = scene.raycast([-3.0, 0.0, 0.0], [[1.0, 0.0, 0.0]])
        self.assertEqual(scene.rooms[hit[0]], scenes.ROOM_A)
        _, hit = scene.raycast([3.0, 0.0, 0.0], [[-1.0, 0.0, 0.0]])
        self.assertEqual(scene.rooms[hit[0]], scenes.ROOM_B)

    def test_doorway_lets_rays_through(self):
        _, closed = scenes.two_room().raycast([-3.0, 0.0, -1.0], [[1.0, 0.0, 0.0]])
        scene = scenes.two_room(doorway=True)
        dist, hit = scene.raycast([-3.0, 0.0, -1.0], [[1.0, 0.0, 0.0]])
        self.assertEqual(scene.rooms[hit[0]], scenes.ROOM_B)
        self.assertAlmostEqual(dist[0], 9.1)
        self.assertNotEqual(closed[0], -1)

    def test_unknown_preset(self):
        with self.assertRaises(PreconditionError):
            scenes.build_scene('atico')
        with self.assertRaises(PreconditionError):
            preset_trajectory('atico')

    def test_invalid_dimensions(self):
        with self.assertRaises(PreconditionError):
            scenes.room(length=0.0)

    def test_every_preset_builds(self):
        for preset in PATHS:
            with self.subTest(preset=preset):
                self.assertTrue(scenes.build_scene(preset).rectangles)


class LidarTests(SimpleTestCase):
    def test_invalid_model(self):
        with self.assertRaises(PreconditionError):
            LidarModel(channels=1)
        with self.assertRaises(PreconditionError):
            LidarModel(fov_max=0.0, fov_min=0.1)

    def test_static_scan_lies_on_surfaces(self):
        room = scenes.room()
        pose = Pose.from_rotvec([0.0, 0.0, 0.3], [1.0, -0.5, 0.2])
        scan = raycast_scan(room, pose, MODEL)
        self.assertEqual(len(scan), MODEL.channels * MODEL.columns)
        world = pose.act(scan.points)
        assert_allclose(plane_distances(room, world, scan.surface_ids), 0.0, atol=1e-9)
        ranges = np.linalg.norm(scan.points, axis=1)
        self.assertTrue(np.all((ranges >= MODEL.min_range) & (ranges <= MODEL.max_range)))

    def test_truth_normals_face_sensor(self):
        scan = raycast_scan(scenes.room(), Pose.identity(), MODEL)
        assert_allclose(np.linalg.norm(scan.normals, axis=1), 1.0)
        self.assertTrue(np.all(np.einsum('ij,ij->i', scan.normals, scan.points) < 0))

    def test_column_times(self):
        scan = raycast_scan(scenes.room(), Pose.identity(), MODEL, t0=2.0)
        self.assertEqual(scan.start, 2.0)
        self.assertGreaterEqual(scan.offsets.min(), 0.0)
        self.assertLess(scan.offsets.max(), MODEL.sweep_time)

    def test_range_noise_needs_generator(self):
        noisy = LidarModel(range_noise=0.01)
        with self.assertRaises(PreconditionError):
            raycast_scan(scenes.room(), Pose.identity(), noisy)
        scan = raycast_scan(scenes.room(), Pose.identity(), noisy, rng=np.random.default_rng(0))
        self.assertEqual(len(scan), noisy.channels * noisy.columns)


class TrajectoryTests(SimpleTestCase):
    def setUp(self):
        self.trajectory = preset_trajectory('room')

    def test_hold_is_static(self):
        state = self.trajectory.evaluate(0.5 * HOLD)
        assert_allclose(state.position, [-1.0, -1.0, 0.0], atol=1e-12)
        assert_allclose(state.velocity, np.zeros(3))
        assert_allclose(state.angular_velocity, np.zeros(3))

    def test_ramp_is_smooth(self):
        ramp = self.trajectory.ramp
        _, dtau, ddtau = self.trajectory.warp(np.array([HOLD + 1e-6, HOLD + ramp - 1e-9,
                                                        HOLD + ramp + 1e-9]))
        self.assertLess(dtau[0], 1e-12)
        assert_allclose(dtau[1:], 1.0, atol=1e-6)
        assert_allclose(ddtau[1:], 0.0, atol=1e-6)

    def test_velocity_matches_finite_difference(self):
        t, h = 5.123, 1e-5
        state = self.trajectory.evaluate(t)
        before, after = self.trajectory.evaluate(t - h), self.trajectory.evaluate(t + h)
        assert_allclose(state.velocity, (after.position - before.position) / (2 * h), atol=1e-6)
        assert_allclose(state.acceleration, (after.velocity - before.velocity) / (2 * h), atol=1e-5)
        omega = so3_log(before.rotation.T @ after.rotation) / (2 * h)
        assert_allclose(state.angular_velocity, omega, atol=1e-5)

    def test_stationary(self):
        pose = Pose.from_rotvec([0.1, -0.2, 0.3], [1.0, 2.0, 3.0])
        state = TrajectorySpline.stationary(pose, 2.0).evaluate(1.0)
        assert_allclose(state.rotation, pose.rotation, atol=1e-12)
        assert_allclose(state.position, pose.translation)
        assert_allclose(state.velocity, np.zeros(3))

    def test_invalid_times(self):
        with self.assertRaises(PreconditionError):
            TrajectorySpline([0.0, 0.0], np.zeros((2, 3)))


class SynthesizedImuTests(SimpleTestCase):
    def test_stationary_reads_gravity(self):
        samples = synthesize_imu(preset_trajectory('room'), 200.0, t1=1.0)
        self.assertEqual(len(samples), 201)
        for sample in samples:
            assert_allclose(sample.accel, [0.0, 0.0, 9.81], atol=1e-12)
            assert_allclose(sample.gyro, np.zeros(3), atol=1e-12)

    def test_bias_is_added(self):
        bias = ImuBias([0.1, 0.0, -0.1], [0.01, 0.02, 0.03])
        sample = synthesize_imu(preset_trajectory('room'), 200.0, bias, t1=0.5)[0]
        assert_allclose(sample.accel, [0.1, 0.0, 9.71], atol=1e-12)
        assert_allclose(sample.gyro, [0.01, 0.02, 0.03], atol=1e-12)

    def test_noise_needs_generator(self):
        with self.assertRaises(PreconditionError):
            synthesize_imu(preset_trajectory('room'), 200.0, gyro_noise=0.01)


class SweepTests(SimpleTestCase):
    def setUp(self):
        self.scene = scenes.room()
        # giro puro sobre z a 0.4 rad/s, sensor fijo en el origen
        self.trajectory = TrajectorySpline([0.0, 1.0, 2.0], np.zeros((3, 3)),
                                           [[0.0, 0.0, 0.0], [0.4, 0.0, 0.0], [0.8, 0.0, 0.0]],
                                           hold=0.5, ramp=0.5)
        self.t0 = 1.2
        self.scan = raycast_sweep(self.scene, self.trajectory, MODEL, self.t0)

    def test_deskewed_sweep_lies_on_surfaces(self):
        samples = synthesize_imu(self.trajectory, 400.0)
        corrected = deskew(self.scan.points, self.scan.times, samples, ImuBias())
        world = self.trajectory.pose(self.t0).act(corrected)
        distances = plane_distances(self.scene, world, self.scan.surface_ids)
        self.assertLess(np.abs(distances).max(), 1e-4)

    def test_raw_sweep_is_skewed(self):
        world = self.trajectory.pose(self.t0).act(self.scan.points)
        distances = plane_distances(self.scene, world, self.scan.surface_ids)
        self.assertGreater(np.abs(distances).max(), 0.01)


class SimulateDatasetTests(SimpleTestCase):
    def test_same_seed_same_data(self):
        a = simulate_dataset('room', seed=3, duration=1.7)
        b = simulate_dataset('room', seed=3, duration=1.7)
        self.assertEqual(len(a.scans), 4)
        self.assertEqual(len(a.scans), len(b.scans))
        for scan_a, scan_b in zip(a.scans, b.scans):
            np.testing.assert_array_equal(scan_a.points, scan_b.points)
            np.testing.assert_array_equal(scan_a.offsets, scan_b.offsets)
        np.testing.assert_array_equal([s.accel for s in a.imu], [s.accel for s in b.imu])

    def test_seed_changes_noise(self):
        a = simulate_dataset('room', seed=1, duration=0.5)
        b = simulate_dataset('room', seed=2, duration=0.5)
        self.assertFalse(np.array_equal([s.gyro for s in a.imu], [s.gyro for s in b.imu]))

    def test_groundtruth_per_scan(self):
        data = simulate_dataset('corridor', seed=0, duration=1.6, scan_rate=4.0)
        self.assertEqual(len(data.groundtruth), len(data.scans))
        self.assertEqual([t for t, _ in data.groundtruth], [scan.start for scan in data.scans])
        assert_allclose(np.diff([scan.start for scan in data.scans]), 0.25)
        for scan in data.scans:
            self.assertLessEqual(scan.start + MODEL.sweep_time, data.imu[-1].t)
