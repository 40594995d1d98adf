from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from geom.se3 import Pose, so3_exp
from nvlio.exceptions import ImuCoverageError, PreconditionError
from sim.datasets import preset_trajectory
from sim.imu import synthesize_imu

from .deskew import deskew
from .preintegration import GRAVITY, PreintegratedImu, estimate_gravity, predict, preintegrate
from .types import ImuBias, ImuBuffer, ImuSample, NavState


def constant_samples(gyro=(0.0, 0.0, 0.0), accel=(0.0, 0.0, 0.0), duration=1.0, rate=200,
                     t0=0.0):
    times = t0 + np.arange(int(round(duration * rate)) + 1) / rate
    return [ImuSample(t, gyro, accel) for t in times]


def wavy_samples(duration=1.0, rate=200):
    """Giro y aceleración variables y suaves, para comparar integraciones."""
    times = np.arange(int(round(duration * rate)) + 1) / rate
    gyro = np.column_stack([0.3 * np.sin(2 * times), 0.2 * np.cos(3 * times), 0.5 + 0.1 * times])
    accel = np.column_stack([1.0 + np.sin(times), 0.5 * np.cos(2 * times), 9.81 + 0.2 * times])
    return [ImuSample(t, w, a) for t, w, a in zip(times, gyro, accel)]


class ImuBufferTests(SimpleTestCase):
    def test_rejects_out_of_order(self):
        buffer = ImuBuffer(constant_samples(duration=0.1))
        with self.assertRaises(PreconditionError):
            buffer.append(ImuSample(0.05, np.zeros(3), np.zeros(3)))

    def test_window_interpolates_ends(self):
        samples = [ImuSample(t, [t, 0.0, 0.0], [0.0, 0.0, 9.81]) for t in (0.0, 0.1, 0.2, 0.3)]
        window = ImuBuffer(samples).window(0.05, 0.25)
        self.assertEqual([s.t for s in window], [0.05, 0.1, 0.2, 0.25])
        assert_allclose(window[0].gyro, [0.05, 0.0, 0.0])
        assert_allclose(window[-1].gyro, [0.25, 0.0, 0.0])

    def test_coverage_error_names_interval(self):
        buffer = ImuBuffer(constant_samples(duration=1.0))
        with self.assertRaises(ImuCoverageError) as ctx:
            buffer.window(0.5, 1.5)
        self.assertEqual((ctx.exception.start, ctx.exception.end), (1.0, 1.5))
        self.assertIn('1.500000', str(ctx.exception))


class DeskewTests(SimpleTestCase):
    points = np.array([[5.0, 0.0, 0.0], [0.0, 5.0, 1.0], [3.0, -4.0, 0.5]])
    timestamps = np.array([0.0, 0.05, 0.08])

    def test_zero_rate_is_identity(self):
        out = deskew(self.points, self.timestamps, constant_samples(duration=0.2), ImuBias())
        np.testing.assert_array_equal(out, self.points)

    def test_constant_yaw_rate(self):
        samples = constant_samples(gyro=(0.0, 0.0, 1.0), duration=0.2)
        out = deskew(self.points, self.timestamps, samples, ImuBias())
        assert_allclose(out[0], self.points[0], atol=1e-12)
        # el punto medido a t0 + 0.05 se expresa en el marco del inicio: giro de 0.05 rad
        assert_allclose(out[1], so3_exp([0.0, 0.0, 0.05]) @ self.points[1], atol=1e-12)
        assert_allclose(out[2], so3_exp([0.0, 0.0, 0.08]) @ self.points[2], atol=1e-12)

    def test_fixed_point_returns_to_start_coordinates(self):
        samples = constant_samples(gyro=(0.0, 0.0, 1.0), duration=0.2)
        at_start = np.array([[4.0, 1.0, 0.5], [4.0, 1.0, 0.5]])
        # a los 0.05 s el mismo punto se mide girado −0.05 rad sobre z
        measured = at_start.copy()
        measured[1] = so3_exp([0.0, 0.0, -0.05]) @ at_start[1]
        out = deskew(measured, [0.0, 0.05], samples, ImuBias())
        assert_allclose(out, at_start, atol=1e-12)

    def test_bias_cancels_rate(self):
        samples = constant_samples(gyro=(0.1, -0.2, 0.3), duration=0.2)
        out = deskew(self.points, self.timestamps, samples, ImuBias(gyro=[0.1, -0.2, 0.3]))
        np.testing.assert_array_equal(out, self.points)

    def test_lidar_rotation_maps_rates(self):
        # LiDAR girado 90° sobre x: el giro del IMU sobre z se ve sobre y en el LiDAR
        lidar_rotation = so3_exp([np.pi / 2, 0.0, 0.0])
        samples = constant_samples(gyro=(0.0, 0.0, 1.0), duration=0.2)
        out = deskew(self.points, self.timestamps, samples, ImuBias(), lidar_rotation)
        expected = so3_exp(lidar_rotation.T @ [0.0, 0.0, 0.05]) @ self.points[1]
        assert_allclose(out[1], expected, atol=1e-12)

    def test_uncovered_scan(self):
        samples = constant_samples(gyro=(0.0, 0.0, 1.0), duration=0.05)
        with self.assertRaises(ImuCoverageError) as ctx:
            deskew(self.points, self.timestamps, samples, ImuBias())
        self.assertEqual(ctx.exception.end, 0.08)

    def test_empty_points(self):
        out = deskew(np.empty((0, 3)), np.empty(0), [], ImuBias())
        self.assertEqual(out.shape, (0, 3))


class PreintegrationTests(SimpleTestCase):
    def test_zero_motion(self):
        preint = preintegrate(constant_samples())
        self.assertAlmostEqual(preint.dt, 1.0)
        assert_allclose(preint.delta_R, np.eye(3), atol=1e-15)
        assert_allclose(preint.delta_v, np.zeros(3), atol=1e-15)
        assert_allclose(preint.delta_p, np.zeros(3), atol=1e-15)

    def test_constant_rate_quarter_turn(self):
        preint = preintegrate(constant_samples(gyro=(0.0, 0.0, np.pi / 2), rate=1000))
        assert_allclose(preint.delta_R, so3_exp([0.0, 0.0, np.pi / 2]), atol=1e-6)

    def test_covariance_symmetric_psd(self):
        preint = preintegrate(wavy_samples())
        assert_allclose(preint.covariance, preint.covariance.T, atol=0)
        self.assertGreaterEqual(np.linalg.eigvalsh(preint.covariance).min(), -1e-18)
        self.assertGreater(np.trace(preint.covariance), 0.0)

    def test_concatenated_slices_match_whole(self):
        samples = wavy_samples()
        whole = preintegrate(samples)
        split = preintegrate(samples[:81]).compose(preintegrate(samples[80:]))
        self.assertAlmostEqual(split.dt, whole.dt)
        for name in ('delta_R', 'delta_v', 'delta_p', 'd_R_d_bg', 'd_v_d_ba', 'd_v_d_bg',
                     'd_p_d_ba', 'd_p_d_bg'):
            assert_allclose(getattr(split, name), getattr(whole, name), atol=1e-9, err_msg=name)
        assert_allclose(split.covariance, whole.covariance, rtol=1e-9, atol=1e-18)

    def test_bias_update_is_first_order(self):
        samples = wavy_samples()
        base = ImuBias([0.05, -0.02, 0.1], [0.01, 0.0, -0.01])
        preint = preintegrate(samples, base)
        direction = np.array([1.0, -0.5, 0.3, -0.2, 0.4, 0.6])
        direction /= np.linalg.norm(direction)
        for step in (1e-3, 1e-2):
            moved = ImuBias.from_vector(base.vector() + step * direction)
            exact = preintegrate(samples, moved)
            corrected = preint.corrected(moved)
            for name in ('delta_v', 'delta_p'):
                stale = np.linalg.norm(getattr(preint, name) - getattr(exact, name))
                error = np.linalg.norm(getattr(corrected, name) - getattr(exact, name))
                self.assertLess(error, 0.05 * stale, msg=f'{name} con δ={step}')
                self.assertLess(error, 10 * step ** 2)
            rot_error = np.linalg.norm(Rotation.from_matrix(corrected.delta_R.T @ exact.delta_R).as_rotvec())
            self.assertLess(rot_error, 10 * step ** 2)

    def test_prediction_follows_starting_pose(self):
        preint = preintegrate(wavy_samples(duration=0.5))
        pose = Pose(so3_exp([0.3, -0.2, 1.0]), [4.0, -2.0, 1.0])
        local = predict(NavState.identity(), preint, np.zeros(3))
        moved = predict(NavState(pose), preint, np.zeros(3))
        assert_allclose(moved.pose.rotation, pose.rotation @ local.pose.rotation, atol=1e-12)
        assert_allclose(moved.pose.translation,
                        pose.rotation @ local.pose.translation + pose.translation, atol=1e-12)
        assert_allclose(moved.velocity, pose.rotation @ local.velocity, atol=1e-12)

    def test_preconditions(self):
        with self.assertRaises(PreconditionError):
            preintegrate(constant_samples()[:1])
        samples = constant_samples(duration=0.02)
        with self.assertRaises(PreconditionError):
            preintegrate([samples[1], samples[0], samples[2]])


class PredictTests(SimpleTestCase):
    def test_free_fall(self):
        preint = replace(PreintegratedImu.identity(), dt=1.0)
        state = predict(NavState.identity(), preint, GRAVITY)
        assert_allclose(state.pose.translation, [0.0, 0.0, -4.905])
        assert_allclose(state.velocity, [0.0, 0.0, -9.81])
        assert_allclose(state.pose.rotation, np.eye(3))

    def test_stationary_imu_keeps_state(self):
        samples = constant_samples(accel=-GRAVITY)
        state = predict(NavState.identity(), preintegrate(samples), GRAVITY)
        assert_allclose(state.pose.translation, np.zeros(3), atol=1e-6)
        assert_allclose(state.velocity, np.zeros(3), atol=1e-6)
        assert_allclose(state.pose.rotation, np.eye(3), atol=1e-6)

    def test_zero_gravity_displacement(self):
        preint = replace(PreintegratedImu.identity(), dt=1.0, delta_p=np.array([1.0, 0.0, 0.0]))
        state = predict(NavState.identity(), preint, np.zeros(3))
        assert_allclose(state.pose.translation, [1.0, 0.0, 0.0])
        assert_allclose(state.velocity, np.zeros(3))

    def test_follows_simulated_trajectory(self):
        trajectory = preset_trajectory('room')
        samples = synthesize_imu(trajectory, 400.0)
        t0, t1 = 3.0, 4.0
        start, end = trajectory.evaluate(t0), trajectory.evaluate(t1)
        window = ImuBuffer(samples).window(t0, t1)
        state = predict(NavState(start.pose, start.velocity, ImuBias()), preintegrate(window))
        assert_allclose(state.pose.translation, end.position, atol=1e-3)
        assert_allclose(state.velocity, end.velocity, atol=1e-3)
        angle = np.linalg.norm(Rotation.from_matrix(state.pose.rotation.T @ end.rotation).as_rotvec())
        self.assertLess(angle, 1e-3)


class GravityEstimateTests(SimpleTestCase):
    def test_tilted_stationary_start(self):
        tilt = Rotation.from_euler('ZYX', [0.0, -0.05, 0.1]).as_matrix()
        samples = constant_samples(gyro=(0.001, -0.002, 0.0005), accel=tilt.T @ -GRAVITY,
                                   duration=2.0)
        estimate = estimate_gravity(samples, 1.0)
        assert_allclose(estimate.rotation, tilt, atol=1e-9)
        assert_allclose(estimate.gravity, GRAVITY, atol=1e-9)
        assert_allclose(estimate.gyro_bias, [0.001, -0.002, 0.0005], atol=1e-12)

    def test_no_samples(self):
        with self.assertRaises(PreconditionError):
            estimate_gravity([])
