import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from geom.se3 import Pose
from nvlio.exceptions import PreconditionError
from registration.gauss_newton import register
from registration.submap import build_submap
from registration.types import Keyframe
from sim import scene as scenes
from sim.fixtures import scan_cloud

from .analysis import (
    EIGEN_FLOOR, DegeneracyReport, analyze, measurement_covariance, normal_covariance,
)


def report_for(eigenvalues, eigenvectors=None, threshold=0.02):
    eigenvalues = np.asarray(eigenvalues, dtype=float)
    V = np.eye(3) if eigenvectors is None else eigenvectors
    C = V @ np.diag(eigenvalues) @ V.T
    return DegeneracyReport(C, eigenvalues, V, bool(eigenvalues[0] < threshold), threshold)


def matched_normals(scene, poses):
    """Covarianza de normales de cada barrido registrado contra el anterior."""
    reports = []
    clouds = [scan_cloud(scene, pose) for pose in poses]
    for k in range(1, len(poses)):
        submap = build_submap([Keyframe(k - 1, poses[k - 1], clouds[k - 1], 0.0)], 0.4)
        init = poses[k].inverse() @ poses[k - 1]
        result = register(clouds[k], submap, init)
        reports.append(analyze(normal_covariance(result.correspondences)))
    return reports


class NormalCovarianceTests(SimpleTestCase):
    def test_opposite_pairs(self):
        C = normal_covariance([[1, 0, 0], [-1, 0, 0], [0, 0, 1], [0, 0, -1]])
        assert_allclose(C, np.diag([0.5, 0.0, 0.5]), atol=1e-15)

    def test_single_direction(self):
        assert_allclose(normal_covariance([[1, 0, 0]] * 5), np.diag([1.0, 0.0, 0.0]))

    def test_uniform_normals_are_isotropic(self):
        rng = np.random.default_rng(0)
        normals = rng.normal(size=(1000, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        C = normal_covariance(normals)
        assert_allclose(C, np.eye(3) / 3, atol=0.05)
        self.assertAlmostEqual(np.trace(C), 1.0, places=9)

    def test_empty_rejected(self):
        with self.assertRaises(PreconditionError):
            normal_covariance(np.empty((0, 3)))


class AnalyzeTests(SimpleTestCase):
    def test_missing_direction_is_degenerate(self):
        report = analyze(np.diag([0.5, 0.0, 0.5]), 0.02)
        self.assertTrue(report.degenerate)
        assert_allclose(np.abs(report.axis), [0.0, 1.0, 0.0], atol=1e-12)

    def test_isotropic_is_not_degenerate(self):
        self.assertFalse(analyze(np.eye(3) / 3, 0.02).degenerate)

    def test_eigenpairs_sorted_and_consistent(self):
        rng = np.random.default_rng(1)
        normals = rng.normal(size=(50, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        report = analyze(normal_covariance(normals))
        self.assertTrue(np.all(np.diff(report.eigenvalues) >= 0))
        for i in range(3):
            v = report.eigenvectors[:, i]
            assert_allclose(report.covariance @ v, report.eigenvalues[i] * v, atol=1e-9)
        self.assertAlmostEqual(report.eigenvalues.sum(), 1.0, places=9)

    def test_non_symmetric_rejected(self):
        with self.assertRaises(PreconditionError):
            analyze(np.array([[1.0, 0.1, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))

    def test_corridor_axis_is_weak_direction(self):
        scene = scenes.corridor()
        poses = [Pose(np.eye(3), [x, 0.0, 0.0]) for x in (0.0, 0.5, 1.0, 1.5)]
        for report in matched_normals(scene, poses):
            self.assertTrue(report.degenerate)
            self.assertLess(report.lambda_min, 0.02)
            angle = np.degrees(np.arccos(min(1.0, abs(report.axis[0]))))
            self.assertLess(angle, 5.0)

    def test_room_is_well_constrained(self):
        scene = scenes.room()
        poses = [Pose.from_rotvec([0, 0, 0.1 * k], [0.3 * k, -0.2 * k, 0.0]) for k in range(4)]
        for report in matched_normals(scene, poses):
            self.assertFalse(report.degenerate)
            self.assertGreaterEqual(report.lambda_min, 0.02)


class MeasurementCovarianceTests(SimpleTestCase):
    def test_translation_block_from_inverse_spectrum(self):
        Q = measurement_covariance(report_for([0.1, 0.4, 0.5]), scale=0.01)
        assert_allclose(Q.translation, np.diag([0.1, 0.025, 0.02]), rtol=0, atol=1e-12)
        assert_allclose(Q.rotation, 1e-4 * np.eye(3))

    def test_zero_eigenvalue_is_floored(self):
        Q = measurement_covariance(report_for([0.0, 0.5, 0.5]), scale=0.01)
        self.assertAlmostEqual(Q.translation[0, 0], 0.01 / EIGEN_FLOOR)
        self.assertTrue(np.all(np.isfinite(Q.Q)))
        self.assertTrue(np.all(np.linalg.eigvalsh(Q.Q) > 0))

    def test_isotropic_spectrum(self):
        Q = measurement_covariance(report_for([1 / 3, 1 / 3, 1 / 3]), scale=0.01)
        assert_allclose(Q.translation, 0.03 * np.eye(3), atol=1e-12)

    def test_loosest_direction_is_weakest_axis(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            A = rng.normal(size=(3, 3))
            C = A @ A.T
            C /= np.trace(C)
            report = analyze(C)
            Q = measurement_covariance(report)
            _, vectors = np.linalg.eigh(Q.translation)
            lam = report.eigenvalues
            if lam[1] - lam[0] < 1e-6 or lam[1] < EIGEN_FLOOR:
                continue
            self.assertAlmostEqual(abs(vectors[:, -1] @ report.axis), 1.0, places=6)

    def test_invariant_to_eigenvector_signs(self):
        V = Rotation.from_euler('xyz', [10, 20, 30], degrees=True).as_matrix()
        flipped = V * np.array([-1.0, 1.0, -1.0])
        a = measurement_covariance(report_for([0.1, 0.3, 0.6], V))
        b = measurement_covariance(report_for([0.1, 0.3, 0.6], flipped))
        assert_allclose(a.Q, b.Q, atol=1e-12)

    def test_bad_scale(self):
        with self.assertRaises(PreconditionError):
            measurement_covariance(report_for([0.2, 0.3, 0.5]), scale=0.0)
