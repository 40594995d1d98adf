import tempfile
from importlib.util import find_spec
from io import StringIO
from pathlib import Path
from unittest import mock, skipUnless

import numpy as np
from django.core.management import CommandError, call_command
from django.db import DatabaseError
from django.test import SimpleTestCase, TestCase, override_settings, tag
from numpy.testing import assert_allclose, assert_array_equal
from scipy.spatial.transform import Rotation

from dashboard.models import Run
from geom.se3 import Pose
from imu.types import ImuSample
from nvlio.exceptions import ConfigError, DatasetFormatError, NvlioError, PreconditionError, TimeOrderError
from range_image.cloud import NormalCloud
from registration.types import Keyframe
from sim.datasets import simulate_dataset
from sim.lidar import LidarModel

from .archive import KEYFRAMES_FILE, load_keyframes, save_keyframes
from .config import RunConfig, load_config, read_config_file
from .dataset import GROUNDTRUTH_FILE, IMU_FILE, SCANS_FILE, ScanRecord, read_dataset, write_dataset
from .pipeline import RUN_LOG_FILE, TRAJECTORY_FILE, partial_outputs, simulate_to_disk
from .ply import export_map, read_ply
from .trajectory import format_line, read_trajectory, write_trajectory


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text, encoding='utf-8')
        return path


def random_pose(rng, scale=5.0):
    return Pose(Rotation.random(random_state=rng.integers(1 << 31)).as_matrix(),
                rng.uniform(-scale, scale, 3))


def grid_cloud(frame='body'):
    xs, ys = np.meshgrid(np.arange(5) * 0.5, np.arange(4) * 0.5)
    points = np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, 2.0)])
    normals = np.tile([0.0, 0.0, -1.0], (len(points), 1))
    return NormalCloud(points, normals, frame)


def sorted_rows(points):
    points = np.asarray(points)
    return points[np.lexsort(points.T[::-1])]


class ConfigTests(TempDirMixin, SimpleTestCase):
    def test_defaults(self):
        config = load_config()
        self.assertEqual(config.voxel_size, 0.4)
        self.assertEqual(config.normal_window, 3)
        self.assertEqual(config.extrinsic_translation, (0.0, 0.0, 0.0))
        self.assertFalse(config.deterministic)

    def test_image_matches_simulated_sensor(self):
        # el ancho por defecto sigue al LiDAR simulado; un sensor de 1024 columnas se configura
        config = load_config()
        model = LidarModel()
        self.assertEqual((config.image_height, config.image_width), (model.channels, model.columns))
        path = self.write('run.conf', 'image_width = 1024\n')
        self.assertEqual(load_config(path).image_width, 1024)

    def test_file_values_are_cast(self):
        path = self.write('run.conf', '# corrida de prueba\n'
                                      'voxel_size = 0.25\n'
                                      'normal_window = 5\n'
                                      'deterministic = true\n'
                                      'extrinsic_translation = 0.1,0,-0.2\n')
        config = load_config(path)
        self.assertEqual(config.voxel_size, 0.25)
        self.assertEqual(config.normal_window, 5)
        self.assertTrue(config.deterministic)
        self.assertEqual(config.extrinsic_translation, (0.1, 0.0, -0.2))

    def test_unknown_key_is_named(self):
        path = self.write('run.conf', 'voxel_size = 0.3\nvoxel_sise = 0.3\n')
        with self.assertRaisesMessage(ConfigError, 'voxel_sise'):
            read_config_file(path)

    def test_out_of_bounds(self):
        with self.assertRaisesMessage(ConfigError, 'voxel_size'):
            load_config(self.write('run.conf', 'voxel_size = 0\n'))
        with self.assertRaises(ConfigError):
            RunConfig(normal_window=4)
        with self.assertRaises(ConfigError):
            RunConfig(fov_max_deg=-50.0)
        with self.assertRaises(ConfigError):
            RunConfig(extrinsic_rpy_deg=(0.0, 0.0))

    def test_malformed_value(self):
        with self.assertRaisesMessage(ConfigError, 'image_width'):
            load_config(self.write('run.conf', 'image_width = ancho\n'))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(self.tmp / 'no-existe.conf')

    @override_settings(NVLIO_DEFAULTS={'voxel_size': 0.3, 'loop_radius': 8.0})
    def test_layering(self):
        path = self.write('run.conf', 'voxel_size = 0.5\n')
        config = load_config(path, max_iterations=12)
        self.assertEqual(config.voxel_size, 0.5)
        self.assertEqual(config.loop_radius, 8.0)
        self.assertEqual(config.max_iterations, 12)
        self.assertEqual(config.keyframe_distance, 1.0)


class DatasetTests(TempDirMixin, SimpleTestCase):
    def imu_lines(self, times):
        return ''.join(f'{t!r} 0.0 0.0 0.0 0.0 0.0 9.81\n' for t in times)

    def test_simulated_dataset_reads_back_identically(self):
        data = simulate_dataset('room', seed=4, duration=1.2)
        write_dataset(self.tmp, data.scans, data.imu, data.groundtruth)
        scans, samples = read_dataset(self.tmp)

        self.assertEqual(len(scans), len(data.scans))
        for read, written in zip(scans, data.scans):
            self.assertEqual(read.start, written.start)
            assert_array_equal(read.offsets, written.offsets)
            assert_array_equal(read.points, written.points)
        self.assertEqual(len(samples), len(data.imu))
        for read, written in zip(samples, data.imu):
            self.assertEqual(read.t, written.t)
            assert_array_equal(read.gyro, written.gyro)
            assert_array_equal(read.accel, written.accel)
        self.assertTrue((self.tmp / GROUNDTRUTH_FILE).is_file())

    def test_decreasing_imu_timestamp_names_line(self):
        (self.tmp / SCANS_FILE).write_bytes(b'')
        self.write(IMU_FILE, '# t gx gy gz ax ay az\n' + self.imu_lines([0.0, 0.01, 0.005]))
        with self.assertRaises(TimeOrderError) as ctx:
            read_dataset(self.tmp)
        self.assertEqual(ctx.exception.line, 4)
        self.assertIn('línea 4', str(ctx.exception))

    def test_malformed_imu_line(self):
        (self.tmp / SCANS_FILE).write_bytes(b'')
        self.write(IMU_FILE, self.imu_lines([0.0]) + '0.01 0.0 0.0\n')
        with self.assertRaises(DatasetFormatError) as ctx:
            read_dataset(self.tmp)
        self.assertEqual(ctx.exception.line, 2)

    def test_empty_scans_file(self):
        (self.tmp / SCANS_FILE).write_bytes(b'')
        self.write(IMU_FILE, self.imu_lines([0.0, 0.01]))
        scans, samples = read_dataset(self.tmp)
        self.assertEqual(scans, [])
        self.assertEqual(len(samples), 2)

    def test_missing_file(self):
        self.write(IMU_FILE, self.imu_lines([0.0]))
        with self.assertRaisesMessage(DatasetFormatError, SCANS_FILE):
            read_dataset(self.tmp)

    def test_imu_must_cover_scans(self):
        scan = ScanRecord(0.5, [0.0, 0.05], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        samples = [ImuSample(t, np.zeros(3), [0.0, 0.0, 9.81]) for t in (0.0, 0.2)]
        write_dataset(self.tmp, [scan], samples)
        with self.assertRaises(NvlioError):
            read_dataset(self.tmp)

    def test_truncated_scan_record(self):
        scan = ScanRecord(0.0, [0.0, 0.01], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        samples = [ImuSample(t, np.zeros(3), [0.0, 0.0, 9.81]) for t in (0.0, 0.1)]
        write_dataset(self.tmp, [scan], samples)
        data = (self.tmp / SCANS_FILE).read_bytes()
        (self.tmp / SCANS_FILE).write_bytes(data[:-8])
        with self.assertRaisesMessage(DatasetFormatError, 'truncado'):
            read_dataset(self.tmp)


class TrajectoryFileTests(TempDirMixin, SimpleTestCase):
    def test_identity_line(self):
        self.assertEqual(format_line(0.0, Pose.identity()), '0.000000000 0 0 0 0 0 0 1')

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        poses = [(0.1 * i, random_pose(rng)) for i in range(20)]
        path = write_trajectory(poses, self.tmp / TRAJECTORY_FILE)
        read = read_trajectory(path)
        self.assertEqual(len(read), len(poses))
        for (t0, a), (t1, b) in zip(poses, read):
            self.assertAlmostEqual(t0, t1, places=9)
            assert_allclose(b.translation, a.translation, atol=1e-8)
            assert_allclose(b.rotation, a.rotation, atol=1e-8)

    def test_non_unit_quaternion_is_normalized(self):
        path = write_trajectory([(0.0, Pose.identity(), [0.0, 0.0, 0.0, 2.0])],
                                self.tmp / TRAJECTORY_FILE)
        self.assertEqual(path.read_text().strip(), '0.000000000 0 0 0 0 0 0 1')

    def test_writer_is_deterministic(self):
        rng = np.random.default_rng(8)
        poses = [(float(i), random_pose(rng)) for i in range(5)]
        a = write_trajectory(poses, self.tmp / 'a.txt').read_bytes()
        b = write_trajectory(poses, self.tmp / 'b.txt').read_bytes()
        self.assertEqual(a, b)

    def test_unwritable_path(self):
        with self.assertRaises(NvlioError):
            write_trajectory([(0.0, Pose.identity())], self.tmp / 'no' / 'existe.txt')


class PlyTests(TempDirMixin, SimpleTestCase):
    def keyframe(self, pose=None, kf_id=0):
        return Keyframe(kf_id, pose or Pose.identity(), grid_cloud(), float(kf_id))

    def test_identity_keyframe_points_are_kept(self):
        cloud = grid_cloud()
        export_map([self.keyframe()], 0.1, self.tmp / 'map.ply')
        written = read_ply(self.tmp / 'map.ply')
        assert_allclose(sorted_rows(written.points), sorted_rows(cloud.points), atol=1e-6)
        assert_allclose(written.normals, np.tile([0.0, 0.0, -1.0], (len(cloud), 1)), atol=1e-6)

    def test_header_declares_written_count(self):
        pose = Pose.from_rotvec([0.0, 0.0, 0.3], [1.0, 2.0, 0.0])
        cloud = export_map([self.keyframe(), self.keyframe(pose, 1)], 0.2, self.tmp / 'map.ply')
        data = (self.tmp / 'map.ply').read_bytes()
        header, _, body = data.partition(b'end_header\n')
        lines = header.decode('ascii').splitlines()
        self.assertEqual(lines[:2], ['ply', 'format binary_little_endian 1.0'])
        self.assertIn(f'element vertex {len(cloud)}', lines)
        self.assertEqual(len(body), len(cloud) * 6 * 4)

    def test_keyframes_are_moved_to_world(self):
        pose = Pose(np.eye(3), [10.0, 0.0, 0.0])
        export_map([self.keyframe(pose)], 0.1, self.tmp / 'map.ply')
        written = read_ply(self.tmp / 'map.ply')
        self.assertTrue(np.all(written.points[:, 0] >= 10.0 - 1e-6))

    def test_requires_a_keyframe(self):
        with self.assertRaises(PreconditionError):
            export_map([], 0.1, self.tmp / 'map.ply')

    def test_unwritable_path(self):
        with self.assertRaises(NvlioError):
            export_map([self.keyframe()], 0.1, self.tmp / 'no' / 'map.ply')

    @skipUnless(find_spec('open3d'), 'open3d no está instalado')
    def test_third_party_reader(self):
        import open3d

        cloud = export_map([self.keyframe()], 0.1, self.tmp / 'map.ply')
        pcd = open3d.io.read_point_cloud(str(self.tmp / 'map.ply'))
        self.assertEqual(len(pcd.points), len(cloud))
        self.assertTrue(pcd.has_normals())


class KeyframeArchiveTests(TempDirMixin, SimpleTestCase):
    def test_poses_and_clouds_survive(self):
        pose = Pose.from_rotvec([0.1, -0.2, 0.3], [1.0, 2.0, 3.0])
        keyframes = [Keyframe(0, Pose.identity(), grid_cloud(), 0.5),
                     Keyframe(1, pose, grid_cloud().select(slice(0, 7)), 1.5)]
        save_keyframes(keyframes, self.tmp / KEYFRAMES_FILE)
        loaded = load_keyframes(self.tmp / KEYFRAMES_FILE)
        self.assertEqual([kf.id for kf in loaded], [0, 1])
        self.assertEqual([len(kf.cloud) for kf in loaded], [20, 7])
        assert_allclose(loaded[1].pose.matrix(), pose.matrix())
        self.assertEqual(loaded[1].timestamp, 1.5)

    def test_missing_archive(self):
        with self.assertRaises(DatasetFormatError):
            load_keyframes(self.tmp / KEYFRAMES_FILE)


class PartialOutputTests(TempDirMixin, SimpleTestCase):
    def test_created_directory_is_removed(self):
        output = self.tmp / 'salida'
        with self.assertRaises(NvlioError):
            with partial_outputs(output, (TRAJECTORY_FILE,)) as out:
                (out / TRAJECTORY_FILE).write_text('parcial')
                raise NvlioError('falla')
        self.assertFalse(output.exists())

    def test_existing_directory_keeps_other_files(self):
        self.write('notas.txt', 'no tocar')
        with self.assertRaises(NvlioError):
            with partial_outputs(self.tmp, (TRAJECTORY_FILE, RUN_LOG_FILE)):
                self.write(TRAJECTORY_FILE, 'parcial')
                raise NvlioError('falla')
        self.assertFalse((self.tmp / TRAJECTORY_FILE).exists())
        self.assertTrue((self.tmp / 'notas.txt').exists())


class CommandTests(TempDirMixin, TestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls._dataset_dir = tempfile.TemporaryDirectory()
        cls.dataset = Path(cls._dataset_dir.name) / 'room'
        simulate_to_disk('room', 0, cls.dataset, duration=4.0)

    @classmethod
    def tearDownClass(cls):
        cls._dataset_dir.cleanup()
        super().tearDownClass()

    def call(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()

    def test_simulate_writes_dataset(self):
        output = self.tmp / 'sim'
        text = self.call('simulate', preset='room', seed=3, output=str(output), duration=1.0)
        for name in (SCANS_FILE, IMU_FILE, GROUNDTRUTH_FILE):
            self.assertTrue((output / name).is_file())
        self.assertIn('room seed=3', text)
        run = Run.objects.get(command='simulate')
        self.assertEqual((run.preset, run.seed, run.status), ('room', 3, 'ok'))

    def test_run_writes_outputs_and_registers(self):
        output = self.tmp / 'run'
        self.call('run', dataset=str(self.dataset), output=str(output), deterministic=True)
        trajectory = read_trajectory(output / TRAJECTORY_FILE)
        scans, _ = read_dataset(self.dataset)
        self.assertEqual(len(trajectory), len(scans))
        log = (output / RUN_LOG_FILE).read_text().splitlines()
        self.assertTrue(log[0].startswith('t='))
        self.assertIn('correspondences=', log[0])
        self.assertIn('degenerate=', log[0])
        self.assertTrue((output / KEYFRAMES_FILE).is_file())

        run = Run.objects.get(command='run')
        self.assertEqual(run.scans, len(scans))
        self.assertEqual(run.output_dir, str(output))
        self.assertIn('"deterministic": true', run.config)

    def test_deterministic_runs_are_byte_identical(self):
        first, second = self.tmp / 'a', self.tmp / 'b'
        self.call('run', dataset=str(self.dataset), output=str(first), deterministic=True)
        self.call('run', dataset=str(self.dataset), output=str(second), deterministic=True)
        self.assertEqual((first / TRAJECTORY_FILE).read_bytes(),
                         (second / TRAJECTORY_FILE).read_bytes())

    def test_export_map_after_run(self):
        output = self.tmp / 'run'
        self.call('run', dataset=str(self.dataset), output=str(output), deterministic=True)
        text = self.call('export_map', output=str(output), voxel=0.2)
        cloud = read_ply(output / 'map.ply')
        self.assertGreater(len(cloud), 0)
        self.assertIn(f'{len(cloud)} puntos', text)

    def test_unknown_config_key_fails_naming_it(self):
        config = self.write('run.conf', 'lazo_radio = 5\n')
        output = self.tmp / 'run'
        with self.assertRaisesMessage(CommandError, 'lazo_radio'):
            self.call('run', dataset=str(self.dataset), output=str(output), config=str(config))
        self.assertFalse(output.exists())
        self.assertEqual(Run.objects.get().status, 'failed')

    def test_missing_dataset_fails(self):
        with self.assertRaises(CommandError):
            self.call('run', dataset=str(self.tmp / 'nada'), output=str(self.tmp / 'run'))
        self.assertFalse((self.tmp / 'run').exists())

    def test_eval_prints_rmse(self):
        rng = np.random.default_rng(11)
        reference = [(float(i), random_pose(rng)) for i in range(10)]
        offset = Pose.from_rotvec([0.0, 0.0, 0.7], [3.0, -1.0, 0.5])
        estimate = [(t, offset @ pose) for t, pose in reference]
        write_trajectory(reference, self.tmp / 'ref.txt')
        write_trajectory(estimate, self.tmp / 'est.txt')
        text = self.call('eval', str(self.tmp / 'est.txt'), str(self.tmp / 'ref.txt'))
        self.assertRegex(text, r'ATE RMSE: 0\.0000\d\d m')
        self.assertLess(Run.objects.get(command='eval').rmse, 1e-6)

    def test_eval_length_mismatch_fails(self):
        rng = np.random.default_rng(12)
        poses = [(float(i), random_pose(rng)) for i in range(5)]
        write_trajectory(poses, self.tmp / 'ref.txt')
        write_trajectory(poses[:4], self.tmp / 'est.txt')
        with self.assertRaises(CommandError):
            self.call('eval', str(self.tmp / 'est.txt'), str(self.tmp / 'ref.txt'))

    def test_registry_failure_does_not_fail_command(self):
        rng = np.random.default_rng(13)
        poses = [(float(i), random_pose(rng)) for i in range(5)]
        write_trajectory(poses, self.tmp / 'ref.txt')
        with mock.patch('dashboard.models.Run.objects.create', side_effect=DatabaseError('sin base')):
            with self.assertLogs('dashboard.registry', 'WARNING'):
                text = self.call('eval', str(self.tmp / 'ref.txt'), str(self.tmp / 'ref.txt'))
        self.assertIn('ATE RMSE', text)

    @tag('slow')
    def test_simulate_run_eval_loop_course(self):
        dataset, output = self.tmp / 'loop', self.tmp / 'run'
        self.call('simulate', preset='loop_course', seed=1, output=str(dataset))
        self.call('run', dataset=str(dataset), output=str(output), deterministic=True)
        text = self.call('eval', str(output / TRAJECTORY_FILE), str(dataset / GROUNDTRUTH_FILE))
        self.assertIn('ATE RMSE', text)
        self.assertLess(Run.objects.get(command='eval').rmse, 1.0)
