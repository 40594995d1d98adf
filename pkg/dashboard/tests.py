import json
import tempfile
from pathlib import Path
from unittest import mock

from django.db import DatabaseError
from django.test import TestCase
from django.urls import reverse

from .models import Run
from .registry import record_run


class RecordRunTests(TestCase):
    def test_creates_row_with_json_config(self):
        run = record_run('run', config={'voxel_size': 0.4, 'deterministic': True},
                         dataset='/datos/room', output_dir='/salidas/room', scans=12,
                         keyframes=4, loops=1, rmse=0.05)
        run.refresh_from_db()
        self.assertEqual(run.command, 'run')
        self.assertEqual(run.status, 'ok')
        self.assertEqual(json.loads(run.config), {'deterministic': True, 'voxel_size': 0.4})
        self.assertEqual((run.scans, run.keyframes, run.loops), (12, 4, 1))

    def test_missing_text_fields_become_blank(self):
        run = record_run('eval', dataset=None, rmse=None)
        self.assertEqual(run.dataset, '')
        self.assertEqual(run.preset, '')
        self.assertIsNone(run.rmse)

    def test_database_error_only_warns(self):
        with mock.patch('dashboard.models.Run.objects.create', side_effect=DatabaseError('sin base')):
            with self.assertLogs('dashboard.registry', 'WARNING') as logs:
                self.assertIsNone(record_run('simulate', preset='room', seed=1))
        self.assertIn('simulate', logs.output[0])


class RunApiTests(TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.output = Path(self._tmp.name)
        (self.output / 'trajectory.txt').write_text('0.000000000 0 0 0 0 0 0 1\n')
        self.run = record_run('run', config={'voxel_size': 0.4}, dataset='/datos/room',
                              output_dir=self.output, scans=1, keyframes=1)
        self.sim = record_run('simulate', preset='room', seed=2, output_dir='/no/existe')

    def tearDown(self):
        self._tmp.cleanup()

    def test_list(self):
        response = self.client.get(reverse('dashboard:runs_list'))
        self.assertEqual(response.status_code, 200)
        ids = [run['id'] for run in response.json()['runs']]
        self.assertEqual(sorted(ids), sorted([self.run.id, self.sim.id]))

    def test_list_filter_by_command(self):
        response = self.client.get(reverse('dashboard:runs_list'), {'command': 'simulate'})
        runs = response.json()['runs']
        self.assertEqual(len(runs), 1)
        self.assertEqual(runs[0]['preset'], 'room')

    def test_detail_includes_trajectory(self):
        response = self.client.get(reverse('dashboard:run_detail', args=[self.run.id]))
        self.assertEqual(response.status_code, 200)
        data = response.json()
        self.assertEqual(data['config'], {'voxel_size': 0.4})
        self.assertEqual(data['trajectory'], '0.000000000 0 0 0 0 0 0 1\n')

    def test_detail_without_trajectory(self):
        response = self.client.get(f'/api/runs/{self.sim.id}/')
        self.assertIsNone(response.json()['trajectory'])

    def test_unknown_run(self):
        response = self.client.get(reverse('dashboard:run_detail', args=[9999]))
        self.assertEqual(response.status_code, 404)

    def test_read_only(self):
        response = self.client.post(reverse('dashboard:runs_list'))
        self.assertEqual(response.status_code, 405)
