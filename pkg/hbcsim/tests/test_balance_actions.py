#   Copyright 2021 The hbcsim Authors.
#
#   Licensed under the Apache License, Version 2.0 (the "License"); you may
#   not use this file except in compliance with the License. You may obtain
#   a copy of the License at
#
#        http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
#   WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
#   License for the specific language governing permissions and limitations
#   under the License.
#

try:
    from unittest import mock
except ImportError:
    import mock
import csv
import os
import shutil
import tempfile
from unittest import TestCase

import numpy as np
import yaml

from hbcsim import analysis
from hbcsim import constants
from hbcsim import utils
from hbcsim.balance_actions import (BalanceActions, _trial_worker,
                                    exit_code, run_trial, trial_metric)
from hbcsim.bayesopt import BoHistory
from hbcsim.exceptions import LogFormatError, PlanningFailure
from hbcsim.experiment import ExperimentConfig
from hbcsim.tests import fakes


def classified(*logs):
    return [(analysis.classify(log), log) for log in logs]


class TestRunTrial(TestCase):

    def setUp(self):
        super(TestRunTrial, self).setUp()
        self.config = ExperimentConfig(data=fakes.FAKE_EXPERIMENT)

    def test_short_trial(self):
        outcome, log = run_trial(self.config, 3)
        self.assertEqual(log.header['seed'], 3)
        self.assertEqual(log.header['condition'], 'healthy')
        self.assertEqual(log.header['config_hash'], self.config.config_hash)
        self.assertEqual(len(log.header['muscle_names']), fakes.N_MUSCLES)
        self.assertIsNone(log.header['exo'])
        self.assertEqual(len(log), 26)
        self.assertEqual(log.footer['planning_events'], 1)
        self.assertEqual(log.footer['outcome'], outcome.classification)
        self.assertIn(outcome.classification, constants.OUTCOMES)

    def test_trial_is_deterministic(self):
        _outcome, first = run_trial(self.config, 5)
        _outcome, second = run_trial(self.config, 5)
        self.assertEqual(first.frames, second.frames)

    def test_assisted_trial_logs_exo(self):
        config = self.config.with_overrides({'condition': 'injured+exo'})
        _outcome, log = run_trial(config, 3)
        self.assertEqual(log.header['exo']['k_pe'], 100.0)
        self.assertEqual(log.header['condition'], 'injured+exo')

    @mock.patch('hbcsim.planner.HbcPlanner.hbc_run',
                side_effect=PlanningFailure('no finite rollout cost'))
    def test_planning_failure(self, mock_run):
        outcome, log = run_trial(self.config, 3)
        self.assertEqual(log.fault, 'planning')
        self.assertEqual(outcome.classification, analysis.FAULT)
        self.assertEqual(exit_code(outcome, log),
                         constants.EXIT_PLANNING_FAILURE)

    @mock.patch('hbcsim.balance_actions.run_trial',
                side_effect=ValueError('broken'))
    def test_worker_reports_errors(self, mock_run):
        with self.assertLogs('hbcsim.balance_actions', level='ERROR'):
            outcome, log = _trial_worker((self.config, 4, None))
        self.assertEqual(log.fault, 'error')
        self.assertEqual(log.header['seed'], 4)
        self.assertEqual(outcome.classification, analysis.FAULT)

    def test_exit_code(self):
        log = fakes.balanced_log()
        self.assertEqual(exit_code(analysis.classify(log), log),
                         constants.EXIT_SUCCESS)
        log = fakes.fall_log()
        self.assertEqual(exit_code(analysis.classify(log), log),
                         constants.EXIT_SUCCESS)
        log.mark_fault('numerical', 'nan')
        self.assertEqual(exit_code(analysis.classify(log), log),
                         constants.EXIT_NUMERICAL_FAULT)


class TestTrialMetric(TestCase):

    def test_metrics(self):
        (outcome, log), = classified(fakes.balanced_log(act=0.2,
                                                         force=300.0))
        self.assertEqual(trial_metric('success', outcome, log), 1.0)
        self.assertEqual(trial_metric('cost', outcome, log), 12.5)
        self.assertAlmostEqual(trial_metric('duration', outcome, log),
                               99 * fakes.LOG_DT)
        self.assertAlmostEqual(trial_metric('rf_force', outcome, log), 300.0)
        self.assertAlmostEqual(trial_metric('hip_extensor_act', outcome,
                                            log), 0.2)
        self.assertRaises(ValueError, trial_metric, 'speed', outcome, log)


class TestBalanceActions(TestCase):

    def setUp(self):
        super(TestBalanceActions, self).setUp()
        self.tmp = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmp)
        self.config = ExperimentConfig(data=fakes.FAKE_EXPERIMENT)

    @mock.patch('hbcsim.balance_actions.run_trials')
    def test_run_batch(self, mock_trials):
        mock_trials.return_value = classified(fakes.balanced_log(),
                                              fakes.fall_log())
        actions = BalanceActions(self.config)
        summary, results = actions.run_batch(log_dir=self.tmp)
        mock_trials.assert_called_once_with(self.config, [3, 4], workers=1)
        self.assertEqual((summary.n_balanced, summary.n_fell), (1, 1))
        self.assertEqual(len(results), 2)
        names = os.listdir(self.tmp)
        self.assertEqual(len([n for n in names if n.endswith('.jsonl')]), 2)
        with open(os.path.join(self.tmp, 'records.csv')) as csv_file:
            rows = list(csv.reader(csv_file))
        self.assertEqual(len(rows), 3)
        self.assertEqual(rows[1][:3], ['0', '3', analysis.BALANCED])
        self.assertEqual(rows[2][2], analysis.FELL)
        self.assertEqual(rows[2][6], 'pelvis')
        with open(os.path.join(self.tmp, 'summary.csv')) as csv_file:
            rows = dict(csv.reader(csv_file))
        self.assertEqual(rows['n_trials'], '2')
        self.assertEqual(float(rows['success_rate']), 0.5)

    @mock.patch('hbcsim.utils.create_artifacts_dir')
    @mock.patch('hbcsim.balance_actions.run_trials')
    def test_run_batch_without_writing(self, mock_trials, mock_dir):
        mock_trials.return_value = classified(fakes.balanced_log())
        BalanceActions(self.config, workers=3).run_batch(write=False)
        mock_dir.assert_not_called()
        self.assertEqual(mock_trials.call_args[1]['workers'], 3)

    @mock.patch('hbcsim.utils.create_artifacts_dir')
    def test_run_trial_writes_log(self, mock_dir):
        mock_dir.return_value = ('1234', self.tmp)
        outcome, log, path = BalanceActions(self.config).run_trial()
        self.assertEqual(os.path.dirname(path), self.tmp)
        self.assertTrue(os.path.basename(path).endswith('.jsonl'))
        self.assertEqual(log.header['seed'], 3)
        mock_dir.assert_called_once_with(dir_path=None, prefix='fake')

    @mock.patch('hbcsim.balance_actions.run_trials')
    @mock.patch('hbcsim.balance_actions.bo_optimize')
    def test_optimize_exo(self, mock_bo, mock_trials):
        mock_trials.return_value = classified(fakes.balanced_log(),
                                              fakes.fall_log())
        scores = []

        def fake_bo(objective, budget, gp_config, seed, dim):
            x = np.full(dim, 0.5)
            scores.append(objective(x))
            history = BoHistory()
            history.add(x, scores[-1])
            return x, history

        mock_bo.side_effect = fake_bo
        best, history = BalanceActions(self.config).optimize_exo(
            budget=1, repeats=2, seed=9, log_dir=self.tmp)
        self.assertEqual(scores, [-(12.5 + 900.0) / 2])
        self.assertEqual(mock_bo.call_args[0][1:2], (1,))
        self.assertEqual(mock_bo.call_args[0][3], 9)
        config, seeds = mock_trials.call_args[0]
        self.assertEqual(config.condition, 'exo')
        self.assertEqual(seeds, [3, 4])
        exo = mock_trials.call_args[1]['exo']
        self.assertAlmostEqual(exo.k_dt, 0.1 * exo.k_pt)
        self.assertEqual(best.w, 0.5)
        self.assertEqual(len(history), 1)
        self.assertTrue(os.path.isfile(os.path.join(self.tmp,
                                                    'bo_history.csv')))
        with open(os.path.join(self.tmp, 'exo_params.yaml')) as exo_file:
            saved = yaml.safe_load(exo_file)
        self.assertEqual(saved['exo']['w'], 0.5)

    @mock.patch('hbcsim.balance_actions.run_trials')
    @mock.patch('hbcsim.balance_actions.bo_optimize')
    def test_optimize_exo_fault_fails_evaluation(self, mock_bo,
                                                 mock_trials):
        log = fakes.balanced_log()
        log.mark_fault('numerical', 'nan')
        mock_trials.return_value = classified(log)

        def fake_bo(objective, budget, gp_config, seed, dim):
            self.assertRaises(RuntimeError, objective, np.full(dim, 0.5))
            return np.full(dim, 0.5), BoHistory()

        mock_bo.side_effect = fake_bo
        BalanceActions(self.config).optimize_exo(budget=1, repeats=1,
                                                 log_dir=self.tmp)
        self.assertTrue(mock_bo.called)

    def _write_logs(self, logs, stamp=True):
        for i, log in enumerate(logs):
            if stamp:
                log.header['config_hash'] = self.config.with_overrides(
                    {'condition': log.header['condition']}).config_hash
            log.write(os.path.join(self.tmp, utils.trial_log_name(
                str(i), log.header['condition'])))

    def test_analyze(self):
        self._write_logs([fakes.balanced_log() for _ in range(3)] +
                         [fakes.fall_log(), fakes.fall_log(segment='head',
                                                           collision_x=0.9)])
        result = BalanceActions(self.config).analyze(self.tmp, bins=10)
        summary = result['summary']
        self.assertEqual((summary.n_trials, summary.n_balanced,
                          summary.n_fell), (5, 3, 2))
        self.assertEqual(result['collisions']['pelvis'], 1)
        self.assertEqual(result['collisions']['head'], 1)
        self.assertEqual(result['positions']['head'], [0.9])
        self.assertEqual(len(result['files']), 5)
        self.assertIsNotNone(result['region'])
        self.assertGreater(result['region'].mass, 0.68 - 1e-9)
        for name in ('balance_region.csv', 'collisions.csv'):
            self.assertTrue(os.path.isfile(os.path.join(self.tmp, name)))

    def test_analyze_without_balanced_trials(self):
        self._write_logs([fakes.fall_log()])
        with self.assertLogs('hbcsim.balance_actions', level='WARNING'):
            result = BalanceActions(self.config).analyze(self.tmp)
        self.assertIsNone(result['region'])
        self.assertFalse(os.path.exists(os.path.join(self.tmp,
                                                     'balance_region.csv')))

    def test_analyze_by_condition(self):
        self._write_logs([fakes.balanced_log(),
                          fakes.fall_log(condition='injured')])
        result = BalanceActions(self.config).analyze(self.tmp,
                                                     condition='injured')
        self.assertEqual(result['summary'].n_trials, 1)

    def test_analyze_refuses_other_configuration(self):
        self._write_logs([fakes.balanced_log()], stamp=False)
        actions = BalanceActions(self.config)
        self.assertRaises(LogFormatError, actions.analyze, self.tmp)
        result = actions.analyze(self.tmp, check_hash=False)
        self.assertEqual(result['summary'].n_trials, 1)

    def test_analyze_ignores_run_only_keys(self):
        self._write_logs([fakes.balanced_log()])
        actions = BalanceActions(self.config.with_overrides(
            {'workers': 4, 'n_trials': 50, 'output_dir': self.tmp}))
        self.assertEqual(actions.analyze(self.tmp)['summary'].n_trials, 1)

    def test_analyze_output_dir(self):
        self._write_logs([fakes.balanced_log(), fakes.fall_log()])
        output_dir = os.path.join(self.tmp, 'out')
        os.mkdir(output_dir)
        BalanceActions(self.config).analyze(self.tmp, output_dir=output_dir)
        self.assertEqual(sorted(os.listdir(output_dir)),
                         ['balance_region.csv', 'collisions.csv'])

    def test_analyze_empty_directory(self):
        self.assertRaises(RuntimeError, BalanceActions(self.config).analyze,
                          self.tmp)

    def test_compare(self):
        longer = classified(*[fakes.balanced_log(frames=600)
                              for _ in range(8)])
        shorter = classified(*[fakes.fall_log(frames=300,
                                              contact=100 + 10 * i)
                               for i in range(8)])
        with mock.patch.object(BalanceActions, 'run_batch') as mock_batch:
            mock_batch.side_effect = [
                (analysis.summarize_batch(*zip(*longer)), longer),
                (analysis.summarize_batch(*zip(*shorter)), shorter)]
            other = self.config.with_overrides({'name': 'injured',
                                                'condition': 'injured'})
            result = BalanceActions(self.config).compare(other)
        self.assertEqual(result['first'], 'fake')
        self.assertEqual(result['second'], 'injured')
        self.assertLess(result['pvalue'], 0.05)
        self.assertAlmostEqual(result['mean_first'], 599 * fakes.LOG_DT)
        self.assertEqual(result['success_first'], 1.0)
        self.assertEqual(result['success_second'], 0.0)

    def test_compare_unknown_metric(self):
        self.assertRaises(ValueError, BalanceActions(self.config).compare,
                          self.config, metric='speed')

    def test_validate_config(self):
        self.assertEqual(BalanceActions.validate_config(
            constants.DEFAULT_EXPERIMENT_CONFIG), [])
        self.assertEqual(BalanceActions.validate_config(
            constants.DEFAULT_MODEL_CONFIG, kind='model'), [])
        errors = BalanceActions.validate_config(
            os.path.join(self.tmp, 'missing.yaml'))
        self.assertEqual(len(errors), 1)
