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
from unittest import TestCase

from hbcsim.experiment import ExperimentConfig
from hbcsim.tests import fakes


class TestExperimentConfig(TestCase):

    def setUp(self):
        super(TestExperimentConfig, self).setUp()

    def test_shipped_experiment(self):
        config = ExperimentConfig()
        self.assertEqual(config.name, 'standing')
        self.assertEqual(config.condition, 'healthy')
        self.assertEqual(config.duration, 5.0)
        self.assertEqual(config.n_trials, 20)
        self.assertEqual(config.validate(), [])

    def test_defaults_fill_missing_keys(self):
        config = ExperimentConfig(data={'name': 'short', 'duration': 1.0})
        self.assertEqual(config.n_trials, 20)
        self.assertEqual(config.injury, {'muscle': 'rectus_femoris_l',
                                         'factor': 0.3})
        self.assertEqual(config.perturbation['count'], 0)
        self.assertEqual(config.bayesopt['budget'], 100)

    def test_nested_sections_are_merged(self):
        config = ExperimentConfig(data={'injury': {'factor': 0.5}})
        self.assertEqual(config.injury, {'muscle': 'rectus_femoris_l',
                                         'factor': 0.5})

    def test_overrides(self):
        config = ExperimentConfig(data=fakes.FAKE_EXPERIMENT,
                                  overrides={'n_trials': 7,
                                             'perturbation.count': 2})
        self.assertEqual(config.n_trials, 7)
        self.assertEqual(config.perturbation['count'], 2)
        self.assertEqual(config.perturbation['magnitude'], 60.0)
        again = config.with_overrides({'seed': 11})
        self.assertEqual(again.seed, 11)
        self.assertEqual(again.n_trials, 7)
        self.assertEqual(config.seed, 3)

    def test_conditions(self):
        cases = {'healthy': (False, False), 'injured': (True, False),
                 'exo': (False, True), 'injured+exo': (True, True)}
        for condition, (injured, assisted) in cases.items():
            config = ExperimentConfig(data={'condition': condition})
            self.assertEqual(config.injured, injured, condition)
            self.assertEqual(config.assisted, assisted, condition)

    def test_pushes(self):
        config = ExperimentConfig(data={'perturbation': {'count': 3}})
        pushes = config.pushes(5)
        self.assertEqual([p.t_start for p in pushes], [1.0, 2.0, 3.0])
        for push in pushes:
            self.assertEqual(push.duration, 0.1)
            self.assertGreaterEqual(abs(push.force[0]), 48.0)
            self.assertLessEqual(abs(push.force[0]), 72.0)
            self.assertEqual(push.force[1], 0.0)
        self.assertEqual(pushes, config.pushes(5))
        self.assertGreater(len({abs(p.force[0]) for p in pushes}), 1)

    def test_pushes_without_spread(self):
        config = ExperimentConfig(data={'perturbation': {'count': 3,
                                                         'spread': 0.0}})
        for push in config.pushes(5):
            self.assertIn(push.force[0], (-60.0, 60.0))

    def test_validate_spread(self):
        config = ExperimentConfig(data={'perturbation': {'spread': 1.5}})
        self.assertEqual(config.validate(),
                         ['perturbation spread must lie in [0, 1)'])

    def test_push_signs_vary_with_seed(self):
        config = ExperimentConfig(data={'perturbation': {'count': 8}})
        signs = {tuple(p.force[0] for p in config.pushes(seed))
                 for seed in range(10)}
        self.assertGreater(len(signs), 1)

    def test_no_pushes(self):
        self.assertEqual(ExperimentConfig(data={}).pushes(0), [])

    def test_planner_and_exo_overrides(self):
        config = ExperimentConfig(data={'planner': {'n': 8, 'k': 2},
                                        'exo': {'w': 1}})
        planner = config.planner_config
        self.assertEqual((planner.n, planner.k, planner.h), (8, 2, 32))
        self.assertEqual(config.exo_params.w, 1.0)
        self.assertEqual(config.exo_params.k_pe, 100.0)

    def test_validate(self):
        config = ExperimentConfig(data={'condition': 'flying',
                                        'duration': 0,
                                        'n_trials': 0,
                                        'injury': {'factor': 2.0}})
        errors = config.validate()
        self.assertIn('unknown condition flying', errors)
        self.assertIn('duration must be > 0', errors)
        self.assertIn('n_trials must be >= 1', errors)
        self.assertIn('injury factor must lie in [0, 1]', errors)

    def test_validate_unknown_muscle(self):
        config = ExperimentConfig(data={'injury': {'muscle': 'biceps_l'}})
        self.assertEqual(config.validate(),
                         ['unknown injured muscle biceps_l'])

    def test_validate_bad_planner(self):
        config = ExperimentConfig(data={'planner': {'k': 64}})
        self.assertEqual(len(config.validate()), 1)

    def test_validate_unknown_planner_key(self):
        config = ExperimentConfig(data={'planner': {'particles': 8}})
        self.assertEqual(len(config.validate()), 1)

    def test_config_hash(self):
        first = ExperimentConfig(data=fakes.FAKE_EXPERIMENT)
        second = ExperimentConfig(data=fakes.FAKE_EXPERIMENT)
        self.assertEqual(first.config_hash, second.config_hash)
        self.assertNotEqual(first.config_hash,
                            first.with_overrides({'seed': 4}).config_hash)

    @mock.patch('six.moves.builtins.open')
    def test_missing_file(self, mock_open):
        mock_open.side_effect = IOError()
        self.assertRaises(IOError, ExperimentConfig, '/tmp/missing.yaml')
