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
import logging

from dataclasses import replace

import numpy as np
import yaml

from hbcsim import constants
from hbcsim import utils
from hbcsim.model import ModelConfig
from hbcsim.planner import Push

LOG = logging.getLogger(__name__ + ".experiment")

RUN_ONLY_KEYS = ('n_trials', 'workers', 'output_dir', 'bayesopt')

DEFAULTS = {
    'name': 'experiment',
    'model': None,
    'condition': 'healthy',
    'duration': 5.0,
    'n_trials': 20,
    'seed': 0,
    'jitter': 0.01,
    'workers': 1,
    'output_dir': None,
    'injury': {'muscle': 'rectus_femoris_l', 'factor': 0.3},
    'perturbation': {'count': 0, 'interval': 1.0, 'magnitude': 60.0,
                     'spread': 0.2, 'duration': 0.1},
    'planner': {},
    'exo': {},
    'bayesopt': {'budget': 100, 'repeats': 5, 'seed': 0},
}


class ExperimentConfig(object):
    """An object for encapsulating an experiment file

    .. code-block:: yaml

        name: injured-pushes
        condition: injured
        duration: 5.0
        n_trials: 20
        seed: 0
        injury:
          muscle: rectus_femoris_l
          factor: 0.3
        perturbation:
          count: 3
          interval: 1.0
          magnitude: 60.0
          spread: 0.2

    Missing keys take the defaults above. ``overrides`` maps dotted keys to
    values, e.g. ``{'perturbation.count': 3}``.
    """

    def __init__(self, experiment_path=None, data=None, overrides=None):
        self.path = experiment_path or constants.DEFAULT_EXPERIMENT_CONFIG
        if data is None:
            data = self._get_content(self.path)
        merged = utils.apply_overrides(DEFAULTS, {})
        for key, value in (data or {}).items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key].update(value)
            else:
                merged[key] = value
        self.data = utils.apply_overrides(merged, overrides)
        self._model = None

    def _get_content(self, path):
        try:
            with open(path, 'r') as exp_file:
                return yaml.safe_load(exp_file) or {}
        except IOError:
            raise IOError("Experiment file {} not found".format(path))

    def with_overrides(self, overrides):
        """Return a new configuration with extra overrides applied"""
        return ExperimentConfig(experiment_path=self.path, data=self.data,
                                overrides=overrides)

    @property
    def get_data(self):
        return self.data

    @property
    def name(self):
        return self.data['name']

    @property
    def condition(self):
        return self.data['condition']

    @property
    def injured(self):
        return 'injured' in self.condition.split('+')

    @property
    def assisted(self):
        return 'exo' in self.condition.split('+')

    @property
    def duration(self):
        return float(self.data['duration'])

    @property
    def n_trials(self):
        return int(self.data['n_trials'])

    @property
    def seed(self):
        return int(self.data['seed'])

    @property
    def jitter(self):
        return float(self.data['jitter'])

    @property
    def workers(self):
        return int(self.data['workers'])

    @property
    def output_dir(self):
        return self.data['output_dir']

    @property
    def injury(self):
        return dict(self.data['injury'])

    @property
    def perturbation(self):
        return dict(self.data['perturbation'])

    @property
    def bayesopt(self):
        return dict(self.data['bayesopt'])

    @property
    def model_config(self):
        """The :class:`ModelConfig` the experiment runs on"""
        if self._model is None:
            self._model = ModelConfig(model_path=self.data['model'])
        return self._model

    @property
    def planner_config(self):
        """Model planner settings with the experiment overrides applied"""
        base = self.model_config.get_planner_config
        return replace(base, **self.data['planner'])

    @property
    def exo_params(self):
        base = self.model_config.get_exo_params
        return replace(base, **{k: float(v)
                                for k, v in self.data['exo'].items()})

    @property
    def config_hash(self):
        """Hash of what shapes a single trial

        Batch size, worker count, output location and the BO section do not
        enter it.
        """
        trial = {k: v for k, v in self.data.items()
                 if k not in RUN_ONLY_KEYS}
        return utils.config_hash(trial, self.model_config.get_data)

    def pushes(self, trial_seed):
        """Perturbation schedule of one trial

        Push ``i`` starts at ``interval * (i + 1)``. Its sign along x and its
        magnitude, uniform within ``magnitude * (1 +- spread)``, are drawn
        from a stream seeded by the trial seed.

        :rtype: ``list`` of :class:`hbcsim.planner.Push`
        """
        cfg = self.perturbation
        count = int(cfg.get('count', 0))
        if count <= 0:
            return []
        rng = np.random.default_rng([int(trial_seed), 1])
        signs = rng.choice([-1.0, 1.0], size=count)
        spread = float(cfg.get('spread', 0.0))
        magnitudes = float(cfg.get('magnitude', 60.0)) * rng.uniform(
            1.0 - spread, 1.0 + spread, size=count)
        return [Push(t_start=float(cfg.get('interval', 1.0)) * (i + 1),
                     duration=float(cfg.get('duration', 0.1)),
                     force=(float(sign * magnitude), 0.0))
                for i, (sign, magnitude) in enumerate(zip(signs,
                                                          magnitudes))]

    def validate(self):
        """Check the experiment and its model

        :return: The list of problems found, empty when valid
        :rtype: ``list``
        """
        errors = []
        parts = self.condition.split('+')
        if self.condition not in constants.CONDITIONS and \
                not set(parts) <= {'healthy', 'injured', 'exo'}:
            errors.append('unknown condition {}'.format(self.condition))
        if self.duration <= 0:
            errors.append('duration must be > 0')
        if self.n_trials < 1:
            errors.append('n_trials must be >= 1')
        if self.workers < 1:
            errors.append('workers must be >= 1')
        if self.jitter < 0:
            errors.append('jitter must be >= 0')
        pert = self.perturbation
        if int(pert.get('count', 0)) < 0:
            errors.append('perturbation count must be >= 0')
        if float(pert.get('interval', 1.0)) <= 0:
            errors.append('perturbation interval must be > 0')
        if float(pert.get('duration', 0.1)) <= 0:
            errors.append('perturbation duration must be > 0')
        if not 0.0 <= float(pert.get('spread', 0.0)) < 1.0:
            errors.append('perturbation spread must lie in [0, 1)')
        factor = float(self.injury.get('factor', 1.0))
        if not 0.0 <= factor <= 1.0:
            errors.append('injury factor must lie in [0, 1]')
        try:
            errors.extend(self.model_config.validate())
            if self.injury.get('muscle') not in \
                    self.model_config.get_model_spec.muscle_names:
                errors.append('unknown injured muscle {}'.format(
                    self.injury.get('muscle')))
            errors.extend(self.planner_config.validate())
            errors.extend(self.exo_params.validate())
        except (IOError, TypeError, ValueError) as e:
            errors.append(str(e))
        return errors
