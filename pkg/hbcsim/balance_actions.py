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
import csv
import logging
import os
import uuid

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
import yaml

from hbcsim import analysis
from hbcsim import constants
from hbcsim import utils
from hbcsim.bayesopt import bo_optimize
from hbcsim.biped import Biped, apply_injury, initial_state
from hbcsim.exceptions import PlanningFailure
from hbcsim.experiment import ExperimentConfig
from hbcsim.model import ModelConfig
from hbcsim.planner import HbcPlanner
from hbcsim.trial_logs import TrialLog, TrialLogs

LOG = logging.getLogger(__name__ + ".balance_actions")

METRICS = ('duration', 'success', 'cost', 'rf_force', 'hip_extensor_act')


def run_trial(config, trial_seed, exo=None):
    """Run one closed-loop standing trial

    :param config: The experiment
    :type config: :class:`hbcsim.experiment.ExperimentConfig`
    :param trial_seed: Seeds the initial jitter, the pushes and the planner
    :param exo: Exoskeleton parameters overriding the configured ones
    :return: The classified outcome and the trial log
    :rtype: ``tuple``
    """
    model_cfg = config.model_config
    spec = model_cfg.get_model_spec
    if config.injured:
        injury = config.injury
        spec = apply_injury(spec, injury['muscle'], float(injury['factor']))
    timing = model_cfg.get_timing
    biped = Biped(spec, dt=timing['dt'])
    if exo is None and config.assisted:
        exo = config.exo_params
    planner = HbcPlanner(biped, model_cfg.get_pd_gains,
                         replace(config.planner_config, seed=int(trial_seed)),
                         weights=model_cfg.get_cost_weights,
                         control_dt=timing['control_dt'],
                         log_dt=timing['log_dt'], exo=exo)
    rng = np.random.default_rng([int(trial_seed), 0])
    state = initial_state(spec, jitter=config.jitter, rng=rng)
    steps = max(1, int(round(config.duration / timing['control_dt'])))
    log = TrialLog(header={
        'config_hash': config.config_hash,
        'condition': config.condition,
        'seed': int(trial_seed),
        'dt': planner.log_dt,
        'muscle_names': list(spec.muscle_names),
        'exo': exo.to_dict() if exo is not None else None,
        'created': utils.current_time(),
    })
    LOG.debug("Starting {} trial with seed {}".format(config.condition,
                                                      trial_seed))
    try:
        _controls, log, _events = planner.hbc_run(
            state, steps, config.pushes(trial_seed), log)
    except PlanningFailure as e:
        LOG.warning("Planning failed in trial {}: {}".format(trial_seed, e))
        log.mark_fault('planning', str(e))
    outcome = analysis.classify(log)
    log.footer['outcome'] = outcome.classification
    LOG.debug("Trial {} finished: {}".format(trial_seed,
                                             outcome.classification))
    return outcome, log


def _trial_worker(task):
    config, trial_seed, exo = task
    try:
        return run_trial(config, trial_seed, exo)
    except Exception as e:
        LOG.exception("Trial {} failed unexpectedly".format(trial_seed))
        log = TrialLog(header={'config_hash': config.config_hash,
                               'condition': config.condition,
                               'seed': int(trial_seed)})
        log.mark_fault('error', str(e))
        return analysis.classify(log), log


def run_trials(config, seeds, exo=None, workers=1):
    """Run independent trials, results ordered as ``seeds``"""
    tasks = [(config, seed, exo) for seed in seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_trial_worker, tasks))
    return [_trial_worker(task) for task in tasks]


def trial_metric(metric, outcome, log):
    """Scalar per-trial metric used by batch comparisons"""
    if metric == 'duration':
        return analysis.standing_duration(log, outcome)
    if metric == 'success':
        return float(outcome.classification == analysis.BALANCED)
    if metric == 'cost':
        return float(log.footer.get('cumulative_cost', np.nan))
    act, force = analysis.muscle_summary([log])
    if metric == 'rf_force':
        return float(force.get('rectus_femoris_r', np.nan))
    if metric == 'hip_extensor_act':
        return float(np.mean([act.get('hip_extensor_r', np.nan),
                              act.get('hip_extensor_l', np.nan)]))
    raise ValueError("Unknown metric {}, expected one of {}".format(
        metric, METRICS))


class BalanceActions(object):
    """An object for encapsulating the balance experiment actions

    This class allows the possibility to execute the following actions:

    - Run a single standing trial
    - Run a seeded batch of trials and summarize it
    - Optimize the exoskeleton parameters
    - Analyze a directory of trial logs
    - Compare two batches with a rank-sum test
    - Validate model and experiment files

    """

    def __init__(self, config=None, workers=None):
        self.log = logging.getLogger(__name__ + ".BalanceActions")
        self.config = config if config is not None else ExperimentConfig()
        self.workers = workers if workers else self.config.workers

    def _artifacts_dir(self, prefix=None):
        _uuid, log_dir = utils.create_artifacts_dir(
            dir_path=self.config.output_dir,
            prefix=prefix or self.config.name)
        return log_dir

    def _write_logs(self, results, log_dir):
        paths = []
        for outcome, log in results:
            name = utils.trial_log_name(str(uuid.uuid4()),
                                        log.header.get('condition',
                                                       self.config.condition))
            paths.append(log.write(os.path.join(log_dir, name)))
        return paths

    def run_trial(self, seed=None, log_dir=None):
        """Run and persist one trial

        :return: The trial outcome, its log and the log file path
        :rtype: ``tuple``
        """
        self.log = logging.getLogger(__name__ + ".run_trial")
        seed = self.config.seed if seed is None else seed
        outcome, log = run_trial(self.config, seed)
        log_dir = log_dir or self._artifacts_dir()
        path = self._write_logs([(outcome, log)], log_dir)[0]
        return outcome, log, path

    def run_batch(self, log_dir=None, write=True):
        """Run ``n_trials`` trials with seeds ``seed + i``

        Logs, a per-trial records CSV and a summary CSV are written to the
        artifacts directory when ``write`` is set.

        :return: The batch summary and the ``(outcome, log)`` results in
                 trial order
        :rtype: ``tuple``
        """
        self.log = logging.getLogger(__name__ + ".run_batch")
        config = self.config
        seeds = [config.seed + i for i in range(config.n_trials)]
        self.log.debug("Running {} {} trials on {} workers".format(
            len(seeds), config.condition, self.workers))
        results = run_trials(config, seeds, workers=self.workers)
        outcomes = [r[0] for r in results]
        logs = [r[1] for r in results]
        summary = analysis.summarize_batch(outcomes, logs)
        if write:
            log_dir = log_dir or self._artifacts_dir()
            self._write_logs(results, log_dir)
            self.write_records(os.path.join(log_dir, 'records.csv'),
                               seeds, results)
            self.write_summary(os.path.join(log_dir, 'summary.csv'), summary)
            self.log.debug("Batch artifacts written to {}".format(log_dir))
        return summary, results

    @staticmethod
    def write_records(path, seeds, results):
        with open(path, 'w', newline='') as csv_file:
            writer = csv.writer(csv_file)
            writer.writerow(['trial', 'seed', 'outcome', 'init_event_t',
                             'contact_event_t', 'fall_duration',
                             'collision_segment', 'collision_x',
                             'standing_duration', 'cumulative_cost'])
            for index, (seed, (outcome, log)) in enumerate(zip(seeds,
                                                               results)):
                record = outcome.record
                writer.writerow([
                    index, seed, outcome.classification,
                    record.init_event_t, record.contact_event_t,
                    record.fall_duration, record.collision_segment,
                    record.collision_x,
                    analysis.standing_duration(log, outcome),
                    log.footer.get('cumulative_cost')])
        return path

    @staticmethod
    def write_summary(path, summary):
        with open(path, 'w', newline='') as csv_file:
            writer = csv.writer(csv_file)
            writer.writerow(['key', 'value'])
            data = summary.to_dict()
            for key in ('n_trials', 'n_balanced', 'n_fell', 'n_fault',
                        'success_rate', 'mean_duration'):
                writer.writerow([key, data[key]])
            for name, value in sorted(data['mean_activation'].items()):
                writer.writerow(['mean_activation.' + name, value])
            for name, value in sorted(data['mean_force'].items()):
                writer.writerow(['mean_force.' + name, value])
        return path

    def optimize_exo(self, budget=None, repeats=None, seed=None,
                     log_dir=None):
        """Bayesian optimization of the exoskeleton parameters

        Each candidate is scored by the negative cumulative cost of the
        executed trajectory, averaged over ``repeats`` trials sharing the
        same seeds. A trial ending in a fault makes the evaluation fail.

        :return: The best parameters and the :class:`BoHistory`
        :rtype: ``tuple``
        """
        self.log = logging.getLogger(__name__ + ".optimize_exo")
        settings = self.config.bayesopt
        budget = int(budget or settings.get('budget', 100))
        repeats = int(repeats or settings.get('repeats', 5))
        seed = int(settings.get('seed', 0) if seed is None else seed)
        config = self.config
        if not config.assisted:
            config = config.with_overrides({'condition': 'exo'})
        model_cfg = config.model_config
        box = model_cfg.get_param_box
        tau_max = config.exo_params.tau_max
        seeds = [config.seed + r for r in range(repeats)]

        def objective(x):
            params = box.to_params(x, tau_max=tau_max)
            results = run_trials(config, seeds, exo=params,
                                 workers=self.workers)
            faults = [log.fault for _outcome, log in results if log.fault]
            if faults:
                raise RuntimeError("{} of {} trials faulted ({})".format(
                    len(faults), len(results), ', '.join(faults)))
            return -float(np.mean([log.footer['cumulative_cost']
                                   for _outcome, log in results]))

        x_best, history = bo_optimize(objective, budget,
                                      model_cfg.get_gp_config, seed,
                                      dim=box.dim)
        best = box.to_params(x_best, tau_max=tau_max)
        log_dir = log_dir or self._artifacts_dir(prefix='exo-optimize')
        history.write_csv(os.path.join(log_dir, 'bo_history.csv'), box)
        with open(os.path.join(log_dir, 'exo_params.yaml'), 'w') as out:
            yaml.safe_dump({'exo': best.to_dict()}, out,
                           default_flow_style=False)
        self.log.debug("Best exoskeleton parameters: {}".format(best))
        return best, history

    def analyze(self, logs_path, condition=None, check_hash=True,
                bins=None, mass=None, output_dir=None):
        """Summarize a directory of trial logs

        Writes ``balance_region.csv`` and ``collisions.csv`` next to the
        logs (or in ``output_dir``). Logs written under another experiment
        configuration are refused unless ``check_hash`` is ``False``.

        :return: Summary, balance region (``None`` without balanced
                 trials), collision counts and positions
        :rtype: ``dict``
        :raises: a :class:`hbcsim.exceptions.LogFormatError` for a log of
                 another configuration
        """
        self.log = logging.getLogger(__name__ + ".analyze")
        options = self.config.model_config.get_analysis_options
        bins = bins or options['bins']
        mass = mass or options['balance_mass']
        config_hash = None
        if check_hash:
            expected = (self.config.with_overrides({'condition': condition})
                        if condition else self.config)
            config_hash = expected.config_hash
        files = TrialLogs(logs_path).load(condition=condition,
                                          config_hash=config_hash)
        if not files:
            raise RuntimeError("No trial log found in {}".format(logs_path))
        logs = [f.log for f in files]
        outcomes = [analysis.classify(log) for log in logs]
        summary = analysis.summarize_batch(outcomes, logs)
        output_dir = output_dir or logs_path
        try:
            region = analysis.balance_region(logs, bins=bins, mass=mass)
            analysis.write_histogram_csv(
                region, os.path.join(output_dir, 'balance_region.csv'))
        except ValueError as e:
            self.log.warning(str(e))
            region = None
        fell = [o.record for o in outcomes
                if o.classification == analysis.FELL]
        counts, positions = analysis.collision_stats(fell)
        analysis.write_collision_csv(counts, positions,
                                     os.path.join(output_dir,
                                                  'collisions.csv'))
        return {'summary': summary, 'region': region,
                'collisions': counts, 'positions': positions,
                'files': [f.path for f in files]}

    def compare(self, other, metric='duration', alternative='greater',
                write=False):
        """Run this batch and ``other`` and rank-sum test a metric

        :param other: The second experiment
        :type other: :class:`hbcsim.experiment.ExperimentConfig`
        :param metric: One of ``METRICS``
        :param alternative: Direction tested, ``greater`` means this batch
                            tends to exceed ``other``
        :rtype: ``dict``
        """
        self.log = logging.getLogger(__name__ + ".compare")
        if metric not in METRICS:
            raise ValueError("Unknown metric {}, expected one of {}".format(
                metric, METRICS))
        first, first_results = self.run_batch(write=write)
        second, second_results = BalanceActions(
            other, workers=self.workers).run_batch(write=write)
        a = [trial_metric(metric, o, log) for o, log in first_results]
        b = [trial_metric(metric, o, log) for o, log in second_results]
        statistic, pvalue = analysis.rank_sum_test(a, b, alternative)
        return {'metric': metric, 'alternative': alternative,
                'first': self.config.name, 'second': other.name,
                'mean_first': float(np.nanmean(a)),
                'mean_second': float(np.nanmean(b)),
                'success_first': first.success_rate,
                'success_second': second.success_rate,
                'statistic': statistic, 'pvalue': pvalue}

    @staticmethod
    def validate_config(path, kind='experiment'):
        """Load a model or experiment file and report its violations

        :return: The list of problems found, empty when valid
        :rtype: ``list``
        """
        try:
            if kind == 'model':
                return ModelConfig(model_path=path).validate()
            return ExperimentConfig(experiment_path=path).validate()
        except (IOError, yaml.YAMLError) as e:
            return [str(e)]


def exit_code(outcome, log):
    """CLI exit code of a single trial"""
    if log.fault == 'planning':
        return constants.EXIT_PLANNING_FAILURE
    if outcome.classification == analysis.FAULT:
        return constants.EXIT_NUMERICAL_FAULT
    return constants.EXIT_SUCCESS
