#!/usr/bin/env python

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

import argparse
import json
import logging
import sys

import numpy as np
import yaml
from prettytable import PrettyTable

from hbcsim import constants
from hbcsim import utils
from hbcsim.balance_actions import METRICS, BalanceActions, exit_code
from hbcsim.exceptions import LogFormatError, NumericalFault, PlanningFailure
from hbcsim.experiment import ExperimentConfig

DESCRIPTION = "Run, analyze or tune balance control experiments."
EPILOG = "Example: hbcsim batch --set n_trials=5 --set condition=injured"
# PrettyTable
RED = "\033[1;31m"
GREEN = "\033[0;32m"
CYAN = "\033[36m"
RESET = "\033[0;0m"

COLORS = {'Balanced': GREEN, 'Fell': RED, 'NumericalFault': CYAN}


class HbcClient(argparse.ArgumentParser):
    """Balance client implementation class"""

    log = logging.getLogger(__name__ + ".HbcClient")

    def __init__(self, description=DESCRIPTION, epilog=EPILOG, **kwargs):
        """Init balance parser"""
        super(HbcClient, self).__init__(description=description,
                                        epilog=epilog, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(constants.EXIT_USAGE,
                  '{}: error: {}\n'.format(self.prog, message))

    def _print_dict_table(self, data):
        """Print table from python dict with PrettyTable"""
        t = PrettyTable(border=True, header=True, padding_width=1)
        t.field_names = list(data[0].keys())
        t.align = 'l'
        for r in data:
            r = dict(r)
            if r.get('Outcome'):
                color = COLORS.get(r['Outcome'], RED)
                r['Outcome'] = '{}{}{}'.format(color, r['Outcome'], RESET)
            t.add_row(list(r.values()))
        print(t)

    def _print_tuple_table(self, data):
        """Print table from a ``(field_names, rows)`` tuple"""
        if not isinstance(data, tuple):
            raise RuntimeError("Wrong data type.")
        t = PrettyTable(border=True, header=True, padding_width=1)
        t.field_names = data[0]
        t.align = 'l'
        for r in data[1]:
            t.add_row(r)
        print(t)

    def _write_output(self, output_log, results):
        """Write output log file as Json format"""
        with open(output_log, 'w') as output:
            output.write(json.dumps({'results': results}, indent=4,
                                    sort_keys=True, default=_jsonable))

    def _report(self, parsed_args, results, table):
        if parsed_args.output_log:
            self._write_output(parsed_args.output_log, results)
        else:
            table()


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


def _add_experiment_args(parser):
    parser.add_argument('--config', '-c', dest='config', default=None,
                        help=("Path of the experiment file, the shipped "
                              "standing experiment by default."))
    parser.add_argument('--model', dest='model', default=None,
                        help="Path of the model file.")
    parser.add_argument('--set', dest='overrides', action='append',
                        metavar='KEY=VALUE', default=[],
                        help=("Override an experiment field, dotted keys "
                              "reach nested sections: "
                              "--set perturbation.count=3"))
    parser.add_argument('--seed', type=int, default=None,
                        help="Master seed of the experiment.")
    parser.add_argument('--workers', '-w', type=int, default=None,
                        help="Number of trials run concurrently.")
    parser.add_argument('--output-dir', dest='output_dir', default=None,
                        help="Directory where the artifacts are stored.")
    parser.add_argument('--output-log', dest='output_log', default=None,
                        help="Path where the results will be stored as JSON.")
    return parser


def _experiment(parsed_args, extra=None):
    overrides = utils.parse_overrides(parsed_args.overrides)
    for key, value in (('seed', parsed_args.seed),
                       ('workers', parsed_args.workers),
                       ('output_dir', parsed_args.output_dir),
                       ('model', parsed_args.model)):
        if value is not None:
            overrides[key] = value
    overrides.update(extra or {})
    config = ExperimentConfig(experiment_path=parsed_args.config,
                              overrides=overrides)
    errors = config.validate()
    if errors:
        raise ValueError("Invalid experiment: {}".format('; '.join(errors)))
    return config


def _summary_rows(summary):
    data = summary.to_dict()
    rows = [(key, data[key]) for key in ('n_trials', 'n_balanced', 'n_fell',
                                         'n_fault', 'success_rate',
                                         'mean_duration')]
    for name in sorted(data['mean_force']):
        rows.append(('{} act / force'.format(name),
                     '{:.3f} / {:.1f}'.format(data['mean_activation'][name],
                                              data['mean_force'][name])))
    return (['Key', 'Value'], rows)


class HbcClientStand(HbcClient):
    """Single standing trial"""

    log = logging.getLogger(__name__ + ".HbcClientStand")

    def parser(self, parser):
        """Argument parser for a single trial"""
        return _add_experiment_args(parser)

    def take_action(self, parsed_args):
        config = _experiment(parsed_args)
        outcome, log, path = BalanceActions(config).run_trial()
        result = dict(outcome.record.to_dict(),
                      Outcome=outcome.classification, Log=path,
                      Cost=log.footer.get('cumulative_cost'))
        self._report(parsed_args, result,
                     lambda: self._print_dict_table([result]))
        return exit_code(outcome, log)


class HbcClientBatch(HbcClient):
    """Seeded batch of trials"""

    log = logging.getLogger(__name__ + ".HbcClientBatch")

    def parser(self, parser):
        _add_experiment_args(parser)
        parser.add_argument('--n-trials', '-n', dest='n_trials', type=int,
                            default=None, help="Number of trials.")
        parser.add_argument('--condition', default=None,
                            choices=constants.CONDITIONS,
                            help="Trial condition.")
        return parser

    def extra(self, parsed_args):
        extra = {}
        if parsed_args.n_trials is not None:
            extra['n_trials'] = parsed_args.n_trials
        if getattr(parsed_args, 'condition', None):
            extra['condition'] = parsed_args.condition
        return extra

    def take_action(self, parsed_args):
        config = _experiment(parsed_args, self.extra(parsed_args))
        summary, _results = BalanceActions(config).run_batch()
        self._report(parsed_args, summary.to_dict(),
                     lambda: self._print_tuple_table(_summary_rows(summary)))
        return constants.EXIT_SUCCESS


class HbcClientPerturb(HbcClientBatch):
    """Batch with scheduled pushes on the torso"""

    log = logging.getLogger(__name__ + ".HbcClientPerturb")

    def parser(self, parser):
        super(HbcClientPerturb, self).parser(parser)
        parser.add_argument('--count', type=int, default=3,
                            help="Number of pushes per trial.")
        parser.add_argument('--interval', type=float, default=None,
                            help="Seconds between pushes.")
        parser.add_argument('--magnitude', type=float, default=None,
                            help="Push force in N.")
        return parser

    def extra(self, parsed_args):
        extra = super(HbcClientPerturb, self).extra(parsed_args)
        extra['perturbation.count'] = parsed_args.count
        if parsed_args.interval is not None:
            extra['perturbation.interval'] = parsed_args.interval
        if parsed_args.magnitude is not None:
            extra['perturbation.magnitude'] = parsed_args.magnitude
        return extra


class HbcClientInjury(HbcClientBatch):
    """Batch with one weakened muscle"""

    log = logging.getLogger(__name__ + ".HbcClientInjury")

    def parser(self, parser):
        super(HbcClientInjury, self).parser(parser)
        parser.add_argument('--muscle', default=None,
                            help="Injured muscle, e.g. rectus_femoris_l.")
        parser.add_argument('--factor', type=float, default=None,
                            help="Remaining fraction of the peak force.")
        parser.add_argument('--exo', action='store_true',
                            help="Assist the injured model with the exo.")
        return parser

    def extra(self, parsed_args):
        extra = super(HbcClientInjury, self).extra(parsed_args)
        extra['condition'] = 'injured+exo' if parsed_args.exo else 'injured'
        if parsed_args.muscle:
            extra['injury.muscle'] = parsed_args.muscle
        if parsed_args.factor is not None:
            extra['injury.factor'] = parsed_args.factor
        return extra


class HbcClientExoOptimize(HbcClient):
    """Bayesian optimization of the exoskeleton gains"""

    log = logging.getLogger(__name__ + ".HbcClientExoOptimize")

    def parser(self, parser):
        _add_experiment_args(parser)
        parser.add_argument('--budget', type=int, default=None,
                            help="Number of objective evaluations.")
        parser.add_argument('--repeats', type=int, default=None,
                            help="Trials averaged per evaluation.")
        parser.add_argument('--bo-seed', dest='bo_seed', type=int,
                            default=None, help="Seed of the optimizer.")
        return parser

    def take_action(self, parsed_args):
        config = _experiment(parsed_args)
        best, history = BalanceActions(config).optimize_exo(
            budget=parsed_args.budget, repeats=parsed_args.repeats,
            seed=parsed_args.bo_seed)
        results = {'best': best.to_dict(), 'history': history.rows}
        self._report(parsed_args, results, lambda: self._print_tuple_table(
            (['Parameter', 'Value'], sorted(best.to_dict().items()))))
        return constants.EXIT_SUCCESS


class HbcClientAnalyze(HbcClient):
    """Summaries and histograms of a log directory"""

    log = logging.getLogger(__name__ + ".HbcClientAnalyze")

    def parser(self, parser):
        _add_experiment_args(parser)
        parser.add_argument('logs_path', metavar='<logs_path>',
                            help="Directory holding the trial logs.")
        parser.add_argument('--condition', default=None,
                            help="Only analyze logs of this condition.")
        parser.add_argument('--no-check-hash', dest='check_hash',
                            action='store_false',
                            help=("Accept logs written under another "
                                  "configuration."))
        parser.add_argument('--bins', type=int, default=None,
                            help="Histogram bin count.")
        parser.add_argument('--mass', type=float, default=None,
                            help="Probability mass of the balance region.")
        return parser

    def take_action(self, parsed_args):
        config = _experiment(parsed_args)
        report = BalanceActions(config).analyze(
            parsed_args.logs_path, condition=parsed_args.condition,
            check_hash=parsed_args.check_hash, bins=parsed_args.bins,
            mass=parsed_args.mass, output_dir=parsed_args.output_dir)
        region = report['region']
        results = {'summary': report['summary'].to_dict(),
                   'collisions': report['collisions'],
                   'region': ({'lower': region.lower, 'upper': region.upper,
                               'width': region.width, 'mass': region.mass}
                              if region is not None else None)}

        def table():
            self._print_tuple_table(_summary_rows(report['summary']))
            if region is not None:
                self._print_tuple_table((['Balance region', 'Value'], [
                    ('lower', region.lower), ('upper', region.upper),
                    ('width', region.width)]))
            self._print_tuple_table((['Segment', 'Collisions'],
                                     sorted(report['collisions'].items())))
        self._report(parsed_args, results, table)
        return constants.EXIT_SUCCESS


class HbcClientValidateConfig(HbcClient):
    """Check a model or experiment file"""

    log = logging.getLogger(__name__ + ".HbcClientValidateConfig")

    def parser(self, parser):
        parser.add_argument('path', metavar='<path>',
                            help="Path of the file to check.")
        parser.add_argument('--kind', choices=('experiment', 'model'),
                            default='experiment',
                            help="Kind of configuration file.")
        return parser

    def take_action(self, parsed_args):
        errors = BalanceActions.validate_config(parsed_args.path,
                                                parsed_args.kind)
        if errors:
            self._print_tuple_table((['Problem'], [(e,) for e in errors]))
            return constants.EXIT_USAGE
        print("{} is valid".format(parsed_args.path))
        return constants.EXIT_SUCCESS


class HbcClientCompare(HbcClient):
    """Rank-sum comparison of two batches"""

    log = logging.getLogger(__name__ + ".HbcClientCompare")

    def parser(self, parser):
        _add_experiment_args(parser)
        parser.add_argument('--config-b', dest='config_b', default=None,
                            help=("Experiment file of the second batch, the "
                                  "first one by default."))
        parser.add_argument('--set-b', dest='overrides_b', action='append',
                            metavar='KEY=VALUE', default=[],
                            help=("Override a field of the second batch: "
                                  "--set-b planner.mode=random"))
        parser.add_argument('--conditions', default=None,
                            metavar='FIRST,SECOND',
                            help=("Conditions of the two batches, e.g. "
                                  "injured,injured+exo"))
        parser.add_argument('--metric', choices=METRICS, default='duration',
                            help="Per-trial metric compared.")
        parser.add_argument('--alternative', default='greater',
                            choices=('two-sided', 'greater', 'less'),
                            help="Direction of the test.")
        parser.add_argument('--write', action='store_true',
                            help="Also write the logs of both batches.")
        return parser

    def take_action(self, parsed_args):
        conditions = [None, None]
        if parsed_args.conditions:
            conditions = utils.convert_data(parsed_args.conditions)
            if len(conditions) != 2:
                raise ValueError("--conditions expects two comma-separated "
                                 "conditions, got {}".format(conditions))
        first = _experiment(parsed_args, {'condition': conditions[0]}
                            if conditions[0] else None)
        data = first.get_data
        if parsed_args.config_b:
            with open(parsed_args.config_b, 'r') as exp_file:
                data = yaml.safe_load(exp_file) or {}
        overrides = utils.parse_overrides(parsed_args.overrides_b)
        if conditions[1]:
            overrides['condition'] = conditions[1]
        second = ExperimentConfig(
            experiment_path=parsed_args.config_b or first.path, data=data,
            overrides=overrides)
        errors = second.validate()
        if errors:
            raise ValueError("Invalid experiment: {}".format(
                '; '.join(errors)))
        results = BalanceActions(first).compare(
            second, metric=parsed_args.metric,
            alternative=parsed_args.alternative, write=parsed_args.write)
        self._report(parsed_args, results, lambda: self._print_tuple_table(
            (['Key', 'Value'], sorted(results.items()))))
        return constants.EXIT_SUCCESS


COMMANDS = {
    'stand': HbcClientStand,
    'batch': HbcClientBatch,
    'perturb': HbcClientPerturb,
    'injury': HbcClientInjury,
    'exo-optimize': HbcClientExoOptimize,
    'analyze': HbcClientAnalyze,
    'validate-config': HbcClientValidateConfig,
    'compare': HbcClientCompare,
}


def build_parser():
    client = HbcClient()
    verbosity = client.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', '-v', action='store_true',
                           help="Show debug messages.")
    verbosity.add_argument('--quiet', '-q', action='store_true',
                           help="Only show errors.")
    subparsers = client.add_subparsers(dest='command', metavar='<command>')
    subparsers.required = True
    for name, command in sorted(COMMANDS.items()):
        handler = command()
        sub = subparsers.add_parser(name, help=command.__doc__,
                                    description=command.__doc__)
        handler.parser(sub)
        sub.set_defaults(handler=handler)
    return client


def main(argv=None):
    client = build_parser()
    parsed_args = client.parse_args(argv)
    level = (logging.DEBUG if parsed_args.verbose else
             logging.ERROR if parsed_args.quiet else logging.WARNING)
    logging.basicConfig(level=level,
                        format='%(asctime)s %(levelname)s %(name)s '
                               '%(message)s')
    try:
        return parsed_args.handler.take_action(parsed_args)
    except NumericalFault as e:
        client.log.error("Numerical fault: {}".format(e))
        return constants.EXIT_NUMERICAL_FAULT
    except PlanningFailure as e:
        client.log.error("Planning failure: {}".format(e))
        return constants.EXIT_PLANNING_FAILURE
    except (IOError, KeyError, TypeError, ValueError, LogFormatError,
            yaml.YAMLError) as e:
        client.log.error(str(e))
        return constants.EXIT_USAGE
    except RuntimeError as e:
        client.log.error(str(e))
        return constants.EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
