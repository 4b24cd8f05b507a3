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
"""Fall detection, trial classification and batch statistics.

Everything here is a pure function of trial logs, so analysing a saved log
reproduces the outcome computed when the trial ran.
"""
import csv
import logging

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from hbcsim import constants

LOG = logging.getLogger(__name__ + ".analysis")

BALANCED, FELL, FAULT = constants.OUTCOMES


@dataclass(frozen=True)
class FallRecord(object):
    """Fall onset and impact of one trial, ``None`` when not triggered"""
    init_event_t: float = None
    contact_event_t: float = None
    fall_duration: float = None
    collision_segment: str = None
    collision_x: float = None
    init_index: int = None
    contact_index: int = None

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TrialOutcome(object):
    classification: str
    record: FallRecord = field(default_factory=FallRecord)


@dataclass(frozen=True, eq=False)
class BalanceRegion(object):
    """CoM density over x and its highest-density interval"""
    edges: np.ndarray
    density: np.ndarray
    lower: float
    upper: float
    mass: float

    @property
    def width(self):
        return self.upper - self.lower


@dataclass
class BatchSummary(object):
    """Aggregate of a batch of trials

    Per-muscle means are taken over every logged frame of every trial.
    """
    n_trials: int = 0
    n_balanced: int = 0
    n_fell: int = 0
    n_fault: int = 0
    mean_duration: float = 0.0
    mean_activation: dict = field(default_factory=dict)
    mean_force: dict = field(default_factory=dict)

    @property
    def success_rate(self):
        return self.n_balanced / self.n_trials if self.n_trials else 0.0

    def to_dict(self):
        data = asdict(self)
        data['success_rate'] = self.success_rate
        return data


def point_in_support(x_com, interval):
    """Closed-interval test, ``False`` for an empty support"""
    if interval is None:
        return False
    lo, hi = interval
    if np.isnan(lo) or np.isnan(hi):
        return False
    return bool(lo <= x_com <= hi)


def _inside(log):
    x = log.series('com')[:, 0]
    support = log.series('support')
    with np.errstate(invalid='ignore'):
        return (support[:, 0] <= x) & (x <= support[:, 1])


def _non_foot(log):
    names = log.point_names
    feet = set(log.foot_points)
    return [i for i, name in enumerate(names) if name not in feet]


def non_foot_force(log):
    """Summed non-foot normal force per frame"""
    if not len(log):
        return np.zeros(0)
    normal = log.series('normal')
    return normal[:, _non_foot(log)].sum(axis=1)


def detect_events(log):
    """Locate the fall onset and the impact in a trial log

    The onset is the first inside-to-outside transition of the CoM with
    respect to the real-time support interval. The impact is the earliest
    peak of the summed non-foot contact force at or after the onset. Both
    events are ``None`` when the CoM never left the support.

    :type log: :class:`hbcsim.trial_logs.TrialLog`
    :rtype: :class:`FallRecord`
    """
    if not len(log):
        return FallRecord()
    times = log.times
    inside = _inside(log)
    exits = np.flatnonzero(inside[:-1] & ~inside[1:]) + 1
    init = int(exits[0]) if exits.size else None

    contact = None
    if init is not None:
        force = non_foot_force(log)[init:]
        if force.size and force.max() > 0:
            contact = init + int(np.argmax(force))

    segment = collision_x = None
    if contact is not None:
        columns = _non_foot(log)
        frame = log.frames[contact]
        normal = np.asarray(frame['normal'])[columns]
        hit = columns[int(np.argmax(normal))]
        segment = log.point_names[hit]
        collision_x = float(frame['contact_x'][hit])

    init_t = float(times[init]) if init is not None else None
    contact_t = float(times[contact]) if contact is not None else None
    duration = (contact_t - init_t
                if init_t is not None and contact_t is not None else None)
    return FallRecord(init_event_t=init_t, contact_event_t=contact_t,
                      fall_duration=duration, collision_segment=segment,
                      collision_x=collision_x, init_index=init,
                      contact_index=contact)


def classify(log):
    """Balanced, Fell or NumericalFault

    A trial is balanced when no body part other than the feet ever touched
    the ground and the CoM is inside the support interval at the last frame.

    :rtype: :class:`TrialOutcome`
    """
    record = detect_events(log)
    if log.fault:
        return TrialOutcome(classification=FAULT, record=record)
    if not len(log):
        return TrialOutcome(classification=FELL, record=record)
    touched = bool(np.any(non_foot_force(log) > 0))
    balanced = not touched and bool(_inside(log)[-1])
    return TrialOutcome(classification=BALANCED if balanced else FELL,
                        record=record)


def standing_duration(log, outcome=None):
    """Time the model stood before any non-foot body part hit the ground

    Balanced trials and falls without impact stand for the whole log.
    """
    if not len(log):
        return 0.0
    outcome = outcome or classify(log)
    times = log.times
    if outcome.classification == FELL:
        touched = np.flatnonzero(non_foot_force(log) > 0)
        if touched.size:
            return float(times[touched[0]] - times[0])
    return float(times[-1] - times[0])


def com_trajectory(log):
    """Times, CoM x and CoM z series of a trial"""
    com = log.series('com')
    return log.times, com[:, 0], com[:, 1]


def balance_region(logs, bins=50, mass=0.68):
    """Density of the CoM x over the frames of the balanced trials

    :param logs: Trial logs; only the balanced ones are used
    :param bins: Histogram bin count
    :param mass: Probability mass of the reported region
    :rtype: :class:`BalanceRegion`
    :raises: a `ValueError` when no trial is balanced
    """
    samples = [log.series('com')[:, 0] for log in logs
               if classify(log).classification == BALANCED]
    if not samples:
        raise ValueError("No balanced trial to build a balance region from")
    x = np.concatenate(samples)
    counts, edges = np.histogram(x, bins=bins)
    density = counts / counts.sum()
    cumulative = np.concatenate([[0.0], np.cumsum(density)])
    best = (0, bins)
    for i in range(bins):
        reach = np.flatnonzero(cumulative[i + 1:] - cumulative[i] >=
                               mass - 1e-12)
        if reach.size:
            j = i + 1 + int(reach[0])
            if j - i < best[1] - best[0]:
                best = (i, j)
    lo, hi = best
    return BalanceRegion(edges=edges, density=density,
                         lower=float(edges[lo]), upper=float(edges[hi]),
                         mass=float(cumulative[hi] - cumulative[lo]))


def collision_stats(records):
    """Impact counts and positions per landmark

    :param records: The :class:`FallRecord` of the fallen trials
    :return: ``(counts, positions)`` dicts keyed by landmark name
    :rtype: ``tuple``
    """
    counts = {name: 0 for name in constants.LANDMARK_POINTS}
    positions = {name: [] for name in constants.LANDMARK_POINTS}
    for record in records:
        if record.collision_segment is None:
            continue
        counts[record.collision_segment] = \
            counts.get(record.collision_segment, 0) + 1
        positions.setdefault(record.collision_segment, []).append(
            record.collision_x)
    return counts, positions


def muscle_summary(logs):
    """Mean activation and force of every muscle over all frames

    :return: ``(mean_activation, mean_force)`` dicts keyed by muscle name
    :rtype: ``tuple``
    """
    logs = [log for log in logs if len(log)]
    if not logs:
        return {}, {}
    names = logs[0].muscle_names
    act = np.concatenate([log.series('act') for log in logs])
    force = np.concatenate([log.series('force') for log in logs])
    if not names:
        names = ['muscle_{}'.format(i) for i in range(act.shape[1])]
    return (dict(zip(names, act.mean(axis=0).tolist())),
            dict(zip(names, force.mean(axis=0).tolist())))


def summarize_batch(outcomes, logs):
    """Build the :class:`BatchSummary` of trials ordered by index"""
    summary = BatchSummary(n_trials=len(outcomes))
    durations = []
    for outcome, log in zip(outcomes, logs):
        if outcome.classification == BALANCED:
            summary.n_balanced += 1
        elif outcome.classification == FELL:
            summary.n_fell += 1
        else:
            summary.n_fault += 1
        durations.append(standing_duration(log, outcome))
    summary.mean_duration = float(np.mean(durations)) if durations else 0.0
    summary.mean_activation, summary.mean_force = muscle_summary(logs)
    return summary


def rank_sum_test(a, b, alternative='two-sided'):
    """Mann-Whitney rank-sum test of two samples

    :param alternative: ``two-sided``, ``greater`` (``a`` tends to exceed
                        ``b``) or ``less``
    :return: The U statistic and the p-value
    :rtype: ``tuple``
    """
    result = stats.mannwhitneyu(np.asarray(a, dtype=float),
                                np.asarray(b, dtype=float),
                                alternative=alternative)
    return float(result.statistic), float(result.pvalue)


def write_histogram_csv(region, path):
    """Write a balance region as ``bin_lo, bin_hi, density, in_region``"""
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(['bin_lo', 'bin_hi', 'density', 'in_region'])
        for lo, hi, dens in zip(region.edges[:-1], region.edges[1:],
                                region.density):
            inside = lo >= region.lower - 1e-12 and hi <= region.upper + 1e-12
            writer.writerow([lo, hi, dens, int(inside)])
    return path


def write_collision_csv(counts, positions, path):
    """Write one row per landmark with its impact count and positions"""
    with open(path, 'w', newline='') as csv_file:
        writer = csv.writer(csv_file)
        writer.writerow(['segment', 'count', 'positions'])
        for name in sorted(counts):
            writer.writerow([name, counts[name],
                             ' '.join('{:.4f}'.format(x)
                                      for x in positions.get(name, []))])
    return path
