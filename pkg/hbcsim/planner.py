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
"""Sampling-based planning over target joint angles.

Each planning event draws ``n`` target poses from a diagonal Gaussian, rolls
the low-level controller forward for ``h`` control steps from the current
state for every sample, and refits the Gaussian to the ``k`` cheapest
samples. The closed loop replans every ``t_e`` control steps.
"""
import logging

from dataclasses import dataclass, field

import numpy as np

from hbcsim.biped import N_JOINTS, BodyState
from hbcsim.cost import CostWeights, body_height, cost_total
from hbcsim.exceptions import NumericalFault, PlanningFailure
from hbcsim.exo import exo_torque_for_state
from hbcsim.lowctl import LowLevelController, pi_control
from hbcsim.trial_logs import TrialLog, make_frame

LOG = logging.getLogger(__name__ + ".planner")

# Range of the extra pelvis tilt target planned in exoskeleton mode (rad)
TILT_LIMITS = (-0.5, 0.5)

MODES = ('hbc', 'random')
EXECUTIONS = ('sample', 'mean')


@dataclass(frozen=True)
class PlannerConfig(object):
    """MPPI settings

    :param n: Particles per iteration
    :param h: Rollout horizon (control steps)
    :param r: MPPI iterations per planning event
    :param k: Elite count
    :param lam: Softmax temperature
    :param t_e: Control steps executed between planning events
    :param sigma_init: Standard deviation restored at every planning event
    :param sigma_floor: Lower bound applied to sigma after each update
    :param seed: Seed of the sampling RNG
    :param execution: ``sample`` draws the executed target from the final
                      distribution, ``mean`` executes its mean
    :param mode: ``hbc`` plans, ``random`` draws targets from the prior
                 without any update
    """
    n: int = 16
    h: int = 32
    r: int = 2
    k: int = 4
    lam: float = 1.0
    t_e: int = 10
    sigma_init: float = 0.15
    sigma_floor: float = 0.01
    seed: int = 0
    execution: str = 'sample'
    mode: str = 'hbc'

    def validate(self):
        errors = []
        if not 1 <= self.k <= self.n:
            errors.append('elite count must satisfy 1 <= k <= n')
        if self.h < 1 or self.r < 1 or self.t_e < 1:
            errors.append('h, r and t_e must be >= 1')
        if self.lam <= 0:
            errors.append('lambda must be > 0')
        if self.sigma_init < 0 or self.sigma_floor < 0:
            errors.append('sigma values must be >= 0')
        if self.execution not in EXECUTIONS:
            errors.append('execution must be one of {}'.format(EXECUTIONS))
        if self.mode not in MODES:
            errors.append('mode must be one of {}'.format(MODES))
        return errors


@dataclass(frozen=True, eq=False)
class TargetDistribution(object):
    """Diagonal Gaussian over target joint angles"""
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def dim(self):
        return int(np.size(self.mu))


@dataclass(frozen=True)
class Push(object):
    """Horizontal push at the torso CoM

    :param t_start: Onset (s)
    :param duration: Length of the push (s)
    :param force: ``(fx, fz)`` (N)
    """
    t_start: float
    duration: float
    force: tuple = field(default=(0.0, 0.0))

    def active(self, t):
        # Half-open window, tolerant to accumulated timestep rounding
        return self.t_start - 1e-9 <= t < self.t_start + self.duration - 1e-9


def push_force(pushes, t):
    """Sum of the pushes active at time ``t``, ``None`` when there is none"""
    active = [p.force for p in pushes if p.active(t)]
    if not active:
        return None
    return np.sum(np.asarray(active, dtype=float), axis=0)


def mppi_update(samples, costs, k, lam):
    """Refit the target distribution to the elite samples

    The ``k`` cheapest finite samples are weighted by
    ``exp(-(c - c_min) / lam)``; ties are broken by sample index.

    :param samples: Targets ``(n, d)``
    :param costs: Rollout costs ``(n,)``, ``inf`` for discarded particles
    :return: The weighted mean and standard deviation of the elites
    :rtype: :class:`TargetDistribution`
    :raises: a :class:`PlanningFailure` when no cost is finite
    """
    samples = np.asarray(samples, dtype=float)
    costs = np.asarray(costs, dtype=float)
    finite = np.flatnonzero(np.isfinite(costs))
    if finite.size == 0:
        raise PlanningFailure("No rollout produced a finite cost "
                              "({} samples)".format(costs.size))
    order = finite[np.argsort(costs[finite], kind='stable')]
    elite = order[:min(int(k), order.size)]
    weights = np.exp(-(costs[elite] - costs[elite].min()) / lam)
    weights = weights / weights.sum()
    mu = weights @ samples[elite]
    sigma = np.sqrt(weights @ np.square(samples[elite] - mu))
    return TargetDistribution(mu=mu, sigma=sigma)


def _freeze(old, new, keep):
    mask = keep[..., None]
    return BodyState(q=np.where(mask, new.q, old.q),
                     qd=np.where(mask, new.qd, old.qd),
                     act=np.where(mask, new.act, old.act),
                     t=new.t)


class HbcPlanner(object):
    """Hierarchical balance control: MPPI over targets of a muscle PD policy

    :param biped: The simulated model
    :type biped: :class:`hbcsim.biped.Biped`
    :param gains: Low-level PD gains
    :type gains: :class:`hbcsim.lowctl.PdGains`
    :param cfg: Planner settings
    :type cfg: :class:`PlannerConfig`
    :param weights: Cost weights
    :param control_dt: Period of the zero-order-hold controls (s)
    :param log_dt: Period of the logged frames (s)
    :param exo: Exoskeleton parameters; plans a pelvis tilt target and
                applies hip torques when set
    :param cost_fn: Replace rollouts by ``cost_fn(samples)``
    """

    def __init__(self, biped, gains, cfg, weights=None, control_dt=0.01,
                 log_dt=0.002, exo=None, cost_fn=None):
        self.log = logging.getLogger(__name__ + ".HbcPlanner")
        self.biped = biped
        self.cfg = cfg
        self.weights = weights or CostWeights()
        self.exo = exo
        self.cost_fn = cost_fn
        self.control_dt = control_dt
        self.controller = LowLevelController(biped, gains, control_dt)
        self.substeps = max(1, int(round(control_dt / biped.dt)))
        self.log_every = max(1, int(round(log_dt / biped.dt)))
        self.log_dt = self.log_every * biped.dt
        self.rng = np.random.default_rng(cfg.seed)
        self.dim = N_JOINTS + (1 if exo is not None else 0)
        lower = list(biped.limits[:, 0])
        upper = list(biped.limits[:, 1])
        if exo is not None:
            lower.append(TILT_LIMITS[0])
            upper.append(TILT_LIMITS[1])
        self.lower = np.array(lower)
        self.upper = np.array(upper)
        self.ref_pose = biped.reference
        self.initial_height = None

    def prior(self):
        """Distribution every trial starts from, centered on the reference"""
        mu = np.zeros(self.dim)
        mu[:N_JOINTS] = self.ref_pose
        return TargetDistribution(mu=mu,
                                  sigma=np.full(self.dim, self.cfg.sigma_init))

    def clamp(self, z):
        return np.clip(z, self.lower, self.upper)

    def _exo_torque(self, state, z):
        if self.exo is None:
            return None
        return exo_torque_for_state(self.exo, state, z)

    def rollout(self, state, z, horizon):
        """Cumulative cost of holding target(s) ``z`` for ``horizon`` steps

        The caller's state is never modified. A particle whose state turns
        non-finite is frozen and scores ``inf``.

        :param state: The (single) state rollouts start from
        :param z: One target ``(d,)`` or a batch ``(n, d)``
        :param horizon: Number of control steps
        :return: The cost, or an ``(n,)`` array of costs
        """
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        targets = np.atleast_2d(z)
        count = len(targets)
        if self.initial_height is None:
            self.initial_height = float(body_height(self.biped, state.q))
        batch = state.replicate(count)
        costs = np.zeros(count)
        alive = np.ones(count, dtype=bool)
        with np.errstate(all='ignore'):
            for _ in range(horizon):
                u, _saturated = pi_control(self.biped, batch, targets,
                                           self.controller.gains,
                                           self.control_dt)
                for _ in range(self.substeps):
                    new = self.biped.step(batch, u,
                                          self._exo_torque(batch, targets),
                                          strict=False)
                    alive &= new.is_finite()
                    batch = _freeze(batch, new, alive)
                step_cost = cost_total(self.biped, batch, self.ref_pose,
                                       self.initial_height, self.weights)
                costs = np.where(alive & np.isfinite(step_cost),
                                 costs + step_cost, np.inf)
        return float(costs[0]) if single else costs

    def evaluate(self, state, samples):
        if self.cost_fn is not None:
            return np.asarray(self.cost_fn(samples), dtype=float)
        return self.rollout(state, samples, self.cfg.h)

    def plan(self, state, dist):
        """Run ``r`` MPPI iterations from ``state``

        :return: The target to execute and the updated distribution
        :rtype: ``tuple``
        :raises: a :class:`PlanningFailure` when every rollout diverges
        """
        cfg = self.cfg
        mu = np.asarray(dist.mu, dtype=float)
        sigma = np.asarray(dist.sigma, dtype=float)
        for iteration in range(cfg.r):
            noise = self.rng.standard_normal((cfg.n, self.dim))
            samples = self.clamp(mu + sigma * noise)
            costs = self.evaluate(state, samples)
            update = mppi_update(samples, costs, cfg.k, cfg.lam)
            mu = self.clamp(update.mu)
            sigma = np.maximum(update.sigma, cfg.sigma_floor)
            self.log.debug("MPPI iteration {}: best cost {:.4f}".format(
                iteration, float(np.min(costs))))
        dist = TargetDistribution(mu=mu, sigma=sigma)
        if cfg.execution == 'mean':
            return mu.copy(), dist
        return self.clamp(mu + sigma * self.rng.standard_normal(self.dim)), \
            dist

    def advance(self, state, z, pushes=(), on_step=None):
        """Execute one control period of ``pi(s, z)`` on the live state

        :return: The new state and the control that was held
        :raises: a :class:`NumericalFault` on a non-finite state
        """
        u = self.controller(state, z)
        for _ in range(self.substeps):
            state = self.biped.step(state, u, self._exo_torque(state, z),
                                    push_force(pushes, state.t))
            if on_step is not None:
                on_step(state)
        return state, u

    def hbc_run(self, s0, steps, pushes=(), log=None):
        """Closed-loop trial of ``steps`` control periods

        Replans whenever the control step index is a multiple of ``t_e``;
        the mean persists between planning events while sigma is restored
        to ``sigma_init``.

        :param s0: The initial state
        :param steps: Number of control periods
        :param pushes: The :class:`Push` schedule
        :param log: The log to fill, a new one by default
        :return: The executed controls ``(steps, 18)``, the trial log and
                 the number of planning events
        :rtype: ``tuple``
        :raises: a :class:`PlanningFailure` when a planning event fails
        """
        if steps < 1:
            raise ValueError("A trial needs at least one control step")
        cfg = self.cfg
        if log is None:
            log = TrialLog(header={'dt': self.log_dt,
                                   'muscle_names':
                                       list(self.biped.spec.muscle_names)})
        self.initial_height = float(body_height(self.biped, s0.q))
        dist = self.prior()
        z = dist.mu
        state = s0
        controls = []
        events = 0
        executed_cost = 0.0
        counter = {'steps': 0}

        def record(new_state):
            counter['steps'] += 1
            if counter['steps'] % self.log_every == 0:
                log.append(make_frame(self.biped, new_state))

        log.append(make_frame(self.biped, state))
        try:
            for step in range(steps):
                if step % cfg.t_e == 0:
                    if cfg.mode == 'random':
                        prior = self.prior()
                        z = self.clamp(prior.mu + prior.sigma *
                                       self.rng.standard_normal(self.dim))
                    else:
                        dist = TargetDistribution(
                            mu=dist.mu,
                            sigma=np.full(self.dim, cfg.sigma_init))
                        z, dist = self.plan(state, dist)
                    events += 1
                    log.add_event(state.t, 'plan',
                                  target=np.round(z, 9).tolist())
                    self.log.debug("Planning event {} at t={:.3f}s".format(
                        events, state.t))
                state, u = self.advance(state, z, pushes, on_step=record)
                controls.append(u)
                executed_cost += float(cost_total(
                    self.biped, state, self.ref_pose, self.initial_height,
                    self.weights))
        except NumericalFault as e:
            self.log.warning("Trial aborted: {}".format(e))
            log.mark_fault('numerical', str(e))
        log.footer['cumulative_cost'] = executed_cost
        log.footer['controls'] = len(controls)
        log.footer['planning_events'] = events
        log.footer['saturations'] = self.controller.saturations
        if controls and self.controller.saturations > \
                0.5 * len(controls) * len(self.biped.spec.muscles):
            self.log.warning("{} saturated inverse activations over {} "
                             "control steps".format(
                                 self.controller.saturations, len(controls)))
        executed = np.array(controls).reshape(-1, len(self.biped.spec.muscles))
        return executed, log, events
