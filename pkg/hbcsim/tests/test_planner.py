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

import numpy as np

from hbcsim.biped import Biped, initial_state
from hbcsim.exceptions import PlanningFailure
from hbcsim.exo import ExoParams
from hbcsim.lowctl import PdGains
from hbcsim.planner import (HbcPlanner, PlannerConfig, Push,
                            TargetDistribution, mppi_update, push_force)
from hbcsim.tests import fakes

GAINS = PdGains(k_p=8000.0, k_d=600.0)


def brute_force_update(samples, costs, k, lam):
    ranked = sorted((c, i) for i, c in enumerate(costs) if np.isfinite(c))
    elite = [i for _c, i in ranked[:k]]
    c_min = min(costs[i] for i in elite)
    weights = [np.exp(-(costs[i] - c_min) / lam) for i in elite]
    total = sum(weights)
    mu = sum(w * samples[i] for w, i in zip(weights, elite)) / total
    var = sum(w * (samples[i] - mu) ** 2
              for w, i in zip(weights, elite)) / total
    return mu, np.sqrt(var)


class TestMppiUpdate(TestCase):

    def test_two_samples(self):
        update = mppi_update(np.array([[0.0], [1.0]]), np.array([0.0, 1.0]),
                             k=2, lam=1.0)
        e = np.e
        self.assertAlmostEqual(float(update.mu[0]), 1.0 / (1.0 + e),
                               places=15)
        self.assertAlmostEqual(float(update.sigma[0]),
                               np.sqrt(e) / (1.0 + e), places=15)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = int(rng.integers(1, 65))
            d = int(rng.integers(1, 8))
            k = int(rng.integers(1, n + 1))
            lam = float(rng.uniform(0.05, 5.0))
            samples = rng.normal(0.0, 1.0, (n, d))
            costs = rng.uniform(0.0, 10.0, n)
            update = mppi_update(samples, costs, k, lam)
            mu, sigma = brute_force_update(samples, costs, k, lam)
            np.testing.assert_allclose(update.mu, mu, rtol=0, atol=1e-12)
            np.testing.assert_allclose(update.sigma, sigma, rtol=0,
                                       atol=1e-12)

    def test_single_elite(self):
        samples = np.array([[3.0, 1.0], [0.0, 0.0], [5.0, 5.0]])
        update = mppi_update(samples, np.array([2.0, 1.0, 9.0]), k=1,
                             lam=1.0)
        np.testing.assert_array_equal(update.mu, [0.0, 0.0])
        np.testing.assert_array_equal(update.sigma, [0.0, 0.0])

    def test_ties_broken_by_index(self):
        samples = np.array([[1.0], [2.0], [3.0]])
        update = mppi_update(samples, np.ones(3), k=1, lam=1.0)
        self.assertEqual(float(update.mu[0]), 1.0)

    def test_non_finite_costs_ignored(self):
        samples = np.array([[1.0], [2.0], [3.0]])
        update = mppi_update(samples, np.array([np.inf, 5.0, np.nan]),
                             k=3, lam=1.0)
        self.assertEqual(float(update.mu[0]), 2.0)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(5)
        samples = rng.normal(0.0, 1.0, (32, 6))
        costs = rng.uniform(0.0, 10.0, 32)
        update = mppi_update(samples, costs, 8, 0.5)
        for _ in range(10):
            perm = rng.permutation(32)
            shuffled = mppi_update(samples[perm], costs[perm], 8, 0.5)
            np.testing.assert_allclose(shuffled.mu, update.mu, rtol=0,
                                       atol=1e-12)
            np.testing.assert_allclose(shuffled.sigma, update.sigma,
                                       rtol=0, atol=1e-12)

    def test_no_finite_cost(self):
        self.assertRaises(PlanningFailure, mppi_update, np.zeros((3, 2)),
                          np.full(3, np.inf), 2, 1.0)


class TestPushes(TestCase):

    def test_windows(self):
        pushes = [Push(t_start=float(i), duration=0.1, force=(60.0, 0.0))
                  for i in (1, 2, 3)]
        self.assertIsNone(push_force(pushes, 0.999))
        np.testing.assert_array_equal(push_force(pushes, 1.0), [60.0, 0.0])
        np.testing.assert_array_equal(push_force(pushes, 2.05), [60.0, 0.0])
        self.assertIsNone(push_force(pushes, 3.1))
        self.assertIsNone(push_force([], 1.0))


class TestPlannerConfig(TestCase):

    def test_defaults_valid(self):
        self.assertEqual(PlannerConfig().validate(), [])

    def test_invalid(self):
        errors = PlannerConfig(k=20, lam=0.0, execution='best',
                               mode='sac').validate()
        self.assertEqual(len(errors), 4)


class TestHbcPlanner(TestCase):

    def setUp(self):
        super(TestHbcPlanner, self).setUp()
        self.spec = fakes.model_spec()
        self.biped = Biped(self.spec)
        self.state = initial_state(self.spec)
        self.quick = PlannerConfig(**fakes.QUICK_PLANNER)

    def test_prior(self):
        planner = HbcPlanner(self.biped, GAINS, self.quick)
        prior = planner.prior()
        np.testing.assert_array_equal(prior.mu, self.spec.reference_joints)
        np.testing.assert_array_equal(prior.sigma, np.full(6, 0.15))

    def test_exo_plans_tilt(self):
        planner = HbcPlanner(self.biped, GAINS, self.quick,
                             exo=ExoParams(k_pt=100.0, w=0.5))
        self.assertEqual(planner.prior().dim, 7)
        self.assertEqual(planner.prior().mu[6], 0.0)
        clamped = planner.clamp(np.full(7, 3.0))
        self.assertEqual(clamped[6], 0.5)

    def test_quadratic_convergence(self):
        cfg = PlannerConfig(n=128, k=16, r=5, seed=0)
        z_opt = self.spec.reference_joints + 0.1

        def cost(samples):
            return np.sum(np.square(samples - z_opt), axis=-1)

        planner = HbcPlanner(self.biped, GAINS, cfg, cost_fn=cost)
        _z, dist = planner.plan(self.state, planner.prior())
        self.assertLess(np.max(np.abs(dist.mu - z_opt)),
                        cfg.sigma_init / 2)

    def test_plan_respects_limits_and_floor(self):
        cfg = PlannerConfig(n=8, k=1, r=2, seed=3)
        planner = HbcPlanner(self.biped, GAINS, cfg,
                             cost_fn=lambda s: np.sum(s, axis=-1))
        z, dist = planner.plan(self.state, planner.prior())
        self.assertTrue(np.all(z >= self.biped.limits[:, 0]))
        self.assertTrue(np.all(z <= self.biped.limits[:, 1]))
        np.testing.assert_array_equal(dist.sigma, np.full(6, 0.01))

    def test_mean_execution(self):
        cfg = PlannerConfig(n=8, k=4, r=1, execution='mean')
        planner = HbcPlanner(self.biped, GAINS, cfg,
                             cost_fn=lambda s: np.zeros(len(s)))
        z, dist = planner.plan(self.state, planner.prior())
        np.testing.assert_array_equal(z, dist.mu)

    def test_rollout_leaves_state_untouched(self):
        planner = HbcPlanner(self.biped, GAINS, self.quick)
        q = self.state.q.copy()
        cost = planner.rollout(self.state, self.spec.reference_joints, 2)
        self.assertIsInstance(cost, float)
        self.assertTrue(np.isfinite(cost))
        np.testing.assert_array_equal(self.state.q, q)

    def test_plan_leaves_state_untouched(self):
        planner = HbcPlanner(self.biped, GAINS, self.quick)
        before = (self.state.q.copy(), self.state.qd.copy(),
                  self.state.act.copy(), self.state.t)
        planner.plan(self.state, planner.prior())
        np.testing.assert_array_equal(self.state.q, before[0])
        np.testing.assert_array_equal(self.state.qd, before[1])
        np.testing.assert_array_equal(self.state.act, before[2])
        self.assertEqual(self.state.t, before[3])

    def test_rollout_discards_diverging_particles(self):
        planner = HbcPlanner(self.biped, GAINS, self.quick)
        targets = np.stack([self.spec.reference_joints, np.full(6, np.nan)])
        costs = planner.rollout(self.state, targets, 2)
        self.assertTrue(np.isfinite(costs[0]))
        self.assertEqual(costs[1], np.inf)

    def test_hbc_run(self):
        planner = HbcPlanner(self.biped, GAINS, self.quick)
        controls, log, events = planner.hbc_run(self.state, 10)
        self.assertEqual(controls.shape, (10, 18))
        self.assertEqual(events, 2)
        self.assertIsNone(log.fault)
        self.assertEqual(len(log), 51)
        self.assertEqual(log.footer['controls'], 10)
        self.assertEqual(log.footer['planning_events'], 2)
        self.assertEqual([e['t'] for e in log.events], [0.0, 0.05])
        self.assertGreaterEqual(log.footer['cumulative_cost'], 0.0)
        self.assertTrue(np.all((controls >= 0) & (controls <= 1)))

    def test_hbc_run_is_deterministic(self):
        first = HbcPlanner(self.biped, GAINS, self.quick).hbc_run(
            self.state, 5)[1]
        second = HbcPlanner(self.biped, GAINS, self.quick).hbc_run(
            self.state, 5)[1]
        self.assertEqual(list(first.to_lines()), list(second.to_lines()))

    def test_random_mode_never_rolls_out(self):
        cfg = PlannerConfig(mode='random', t_e=5, seed=1)
        planner = HbcPlanner(self.biped, GAINS, cfg)
        with mock.patch.object(HbcPlanner, 'rollout') as mock_rollout:
            _controls, _log, events = planner.hbc_run(self.state, 10)
        mock_rollout.assert_not_called()
        self.assertEqual(events, 2)

    def test_planning_failure_propagates(self):
        planner = HbcPlanner(self.biped, GAINS, self.quick,
                             cost_fn=lambda s: np.full(len(s), np.inf))
        self.assertRaises(PlanningFailure, planner.hbc_run, self.state, 3)

    def test_push_is_applied(self):
        planner = HbcPlanner(self.biped, GAINS, self.quick)
        pushes = [Push(t_start=0.0, duration=0.02, force=(200.0, 0.0))]
        _controls, pushed, _events = planner.hbc_run(self.state, 2, pushes)
        planner = HbcPlanner(self.biped, GAINS, self.quick)
        _controls, still, _events = planner.hbc_run(self.state, 2)
        self.assertGreater(pushed.frames[-1]['com_vel'][0],
                           still.frames[-1]['com_vel'][0])


class TestTargetDistribution(TestCase):

    def test_dim(self):
        dist = TargetDistribution(mu=np.zeros(7), sigma=np.ones(7))
        self.assertEqual(dist.dim, 7)
