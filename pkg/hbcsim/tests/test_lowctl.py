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
from unittest import TestCase

import numpy as np

from hbcsim.biped import Biped, BodyState, initial_state
from hbcsim.lowctl import (LowLevelController, PdGains, muscle_pd,
                           pi_control, target_muscle_lengths)
from hbcsim.tests import fakes


class TestMusclePd(TestCase):

    def test_never_pushes(self):
        rng = np.random.default_rng(2)
        f_star = muscle_pd(rng.uniform(0.5, 1.5, 1000),
                           rng.uniform(0.5, 1.5, 1000),
                           rng.normal(0.0, 3.0, 1000), PdGains(), 1.0)
        self.assertTrue(np.all(f_star <= 0))

    def test_on_target_at_rest(self):
        self.assertEqual(float(muscle_pd(1.0, 1.0, 0.0, PdGains(), 1.0)),
                         0.0)

    def test_stretched_muscle_pulls(self):
        f_star = muscle_pd(0.9, 1.0, 0.0, PdGains(k_p=200.0, k_d=10.0), 1.0)
        self.assertAlmostEqual(float(f_star), -20.0)

    def test_lengthening_adds_damping(self):
        f_star = muscle_pd(1.0, 1.0, 0.5, PdGains(k_p=200.0, k_d=10.0), 1.0)
        self.assertAlmostEqual(float(f_star), -5.0)

    def test_l_range_normalization(self):
        rng = np.random.default_rng(3)
        l_star = rng.uniform(0.8, 1.0, 50)
        l_m = l_star + rng.uniform(0.0, 0.2, 50)
        gains = PdGains(k_p=200.0, k_d=0.0)
        base = muscle_pd(l_star, l_m, 0.0, gains, 0.5)
        np.testing.assert_allclose(muscle_pd(l_star, l_m, 0.0, gains, 1.0),
                                   0.5 * base, rtol=1e-12)
        halved = PdGains(k_p=100.0, k_d=0.0)
        np.testing.assert_allclose(muscle_pd(l_star, l_m, 0.0, halved, 0.25),
                                   base, rtol=1e-12)

    def test_gains_validate(self):
        self.assertEqual(PdGains().validate(), [])
        self.assertEqual(PdGains(k_p=-1.0).validate(),
                         ['PD gains must be >= 0'])


class TestPiControl(TestCase):

    def setUp(self):
        super(TestPiControl, self).setUp()
        self.spec = fakes.model_spec()
        self.biped = Biped(self.spec)
        self.state = initial_state(self.spec)
        self.gains = PdGains(k_p=8000.0, k_d=600.0)

    def test_reference_target_at_rest(self):
        u, saturated = pi_control(self.biped, self.state,
                                  self.spec.reference_joints, self.gains,
                                  0.01)
        np.testing.assert_array_equal(u, np.zeros(18))
        self.assertFalse(np.any(saturated))

    def test_hip_flexion_target(self):
        z = self.spec.reference_joints.copy()
        z[0] += 0.2
        u, _saturated = pi_control(self.biped, self.state, z, self.gains,
                                   0.01)
        names = list(self.spec.muscle_names)
        self.assertGreater(u[names.index('hip_flexor_r')], 0.0)
        self.assertEqual(u[names.index('hip_extensor_r')], 0.0)
        self.assertEqual(u[names.index('hip_flexor_l')], 0.0)
        self.assertTrue(np.all((u >= 0.0) & (u <= 1.0)))

    def test_tilt_target_ignored(self):
        z = np.append(self.spec.reference_joints, 0.3)
        np.testing.assert_array_equal(
            target_muscle_lengths(self.biped, z),
            target_muscle_lengths(self.biped, z[:6]))

    def test_batched(self):
        batch = self.state.replicate(5)
        rng = np.random.default_rng(0)
        z = self.spec.reference_joints + rng.normal(0.0, 0.1, (5, 6))
        u, saturated = pi_control(self.biped, batch, z, self.gains, 0.01)
        self.assertEqual(u.shape, (5, 18))
        single, _ = pi_control(self.biped, self.state, z[3], self.gains,
                               0.01)
        np.testing.assert_allclose(u[3], single)

    def test_controller_counts_saturations(self):
        controller = LowLevelController(self.biped,
                                        PdGains(k_p=1e7, k_d=0.0), 0.01)
        z = self.spec.reference_joints + 0.3
        u = controller(self.state, z)
        self.assertEqual(u.shape, (18,))
        self.assertGreater(controller.saturations, 0)

    def test_control_period_reduces_overstretch(self):
        state = initial_state(self.spec, preload=False)
        state = BodyState(q=state.q + np.array([0.0, 5.0] + [0.0] * 7),
                          qd=np.zeros(9), act=np.zeros(18))
        z = self.spec.reference_joints.copy()
        z[0] += 0.2
        l_star = target_muscle_lengths(self.biped, z)

        def overstretch(body):
            excess = self.biped.muscle_lengths(body.q) - l_star
            return float(np.sum(np.maximum(0.0, excess) ** 2))

        before = overstretch(state)
        self.assertGreater(before, 0.0)
        u, _saturated = pi_control(self.biped, state, z, self.gains, 0.01)
        for _ in range(int(round(0.01 / self.biped.dt))):
            state = self.biped.step(state, u)
        self.assertLess(overstretch(state), before)
