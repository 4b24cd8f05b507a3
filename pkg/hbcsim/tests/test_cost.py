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
from dataclasses import replace
from unittest import TestCase

import numpy as np

from hbcsim.biped import Biped, initial_state
from hbcsim.cost import (COMPONENTS, CostWeights, body_height,
                         cost_components, cost_total, weighted_total)
from hbcsim.tests import fakes


class TestCost(TestCase):

    def setUp(self):
        super(TestCost, self).setUp()
        self.spec = fakes.model_spec()
        self.biped = Biped(self.spec)
        self.state = initial_state(self.spec)
        self.ref = self.spec.reference_joints
        self.height = float(body_height(self.biped, self.state.q))

    def test_reference_pose_costs_nothing(self):
        cost = cost_components(self.biped, self.state, self.ref, self.height)
        for name, value in cost.as_dict().items():
            self.assertAlmostEqual(value, 0.0, places=9, msg=name)

    def test_posture_term_is_l1(self):
        q = self.state.q.copy()
        q[3:] += np.array([0.1, -0.1, 0.1, -0.1, 0.1, -0.1])
        cost = cost_components(self.biped, replace(self.state, q=q),
                               self.ref, self.height)
        self.assertAlmostEqual(float(cost.c_I), 0.6)

    def test_horizontal_torso(self):
        q = self.state.q.copy()
        q[2] = np.pi / 2
        cost = cost_components(self.biped, replace(self.state, q=q),
                               self.ref, self.height)
        self.assertAlmostEqual(float(cost.c_R), 1.0)

    def test_velocity_term(self):
        qd = np.zeros(9)
        qd[0] = -0.4
        cost = cost_components(self.biped, replace(self.state, qd=qd),
                               self.ref, self.height)
        self.assertAlmostEqual(float(cost.c_Vc), 0.4)

    def test_height_term(self):
        cost = cost_components(self.biped, self.state, self.ref,
                               self.height + 0.05)
        self.assertAlmostEqual(float(cost.c_H), 0.05)
        self.assertAlmostEqual(float(cost.total), 300.0 * 0.05)

    def test_weighted_total(self):
        rng = np.random.default_rng(3)
        batch = self.state.replicate(8)
        q = batch.q + rng.normal(0.0, 0.05, batch.q.shape)
        batch = replace(batch, q=q)
        weights = CostWeights(w_H=1.0, w_R=2.0, w_Pc=3.0, w_Vc=4.0, w_I=5.0)
        cost = cost_components(self.biped, batch, self.ref, self.height,
                               weights)
        components = np.stack([getattr(cost, name) for name in COMPONENTS],
                              axis=-1)
        np.testing.assert_allclose(weighted_total(components, weights),
                                   cost.total)
        np.testing.assert_allclose(
            cost_total(self.biped, batch, self.ref, self.height, weights),
            cost.total)
        self.assertEqual(cost.total.shape, (8,))
        self.assertTrue(np.all(cost.total >= 0))

    def test_weights(self):
        np.testing.assert_array_equal(CostWeights().as_array(),
                                      [300.0, 300.0, 300.0, 10.0, 1.0])
        self.assertEqual(CostWeights(w_H=-1.0).validate(),
                         ['cost weights must be >= 0'])
