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

from dataclasses import dataclass

import numpy as np

from hbcsim.biped import N_JOINTS
from hbcsim.muscle import inverse_activation, inverse_control

LOG = logging.getLogger(__name__ + ".lowctl")


@dataclass(frozen=True)
class PdGains(object):
    """Muscle-length PD gains

    :param k_p: Force per unit of ``l_range``-normalized length error (N)
    :param k_d: Force per normalized length per second (N.s)
    """
    k_p: float = 200.0
    k_d: float = 10.0

    def validate(self):
        errors = []
        if self.k_p < 0 or self.k_d < 0:
            errors.append('PD gains must be >= 0')
        return errors


def target_muscle_lengths(biped, z):
    """Normalized muscle lengths at the target joint angles ``z``

    Only the six joint targets are used; an extra pelvis tilt target is
    ignored.
    """
    return biped.muscle_lengths(np.asarray(z, dtype=float)[..., :N_JOINTS])


def muscle_pd(l_star, l_m, v_m, gains, l_range):
    """Desired muscle force, never positive

    ``min(0, k_p * (l* - l) / l_range + k_d * (0 - v))``
    """
    demand = (gains.k_p * (np.asarray(l_star) - l_m) / l_range -
              gains.k_d * np.asarray(v_m))
    return np.minimum(0.0, demand)


def pi_control(biped, state, z, gains, dt):
    """Muscle controls driving the body toward the target pose ``z``

    :param biped: The simulated model
    :type biped: :class:`hbcsim.biped.Biped`
    :param state: The current (single or batched) state
    :param z: Target joint angles ``(..., 6)`` or ``(..., 7)``
    :param gains: The PD gains
    :type gains: :class:`PdGains`
    :param dt: Period over which the control is held (s)
    :return: The controls in ``[0, 1]`` and the inverse-activation
             saturation mask, both ``(..., 18)``
    :rtype: ``tuple``
    """
    table = biped.table
    l_m = biped.muscle_lengths(state.q)
    v_m = biped.muscle_velocities(state.qd)
    f_star = muscle_pd(target_muscle_lengths(biped, z), l_m, v_m, gains,
                       table.l_range)
    act_star, saturated = inverse_activation(table, l_m, v_m, -f_star)
    return inverse_control(state.act, act_star, dt), saturated


class LowLevelController(object):
    """The policy ``u = pi(s, z)`` bound to a model and its gains"""

    def __init__(self, biped, gains, dt=0.01):
        self.biped = biped
        self.gains = gains
        self.dt = dt
        self.saturations = 0
        self.log = logging.getLogger(__name__ + ".LowLevelController")

    def __call__(self, state, z):
        u, saturated = pi_control(self.biped, state, z, self.gains, self.dt)
        self.saturations += int(np.count_nonzero(saturated))
        return u
