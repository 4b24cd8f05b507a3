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
"""Standing cost: height, uprightness, CoM placement, CoM velocity and
posture terms."""
import logging

from dataclasses import astuple, dataclass

import numpy as np

from hbcsim import constants

LOG = logging.getLogger(__name__ + ".cost")

COMPONENTS = ('c_H', 'c_R', 'c_Pc', 'c_Vc', 'c_I')


@dataclass(frozen=True)
class CostWeights(object):
    w_H: float = 300.0
    w_R: float = 300.0
    w_Pc: float = 300.0
    w_Vc: float = 10.0
    w_I: float = 1.0

    def as_array(self):
        return np.array(astuple(self), dtype=float)

    def validate(self):
        if np.any(self.as_array() < 0):
            return ['cost weights must be >= 0']
        return []


@dataclass(frozen=True, eq=False)
class CostBreakdown(object):
    """Component values and their weighted total (scalar or batched)"""
    c_H: float
    c_R: float
    c_Pc: float
    c_Vc: float
    c_I: float
    total: float

    def as_dict(self):
        return {name: float(getattr(self, name))
                for name in COMPONENTS + ('total',)}


def body_height(biped, q):
    """Head height above the mean heel/toe height"""
    pos = biped.point_positions(q)
    head = pos[..., biped.point_index('head'), 1]
    feet = [biped.point_index(p) for p in constants.FOOT_POINTS]
    return head - pos[..., feet, 1].mean(-1)


def cost_components(biped, state, ref_pose, initial_height, weights=None):
    """Evaluate every standing cost term

    :param biped: The simulated model
    :param state: A single or batched :class:`hbcsim.biped.BodyState`
    :param ref_pose: The six natural standing joint angles
    :param initial_height: Head-to-feet height at the start of the trial
    :param weights: Term weights, defaults to :class:`CostWeights`
    :rtype: :class:`CostBreakdown`
    """
    weights = weights or CostWeights()
    q = np.asarray(state.q, dtype=float)
    pos = biped.point_positions(q)
    head = pos[..., biped.point_index('head'), :]
    pelvis = pos[..., biped.point_index('pelvis'), :]
    feet = pos[..., [biped.point_index(p) for p in constants.FOOT_POINTS], :]

    c_h = np.abs(head[..., 1] - feet[..., 1].mean(-1) - initial_height)
    trunk = head - pelvis
    c_r = 1.0 - trunk[..., 1] / np.linalg.norm(trunk, axis=-1)
    c_pc = np.abs(biped.com(state)[..., 0] - feet[..., 0].mean(-1))
    c_vc = np.abs(biped.com_velocity(state)[..., 0])
    c_i = np.abs(q[..., 3:] - np.asarray(ref_pose)).sum(-1)

    total = (weights.w_H * c_h + weights.w_R * c_r + weights.w_Pc * c_pc +
             weights.w_Vc * c_vc + weights.w_I * c_i)
    return CostBreakdown(c_H=c_h, c_R=c_r, c_Pc=c_pc, c_Vc=c_vc, c_I=c_i,
                         total=total)


def weighted_total(components, weights):
    """Recombine a ``(..., 5)`` array of component values"""
    return np.asarray(components, dtype=float) @ weights.as_array()


def cost_total(biped, state, ref_pose, initial_height, weights=None):
    """Total cost only, the quantity summed along rollouts"""
    return cost_components(biped, state, ref_pose, initial_height,
                           weights).total
