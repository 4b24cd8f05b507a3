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
"""Hill-type muscle-tendon units with a rigid tendon.

Every function accepts scalars or numpy arrays and broadcasts, so the same
code evaluates one muscle, the 18 muscles of the biped, or all muscles of all
rollout particles at once.
"""
import logging

from dataclasses import dataclass, field

import numpy as np

from hbcsim import constants

LOG = logging.getLogger(__name__ + ".muscle")


@dataclass(frozen=True, eq=False)
class MuscleParams(object):
    """Parameters of one muscle, or of a table of muscles

    When built by :meth:`stack` every field is a numpy array with one entry
    per muscle.

    :param f_max: Maximum isometric force (N)
    :param l_opt: Optimal fiber length (m)
    :param l_min: Lower normalized length bound (multiples of ``l_opt``)
    :param l_max: Upper normalized length bound (multiples of ``l_opt``)
    :param v_max: Maximum shortening rate (optimal lengths per second)
    :param injury_factor: Scale in [0, 1] applied to ``f_max``
    """
    f_max: float
    l_opt: float
    l_min: float = 0.5
    l_max: float = 1.5
    v_max: float = 10.0
    injury_factor: float = 1.0
    name: str = field(default='')

    @property
    def l_range(self):
        return np.subtract(self.l_max, self.l_min)

    @property
    def capacity(self):
        """Force scale actually available, ``injury_factor * f_max``"""
        return np.multiply(self.injury_factor, self.f_max)

    def validate(self):
        """Return the list of violated invariants (empty when valid)

        :rtype: ``list``
        """
        errors = []
        label = self.name or 'muscle'
        if np.any(np.asarray(self.f_max) <= 0):
            errors.append('{}: f_max must be > 0'.format(label))
        if np.any(np.asarray(self.l_opt) <= 0):
            errors.append('{}: l_opt must be > 0'.format(label))
        if np.any(np.asarray(self.l_min) <= 0) or \
                np.any(np.asarray(self.l_min) >= 1):
            errors.append('{}: l_min must lie in (0, 1)'.format(label))
        if np.any(np.asarray(self.l_max) <= 1):
            errors.append('{}: l_max must be > 1'.format(label))
        if np.any(np.asarray(self.v_max) <= 0):
            errors.append('{}: v_max must be > 0'.format(label))
        factor = np.asarray(self.injury_factor)
        if np.any(factor < 0) or np.any(factor > 1):
            errors.append('{}: injury_factor must lie in [0, 1]'.format(label))
        return errors

    @classmethod
    def stack(cls, muscles):
        """Build a vectorised table from a sequence of single muscles

        :param muscles: The muscles, in model order
        :type muscles: ``list`` of :class:`MuscleParams`
        :rtype: :class:`MuscleParams`
        """
        muscles = list(muscles)
        return cls(
            f_max=np.array([m.f_max for m in muscles], dtype=float),
            l_opt=np.array([m.l_opt for m in muscles], dtype=float),
            l_min=np.array([m.l_min for m in muscles], dtype=float),
            l_max=np.array([m.l_max for m in muscles], dtype=float),
            v_max=np.array([m.v_max for m in muscles], dtype=float),
            injury_factor=np.array([m.injury_factor for m in muscles],
                                   dtype=float),
            name=','.join(m.name for m in muscles))


@dataclass(frozen=True, eq=False)
class MuscleState(object):
    """Activation, normalized fiber length and normalized fiber velocity"""
    act: float
    l_m: float = 1.0
    v_m: float = 0.0


def active_force_length(l_m):
    """Gaussian active force-length gain, peaking at the optimal length"""
    return np.exp(-np.square((np.asarray(l_m, dtype=float) - 1.0) /
                             constants.FL_WIDTH))


def force_velocity(v_m, v_max=1.0):
    """Rational force-velocity gain

    Zero at maximal shortening, one when isometric, approaching 1.4 when
    lengthening fast.

    :param v_m: Normalized fiber velocity (shortening negative)
    :param v_max: Maximum shortening rate used to scale ``v_m``
    :return: The gain in ``[0, 1.4)``
    """
    v = np.asarray(v_m, dtype=float) / v_max
    concentric = np.clip(v, -1.0, 0.0)
    eccentric = np.maximum(v, 0.0)
    gain = np.where(
        v > 0,
        (1.0 + constants.FV_ECCENTRIC_NUM * eccentric) /
        (1.0 + constants.FV_ECCENTRIC_DEN * eccentric),
        (1.0 + concentric) / (1.0 - constants.FV_CONCENTRIC * concentric))
    return np.where(v <= -1.0, 0.0, gain)


def passive_force(l_m):
    """Quadratic passive force, slack below the optimal length"""
    stretch = np.maximum(0.0, (np.asarray(l_m, dtype=float) - 1.0) /
                         constants.FP_STRAIN)
    return np.square(stretch)


def muscle_force(params, state):
    """Tension produced by the muscle(s) (N)

    ``injury_factor * f_max * (F_l * F_v * act + F_p)``

    :param params: Muscle parameters (scalar or table)
    :type params: :class:`MuscleParams`
    :param state: Activation, length and velocity
    :type state: :class:`MuscleState`
    :return: Non-negative tension
    """
    gain = active_force_length(state.l_m) * \
        force_velocity(state.v_m, params.v_max)
    return params.capacity * (gain * np.asarray(state.act, dtype=float) +
                              passive_force(state.l_m))


def activation_time_constant(act, u):
    """Activation-dependent time constant of the activation dynamics

    Activation (``u > act``) speeds up at low activation; deactivation
    slows down at low activation.
    """
    act = np.asarray(act, dtype=float)
    scale = 0.5 + 1.5 * act
    return np.where(np.asarray(u) > act,
                    constants.TAU_ACTIVATION * scale,
                    constants.TAU_DEACTIVATION / scale)


def activation_step(act, u, dt):
    """Explicit Euler step of ``d act/dt = (u - act) / tau(u, act)``

    :return: The new activation clamped to ``[0, 1]``
    """
    act = np.asarray(act, dtype=float)
    tau = activation_time_constant(act, u)
    return np.clip(act + dt * (np.asarray(u) - act) / tau, 0.0, 1.0)


def inverse_activation(params, l_m, v_m, f_star):
    """Activation producing the tension ``f_star`` at the given kinematics

    :param params: Muscle parameters (scalar or table)
    :param l_m: Normalized fiber length
    :param v_m: Normalized fiber velocity
    :param f_star: Desired tension magnitude (N, >= 0)
    :return: The activation clamped to ``[0, 1]`` and a boolean saturation
             flag, set where the active gain is degenerate or where the
             demand exceeds the available force
    :rtype: ``tuple``
    """
    gain = active_force_length(l_m) * force_velocity(v_m, params.v_max)
    capacity = params.capacity
    degenerate = (gain <= constants.INVERSE_GAIN_EPSILON) | \
        (np.asarray(capacity) <= 0)
    safe_gain = np.where(degenerate, 1.0, gain)
    safe_capacity = np.where(np.asarray(capacity) <= 0, 1.0, capacity)
    raw = (np.asarray(f_star, dtype=float) / safe_capacity -
           passive_force(l_m)) / safe_gain
    act = np.where(degenerate, 0.0, np.clip(raw, 0.0, 1.0))
    saturated = degenerate | (raw > 1.0)
    return act, saturated


def inverse_control(act, act_star, dt):
    """Control that moves ``act`` to ``act_star`` in one Euler step

    The time constant follows the branch implied by the sign of
    ``act_star - act``.

    :return: The control clamped to ``[0, 1]``
    """
    act = np.asarray(act, dtype=float)
    act_star = np.asarray(act_star, dtype=float)
    scale = 0.5 + 1.5 * act
    tau = np.where(act_star > act,
                   constants.TAU_ACTIVATION * scale,
                   constants.TAU_DEACTIVATION / scale)
    return np.clip(act + tau * (act_star - act) / dt, 0.0, 1.0)
