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

from dataclasses import asdict, dataclass

import numpy as np

from hbcsim import constants

LOG = logging.getLogger(__name__ + ".exo")

PITCH = constants.COORDINATE_NAMES.index('pitch')
HIPS = [3 + j for j in constants.HIP_JOINTS]


@dataclass(frozen=True)
class ExoParams(object):
    """Hip exoskeleton gains

    :param k_pe: Hip joint stiffness (N.m/rad)
    :param k_de: Hip joint damping (N.m.s/rad)
    :param k_pt: Pelvis posture stiffness (N.m/rad)
    :param k_dt: Pelvis posture damping (N.m.s/rad)
    :param w: Weight of the postural term in ``[0, 1]``
    :param tau_max: Torque saturation (N.m)
    """
    k_pe: float = 0.0
    k_de: float = 0.0
    k_pt: float = 0.0
    k_dt: float = 0.0
    w: float = 0.0
    tau_max: float = constants.EXO_TAU_MAX

    def validate(self):
        errors = []
        if min(self.k_pe, self.k_de, self.k_pt, self.k_dt) < 0:
            errors.append('exoskeleton gains must be >= 0')
        if not 0.0 <= self.w <= 1.0:
            errors.append('exoskeleton weight w must lie in [0, 1]')
        if self.tau_max <= 0:
            errors.append('tau_max must be > 0')
        return errors

    def to_dict(self):
        return asdict(self)


def exo_torque(params, q_hip, qd_hip, q_tilt, qd_tilt, q_star, q_tilt_star):
    """Hip torques of the mixed joint/posture PD law

    ``(1 - w) * (k_pe * (q* - q) - k_de * qd)
    + w * (k_pt * (q_t* - q_t) - k_dt * qd_t)`` per side, clamped to
    ``+/- tau_max``.

    :return: Right and left hip torques ``(..., 2)`` (N.m)
    """
    joint = (params.k_pe * (np.asarray(q_star) - q_hip) -
             params.k_de * np.asarray(qd_hip))
    posture = (params.k_pt * (np.asarray(q_tilt_star) - q_tilt) -
               params.k_dt * np.asarray(qd_tilt))
    tau = (1.0 - params.w) * joint + params.w * np.asarray(posture)[..., None]
    return np.clip(tau, -params.tau_max, params.tau_max)


def exo_torque_for_state(params, state, z):
    """Hip torques for a (batched) body state and planner target

    The pelvis tilt target is the seventh entry of ``z`` when present,
    upright otherwise.
    """
    z = np.asarray(z, dtype=float)
    q = np.asarray(state.q)
    qd = np.asarray(state.qd)
    tilt_star = z[..., 6] if z.shape[-1] > 6 else 0.0
    return exo_torque(params, q[..., HIPS], qd[..., HIPS], q[..., PITCH],
                      qd[..., PITCH], z[..., list(constants.HIP_JOINTS)],
                      tilt_star)
