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
"""Reduced sagittal-plane musculoskeletal biped.

The generalized coordinates are ``q = [x, z, pitch, hip_r, knee_r, ankle_r,
hip_l, knee_l, ankle_l]`` where ``(x, z)`` is the pelvis (hip joint) position
and ``pitch`` the forward lean of the torso. Hip flexion, knee flexion and
ankle dorsiflexion are positive.

Every array argument may carry leading batch dimensions; the dynamics advance
all rollout particles in a single call.
"""
import logging

from dataclasses import dataclass, replace

import numpy as np
from scipy import optimize

from hbcsim import constants
from hbcsim.exceptions import NumericalFault
from hbcsim.muscle import MuscleState, activation_step, muscle_force

LOG = logging.getLogger(__name__ + ".biped")

N_COORDS = len(constants.COORDINATE_NAMES)
N_JOINTS = len(constants.JOINT_NAMES)
N_SEGMENTS = len(constants.SEGMENT_NAMES)

# Absolute segment angle as a linear map of q, one row per segment
ANGLE_MAP = np.array([
    # x  z  pitch hip_r knee_r ankle_r hip_l knee_l ankle_l
    [0, 0, -1, 0, 0, 0, 0, 0, 0],     # torso
    [0, 0, -1, 1, 0, 0, 0, 0, 0],     # thigh_r
    [0, 0, -1, 1, -1, 0, 0, 0, 0],    # shank_r
    [0, 0, -1, 1, -1, 1, 0, 0, 0],    # foot_r
    [0, 0, -1, 0, 0, 0, 1, 0, 0],     # thigh_l
    [0, 0, -1, 0, 0, 0, 1, -1, 0],    # shank_l
    [0, 0, -1, 0, 0, 0, 1, -1, 1],    # foot_l
], dtype=float)


@dataclass(frozen=True, eq=False)
class BodyState(object):
    """Simulation state, possibly batched over a leading axis

    ``tension``, ``normal_force`` and ``tangential_force`` are filled by
    :meth:`Biped.step` with the values used for the step just taken.
    """
    q: np.ndarray
    qd: np.ndarray
    act: np.ndarray
    t: float = 0.0
    tension: np.ndarray = None
    normal_force: np.ndarray = None
    tangential_force: np.ndarray = None

    @property
    def batch_shape(self):
        return np.shape(self.q)[:-1]

    def is_finite(self):
        """Per-particle finiteness mask"""
        return (np.all(np.isfinite(self.q), axis=-1) &
                np.all(np.isfinite(self.qd), axis=-1) &
                np.all(np.isfinite(self.act), axis=-1))

    def replicate(self, count):
        """Return a batch of ``count`` independent copies of this state"""
        return BodyState(q=np.tile(self.q, (count, 1)),
                         qd=np.tile(self.qd, (count, 1)),
                         act=np.tile(self.act, (count, 1)),
                         t=self.t)

    def muscle_states(self, biped):
        """The :class:`MuscleState` implied by ``q``, ``qd`` and ``act``"""
        return MuscleState(act=self.act,
                           l_m=biped.muscle_lengths(self.q),
                           v_m=biped.muscle_velocities(self.qd))


@dataclass(frozen=True)
class ContactReport(object):
    point: str
    penetration: float
    normal_force: float
    tangential_force: float
    x: float


def _point_vectors(spec):
    """Local vectors, per segment, locating every named point

    :return: The point names and an array ``(P, 7, 2)``
    """
    seg = {s.name: s for s in spec.segments}
    foot = spec.foot
    names = []
    vectors = []

    def add(name, terms):
        v = np.zeros((N_SEGMENTS, 2))
        for segment, local in terms:
            v[constants.SEGMENT_NAMES.index(segment)] += local
        names.append(name)
        vectors.append(v)

    torso = seg['torso']
    add('com_torso', [('torso', (0.0, torso.com_offset))])
    for side in constants.SIDES:
        thigh = seg['thigh_' + side]
        shank = seg['shank_' + side]
        leg = [('thigh_' + side, (0.0, -thigh.length)),
               ('shank_' + side, (0.0, -shank.length))]
        add('com_thigh_' + side,
            [('thigh_' + side, (0.0, -thigh.com_offset))])
        add('com_shank_' + side,
            [leg[0], ('shank_' + side, (0.0, -shank.com_offset))])
        add('com_foot_' + side,
            leg + [('foot_' + side, (seg['foot_' + side].com_offset,
                                     -foot.height / 2.0))])
    # Contact points, in constants.CONTACT_POINTS order
    for side in constants.SIDES:
        thigh = seg['thigh_' + side]
        shank = seg['shank_' + side]
        leg = [('thigh_' + side, (0.0, -thigh.length)),
               ('shank_' + side, (0.0, -shank.length))]
        add('heel_' + side,
            leg + [('foot_' + side, (-foot.heel, -foot.height))])
        add('toe_' + side,
            leg + [('foot_' + side, (foot.toe, -foot.height))])
    for side in constants.SIDES:
        add('knee_' + side,
            [('thigh_' + side, (0.0, -seg['thigh_' + side].length))])
    add('pelvis', [])
    add('torso_mid', [('torso', (0.0, torso.length / 2.0))])
    add('head', [('torso', (0.0, torso.length))])
    for side in constants.SIDES:
        add('ankle_' + side,
            [('thigh_' + side, (0.0, -seg['thigh_' + side].length)),
             ('shank_' + side, (0.0, -seg['shank_' + side].length))])
    return tuple(names), np.array(vectors)


class Biped(object):
    """Articulated planar biped driven by 18 muscles

    :param spec: The model description
    :type spec: :class:`hbcsim.model.ModelSpec`
    :param dt: Physics timestep (s)
    """

    def __init__(self, spec, dt=0.001):
        self.spec = spec
        self.dt = dt
        self.table = spec.muscle_table
        self.moment_arms = np.asarray(spec.moment_arms, dtype=float)
        self.reference = np.asarray(spec.reference_joints, dtype=float)
        self.limits = np.asarray(spec.joint_limits, dtype=float)
        self.point_names, self.vectors = _point_vectors(spec)
        self.masses = np.array([s.mass for s in spec.segments])
        self.total_mass = float(self.masses.sum())
        inertias = np.array([s.inertia for s in spec.segments])
        self._rot_inertia = ANGLE_MAP.T @ np.diag(inertias) @ ANGLE_MAP
        self._com_slice = slice(0, N_SEGMENTS)
        first = self.point_names.index(constants.CONTACT_POINTS[0])
        self._contact_slice = slice(first,
                                    first + len(constants.CONTACT_POINTS))
        self._foot_slice = slice(first, first + len(constants.FOOT_POINTS))

    def point_index(self, name):
        return self.point_names.index(name)

    def _rotate(self, q, vectors=None):
        """Rotated local vectors ``R(theta_s) v`` for every point"""
        vectors = self.vectors if vectors is None else vectors
        theta = np.asarray(q, dtype=float) @ ANGLE_MAP.T
        c = np.cos(theta)[..., None, :]
        s = np.sin(theta)[..., None, :]
        vx = vectors[..., 0]
        vz = vectors[..., 1]
        return c * vx - s * vz, s * vx + c * vz

    def point_positions(self, q):
        """World positions of every named point

        :return: An array ``(..., P, 2)`` ordered as :attr:`point_names`
        """
        q = np.asarray(q, dtype=float)
        rx, rz = self._rotate(q)
        return np.stack([q[..., 0, None] + rx.sum(-1),
                         q[..., 1, None] + rz.sum(-1)], axis=-1)

    def point_velocities(self, q, qd):
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        rx, rz = self._rotate(q)
        omega = (qd @ ANGLE_MAP.T)[..., None, :]
        return np.stack([qd[..., 0, None] - (rz * omega).sum(-1),
                         qd[..., 1, None] + (rx * omega).sum(-1)], axis=-1)

    def contact_positions(self, q):
        """Positions ``(..., C, 2)`` in ``constants.CONTACT_POINTS`` order"""
        return self.point_positions(q)[..., self._contact_slice, :]

    def point(self, q, name):
        """Position ``(..., 2)`` of a single named point"""
        return self.point_positions(q)[..., self.point_index(name), :]

    def com(self, state):
        """Whole-body center of mass ``(..., 2)`` (m)"""
        pos = self.point_positions(state.q)[..., self._com_slice, :]
        return np.einsum('...pk,p->...k', pos, self.masses) / self.total_mass

    def com_velocity(self, state):
        vel = self.point_velocities(state.q, state.qd)[..., self._com_slice, :]
        return np.einsum('...pk,p->...k', vel, self.masses) / self.total_mass

    def muscle_lengths(self, q):
        """Normalized fiber lengths from the joint angles of ``q``

        Accepts a full coordinate vector or a joint-only vector.
        """
        joints = np.asarray(q, dtype=float)
        if joints.shape[-1] == N_COORDS:
            joints = joints[..., 3:]
        return 1.0 - ((joints - self.reference) @ self.moment_arms.T /
                      self.table.l_opt)

    def muscle_velocities(self, qd):
        joints = np.asarray(qd, dtype=float)
        if joints.shape[-1] == N_COORDS:
            joints = joints[..., 3:]
        return -(joints @ self.moment_arms.T) / self.table.l_opt

    def muscle_joint_torques(self, tension):
        """Joint torques ``(..., 6)`` produced by muscle tensions

        A tension pulling along a muscle with positive moment arm produces a
        positive torque, i.e. ``-T * dL/dq``.
        """
        return np.asarray(tension, dtype=float) @ self.moment_arms

    def muscle_tensions(self, state):
        return muscle_force(self.table, state.muscle_states(self))

    def mass_matrix(self, q):
        jx, jz, _rx, _rz = self._jacobians(q, self._com_slice)
        m = self.masses
        return (np.einsum('...pk,p,...pl->...kl', jx, m, jx) +
                np.einsum('...pk,p,...pl->...kl', jz, m, jz) +
                self._rot_inertia)

    def _jacobians(self, q, points):
        rx, rz = self._rotate(q, self.vectors[points])
        jx = -rz @ ANGLE_MAP
        jz = rx @ ANGLE_MAP
        jx[..., 0] += 1.0
        jz[..., 1] += 1.0
        return jx, jz, rx, rz

    def contact_forces(self, q, qd):
        """Penalty contact forces at every contact point

        :return: penetration, normal force and tangential force, each
                 ``(..., C)`` in ``constants.CONTACT_POINTS`` order
        """
        contact = self.spec.contact
        pos = self.contact_positions(q)
        vel = self.point_velocities(q, qd)[..., self._contact_slice, :]
        penetration = -pos[..., 1]
        normal = np.where(penetration > 0,
                          np.maximum(0.0, contact.stiffness * penetration -
                                     contact.damping * vel[..., 1]),
                          0.0)
        tangential = -contact.friction * normal * np.tanh(
            vel[..., 0] / contact.slip_velocity)
        return penetration, normal, tangential

    def joint_passive_torques(self, q, qd):
        """Joint limit penalty plus viscous joint damping"""
        params = self.spec.joints
        joints = np.asarray(q)[..., 3:]
        rates = np.asarray(qd)[..., 3:]
        below = np.maximum(0.0, self.limits[:, 0] - joints)
        above = np.maximum(0.0, joints - self.limits[:, 1])
        outside = (below > 0) | (above > 0)
        return (params.limit_stiffness * (below - above) -
                np.where(outside, params.limit_damping * rates, 0.0) -
                params.damping * rates)

    def step(self, state, u, tau_exo=None, f_ext=None, dt=None, strict=True):
        """Advance the state by one physics timestep

        Activation dynamics, muscle tensions, exoskeleton hip torques, the
        external push at the torso CoM and penalty contacts are combined in
        the equations of motion, integrated with semi-implicit Euler.

        :param state: The current state (single or batched)
        :type state: :class:`BodyState`
        :param u: Muscle controls in ``[0, 1]``, ``(..., 18)``
        :param tau_exo: Right and left hip torques (N.m), ``(..., 2)``
        :param f_ext: Force at the torso CoM (N), ``(..., 2)``
        :param dt: Timestep (s), defaults to the biped timestep
        :param strict: Raise on a non-finite result, otherwise return it
        :return: The new state
        :rtype: :class:`BodyState`
        :raises: a :class:`NumericalFault` when the result is not finite and
                 ``strict`` is set
        """
        dt = self.dt if dt is None else dt
        q = np.asarray(state.q, dtype=float)
        qd = np.asarray(state.qd, dtype=float)
        g = self.spec.gravity

        act = activation_step(state.act, u, dt)
        tension = muscle_force(self.table, MuscleState(
            act=act, l_m=self.muscle_lengths(q),
            v_m=self.muscle_velocities(qd)))

        jx, jz, rx, rz = self._jacobians(q, slice(None))
        omega2 = np.square(qd @ ANGLE_MAP.T)[..., None, :]
        ax = -(rx * omega2).sum(-1)
        az = -(rz * omega2).sum(-1)

        com = self._com_slice
        m = self.masses
        mass = (np.einsum('...pk,p,...pl->...kl', jx[..., com, :], m,
                          jx[..., com, :]) +
                np.einsum('...pk,p,...pl->...kl', jz[..., com, :], m,
                          jz[..., com, :]) +
                self._rot_inertia)
        bias = (np.einsum('...pk,p,...p->...k', jx[..., com, :], m,
                          ax[..., com]) +
                np.einsum('...pk,p,...p->...k', jz[..., com, :], m,
                          az[..., com] + g))

        contact = self.spec.contact
        cs = self._contact_slice
        pos_z = q[..., 1, None] + rz[..., cs, :].sum(-1)
        vel_x = np.einsum('...pk,...k->...p', jx[..., cs, :], qd)
        vel_z = np.einsum('...pk,...k->...p', jz[..., cs, :], qd)
        penetration = -pos_z
        normal = np.where(penetration > 0,
                          np.maximum(0.0, contact.stiffness * penetration -
                                     contact.damping * vel_z),
                          0.0)
        tangential = -contact.friction * normal * np.tanh(
            vel_x / contact.slip_velocity)

        force = (np.einsum('...pk,...p->...k', jx[..., cs, :], tangential) +
                 np.einsum('...pk,...p->...k', jz[..., cs, :], normal))
        joint_torque = (self.muscle_joint_torques(tension) +
                        self.joint_passive_torques(q, qd))
        if tau_exo is not None:
            hips = np.zeros(np.shape(joint_torque))
            hips[..., list(constants.HIP_JOINTS)] = tau_exo
            joint_torque = joint_torque + hips
        force[..., 3:] += joint_torque
        if f_ext is not None:
            push = np.broadcast_to(np.asarray(f_ext, dtype=float),
                                   q.shape[:-1] + (2,))
            force += (jx[..., 0, :] * push[..., 0, None] +
                      jz[..., 0, :] * push[..., 1, None])

        qdd = np.linalg.solve(mass, (force - bias)[..., None])[..., 0]
        new_qd = qd + dt * qdd
        new_q = q + dt * new_qd
        new_state = BodyState(q=new_q, qd=new_qd, act=act, t=state.t + dt,
                              tension=tension, normal_force=normal,
                              tangential_force=tangential)
        if strict and not np.all(new_state.is_finite()):
            rows = np.reshape(new_q, (-1, N_COORDS))
            bad = [constants.COORDINATE_NAMES[i] for i in
                   np.flatnonzero(~np.isfinite(rows).any(axis=0))]
            raise NumericalFault(
                "Non-finite state at t={:.4f}s (coordinates: {})".format(
                    state.t + dt, ', '.join(bad) or 'velocities'))
        return new_state

    def support_bounds(self, q):
        """Vectorised support interval, ``nan`` bounds when airborne"""
        pos = self.point_positions(q)[..., self._foot_slice, :]
        grounded = pos[..., 1] < 0
        lo = np.where(grounded, pos[..., 0], np.inf).min(axis=-1)
        hi = np.where(grounded, pos[..., 0], -np.inf).max(axis=-1)
        empty = ~grounded.any(axis=-1)
        return np.where(empty, np.nan, lo), np.where(empty, np.nan, hi)

    def support_interval(self, state):
        """Hull of the x-coordinates of the grounded heel/toe points

        :return: ``(x_lo, x_hi)`` or ``None`` when no foot point is in
                 contact
        """
        lo, hi = self.support_bounds(state.q)
        if np.isnan(lo):
            return None
        return float(lo), float(hi)

    def foot_centroid(self, q):
        """Mean x of the four heel/toe points, contact or not"""
        return self.point_positions(q)[..., self._foot_slice, 0].mean(-1)

    def contact_report(self, state):
        """Contact status of every contact point

        :rtype: ``list`` of :class:`ContactReport`
        """
        penetration, normal, tangential = self.contact_forces(state.q,
                                                              state.qd)
        xs = self.contact_positions(state.q)[..., 0]
        return [ContactReport(point=name,
                              penetration=float(penetration[i]),
                              normal_force=float(normal[i]),
                              tangential_force=float(tangential[i]),
                              x=float(xs[i]))
                for i, name in enumerate(constants.CONTACT_POINTS)]

    def mechanical_energy(self, state):
        """Kinetic plus gravitational potential energy (J)"""
        qd = np.asarray(state.qd, dtype=float)
        kinetic = 0.5 * np.einsum('...k,...kl,...l->...', qd,
                                  self.mass_matrix(state.q), qd)
        heights = self.point_positions(state.q)[..., self._com_slice, 1]
        return kinetic + self.spec.gravity * (heights @ self.masses)


def _pose(joints, pitch=0.0):
    q = np.zeros(N_COORDS)
    q[2] = pitch
    q[3:] = joints
    return q


def reference_pose(spec):
    """Natural standing joint angles of a model

    The torso is upright, knees straight and feet flat; both legs lean by
    the same angle so the CoM sits over the centroid of the heel and toe
    points.

    :rtype: ``numpy.ndarray`` of the 6 joint angles
    """
    biped = Biped(replace(spec, reference_joints=np.zeros(N_JOINTS)))

    def offset(alpha):
        q = _pose([-alpha, 0.0, alpha, -alpha, 0.0, alpha])
        state = BodyState(q=q, qd=np.zeros(N_COORDS),
                          act=np.zeros(len(spec.muscles)))
        return float(biped.com(state)[0] - biped.foot_centroid(q))

    alpha = optimize.brentq(offset, -0.5, 0.5, xtol=1e-12)
    LOG.debug("Reference leg lean %.5f rad", alpha)
    return np.array([-alpha, 0.0, alpha, -alpha, 0.0, alpha])


def initial_state(spec, jitter=0.0, rng=None, preload=True):
    """Standing state at the reference pose

    The ankles are placed at ``x = 0`` and the model is lowered so the foot
    contacts carry its weight from the first step.

    :param jitter: Standard deviation of the joint-angle noise (rad)
    :param rng: A ``numpy.random.Generator`` for the jitter
    :param preload: Start with the static contact compression
    :rtype: :class:`BodyState`
    """
    joints = np.asarray(spec.reference_joints, dtype=float).copy()
    if jitter > 0:
        rng = rng if rng is not None else np.random.default_rng()
        joints = joints + rng.normal(0.0, jitter, size=joints.shape)
        joints = np.clip(joints, spec.joint_limits[:, 0],
                         spec.joint_limits[:, 1])
    biped = Biped(spec)
    q = _pose(joints)
    pos = biped.point_positions(q)
    ankles = [biped.point_index('ankle_' + side) for side in constants.SIDES]
    feet = [biped.point_index(p) for p in constants.FOOT_POINTS]
    sink = (biped.total_mass * spec.gravity /
            (len(constants.FOOT_POINTS) * spec.contact.stiffness)
            if preload else 0.0)
    q[0] = -pos[ankles, 0].mean()
    q[1] = -pos[feet, 1].min() - sink
    return BodyState(q=q, qd=np.zeros(N_COORDS),
                     act=np.zeros(len(spec.muscles)), t=0.0)


def apply_injury(spec, muscle_id, factor):
    """Restrict the force capacity of one muscle

    :param spec: The model to injure
    :param muscle_id: The muscle name, e.g. ``rectus_femoris_l``
    :param factor: The remaining fraction of ``f_max`` in ``[0, 1]``
    :return: A new model, all other parameters unchanged
    :rtype: :class:`hbcsim.model.ModelSpec`
    :raises: a `ValueError` for a factor outside ``[0, 1]`` and a
             `KeyError` for an unknown muscle
    """
    if not 0.0 <= factor <= 1.0:
        raise ValueError("Injury factor must lie in [0, 1], "
                         "got {}".format(factor))
    index = spec.muscle_index(muscle_id)
    muscles = list(spec.muscles)
    muscles[index] = replace(muscles[index], injury_factor=float(factor))
    LOG.debug("Injured %s to %.2f of its capacity", muscle_id, factor)
    return replace(spec, muscles=tuple(muscles))
