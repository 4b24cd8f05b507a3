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

import copy
import logging

from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from hbcsim import constants
from hbcsim.muscle import MuscleParams

LOG = logging.getLogger(__name__ + ".model")


@dataclass(frozen=True)
class Segment(object):
    """A rigid segment of the planar biped

    ``com_offset`` is measured from the proximal joint along the segment
    axis (upwards for the torso, downwards for the legs, forwards for the
    feet).
    """
    name: str
    mass: float
    length: float
    com_offset: float
    inertia: float


@dataclass(frozen=True)
class FootGeometry(object):
    """Heel and toe positions relative to the ankle (m)"""
    heel: float = 0.06
    toe: float = 0.20
    height: float = 0.07


@dataclass(frozen=True)
class ContactParams(object):
    """Penalty contact constants, per contact point"""
    stiffness: float = 5.0e4
    damping: float = 500.0
    friction: float = 0.9
    slip_velocity: float = 0.1


@dataclass(frozen=True)
class JointParams(object):
    """Joint limit penalty and passive damping"""
    limit_stiffness: float = 500.0
    limit_damping: float = 5.0
    damping: float = 0.5


@dataclass(frozen=True, eq=False)
class ModelSpec(object):
    """Immutable description of the reduced sagittal biped

    :param segments: torso, thigh/shank/foot right, thigh/shank/foot left
    :param joint_limits: ``(6, 2)`` lower/upper joint angle limits (rad)
    :param muscles: The 18 muscles, right leg first
    :param moment_arms: ``(18, 6)`` signed constant moment arms (m)
    :param reference_joints: Joint angles at which every muscle sits at its
                             optimal length, also the natural standing pose
    """
    segments: tuple
    joint_limits: np.ndarray
    muscles: tuple
    moment_arms: np.ndarray
    reference_joints: np.ndarray
    foot: FootGeometry = field(default_factory=FootGeometry)
    contact: ContactParams = field(default_factory=ContactParams)
    joints: JointParams = field(default_factory=JointParams)
    gravity: float = constants.GRAVITY
    name: str = 'biped'

    @property
    def muscle_names(self):
        return tuple(m.name for m in self.muscles)

    @property
    def muscle_table(self):
        """All muscles stacked into one vectorised :class:`MuscleParams`"""
        return MuscleParams.stack(self.muscles)

    @property
    def total_mass(self):
        return float(sum(s.mass for s in self.segments))

    def muscle_index(self, muscle_id):
        """Return the index of a muscle by name

        :raises: a `KeyError` exception if the muscle is unknown
        """
        try:
            return self.muscle_names.index(muscle_id)
        except ValueError:
            raise KeyError("Unknown muscle {}".format(muscle_id))

    def with_reference(self, reference_joints):
        return replace(self, reference_joints=np.asarray(reference_joints,
                                                         dtype=float))

    def validate(self):
        """Check the model invariants

        :return: The list of violated invariants, empty when valid
        :rtype: ``list``
        """
        errors = []
        if self.total_mass <= 0:
            errors.append('total mass must be > 0')
        for segment in self.segments:
            if segment.mass < 0 or segment.inertia < 0:
                errors.append('{}: negative mass or inertia'.format(
                    segment.name))
            if segment.name.startswith('foot_') and not np.isclose(
                    segment.length, self.foot.heel + self.foot.toe):
                errors.append('{}: length must equal heel + toe'.format(
                    segment.name))
        for muscle in self.muscles:
            errors.extend(muscle.validate())
        arms = np.asarray(self.moment_arms)
        if arms.shape != (len(self.muscles), len(constants.JOINT_NAMES)):
            errors.append('moment arm matrix has shape {}'.format(arms.shape))
        elif np.any(np.abs(arms) > 0.08):
            errors.append('moment arm magnitudes must lie in [0, 0.08] m')
        else:
            for muscle, row in zip(self.muscles, arms):
                spanned = int(np.count_nonzero(row))
                expected = 2 if muscle.name.rsplit('_', 1)[0] in (
                    'rectus_femoris', 'gastrocnemius', 'hamstrings') else 1
                if spanned != expected:
                    errors.append('{} spans {} joints, expected {}'.format(
                        muscle.name, spanned, expected))
        limits = np.asarray(self.joint_limits)
        if np.any(limits[:, 0] >= limits[:, 1]):
            errors.append('joint limits must satisfy lower < upper')
        ref = np.asarray(self.reference_joints)
        if np.any(ref < limits[:, 0]) or np.any(ref > limits[:, 1]):
            errors.append('reference pose lies outside the joint limits')
        return errors


class ModelConfig(object):
    """An object for encapsulating a model configuration file

    The model file is YAML and carries the anthropometry, joint limits,
    muscle table and the controller, cost, planner, exoskeleton and
    optimizer sections:

    .. code-block:: yaml

        segments:
          torso: {mass: 50.85, length: 0.82, com_offset: 0.34, inertia: 3.08}
          thigh: {mass: 7.5, length: 0.43, com_offset: 0.186, inertia: 0.145}
        muscles:
          soleus:
            f_max: 4000.0
            l_opt: 0.10
            moment_arms: {ankle: -0.05}
        controller:
          k_p: 8000.0
          k_d: 600.0

    Leg segments and muscles are mirrored to both sides.
    """

    def __init__(self, model_path=None, data=None):
        self.path = model_path or constants.DEFAULT_MODEL_CONFIG
        self.data = (copy.deepcopy(data) if data is not None
                     else self._get_content(self.path))

    def _get_content(self, path):
        try:
            with open(path, 'r') as model_file:
                return yaml.safe_load(model_file)
        except IOError:
            raise IOError("Model file {} not found".format(path))

    def section(self, name):
        return dict(self.data.get(name) or {})

    @property
    def get_data(self):
        return self.data

    def _segments(self):
        seg = self.section('segments')
        try:
            torso = Segment(name='torso', **seg['torso'])
            legs = []
            for side in constants.SIDES:
                for part in ('thigh', 'shank', 'foot'):
                    values = {k: v for k, v in seg[part].items()
                              if k in ('mass', 'length', 'com_offset',
                                       'inertia')}
                    legs.append(Segment(name='{}_{}'.format(part, side),
                                        **values))
        except KeyError as e:
            raise ValueError("Missing segment {} in model file".format(e))
        # torso, right leg, left leg
        return (torso,) + tuple(legs)

    def _foot(self):
        foot = self.section('segments').get('foot', {})
        return FootGeometry(heel=float(foot.get('heel', 0.06)),
                            toe=float(foot.get('toe', 0.20)),
                            height=float(foot.get('height', 0.07)))

    def _muscles(self):
        muscles = []
        arms = []
        table = self.section('muscles')
        joint_index = {'hip': 0, 'knee': 1, 'ankle': 2}
        for side_index, side in enumerate(constants.SIDES):
            for group in constants.MUSCLE_GROUPS:
                try:
                    entry = dict(table[group])
                except KeyError:
                    raise ValueError("Missing muscle {} in model "
                                     "file".format(group))
                row = np.zeros(len(constants.JOINT_NAMES))
                for joint, arm in (entry.pop('moment_arms', {}) or {}).items():
                    row[3 * side_index + joint_index[joint]] = float(arm)
                muscles.append(MuscleParams(
                    name='{}_{}'.format(group, side),
                    **{k: float(v) for k, v in entry.items()}))
                arms.append(row)
        return tuple(muscles), np.array(arms)

    def _joint_limits(self):
        joints = self.section('joints')
        limits = []
        for _side in constants.SIDES:
            for joint in ('hip', 'knee', 'ankle'):
                bounds = joints.get(joint, {})
                limits.append((float(bounds.get('lower', -1.0)),
                               float(bounds.get('upper', 1.0))))
        return np.array(limits)

    @property
    def get_model_spec(self):
        """Build the :class:`ModelSpec` described by the file

        The reference pose is solved from the geometry so the model stands
        upright with its CoM over the foot centroid.
        """
        # Local import, biped needs ModelSpec
        from hbcsim.biped import reference_pose

        muscles, arms = self._muscles()
        joints = self.section('joints')
        spec = ModelSpec(
            segments=self._segments(),
            joint_limits=self._joint_limits(),
            muscles=muscles,
            moment_arms=arms,
            reference_joints=np.zeros(len(constants.JOINT_NAMES)),
            foot=self._foot(),
            contact=ContactParams(**self.section('contact')),
            joints=JointParams(**{k: float(joints[k]) for k in
                                  ('limit_stiffness', 'limit_damping',
                                   'damping') if k in joints}),
            gravity=float(self.data.get('gravity', constants.GRAVITY)),
            name=str(self.data.get('name', 'biped')))
        return spec.with_reference(reference_pose(spec))

    @property
    def get_pd_gains(self):
        from hbcsim.lowctl import PdGains
        ctl = self.section('controller')
        return PdGains(k_p=float(ctl.get('k_p', 200.0)),
                       k_d=float(ctl.get('k_d', 10.0)))

    @property
    def get_timing(self):
        """Physics, control and logging periods (s)"""
        physics = self.section('physics')
        ctl = self.section('controller')
        return {'dt': float(physics.get('dt', 0.001)),
                'control_dt': float(ctl.get('control_dt', 0.01)),
                'log_dt': float(physics.get('log_dt', 0.002))}

    @property
    def get_cost_weights(self):
        from hbcsim.cost import CostWeights
        return CostWeights(**{k: float(v) for k, v in
                              self.section('cost').items()})

    @property
    def get_planner_config(self):
        from hbcsim.planner import PlannerConfig
        return PlannerConfig(**self.section('planner'))

    @property
    def get_exo_params(self):
        from hbcsim.exo import ExoParams
        return ExoParams(**{k: float(v) for k, v in
                            self.section('exo').items()})

    @property
    def get_gp_config(self):
        from hbcsim.bayesopt import GpConfig
        bo = self.section('bayesopt')
        return GpConfig(**{k: bo[k] for k in
                           ('lengthscale', 'signal_variance',
                            'noise_variance', 'jitter', 'starts',
                            'refine_steps') if k in bo})

    @property
    def get_param_box(self):
        from hbcsim.bayesopt import ParamBox
        bounds = self.section('bayesopt').get('bounds')
        return ParamBox(bounds) if bounds else ParamBox()

    @property
    def get_analysis_options(self):
        analysis = self.section('analysis')
        return {'balance_mass': float(analysis.get('balance_mass', 0.68)),
                'bins': int(analysis.get('bins', 50))}

    def validate(self):
        """Run every invariant check the file allows

        :return: The list of problems found, empty when valid
        :rtype: ``list``
        """
        errors = []
        for name, getter in (('model', lambda: self.get_model_spec),
                             ('controller', lambda: self.get_pd_gains),
                             ('cost', lambda: self.get_cost_weights),
                             ('planner', lambda: self.get_planner_config),
                             ('exo', lambda: self.get_exo_params),
                             ('bayesopt', lambda: self.get_gp_config)):
            try:
                item = getter()
            except (TypeError, ValueError, KeyError) as e:
                errors.append('{}: {}'.format(name, e))
                continue
            if hasattr(item, 'validate'):
                errors.extend('{}: {}'.format(name, msg)
                              for msg in item.validate())
        return errors
