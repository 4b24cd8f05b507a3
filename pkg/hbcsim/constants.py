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
import os

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'data')

DEFAULT_MODEL_CONFIG = os.path.join(DATA_DIR, 'model.yaml')

DEFAULT_EXPERIMENT_CONFIG = os.path.join(DATA_DIR, 'experiment.yaml')

HBC_LOG_BASEDIR = ('/var/log/hbcsim'
                   if os.path.exists('/var/log/hbcsim') else
                   os.getcwd())

HBC_ARTIFACT_PATH = '{}/artifacts/'.format(HBC_LOG_BASEDIR)

TRIAL_LOG_FORMAT = 'hbcsim-trial'
TRIAL_LOG_VERSION = 1
TRIAL_LOG_EXTENSION = 'jsonl'

GRAVITY = 9.81

# Muscle curve shapes
FL_WIDTH = 0.45
FP_STRAIN = 0.5
FV_CONCENTRIC = 4.0
FV_ECCENTRIC_NUM = 5.6
FV_ECCENTRIC_DEN = 4.0

# Activation time constants (s)
TAU_ACTIVATION = 0.010
TAU_DEACTIVATION = 0.040

INVERSE_GAIN_EPSILON = 1e-6

JOINT_NAMES = ('hip_r', 'knee_r', 'ankle_r', 'hip_l', 'knee_l', 'ankle_l')
BASE_NAMES = ('x', 'z', 'pitch')
COORDINATE_NAMES = BASE_NAMES + JOINT_NAMES
HIP_JOINTS = (0, 3)

SEGMENT_NAMES = ('torso', 'thigh_r', 'shank_r', 'foot_r',
                 'thigh_l', 'shank_l', 'foot_l')

FOOT_POINTS = ('heel_r', 'toe_r', 'heel_l', 'toe_l')
LANDMARK_POINTS = ('knee_r', 'knee_l', 'pelvis', 'torso_mid', 'head')
CONTACT_POINTS = FOOT_POINTS + LANDMARK_POINTS

MUSCLE_GROUPS = ('hip_flexor', 'hip_extensor', 'knee_extensor',
                 'knee_flexor', 'dorsiflexor', 'soleus', 'rectus_femoris',
                 'gastrocnemius', 'hamstrings')
SIDES = ('r', 'l')

EXO_TAU_MAX = 80.0

# CLI exit codes
EXIT_SUCCESS = 0
EXIT_USAGE = 1
EXIT_NUMERICAL_FAULT = 2
EXIT_PLANNING_FAILURE = 3

CONDITIONS = ('healthy', 'injured', 'exo', 'injured+exo')
OUTCOMES = ('Balanced', 'Fell', 'NumericalFault')
