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
import glob
import json
import logging
import os
from os.path import join

import numpy as np

from hbcsim import constants
from hbcsim.exceptions import LogFormatError

LOG = logging.getLogger(__name__ + ".trial_logs")


def make_frame(biped, state):
    """Snapshot of one (single) body state as a JSON-ready dict

    Contact and muscle forces are recomputed from the state itself so a
    frame is a pure function of ``(q, qd, act)``.
    """
    _pen, normal, tangential = biped.contact_forces(state.q, state.qd)
    xs = biped.contact_positions(state.q)[..., 0]
    support = biped.support_interval(state)
    return {
        't': round(float(state.t), 9),
        'q': np.asarray(state.q).tolist(),
        'qd': np.asarray(state.qd).tolist(),
        'com': biped.com(state).tolist(),
        'com_vel': biped.com_velocity(state).tolist(),
        'support': list(support) if support else None,
        'force': biped.muscle_tensions(state).tolist(),
        'act': np.asarray(state.act).tolist(),
        'normal': normal.tolist(),
        'tangential': tangential.tolist(),
        'contact_x': xs.tolist(),
    }


class TrialLog(object):
    """In-memory trajectory of one trial

    A log is made of a header (format, version, config hash, seed, channel
    names), one frame per logged sample and a footer written once the trial
    ends.
    """

    def __init__(self, header=None, frames=None, footer=None):
        self.header = dict(header or {})
        self.header.setdefault('format', constants.TRIAL_LOG_FORMAT)
        self.header.setdefault('version', constants.TRIAL_LOG_VERSION)
        self.header.setdefault('point_names', list(constants.CONTACT_POINTS))
        self.header.setdefault('foot_points', list(constants.FOOT_POINTS))
        self.frames = list(frames or [])
        self.footer = dict(footer or {})
        self.events = self.footer.setdefault('events', [])

    def __len__(self):
        return len(self.frames)

    def append(self, frame):
        self.frames.append(frame)

    def add_event(self, t, kind, **data):
        entry = {'t': round(float(t), 9), 'kind': kind}
        entry.update(data)
        self.events.append(entry)

    def mark_fault(self, kind, message):
        self.footer['fault'] = kind
        self.footer['message'] = message

    @property
    def fault(self):
        return self.footer.get('fault')

    @property
    def point_names(self):
        return list(self.header['point_names'])

    @property
    def foot_points(self):
        return list(self.header['foot_points'])

    @property
    def muscle_names(self):
        return list(self.header.get('muscle_names', []))

    def series(self, key):
        """Stack one frame channel over time

        Missing supports are returned as ``nan`` pairs.
        """
        if key == 'support':
            return np.array([f['support'] if f['support'] else
                             (np.nan, np.nan) for f in self.frames],
                            dtype=float).reshape(-1, 2)
        return np.array([f[key] for f in self.frames], dtype=float)

    @property
    def times(self):
        return self.series('t')

    def to_lines(self):
        footer = dict(self.footer, frames=len(self.frames))
        yield json.dumps(self.header, sort_keys=True)
        for frame in self.frames:
            yield json.dumps(frame, sort_keys=True)
        yield json.dumps({'footer': footer}, sort_keys=True)

    def write(self, path):
        with open(path, 'w') as log_file:
            for line in self.to_lines():
                log_file.write(line + '\n')
        return path


class TrialLogFile(object):
    """An object for encapsulating a trial log file"""

    def __init__(self, uuid=None, condition=None, logfile=None,
                 log_path=constants.HBC_LOG_BASEDIR,
                 extension=constants.TRIAL_LOG_EXTENSION,
                 config_hash=None):
        """Wrap a trial log file

        :param uuid: The uuid of the trial
        :type uuid: ``string``
        :param condition: The trial condition, e.g. ``healthy``
        :type condition: ``string``
        :param logfile: The absolute path of the log file
        :type logfile: ``string``
        :param log_path: The absolute path of the logs directory
        :type log_path: ``string``
        :param extension: The file extension (Default to 'jsonl')
        :type extension: ``string``
        :param config_hash: When set, refuse logs written under another
                            configuration
        :type config_hash: ``string``
        """
        self.uuid = uuid
        self.condition = condition
        self.log_path = log_path
        self.extension = extension
        self.datetime = None

        if not logfile and (not uuid or not condition):
            raise ValueError('When not using logfile argument, the uuid and '
                             'condition have to be set')
        full_path = logfile or self.get_log_path()
        self.path = full_path
        self.name = os.path.splitext(os.path.basename(full_path))[0]
        self.log = self._get_content(full_path)
        if config_hash and self.log.header.get('config_hash') != config_hash:
            raise LogFormatError(
                "{} was written with config {}, expected {}".format(
                    full_path, self.log.header.get('config_hash'),
                    config_hash))
        if logfile:
            try:
                self.uuid, _name = self.name.split('_', 1)
                self.condition, self.datetime = _name.rsplit('_', 1)
            except ValueError:
                LOG.warning('Wrong log file name, it should be formed '
                            'such as {uuid}_{condition}_{timestamp}')

    def get_log_path(self):
        """Return full path of a trial log"""
        matches = glob.glob("{}/{}_{}_*.{}".format(self.log_path, self.uuid,
                                                   self.condition,
                                                   self.extension))
        if not matches:
            raise IOError("No log file for trial {} ({})".format(
                self.uuid, self.condition))
        return matches[0]

    def _get_content(self, path):
        try:
            with open(path, 'r') as log_file:
                lines = [json.loads(line) for line in log_file
                         if line.strip()]
        except IOError:
            raise IOError("log file: {} not found".format(path))
        except ValueError:
            raise LogFormatError("bad json format for {}".format(path))
        if not lines:
            raise LogFormatError("empty log file {}".format(path))
        header = lines[0]
        if header.get('format') != constants.TRIAL_LOG_FORMAT:
            raise LogFormatError("{} is not a trial log".format(path))
        if header.get('version') != constants.TRIAL_LOG_VERSION:
            raise LogFormatError(
                "{} has log version {}, expected {}".format(
                    path, header.get('version'),
                    constants.TRIAL_LOG_VERSION))
        footer = {}
        frames = lines[1:]
        if frames and 'footer' in frames[-1]:
            footer = frames.pop()['footer']
        footer.pop('frames', None)
        return TrialLog(header=header, frames=frames, footer=footer)

    @property
    def get_uuid(self):
        return self.uuid

    @property
    def get_condition(self):
        return self.condition

    @property
    def get_seed(self):
        return self.log.header.get('seed')

    @property
    def get_config_hash(self):
        return self.log.header.get('config_hash')


class TrialLogs(object):
    """An object for encapsulating the trial log files of a directory"""

    def __init__(self, logs_path=constants.HBC_LOG_BASEDIR,
                 extension=constants.TRIAL_LOG_EXTENSION):
        self.logs_path = logs_path
        self.extension = extension

    def get_all_logfiles(self):
        """Return every trial log file of ``logs_path``, sorted by name

        :rtype: ``list``
        """
        if not os.path.isdir(self.logs_path):
            raise IOError("Log directory {} not found".format(self.logs_path))
        return sorted(join(self.logs_path, f)
                      for f in os.listdir(self.logs_path)
                      if os.path.isfile(join(self.logs_path, f)) and
                      f.endswith('.' + self.extension))

    def get_logfile_by_condition(self, condition):
        return sorted(glob.glob("{}/*_{}_*.{}".format(
            self.logs_path, condition, self.extension)))

    def get_logfile_by_uuid(self, uuid):
        return sorted(glob.glob("{}/{}_*".format(self.logs_path, uuid)))

    def load(self, condition=None, config_hash=None):
        """Load the trial logs, optionally filtered by condition

        :return: The :class:`TrialLogFile` objects, sorted by file name
        :rtype: ``list``
        """
        files = (self.get_logfile_by_condition(condition) if condition
                 else self.get_all_logfiles())
        return [TrialLogFile(logfile=f, config_hash=config_hash)
                for f in files]
