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
import datetime
import hashlib
import json
import logging
import os
import six
import uuid

import yaml

from hbcsim import constants

LOG = logging.getLogger(__name__ + ".utils")


def current_time():
    """Return current time"""
    return '%sZ' % datetime.datetime.utcnow().isoformat()


def create_artifacts_dir(dir_path=None, prefix=None):
    """Create the artifacts directory of a run

    :param dir_path: Directory absolute path
    :type dir_path: `string`
    :param prefix: Name of the run, e.g. the experiment name
    :type prefix: `string`
    :return: The UUID of the run and the absolute path of its directory
    :rtype: `string`, `string`
    :raises: an `OSError` when the directory can not be created
    """
    dir_path = dir_path if dir_path else constants.HBC_ARTIFACT_PATH
    run_uuid = str(uuid.uuid4())
    log_dir = "{}/{}_{}_{}".format(dir_path, run_uuid,
                                   (prefix if prefix else ''), current_time())
    try:
        os.makedirs(log_dir)
        return run_uuid, log_dir
    except OSError:
        LOG.exception("Error while creating the artifacts directory. "
                      "Please check the access rights for {}".format(log_dir))
        raise


def trial_log_name(trial_uuid, condition, extension=None):
    """File name of a trial log, ``{uuid}_{condition}_{timestamp}.jsonl``"""
    return "{}_{}_{}.{}".format(trial_uuid, condition, current_time(),
                                extension or constants.TRIAL_LOG_EXTENSION)


def convert_data(data=''):
    """Transform a string containing comma-separated values to a list

    This function is used to convert comma-separated values from the
    command line to a list. It returns the data unchanged if it is already
    a list.

    :param data: A string containing comma-separated values or a list
    :type data: `string` or `list`
    :return: A list of values
    :rtype: `list`

    :Example:

    >>> data = "healthy,injured"
    >>> convert_data(data=data)
    ['healthy', 'injured']
    >>> data = ['healthy', 'injured']
    >>> convert_data(data=data)
    ['healthy', 'injured']
    """
    if isinstance(data, six.string_types):
        return [conv_data.strip() for conv_data in data.split(',')
                if conv_data.strip()]
    elif not isinstance(data, list):
        raise TypeError("The input data should be either a List or a String")
    return data


def parse_overrides(pairs):
    """Parse ``KEY=VALUE`` pairs into a dict of typed values

    Values are read as YAML scalars, so numbers and booleans keep their
    type. Keys may be dotted to reach nested sections.

    :Example:

    >>> parse_overrides(['n_trials=5', 'injury.factor=0.3'])
    {'n_trials': 5, 'injury.factor': 0.3}
    """
    overrides = {}
    for pair in pairs or []:
        try:
            key, value = pair.split('=', 1)
        except ValueError:
            raise ValueError("override option should be formed as: "
                             "KEY=VALUE, got {}".format(pair))
        if not key.strip():
            raise ValueError("empty key in override {}".format(pair))
        overrides[key.strip()] = yaml.safe_load(value)
    return overrides


def apply_overrides(data, overrides):
    """Return a copy of ``data`` with dotted-key overrides applied"""
    data = copy.deepcopy(data)
    for key, value in (overrides or {}).items():
        node = data
        parts = key.split('.')
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return data


def config_hash(*documents):
    """Stable short hash of configuration documents

    :return: The first 16 hex digits of the SHA-256 of the canonical JSON
    :rtype: `string`
    """
    canonical = json.dumps(documents, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]
