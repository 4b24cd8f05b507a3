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


class NumericalFault(RuntimeError):
    """The simulated state stopped being finite"""


class PlanningFailure(RuntimeError):
    """No rollout of a planning iteration returned a finite cost"""


class ConditioningError(RuntimeError):
    """The GP Gram matrix stayed non positive-definite after jitter"""


class LogFormatError(ValueError):
    """A trial log does not match the expected format or configuration"""
