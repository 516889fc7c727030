# Copyright 2024 crossmamba authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import logging

LOG = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_USAGE = 2
EXIT_IO = 3


class CrossMambaException(Exception):
    _msg_fmt = "An unknown exception occurred."
    exit_code = EXIT_USAGE

    def __init__(self, message=None, **kwargs):
        self.kwargs = kwargs
        if not message:
            try:
                message = self._msg_fmt % kwargs
            except Exception:
                # kwargs doesn't match a variable in self._msg_fmt
                prs = ", ".join("%s: %s" % pair for pair in kwargs.items())
                LOG.exception(
                    f"Exception in string format operation (arguments {prs})"
                )
                message = self._msg_fmt

        super(Exception, self).__init__(message)

    def __str__(self):
        return str(self.args[0])

    def as_dict(self):
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class ShapeError(CrossMambaException):
    _msg_fmt = "Shape mismatch for %(name)s: expected %(expected)s, got %(actual)s"


class InvalidInputError(CrossMambaException):
    _msg_fmt = "Invalid input %(name)s: %(reason)s"


class InvalidSpecError(CrossMambaException):
    _msg_fmt = "Invalid grid or camera specification: %(reason)s"


class InvalidOrderError(CrossMambaException):
    _msg_fmt = "Traversal %(order)s cannot be applied to a %(height)sx%(width)s map"


class IndexRangeError(CrossMambaException):
    _msg_fmt = "Index %(index)s for %(name)s is out of range [0, %(limit)s)"


class ContractError(CrossMambaException):
    _msg_fmt = "Precondition violated: %(reason)s"


class NumericError(CrossMambaException):
    _msg_fmt = "Non-finite values produced at stage '%(stage)s'"

    @property
    def stage(self):
        return self.kwargs.get("stage")


class ConfigError(CrossMambaException):
    _msg_fmt = "Invalid configuration at '%(path)s': %(reason)s"

    @property
    def path(self):
        return self.kwargs.get("path")


class TensorFormatError(CrossMambaException):
    _msg_fmt = "Cannot load tensor file %(path)s: %(reason)s"
    exit_code = EXIT_IO


class SceneIOError(CrossMambaException):
    _msg_fmt = "I/O failure on %(path)s: %(reason)s"
    exit_code = EXIT_IO


class VerificationFailed(CrossMambaException):
    _msg_fmt = "%(failed)s of %(total)s invariant checks failed"
    exit_code = EXIT_VERIFICATION


class UsageError(CrossMambaException):
    _msg_fmt = "Invalid command line: %(reason)s"
