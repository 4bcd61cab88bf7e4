# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Exception hierarchy shared by all MultiFIX sub-packages.

Validation problems derive from ``ValueError`` so that callers catching the
built-in type keep working; the command-line front end maps each class to a
fixed exit status.
"""


class MultiFIXError(Exception):
    """Base class of every error raised on purpose by the package."""

    exit_code = 1


class ConfigurationError(MultiFIXError, ValueError):
    """Invalid or unknown configuration key, value or combination."""

    exit_code = 2


class DataError(MultiFIXError, ValueError):
    """Missing, malformed or inconsistent input data."""

    exit_code = 3


class DimensionError(MultiFIXError, ValueError):
    """A tensor does not have the shape a layer expects."""

    exit_code = 1


class GradientError(MultiFIXError, RuntimeError):
    """Misuse of the gradient tape or a non-finite gradient."""

    exit_code = 4


class NumericAbort(MultiFIXError, ArithmeticError):
    """
    Training stopped because the loss became non-finite.

    Parameters
    ----------
    message: str
    epoch: int
        Epoch in which the loss diverged.
    lr: float
        Learning rate in use at that point.
    """

    exit_code = 4

    def __init__(self, message, epoch=None, lr=None):
        super().__init__(f"{message} (epoch={epoch}, lr={lr})")
        self.epoch = epoch
        self.lr = lr
