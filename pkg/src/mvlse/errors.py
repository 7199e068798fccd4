"""Exception types raised by mvlse."""


class MvlseError(Exception):
    """Base class for all package errors."""


class SingularDiffusion(MvlseError):
    """sigma sigma^T is not invertible (or too ill-conditioned) at a state."""


class SingularInformation(MvlseError):
    """The information matrix is singular or too ill-conditioned to invert."""


class DegenerateNormalEquations(MvlseError):
    """The least-squares normal equations have no unique solution."""


class NonFinite(MvlseError):
    """A simulated state became NaN or infinite."""


class ConfigError(MvlseError):
    """One or more configuration constraints are violated.

    ``problems`` holds one message per violated constraint.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
