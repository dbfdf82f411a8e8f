"""Exception and warning classes shared across the package."""


class RaoScoreError(Exception):
    """Base class for all errors raised by raoscore."""


class DomainError(RaoScoreError, ValueError):
    """Parameter or data outside the admissible domain of a model."""


class NumericError(RaoScoreError, ArithmeticError):
    """A log-density, score or matrix entry came out non-finite."""


class NoConvergence(RaoScoreError):
    """The optimizer hit its iteration limit."""


class RankError(RaoScoreError, ValueError):
    """A Jacobian or design matrix is rank deficient."""


class SingularInfo(RaoScoreError, ArithmeticError):
    """An information matrix (or block) could not be inverted."""


class NegativeLR(RaoScoreError):
    """Likelihood ratio below -1e-6, which signals an optimizer failure."""


class AbsentError(RaoScoreError):
    """A requested quantity does not exist for this object."""


class DegenerateSample(RaoScoreError, ValueError):
    """The sample has no variation where the statistic needs some."""


class DegenerateAdjustment(RaoScoreError, ArithmeticError):
    """A robust adjustment has a non-positive variance denominator."""


class StreamExhausted(RaoScoreError):
    """A sequential stream ended before the maximum sample size."""


class UnknownName(RaoScoreError, KeyError):
    """A named model, generator or statistic is not registered."""


class SingularityWarning(RuntimeWarning):
    """Information matrix condition number above 1e12."""


class NonConcaveWarning(RuntimeWarning):
    """Observed information is not positive semidefinite at the optimum."""
