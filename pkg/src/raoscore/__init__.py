"""Score tests, their Wald and likelihood-ratio counterparts, and robust variants."""

__version__ = "0.1.0"

from .core import (Dataset, LikelihoodModel, ParamVector, finite_diff_check, information,
                   log_likelihood, observed_information, opg_information, per_observation_scores,
                   score)
from .errors import (AbsentError, DegenerateAdjustment, DegenerateSample, DomainError, NegativeLR,
                     NoConvergence, NumericError, RankError, RaoScoreError, SingularInfo,
                     StreamExhausted, UnknownName)
from .estimate import Fits, FitResult, Restriction, fit_both, fit_restricted, fit_unrestricted
from .trinity import (TestResult, chi2_sf, lm_form_test, lr_test, moment_test, one_sided_score_test,
                      rao_score_test, wald_test)
