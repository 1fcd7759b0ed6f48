"""drift: distributional regression with inverse conditional flows.

Conditional distributions are modeled as F(h(y, x)) where F is a fixed
base distribution and h composes a strictly monotone reference flow with
additive location/scale predictors.  Continuous, ordinal, censored and
survival outcomes train in one maximum-likelihood framework.
"""

from .basedist import LOGISTIC, MIN_EXTREME_VALUE, NORMAL, BaseDistribution
from .dataio import (Dataset, DatasetSchema, OutcomeSpec, Standardizer,
                     gen_example2, kfold, load_csv, oracle_density,
                     oracle_logscore)
from .diffcore import DomainError, NonFiniteError, Tape, Var, backward
from .evaldiag import (BrierResult, ScoreReport, StepSurvivalCurve,
                       brier_ipcw, kaplan_meier, log_score,
                       martingale_residuals, pit_values, predict_cdf,
                       predict_density, predict_quantile)
from .flows import (BernsteinFlow, BracketError, ConditionalInverseFlow,
                    MonotoneNetFlow, OrdinalCutpoints, invert_h)
from .likelihood import (CompatibilityError, Discrete, EmptyInterval, Exact,
                         Interval, Outcome, from_survival, loglik,
                         loglik_discrete, loglik_exact, loglik_interval, nll)
from .model import (DriftModel, FlowSpec, ModelSpec, TermSpec,
                    build_from_dataset, build_model, load_model, save_model)
from .predictors import Predictor, eval_predictor, partial_effect
from .training import (DivergenceError, FitReport, TrainConfig, fit,
                       init_model, saturation_probe)

__version__ = "0.1.0"
