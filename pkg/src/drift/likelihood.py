"""Per-observation log-likelihood contributions and their dataset mean.

Outcomes come in three observation shapes: exact continuous values,
discrete levels, and intervals whose endpoints may be infinite.  Left,
right and interval censoring are all the interval case; a right-censored
survival time t is ``Interval(t, +inf)``.

Contributions follow the change-of-variables / CDF-difference identities:
exact values add the log outcome-derivative of the conditional map,
discrete and interval outcomes take log differences of the base CDF at
the transformed endpoints, evaluated through stable log-CDF/log-survival
forms wherever an endpoint is unbounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from . import diffcore as dc
from .diffcore import NonFiniteError, Real
from .flows import BernsteinFlow, OrdinalCutpoints

MASS_FLOOR = 1e-300  # keeps log of CDF differences finite at extreme params


class EmptyInterval(ValueError):
    """Interval outcome with lo >= hi."""


class CompatibilityError(ValueError):
    """Outcome types do not match the model's flow family."""


@dataclass(frozen=True)
class Exact:
    y: float


@dataclass(frozen=True)
class Discrete:
    level: int

    def __post_init__(self):
        if self.level < 1:
            raise ValueError(f"levels are 1-based, got {self.level}")


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise EmptyInterval(f"need lo < hi, got [{self.lo}, {self.hi}]")


Outcome = Union[Exact, Discrete, Interval]


def from_survival(time: float, status: int) -> Outcome:
    """Event time -> Exact, right-censored time -> Interval(t, +inf)."""
    if status not in (0, 1):
        raise ValueError(f"survival status must be 0 or 1, got {status}")
    return Exact(time) if status == 1 else Interval(time, math.inf)


def outcome_time_status(o: Outcome) -> tuple[float, int]:
    """Inverse of from_survival for survival-type outcomes."""
    if isinstance(o, Exact):
        return o.y, 1
    if isinstance(o, Interval) and math.isinf(o.hi):
        return o.lo, 0
    raise ValueError(f"not a survival outcome: {o}")


def _log_mass_between(base, h_lo: Optional[Real], h_hi: Optional[Real]) -> Real:
    """log P(h_lo < Z <= h_hi) under the base distribution; None means
    the corresponding endpoint is infinite."""
    if h_lo is None and h_hi is None:
        return 0.0
    if h_hi is None:
        return base.log_survival(h_lo)
    if h_lo is None:
        return base.log_cdf(h_hi)
    diff = base.cdf(h_hi) - base.cdf(h_lo)
    return dc.log(dc.max_const(diff, MASS_FLOOR))


def loglik_exact(model, y: float, x, bound=None, clamp: bool = False) -> Real:
    """log f(h(y,x)) + log dh/dy for an exactly observed outcome."""
    return loglik(model, Exact(float(y)), x, bound, clamp)


def loglik_discrete(model, k: int, x, bound=None) -> Real:
    """log of the probability mass of level k between its cut-points."""
    return loglik(model, Discrete(int(k)), x, bound)


def loglik_interval(model, lo: float, hi: float, x, bound=None,
                    clamp: bool = False) -> Real:
    """log P(lo < Y <= hi | x); endpoints may be -inf/+inf."""
    return loglik(model, Interval(float(lo), float(hi)), x, bound, clamp)


def loglik(model, outcome: Outcome, x, bound=None, clamp: bool = False) -> Real:
    if bound is None:
        bound = model.bind()
    return loglik_std(model, outcome, model.standardize_row(x), bound, clamp)


def nll(model, dataset, indices: Optional[Sequence[int]] = None,
        bound=None) -> Real:
    """Negative mean log-likelihood over the (sub)set.

    The mean (not the sum) keeps learning rates comparable across batch
    sizes.  Observations are reduced in index order so runs are
    reproducible.
    """
    if bound is None:
        bound = model.bind()
    idx = range(dataset.n) if indices is None else indices
    xs_all = model.standardize(dataset.x)
    terms = []
    for i in idx:
        ll = loglik_std(model, dataset.outcomes[i], xs_all[i], bound)
        terms.append(ll)
    if not terms:
        raise ValueError("nll over an empty index set")
    inv = -1.0 / len(terms)
    return dc.affine([inv] * len(terms), terms)


def loglik_std(model, outcome: Outcome, xs, bound, clamp: bool = False) -> Real:
    """loglik on an already-standardized feature row."""
    cif = model.cif
    base = model.base
    if isinstance(outcome, Exact):
        h, dh = cif.eval_h(bound.prep, outcome.y, xs, clamp)
        dh_val = dc.value_of(dh)
        if not dh_val > 0.0 or not math.isfinite(dh_val):
            raise NonFiniteError(
                f"outcome-derivative {dh_val} at y={outcome.y}")
        return base.log_pdf(h) + dc.log(dh)
    if isinstance(outcome, Discrete):
        flow = cif.reference
        if not isinstance(flow, OrdinalCutpoints):
            raise ValueError("discrete outcomes need an ordinal flow")
        upper, lower = flow.bounds(bound.prep[0], outcome.level)
        mu, sigma = cif.mu_sigma(bound.prep, xs)
        h_hi = None if isinstance(upper, float) and math.isinf(upper) \
            else (upper - mu if sigma is None else (upper - mu) / sigma)
        h_lo = None if isinstance(lower, float) and math.isinf(lower) \
            else (lower - mu if sigma is None else (lower - mu) / sigma)
        return _log_mass_between(base, h_lo, h_hi)
    if isinstance(outcome, Interval):
        h_lo = None if math.isinf(outcome.lo) else \
            cif.h_value(bound.prep, outcome.lo, xs, clamp)
        h_hi = None if math.isinf(outcome.hi) else \
            cif.h_value(bound.prep, outcome.hi, xs, clamp)
        return _log_mass_between(base, h_lo, h_hi)
    raise TypeError(f"not an outcome: {outcome!r}")


def compatible(flow, outcome: Outcome) -> bool:
    """Does this outcome type fit the flow family?"""
    if isinstance(outcome, Discrete):
        return isinstance(flow, OrdinalCutpoints)
    return not isinstance(flow, OrdinalCutpoints)


def check_compatible(model, dataset) -> None:
    for i, o in enumerate(dataset.outcomes):
        if not compatible(model.cif.reference, o):
            raise CompatibilityError(
                f"outcome {i} ({type(o).__name__}) incompatible with "
                f"{model.cif.reference.kind} flow")
    if isinstance(model.cif.reference, OrdinalCutpoints):
        top = model.cif.reference.levels
        for i, o in enumerate(dataset.outcomes):
            if isinstance(o, Discrete) and o.level > top:
                raise CompatibilityError(
                    f"outcome {i} has level {o.level} > K={top}")
