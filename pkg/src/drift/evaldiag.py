"""Prediction surfaces, scoring, and survival diagnostics.

All functions here treat fitted models as read-only.  Outcome values
outside a Bernstein flow's domain are clamped to the boundary (counted on
the flow) rather than rejected, since held-out data may exceed the
training range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import basedist, diffcore as dc, flows, likelihood
from .diffcore import NonFiniteError
from .likelihood import Exact, Interval, outcome_time_status

DEFAULT_GRID_POINTS = 512


def default_grid(model, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    lo, hi = model.domain()
    return np.linspace(lo, hi, points)


def predict_cdf(model, x_row, grid: Optional[Sequence[float]] = None
                ) -> tuple[np.ndarray, np.ndarray]:
    """Conditional CDF F(h(y, x)) on a y-grid."""
    if grid is None:
        grid = default_grid(model)
    grid = np.asarray(grid, dtype=float)
    bound = model.bind()
    xs = model.standardize_row(x_row)
    vals = np.array([dc.value_of(model.base.cdf(
        model.cif.h_value(bound.prep, float(y), xs, clamp=True)))
        for y in grid])
    return grid, vals


def predict_density(model, x_row, grid: Optional[Sequence[float]] = None
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Conditional density exp(log-likelihood) on a y-grid."""
    if grid is None:
        grid = default_grid(model)
    grid = np.asarray(grid, dtype=float)
    bound = model.bind()
    xs = model.standardize_row(x_row)
    vals = np.array([math.exp(dc.value_of(likelihood.loglik_std(
        model, Exact(float(y)), xs, bound, clamp=True))) for y in grid])
    return grid, vals


def predict_quantile(model, x_row, qs: Sequence[float]) -> np.ndarray:
    """Conditional quantiles: solve F(h(y, x)) = q via the monotone map."""
    params = [float(v) for v in model.params]
    xs = model.standardize_row(x_row)
    out = []
    for q in qs:
        target = model.base.quantile(float(q))
        out.append(flows.invert_h(model.cif, params, xs, target))
    return np.array(out)


def log_score(model, dataset, indices: Optional[Sequence[int]] = None) -> float:
    """Mean held-out log-likelihood (higher is better)."""
    idx = range(dataset.n) if indices is None else indices
    bound = model.bind()
    xs_all = model.standardize(dataset.x)
    total = 0.0
    count = 0
    for i in idx:
        total += dc.value_of(likelihood.loglik_std(
            model, dataset.outcomes[i], xs_all[i], bound, clamp=True))
        count += 1
    if count == 0:
        raise ValueError("log_score over an empty index set")
    return total / count


@dataclass
class ScoreReport:
    per_fold: list[float]
    mean: float
    std: float

    @staticmethod
    def from_folds(per_fold: Sequence[float]) -> "ScoreReport":
        vals = [float(v) for v in per_fold]
        mean = sum(vals) / len(vals)
        std = math.sqrt(sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)) \
            if len(vals) > 1 else float("nan")
        return ScoreReport(vals, mean, std)


def pit_values(model, dataset) -> np.ndarray:
    """Probability integral transform F(h(y_i, x_i)) of exact outcomes;
    uniform when the model matches the generator."""
    bound = model.bind()
    xs_all = model.standardize(dataset.x)
    out = []
    for i, o in enumerate(dataset.outcomes):
        if not isinstance(o, Exact):
            raise ValueError("PIT needs exact outcomes")
        h = model.cif.h_value(bound.prep, o.y, xs_all[i], clamp=True)
        out.append(dc.value_of(model.base.cdf(h)))
    return np.array(out)


# -- survival ------------------------------------------------------------------

@dataclass
class StepSurvivalCurve:
    """Right-continuous step function, 1 before the first event time."""

    times: np.ndarray
    values: np.ndarray

    def eval(self, t: float) -> float:
        i = np.searchsorted(self.times, t, side="right") - 1
        return float(self.values[i]) if i >= 0 else 1.0

    def eval_left(self, t: float) -> float:
        """Left limit S(t-)."""
        i = np.searchsorted(self.times, t, side="left") - 1
        return float(self.values[i]) if i >= 0 else 1.0


def kaplan_meier(times: Sequence[float], events: Sequence[int]
                 ) -> StepSurvivalCurve:
    """Product-limit estimator; at tied times deaths are processed before
    censorings (both count as at risk)."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=int)
    if times.size == 0:
        raise ValueError("kaplan_meier needs at least one observation")
    if np.any(times < 0):
        raise ValueError("survival times must be >= 0")
    order = np.argsort(times, kind="stable")
    times, events = times[order], events[order]
    n_at_risk = len(times)
    surv = 1.0
    out_t: list[float] = []
    out_s: list[float] = []
    i = 0
    while i < len(times):
        t = times[i]
        j = i
        deaths = 0
        while j < len(times) and times[j] == t:
            deaths += events[j]
            j += 1
        if deaths:
            surv *= 1.0 - deaths / n_at_risk
            out_t.append(t)
            out_s.append(surv)
        n_at_risk -= j - i
        i = j
    return StepSurvivalCurve(np.array(out_t), np.array(out_s))


def censoring_km(times: Sequence[float], events: Sequence[int]
                 ) -> StepSurvivalCurve:
    """Kaplan-Meier estimate of the censoring distribution G; with ties,
    censorings happen after the deaths, so the risk set for censoring at t
    excludes the deaths at t."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=int)
    order = np.argsort(times, kind="stable")
    times, events = times[order], events[order]
    n_at_risk = len(times)
    surv = 1.0
    out_t: list[float] = []
    out_s: list[float] = []
    i = 0
    while i < len(times):
        t = times[i]
        j = i
        deaths = 0
        cens = 0
        while j < len(times) and times[j] == t:
            deaths += events[j]
            cens += 1 - events[j]
            j += 1
        if cens and n_at_risk - deaths > 0:
            surv *= 1.0 - cens / (n_at_risk - deaths)
            out_t.append(t)
            out_s.append(surv)
        elif cens:
            surv = 0.0
            out_t.append(t)
            out_s.append(surv)
        n_at_risk -= j - i
        i = j
    return StepSurvivalCurve(np.array(out_t), np.array(out_s))


def survival_times(dataset) -> tuple[np.ndarray, np.ndarray]:
    pairs = [outcome_time_status(o) for o in dataset.outcomes]
    return (np.array([p[0] for p in pairs]),
            np.array([p[1] for p in pairs], dtype=int))


def follow_up_quartiles(dataset) -> np.ndarray:
    """25/50/75% quantiles of observed times, pooled over events and
    censorings."""
    t, _ = survival_times(dataset)
    return np.quantile(t, [0.25, 0.5, 0.75])


def predicted_survival(model, dataset, eval_times: Sequence[float]
                       ) -> np.ndarray:
    """S(t | x_i) = 1 - F(h(t, x_i)) for each row and evaluation time."""
    bound = model.bind()
    xs_all = model.standardize(dataset.x)
    out = np.empty((dataset.n, len(eval_times)))
    for i in range(dataset.n):
        for j, t in enumerate(eval_times):
            h = model.cif.h_value(bound.prep, float(t), xs_all[i], clamp=True)
            out[i, j] = 1.0 - dc.value_of(model.base.cdf(h))
    return out


@dataclass
class BrierResult:
    times: np.ndarray
    scores: np.ndarray
    excluded: int    # observations dropped for a zero censoring weight

    def ibs(self) -> float:
        """Trapezoidal integral of the Brier curve, normalized by span."""
        if len(self.times) == 1:
            return float(self.scores[0])
        span = self.times[-1] - self.times[0]
        return float(np.trapezoid(self.scores, self.times) / span)


def brier_ipcw(model_or_surv, dataset, eval_times: Sequence[float]
               ) -> BrierResult:
    """Inverse-probability-of-censoring weighted Brier score at each time.

    ``model_or_surv`` is a fitted model or a :class:`StepSurvivalCurve`
    (the featureless baseline).  Weights use the Kaplan-Meier estimate of
    the censoring distribution; G(t_i-) for observed events before t,
    G(t) for those still at risk.
    """
    eval_times = np.asarray(eval_times, dtype=float)
    t_obs, d_obs = survival_times(dataset)
    G = censoring_km(t_obs, d_obs)
    if isinstance(model_or_surv, StepSurvivalCurve):
        s_pred = np.array([[model_or_surv.eval(t) for t in eval_times]
                           for _ in range(dataset.n)])
    else:
        s_pred = predicted_survival(model_or_surv, dataset, eval_times)
    scores = np.zeros(len(eval_times))
    excluded = 0
    for j, t in enumerate(eval_times):
        total = 0.0
        g_t = G.eval(float(t))
        for i in range(dataset.n):
            s = s_pred[i, j]
            if t_obs[i] <= t and d_obs[i] == 1:
                g = G.eval_left(float(t_obs[i]))
                if g <= 0.0:
                    excluded += 1
                    continue
                total += s * s / g
            elif t_obs[i] > t:
                if g_t <= 0.0:
                    excluded += 1
                    continue
                total += (1.0 - s) ** 2 / g_t
        scores[j] = total / dataset.n
    return BrierResult(eval_times, scores, excluded)


def martingale_residuals(model, dataset) -> np.ndarray:
    """r_i = delta_i + log S(t_i | x_i); -inf marks S = 0 (excluded from
    summaries by callers)."""
    bound = model.bind()
    xs_all = model.standardize(dataset.x)
    out = np.empty(dataset.n)
    for i, o in enumerate(dataset.outcomes):
        t, d = outcome_time_status(o)
        h = model.cif.h_value(bound.prep, float(t), xs_all[i], clamp=True)
        try:
            log_s = dc.value_of(model.base.log_survival(h))
        except NonFiniteError:
            log_s = -math.inf
        out[i] = d + log_s
    return out
