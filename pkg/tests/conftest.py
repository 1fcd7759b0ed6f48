"""Shared test helpers: finite-difference gradient checks, hand-built
models with known maps, and synthetic data generators."""

import math

import numpy as np
import pytest

from drift import diffcore as dc, likelihood
from drift.dataio import Dataset, DatasetSchema, OutcomeSpec, Standardizer
from drift.likelihood import Discrete, Exact, Interval
from drift.model import (FlowSpec, ModelSpec, TermSpec, build_from_dataset,
                         build_model)
from drift.training import init_model


def nll_fd_error(model, dataset, step=1e-6):
    """Max relative error between backward gradients of the mean NLL and
    central finite differences (absolute error near zero)."""
    tape = dc.Tape()
    bound = model.bind(tape)
    loss = likelihood.nll(model, dataset, bound=bound)
    grads = np.asarray(dc.gradient(loss, bound.params))
    worst = 0.0
    for i in range(model.n_params):
        saved = model.params[i]
        model.params[i] = saved + step
        up = dc.value_of(likelihood.nll(model, dataset))
        model.params[i] = saved - step
        down = dc.value_of(likelihood.nll(model, dataset))
        model.params[i] = saved
        fd = (up - down) / (2.0 * step)
        denom = max(abs(grads[i]), abs(fd))
        err = abs(grads[i] - fd) if denom < 1e-8 else abs(grads[i] - fd) / denom
        worst = max(worst, err)
    return worst


def continuous_schema(n_features=1):
    return DatasetSchema([f"x{i + 1}" for i in range(n_features)],
                         OutcomeSpec("continuous", col="y"))


def affine_model(base="normal", domain=(-10.0, 10.0), mu=0.0, sigma=None,
                 n_features=1):
    """Model whose reference flow is exactly the identity on ``domain``
    (order-1 Bernstein with coefficients equal to the domain ends), with a
    constant location and optional constant scale."""
    spec = ModelSpec(FlowSpec("bernstein", order=1),
                     [TermSpec("intercept")],
                     [TermSpec("intercept")] if sigma is not None else [],
                     base=base)
    std = Standardizer(np.zeros(n_features), np.ones(n_features),
                       y_domain=tuple(domain))
    model = build_model(spec, continuous_schema(n_features), std,
                        tuple(domain))
    lo, hi = domain
    model.params[0] = lo
    model.params[1] = dc.softplus_inverse(hi - lo)
    model.params[2] = mu
    if sigma is not None:
        model.params[3] = math.log(sigma)
    return model


def linear_gaussian_model(domain, intercept, slope, sigma):
    """True model for y = a + b x + sigma eps with standard normal eps:
    identity flow, normal base, linear location, constant scale."""
    spec = ModelSpec(FlowSpec("bernstein", order=1),
                     [TermSpec("intercept"), TermSpec("linear", ("x1",))],
                     [TermSpec("intercept")], base="normal")
    std = Standardizer(np.zeros(1), np.ones(1), y_domain=tuple(domain))
    model = build_model(spec, continuous_schema(1), std, tuple(domain))
    lo, hi = domain
    model.params[0] = lo
    model.params[1] = dc.softplus_inverse(hi - lo)
    model.params[2] = intercept
    model.params[3] = slope
    model.params[4] = math.log(sigma)
    return model


def gen_linear_gaussian(n, seed, intercept=1.0, slope=2.0, sigma=0.5):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = intercept + slope * x + sigma * rng.standard_normal(n)
    data = Dataset(continuous_schema(1), x.reshape(-1, 1),
                   [Exact(float(v)) for v in y])
    return data, x, y


def gaussian_mle_oracle(x_train, y_train, x_test, y_test):
    """Closed-form Gaussian MLE: OLS line plus the MLE residual scale,
    scored on held-out data."""
    a = np.vstack([np.ones_like(x_train), x_train]).T
    beta, *_ = np.linalg.lstsq(a, y_train, rcond=None)
    resid = y_train - a @ beta
    sigma2 = float(np.mean(resid ** 2))
    test_resid = y_test - (beta[0] + beta[1] * x_test)
    score = float(np.mean(-0.5 * math.log(2 * math.pi * sigma2)
                          - test_resid ** 2 / (2 * sigma2)))
    return beta, math.sqrt(sigma2), score


def gen_ordinal(n, seed, cutpoints=(-1.0, 0.2, 1.4), beta=(1.0, -0.6)):
    """Proportional-odds generator: latent x'beta + logistic noise cut at
    fixed thresholds."""
    rng = np.random.default_rng(seed)
    k = len(cutpoints) + 1
    x = rng.standard_normal((n, len(beta)))
    u = rng.uniform(0.0, 1.0, n)
    eps = np.log(u / (1.0 - u))
    z = x @ np.asarray(beta) + eps
    levels = 1 + np.sum(z[:, None] > np.asarray(cutpoints)[None, :], axis=1)
    schema = DatasetSchema([f"x{i + 1}" for i in range(len(beta))],
                           OutcomeSpec("ordinal", col="y", levels=k))
    return Dataset(schema, x, [Discrete(int(v)) for v in levels])


def gen_ph_survival(n, seed, beta=1.0, shape=1.5, censor_scale=1.6):
    """Weibull baseline proportional hazards with exponential censoring
    (about 30% censored at the default scale)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    u = rng.uniform(0.0, 1.0, n)
    t_event = (-np.log(u) * np.exp(-beta * x)) ** (1.0 / shape)
    t_cens = rng.exponential(censor_scale, n)
    t = np.minimum(t_event, t_cens)
    status = (t_event <= t_cens).astype(int)
    schema = DatasetSchema(["x1"], OutcomeSpec("survival", time_col="t",
                                               status_col="s"))
    outcomes = [Exact(float(ti)) if si else Interval(float(ti), math.inf)
                for ti, si in zip(t, status)]
    return Dataset(schema, x.reshape(-1, 1), outcomes), t, status


_TERM_POOL = ("intercept", "linear", "nbf", "deep")


def random_model_and_data(rng, flow_kind, base, n_obs=6, spread=False):
    """Random small model of the given flow family and base plus matching
    synthetic observations (with censored rows for continuous flows).

    With ``spread=True`` the reference flow is rescaled to cover a wide
    latent range so the implied density normalizes over the flow domain.
    """
    p = int(rng.integers(1, 3))
    feats = [f"x{i + 1}" for i in range(p)]
    x = rng.standard_normal((n_obs, p))

    if flow_kind == "ordinal":
        levels = int(rng.integers(3, 6))
        schema = DatasetSchema(feats, OutcomeSpec("ordinal", col="y",
                                                  levels=levels))
        outcomes = [Discrete(int(v))
                    for v in rng.integers(1, levels + 1, n_obs)]
        fspec = FlowSpec("ordinal", levels=levels)
    else:
        schema = DatasetSchema(feats, OutcomeSpec("continuous", col="y"))
        ys = rng.standard_normal(n_obs) * 2.0
        outcomes = []
        for i, y in enumerate(ys):
            r = rng.random()
            if r < 0.2:
                outcomes.append(Interval(float(y), math.inf))
            elif r < 0.3:
                outcomes.append(Interval(-math.inf, float(y)))
            elif r < 0.4:
                outcomes.append(Interval(float(y), float(y) + 1.0))
            else:
                outcomes.append(Exact(float(y)))
        if flow_kind == "monotone_net":
            fspec = FlowSpec("monotone_net",
                             hidden=tuple(int(v) for v in
                                          rng.integers(2, 7, 2)))
        else:
            fspec = FlowSpec("bernstein", order=int(rng.integers(2, 9)))

    loc_terms = [TermSpec("intercept")]
    for _ in range(int(rng.integers(1, 3))):
        kind = _TERM_POOL[int(rng.integers(0, len(_TERM_POOL)))]
        if kind == "intercept":
            continue
        if kind == "linear":
            loc_terms.append(TermSpec("linear", (feats[int(rng.integers(p))],)))
        elif kind == "nbf":
            loc_terms.append(TermSpec("nbf",
                                      (feats[int(rng.integers(p))],),
                                      hidden=(int(rng.integers(3, 7)),)))
        else:
            loc_terms.append(TermSpec("deep", (), hidden=(20,)))
    scale_terms = []
    if rng.random() < 0.5:
        scale_terms = [TermSpec("intercept")]
        if rng.random() < 0.5:
            scale_terms.append(
                TermSpec("linear", (feats[int(rng.integers(p))],)))

    spec = ModelSpec(fspec, loc_terms, scale_terms, base=base)
    data = Dataset(schema, x, outcomes)
    model = build_from_dataset(spec, data)
    scheme = ("max_fan_positive", "xavier_positive",
              "variance_preserving_positive")[int(rng.integers(3))]
    init_model(model, scheme, int(rng.integers(1_000_000)))
    model.params += rng.normal(0.0, 0.15, model.n_params)
    if spread and flow_kind != "ordinal":
        _spread_reference(model, rng)
    return model, data


def _spread_reference(model, rng, span=(-40.0, 40.0)):
    """Affinely adjust the reference flow so it maps its domain onto
    ``span``; location/scale perturbations stay small, so the conditional
    density carries (almost) all its mass inside the domain."""
    from drift.flows import BernsteinFlow, MonotoneNetFlow

    flow = model.cif.reference
    lo_t, hi_t = span
    if isinstance(flow, BernsteinFlow):
        order = flow.order
        weights = rng.uniform(0.5, 1.5, order)
        incs = weights / weights.sum() * (hi_t - lo_t)
        model.params[flow.offset] = lo_t
        for k in range(1, order + 1):
            model.params[flow.offset + k] = dc.softplus_inverse(incs[k - 1])
        return
    assert isinstance(flow, MonotoneNetFlow)
    lo_d, hi_d = flow.domain
    prep = flow.prepare([float(v) for v in model.params])
    v_lo = dc.value_of(flow.value(prep, lo_d))
    v_hi = dc.value_of(flow.value(prep, hi_d))
    s = (hi_t - lo_t) / (v_hi - v_lo)
    c = lo_t - s * v_lo
    w_off, b_off, fi, fo = flow.layer_shapes[-1]
    for i in range(fi * fo):
        eff = dc.value_of(dc.softplus(float(model.params[w_off + i]))) + 1e-8
        model.params[w_off + i] = dc.softplus_inverse(max(eff * s, 1e-7))
    old_bias = float(model.params[b_off])
    model.params[b_off] = s * old_bias + c


def simpson(fn, lo, hi, n=2000):
    """Composite Simpson rule with n (even) intervals."""
    if n % 2:
        n += 1
    xs = np.linspace(lo, hi, n + 1)
    ys = np.array([fn(float(v)) for v in xs])
    h = (hi - lo) / n
    return h / 3.0 * (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum()
                      + 2.0 * ys[2:-2:2].sum())
