"""Additive predictors: sums of per-feature terms for location and scale.

A predictor is an ordered list of terms evaluated on a standardized
feature vector and summed; scale predictors exponentiate the sum so the
output is strictly positive.  Term kinds:

* ``Intercept`` - one free constant
* ``Linear`` - coefficient times one feature
* ``NeuralBasis`` - per-feature ReLU network (adaptive basis function);
  default architecture 64-64-32-1 with a bias in the penultimate layer only
* ``Bivariate`` - two per-feature subnetworks, each emitting 5 features,
  combined by an outer product and one final linear layer
* ``Deep`` - ReLU network over the full feature vector with dropout 0.1,
  restricted to four stock architectures
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Real

NBF_DEFAULT_HIDDEN = (64, 64, 32)
DEEP_MENU = ((100,), (100, 100), (20,), (20, 20))
DEEP_DROPOUT = 0.1


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


class _MLP:
    """Dense ReLU stack sharing layout/init/eval between term kinds.

    ``bias_mode`` is "penultimate" (adaptive-basis convention: bias only in
    the layer before the output) or "all".
    """

    def __init__(self, in_dim: int, hidden: Sequence[int], out_dim: int,
                 bias_mode: str, offset: int) -> None:
        widths = [in_dim, *hidden, out_dim]
        n_layers = len(widths) - 1
        self.shapes: list[tuple[int, Optional[int], int, int, bool]] = []
        pos = offset
        for l in range(n_layers):
            fi, fo = widths[l], widths[l + 1]
            w_off = pos
            pos += fi * fo
            has_bias = bias_mode == "all" or (
                bias_mode == "penultimate" and l == n_layers - 2)
            b_off = pos if has_bias else None
            if has_bias:
                pos += fo
            self.shapes.append((w_off, b_off, fi, fo, l < n_layers - 1))
        self.n_params = pos - offset

    def prepare(self, params: Sequence[Real]):
        layers = []
        for w_off, b_off, fi, fo, hidden in self.shapes:
            weights = [[params[w_off + j * fi + i] for i in range(fi)]
                       for j in range(fo)]
            biases = None if b_off is None \
                else [params[b_off + j] for j in range(fo)]
            layers.append((weights, biases, hidden))
        return layers

    def eval(self, prep, inputs: Sequence[Real], rng=None,
             dropout: float = 0.0) -> list[Real]:
        acts = list(inputs)
        for weights, biases, hidden in prep:
            nxt = []
            for j, wrow in enumerate(weights):
                pre = dc.affine(wrow, acts, biases[j] if biases else None)
                nxt.append(dc.relu(pre) if hidden else pre)
            if hidden and dropout > 0.0 and rng is not None:
                keep = 1.0 / (1.0 - dropout)
                nxt = [0.0 if rng.random() < dropout else a * keep
                       for a in nxt]
            acts = nxt
        return acts

    def init(self, params, rng: np.random.Generator) -> None:
        for w_off, b_off, fi, fo, _ in self.shapes:
            bound = glorot_bound(fi, fo)
            draws = rng.uniform(-bound, bound, size=fi * fo)
            for i, d in enumerate(draws):
                params[w_off + i] = d
            if b_off is not None:
                for j in range(fo):
                    params[b_off + j] = 0.0


class Intercept:
    kind = "intercept"
    features: tuple[int, ...] = ()

    def __init__(self, offset: int) -> None:
        self.offset = offset
        self.n_params = 1

    def prepare(self, params):
        return params[self.offset]

    def eval(self, prep, x, rng=None) -> Real:
        return prep

    def init(self, params, rng) -> None:
        params[self.offset] = 0.0


class Linear:
    kind = "linear"

    def __init__(self, feature: int, offset: int) -> None:
        self.features = (feature,)
        self.offset = offset
        self.n_params = 1

    def prepare(self, params):
        return params[self.offset]

    def eval(self, prep, x, rng=None) -> Real:
        return prep * float(x[self.features[0]])

    def eval1(self, prep, value: float) -> Real:
        return prep * float(value)

    def init(self, params, rng) -> None:
        params[self.offset] = 0.0


class NeuralBasis:
    kind = "nbf"

    def __init__(self, feature: int, offset: int,
                 hidden: Sequence[int] = NBF_DEFAULT_HIDDEN) -> None:
        self.features = (feature,)
        self.offset = offset
        self.net = _MLP(1, hidden, 1, "penultimate", offset)
        self.n_params = self.net.n_params

    def prepare(self, params):
        return self.net.prepare(params)

    def eval(self, prep, x, rng=None) -> Real:
        return self.net.eval(prep, [float(x[self.features[0]])])[0]

    def eval1(self, prep, value: float) -> Real:
        return self.net.eval(prep, [float(value)])[0]

    def init(self, params, rng) -> None:
        self.net.init(params, rng)


class Bivariate:
    kind = "bivariate"

    def __init__(self, feature_a: int, feature_b: int, offset: int,
                 hidden: Sequence[int] = NBF_DEFAULT_HIDDEN,
                 latent: int = 5) -> None:
        self.features = (feature_a, feature_b)
        self.offset = offset
        self.latent = latent
        self.net_a = _MLP(1, hidden, latent, "penultimate", offset)
        pos = offset + self.net_a.n_params
        self.net_b = _MLP(1, hidden, latent, "penultimate", pos)
        pos += self.net_b.n_params
        self.mix_offset = pos  # latent^2 outer-product weights, no bias
        self.n_params = pos + latent * latent - offset

    def prepare(self, params):
        mix = [params[self.mix_offset + i]
               for i in range(self.latent * self.latent)]
        return self.net_a.prepare(params), self.net_b.prepare(params), mix

    def eval(self, prep, x, rng=None) -> Real:
        prep_a, prep_b, mix = prep
        a = self.net_a.eval(prep_a, [float(x[self.features[0]])])
        b = self.net_b.eval(prep_b, [float(x[self.features[1]])])
        products = [ai * bj for ai in a for bj in b]
        return dc.affine(mix, products)

    def init(self, params, rng) -> None:
        self.net_a.init(params, rng)
        self.net_b.init(params, rng)
        bound = glorot_bound(self.latent * self.latent, 1)
        draws = rng.uniform(-bound, bound, size=self.latent * self.latent)
        for i, d in enumerate(draws):
            params[self.mix_offset + i] = d


class Deep:
    kind = "deep"

    def __init__(self, n_features: int, offset: int,
                 hidden: Sequence[int] = (20, 20),
                 dropout: float = DEEP_DROPOUT) -> None:
        hidden = tuple(int(w) for w in hidden)
        if hidden not in DEEP_MENU:
            raise ValueError(
                f"deep term architecture {hidden} not in menu {DEEP_MENU}")
        self.features = tuple(range(n_features))
        self.offset = offset
        self.dropout = dropout
        self.net = _MLP(n_features, hidden, 1, "all", offset)
        self.n_params = self.net.n_params

    def prepare(self, params):
        return self.net.prepare(params)

    def eval(self, prep, x, rng=None) -> Real:
        inputs = [float(v) for v in x]
        return self.net.eval(prep, inputs, rng, self.dropout)[0]

    def init(self, params, rng) -> None:
        self.net.init(params, rng)


Term = Intercept | Linear | NeuralBasis | Bivariate | Deep


class Predictor:
    """Sum of terms, then an output transform (identity or exp)."""

    def __init__(self, terms: Sequence[Term], n_features: int,
                 transform: str = "identity") -> None:
        if transform not in ("identity", "exp"):
            raise ValueError(f"unknown transform {transform!r}")
        self.terms = list(terms)
        self.n_features = n_features
        self.transform = transform

    @property
    def n_params(self) -> int:
        return sum(t.n_params for t in self.terms)

    def prepare(self, params):
        return [t.prepare(params) for t in self.terms]

    def eval(self, prep, x, rng=None) -> Real:
        if len(x) != self.n_features:
            raise ValueError(
                f"feature vector has {len(x)} entries, predictor expects "
                f"{self.n_features}")
        parts = [t.eval(p, x, rng) for t, p in zip(self.terms, prep)]
        if len(parts) == 1:
            total = parts[0]
        else:
            total = dc.vsum(parts)
        if self.transform == "exp":
            return dc.exp(total)
        return total

    def init(self, params, rng) -> None:
        for t in self.terms:
            t.init(params, rng)


def eval_predictor(p: Predictor, params: Sequence[Real], x) -> Real:
    """One-shot evaluation (prepare + eval) of the additive predictor."""
    return p.eval(p.prepare(params), x)


def partial_effect(p: Predictor, params: Sequence[float], term_index: int,
                   grid: Sequence[float]) -> np.ndarray:
    """Term effect over a grid of (standardized) feature values, centered
    to mean zero for identifiability."""
    term = p.terms[term_index]
    if not isinstance(term, (Linear, NeuralBasis)):
        raise ValueError(
            f"partial effects need a univariate term, got {term.kind}")
    prep = term.prepare(params)
    vals = np.array([dc.value_of(term.eval1(prep, g)) for g in grid],
                    dtype=float)
    return vals - vals.mean()
