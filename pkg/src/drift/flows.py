"""Reference flows: strictly monotone maps from outcome to latent scale.

Three families share one calling convention.  A flow owns a slice of the
model's flat parameter vector; ``prepare(params)`` turns raw parameters
into effective (constrained) ones once per graph, and the per-observation
evaluators reuse that.  Continuous flows return the map value together
with its outcome-derivative, built analytically inside the same graph so
no nested differentiation is ever needed.

Positivity is enforced by reparameterization: effective weights are
``softplus(raw) + 1e-8``, smooth in the raw parameter and bounded away
from zero, which keeps the maps strictly increasing for every parameter
setting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import diffcore as dc
from .diffcore import DomainError, Real, Var

WEIGHT_FLOOR = 1e-8


class BracketError(RuntimeError):
    """Inversion target lies outside the reachable range of the flow."""


def positive_weight(raw: Real) -> Real:
    return dc.softplus(raw) + WEIGHT_FLOOR


def bernstein_basis(order: int, u: float) -> list[float]:
    """All order+1 Bernstein basis polynomials at u in [0, 1]."""
    v = 1.0 - u
    out = []
    for m in range(order + 1):
        out.append(math.comb(order, m) * u ** m * v ** (order - m))
    return out


class MonotoneNetFlow:
    """Feed-forward net, positive weights, tanh hidden units, linear output.

    The input is rescaled to roughly [-1, 1] using the stored outcome
    domain before entering the first layer; the returned derivative
    accounts for that rescaling.  The map is strictly increasing in the
    input for any parameters because every effective weight is positive
    and tanh is strictly monotone.
    """

    kind = "monotone_net"

    def __init__(self, hidden: Sequence[int], domain: tuple[float, float],
                 offset: int) -> None:
        if not hidden or any(w < 1 for w in hidden):
            raise ValueError(f"bad hidden widths {hidden!r}")
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise ValueError(f"domain must satisfy lo < hi, got {domain!r}")
        self.hidden = tuple(int(w) for w in hidden)
        self.domain = (lo, hi)
        self.offset = offset
        widths = [1, *self.hidden, 1]
        # per layer: (weight offset, bias offset, fan_in, fan_out)
        self.layer_shapes: list[tuple[int, int, int, int]] = []
        pos = offset
        for fi, fo in zip(widths[:-1], widths[1:]):
            self.layer_shapes.append((pos, pos + fi * fo, fi, fo))
            pos += fi * fo + fo
        self.n_params = pos - offset

    def _input_scale(self) -> tuple[float, float]:
        lo, hi = self.domain
        return 0.5 * (lo + hi), 0.5 * (hi - lo)

    def prepare(self, params: Sequence[Real]):
        layers = []
        for w_off, b_off, fi, fo in self.layer_shapes:
            weights = [[positive_weight(params[w_off + j * fi + i])
                        for i in range(fi)] for j in range(fo)]
            biases = [params[b_off + j] for j in range(fo)]
            layers.append((weights, biases))
        return layers

    def value(self, prep, y: float) -> Real:
        center, half = self._input_scale()
        acts: list[Real] = [(y - center) / half]
        last = len(prep) - 1
        for l, (weights, biases) in enumerate(prep):
            nxt = [dc.affine(wrow, acts, b) for wrow, b in zip(weights, biases)]
            if l < last:
                nxt = [dc.tanh(p) for p in nxt]
            acts = nxt
        return acts[0]

    def value_and_deriv(self, prep, y: float) -> tuple[Real, Real]:
        center, half = self._input_scale()
        acts: list[Real] = [(y - center) / half]
        derivs: list[Real] = [1.0 / half]
        last = len(prep) - 1
        for l, (weights, biases) in enumerate(prep):
            nxt: list[Real] = []
            nxt_d: list[Real] = []
            for wrow, b in zip(weights, biases):
                pre = dc.affine(wrow, acts, b)
                dpre = dc.affine(wrow, derivs)
                if l < last:
                    t = dc.tanh(pre)
                    nxt.append(t)
                    nxt_d.append((1.0 - t * t) * dpre)
                else:
                    nxt.append(pre)
                    nxt_d.append(dpre)
            acts, derivs = nxt, nxt_d
        return acts[0], derivs[0]

    def init(self, params, draw) -> None:
        """Fill raw parameters; ``draw(fan_in, fan_out, size)`` yields
        effective weights from the init scheme, biases start at zero."""
        for w_off, b_off, fi, fo in self.layer_shapes:
            eff = draw(fi, fo, fi * fo)
            for i, e in enumerate(eff):
                params[w_off + i] = dc.softplus_inverse(
                    max(e - WEIGHT_FLOOR, 1e-7))
            for j in range(fo):
                params[b_off + j] = 0.0


class BernsteinFlow:
    """Polynomial in Bernstein form with non-decreasing coefficients.

    Coefficients come from a cumulative softplus: the first raw parameter
    is the lowest coefficient, each further one adds softplus(raw), so the
    derivative in y is positive everywhere on the domain.
    """

    kind = "bernstein"

    def __init__(self, order: int, domain: tuple[float, float],
                 offset: int) -> None:
        if order < 1:
            raise ValueError("Bernstein order must be >= 1")
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise ValueError(f"domain must satisfy lo < hi, got {domain!r}")
        self.order = int(order)
        self.domain = (lo, hi)
        self.offset = offset
        self.n_params = order + 1
        self.clamped = 0  # out-of-domain evaluations seen at predict time

    def prepare(self, params: Sequence[Real]):
        coefs: list[Real] = [params[self.offset]]
        deltas: list[Real] = []
        for k in range(1, self.order + 1):
            d = dc.softplus(params[self.offset + k])
            deltas.append(d)
            coefs.append(coefs[-1] + d)
        return coefs, deltas

    def _unit(self, y: float, clamp: bool) -> float:
        lo, hi = self.domain
        u = (y - lo) / (hi - lo)
        if u < 0.0 or u > 1.0:
            if not clamp:
                raise DomainError(
                    f"y={y} outside Bernstein domain [{lo}, {hi}]")
            self.clamped += 1
            u = min(max(u, 0.0), 1.0)
        return u

    def value(self, prep, y: float, clamp: bool = False) -> Real:
        coefs, _ = prep
        u = self._unit(y, clamp)
        return dc.affine(bernstein_basis(self.order, u), coefs)

    def value_and_deriv(self, prep, y: float,
                        clamp: bool = False) -> tuple[Real, Real]:
        coefs, deltas = prep
        u = self._unit(y, clamp)
        val = dc.affine(bernstein_basis(self.order, u), coefs)
        lo, hi = self.domain
        scale = self.order / (hi - lo)
        der = dc.affine(bernstein_basis(self.order - 1, u), deltas) * scale
        return val, der

    def init(self, params, span: tuple[float, float] = (-2.0, 2.0)) -> None:
        """Start as the affine map from the domain onto ``span``."""
        a, b = span
        params[self.offset] = a
        step = dc.softplus_inverse((b - a) / self.order)
        for k in range(1, self.order + 1):
            params[self.offset + k] = step


class OrdinalCutpoints:
    """K-1 strictly increasing cut-points for a K-level ordinal outcome."""

    kind = "ordinal"

    def __init__(self, levels: int, offset: int) -> None:
        if levels < 2:
            raise ValueError("ordinal outcome needs at least 2 levels")
        self.levels = int(levels)
        self.offset = offset
        self.n_params = levels - 1

    def prepare(self, params: Sequence[Real]):
        cuts: list[Real] = [params[self.offset]]
        for k in range(1, self.levels - 1):
            # +1e-8 keeps the sequence strictly increasing even when
            # softplus underflows for very negative raw values
            cuts.append(cuts[-1] + dc.softplus(params[self.offset + k])
                        + WEIGHT_FLOOR)
        return cuts

    def bounds(self, prep, k: int) -> tuple[Real, Real]:
        """(upper, lower) latent cut-points for level k; the first level
        has lower -inf, the last upper +inf."""
        if not 1 <= k <= self.levels:
            raise DomainError(f"level {k} outside 1..{self.levels}")
        upper: Real = math.inf if k == self.levels else prep[k - 1]
        lower: Real = -math.inf if k == 1 else prep[k - 2]
        return upper, lower

    def init(self, params, spread: tuple[float, float] = (-1.5, 1.5)) -> None:
        lo, hi = spread
        if self.levels == 2:
            params[self.offset] = 0.5 * (lo + hi)
            return
        step = (hi - lo) / (self.levels - 2) if self.levels > 2 else 0.0
        params[self.offset] = lo
        for k in range(1, self.levels - 1):
            params[self.offset + k] = dc.softplus_inverse(max(step, 1e-6))


ReferenceFlow = MonotoneNetFlow | BernsteinFlow | OrdinalCutpoints


@dataclass
class ConditionalInverseFlow:
    """h(y, x) = (ref(y) - mu(x)) / sigma(x), the trainable conditional map.

    ``sigma`` comes from an exp-transformed predictor and is identically 1
    when no scale predictor is configured.
    """

    reference: ReferenceFlow
    location: "object"            # predictors.Predictor
    scale: Optional["object"] = None

    def prepare(self, params: Sequence[Real], rng=None):
        return (self.reference.prepare(params),
                self.location.prepare(params),
                self.scale.prepare(params) if self.scale is not None else None,
                rng)

    def mu_sigma(self, prep, x) -> tuple[Real, Optional[Real]]:
        """Location and scale at x; sigma is None when no scale predictor
        is configured (the composition then skips the division)."""
        _, loc_prep, scale_prep, rng = prep
        mu = self.location.eval(loc_prep, x, rng)
        sigma = None
        if self.scale is not None:
            sigma = self.scale.eval(scale_prep, x, rng)
        return mu, sigma

    def h_of(self, prep, ref_value: Real, x) -> Real:
        mu, sigma = self.mu_sigma(prep, x)
        h = ref_value - mu
        return h if sigma is None else h / sigma

    def eval_h(self, prep, y: float, x, clamp: bool = False) -> tuple[Real, Real]:
        ref_prep = prep[0]
        if isinstance(self.reference, BernsteinFlow):
            val, der = self.reference.value_and_deriv(ref_prep, y, clamp)
        else:
            val, der = self.reference.value_and_deriv(ref_prep, y)
        mu, sigma = self.mu_sigma(prep, x)
        if sigma is None:
            return val - mu, der
        return (val - mu) / sigma, der / sigma

    def h_value(self, prep, y: float, x, clamp: bool = False) -> Real:
        ref_prep = prep[0]
        if isinstance(self.reference, BernsteinFlow):
            val = self.reference.value(ref_prep, y, clamp)
        else:
            val = self.reference.value(ref_prep, y)
        return self.h_of(prep, val, x)


# -- spec-level convenience wrappers ------------------------------------------

def eval_ref(flow: ReferenceFlow, params: Sequence[Real],
             y: float) -> tuple[Real, Real]:
    """Reference flow value and its outcome-derivative at y."""
    if isinstance(flow, OrdinalCutpoints):
        raise DomainError("eval_ref needs a continuous flow")
    return flow.value_and_deriv(flow.prepare(params), y)


def eval_ordinal(flow: OrdinalCutpoints, params: Sequence[Real],
                 k: int) -> tuple[Real, Real]:
    """(upper, lower) cut-points for level k, +-inf at the boundaries."""
    return flow.bounds(flow.prepare(params), k)


def eval_h(cif: ConditionalInverseFlow, params: Sequence[Real],
           y: float, x) -> tuple[Real, Real]:
    """Conditional map h(y, x) and dh/dy."""
    return cif.eval_h(cif.prepare(params), y, x)


def invert_h(cif: ConditionalInverseFlow, params: Sequence[float], x,
             target: float, tol: float = 1e-8,
             max_iter: int = 300) -> float:
    """Solve h(y, x) = target for y by bisection on the monotone map."""
    if isinstance(cif.reference, OrdinalCutpoints):
        raise DomainError("invert_h needs a continuous flow")
    prep = cif.prepare(params)

    def f(y: float) -> float:
        return dc.value_of(cif.h_value(prep, y, x, clamp=True))

    if isinstance(cif.reference, BernsteinFlow):
        lo, hi = cif.reference.domain
        flo, fhi = f(lo), f(hi)
        if not flo <= target <= fhi:
            raise BracketError(
                f"target {target} outside reachable range [{flo}, {fhi}]")
    else:
        lo, hi = -1.0, 1.0
        flo, fhi = f(lo), f(hi)
        for _ in range(60):
            if flo <= target <= fhi:
                break
            lo, hi = 2.0 * lo, 2.0 * hi
            flo, fhi = f(lo), f(hi)
        else:
            raise BracketError(
                f"target {target} not bracketed in [{lo}, {hi}]; the "
                "monotone network range is bounded for finite weights")

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm - target) <= tol:
            return mid
        if fm < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
