"""Parameter-free base distributions on the latent scale.

Three choices, all with strictly increasing CDF and log-concave density:
standard logistic (log-odds scale), standard normal (probit scale) and
the standard minimum extreme value distribution (cloglog scale,
``F(z) = 1 - exp(-exp(z))``).

Every function takes either a plain float or a :class:`~drift.diffcore.Var`
and returns the same kind, so likelihood code can run with or without a
gradient tape.
"""

from __future__ import annotations

import math

from . import diffcore as dc
from .diffcore import DomainError, Real, Var

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)


class BaseDistribution:
    """Common interface; concrete classes fill in the scalar kernels."""

    name: str = ""

    def cdf(self, z: Real) -> Real:
        raise NotImplementedError

    def log_pdf(self, z: Real) -> Real:
        raise NotImplementedError

    def log_cdf(self, z: Real) -> Real:
        raise NotImplementedError

    def log_survival(self, z: Real) -> Real:
        raise NotImplementedError

    def quantile(self, p: float) -> float:
        raise NotImplementedError

    def _check_p(self, p: float) -> float:
        p = float(p)
        if not 0.0 < p < 1.0:
            raise DomainError(f"quantile needs p in (0,1), got {p}")
        return p

    def __repr__(self) -> str:
        return f"BaseDistribution({self.name})"


class StandardLogistic(BaseDistribution):
    name = "logistic"

    def cdf(self, z: Real) -> Real:
        return dc.sigmoid(z)

    def log_pdf(self, z: Real) -> Real:
        # log f(z) = z - 2 softplus(z)
        return z - 2.0 * dc.softplus(z)

    def log_cdf(self, z: Real) -> Real:
        return -dc.softplus(-z)

    def log_survival(self, z: Real) -> Real:
        return -dc.softplus(z)

    def quantile(self, p: float) -> float:
        p = self._check_p(p)
        return math.log(p / (1.0 - p))


class StandardNormal(BaseDistribution):
    name = "normal"

    @staticmethod
    def _cdf(z: float) -> float:
        return 0.5 * (1.0 + math.erf(z / _SQRT2))

    @staticmethod
    def _pdf(z: float) -> float:
        return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    @staticmethod
    def _log_cdf(z: float) -> float:
        if z > -20.0:
            return math.log(0.5 * math.erfc(-z / _SQRT2))
        # Mills-ratio asymptotics; erfc underflows near z = -38
        zz = z * z
        tail = math.log1p(-1.0 / zz + 3.0 / zz ** 2 - 15.0 / zz ** 3)
        return -0.5 * zz - _LOG_SQRT_2PI - math.log(-z) + tail

    def cdf(self, z: Real) -> Real:
        if isinstance(z, Var):
            return dc.unary_node(z, self._cdf(z.value), self._pdf(z.value))
        return self._cdf(z)

    def log_pdf(self, z: Real) -> Real:
        return -0.5 * (z * z) - _LOG_SQRT_2PI

    def log_cdf(self, z: Real) -> Real:
        if isinstance(z, Var):
            lc = self._log_cdf(z.value)
            # d/dz log Phi = phi/Phi, evaluated in log space for stability
            lp = -0.5 * z.value * z.value - _LOG_SQRT_2PI
            return dc.unary_node(z, lc, math.exp(lp - lc))
        return self._log_cdf(z)

    def log_survival(self, z: Real) -> Real:
        return self.log_cdf(-z)

    def quantile(self, p: float) -> float:
        p = self._check_p(p)
        z = _norm_quantile_approx(p)
        # one Newton step on the erf-based CDF sharpens to ~1e-15
        return z - (self._cdf(z) - p) / self._pdf(z)


class StandardMinExtremeValue(BaseDistribution):
    """Minimum extreme value: F(z) = 1 - exp(-exp(z))."""

    name = "minimum_extreme_value"

    def cdf(self, z: Real) -> Real:
        if isinstance(z, Var):
            return 1.0 - dc.exp(-dc.exp(z))
        return -math.expm1(-math.exp(z))

    def log_pdf(self, z: Real) -> Real:
        return z - dc.exp(z)

    @staticmethod
    def _log_cdf(z: float) -> float:
        w = math.exp(z)
        if w < 1e-300:
            return z
        return math.log(-math.expm1(-w))

    def log_cdf(self, z: Real) -> Real:
        if isinstance(z, Var):
            lc = self._log_cdf(z.value)
            w = math.exp(z.value)
            partial = math.exp(z.value - w - lc)  # f/F
            return dc.unary_node(z, lc, partial)
        return self._log_cdf(z)

    def log_survival(self, z: Real) -> Real:
        return -dc.exp(z)

    def quantile(self, p: float) -> float:
        p = self._check_p(p)
        return math.log(-math.log1p(-p))


LOGISTIC = StandardLogistic()
NORMAL = StandardNormal()
MIN_EXTREME_VALUE = StandardMinExtremeValue()

_BY_NAME = {d.name: d for d in (LOGISTIC, NORMAL, MIN_EXTREME_VALUE)}


def get(name: str) -> BaseDistribution:
    """Look up a base distribution by its config name."""
    try:
        return _BY_NAME[name]
    except KeyError:
        raise DomainError(
            f"unknown base distribution {name!r}; "
            f"choose one of {sorted(_BY_NAME)}") from None


# functional aliases mirroring the method names

def cdf(d: BaseDistribution, z: Real) -> Real:
    return d.cdf(z)


def log_pdf(d: BaseDistribution, z: Real) -> Real:
    return d.log_pdf(z)


def log_survival(d: BaseDistribution, z: Real) -> Real:
    return d.log_survival(z)


def log_cdf(d: BaseDistribution, z: Real) -> Real:
    return d.log_cdf(z)


def quantile(d: BaseDistribution, p: float) -> float:
    return d.quantile(p)


# Rational approximation for the standard normal quantile (Acklam 2003,
# rel. error < 1.2e-9) used as the Newton starting point.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def _norm_quantile_approx(p: float) -> float:
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4])
                 * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p > 1.0 - p_low:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4])
                  * q + _C[5])
                 / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4])
             * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4])
               * r + 1.0))
