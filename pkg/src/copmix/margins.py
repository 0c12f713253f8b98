"""Univariate continuous margin families and their parameter priors.

Three families are supported: normal (mean/variance), beta (two shapes) and
exponential (rate).  Each exposes CDF, quantile and log-density plus a prior
over its parameters (normal-inverse-gamma for the normal margin, gamma priors
for the positive parameters of the other two).  Standard-normal helpers
``phi_cdf`` / ``probit`` convert between data space and normal scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, ParameterError

FAMILIES = ("normal", "beta", "exponential")

# CDF values are clamped to [CDF_EPS, 1 - CDF_EPS] before the probit is
# applied downstream, so boundary observations map to finite normal scores.
CDF_EPS = 1e-15


# ---------------------------------------------------------------------------
# Prior hyperparameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) prior for a positive scalar parameter."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ParameterError(f"gamma prior requires positive shape/rate, got {self}")


@dataclass(frozen=True)
class NormalInverseGammaPrior:
    """Conjugate prior for a normal margin.

    variance ~ InvGamma(var_shape, var_scale) and
    mean | variance ~ Normal(mean_loc, variance / mean_precision).
    """

    mean_loc: float
    mean_precision: float
    var_shape: float
    var_scale: float

    def __post_init__(self):
        if not (self.mean_precision > 0 and self.var_shape > 0 and self.var_scale > 0):
            raise ParameterError(f"invalid normal-inverse-gamma hyperparameters: {self}")


@dataclass(frozen=True)
class BetaShapesPrior:
    """Independent gamma priors for the two shape parameters of a beta margin."""

    alpha: GammaPrior
    beta: GammaPrior


PriorHyper = NormalInverseGammaPrior | BetaShapesPrior | GammaPrior

_HYPER_TYPES = {
    "normal": NormalInverseGammaPrior,
    "beta": BetaShapesPrior,
    "exponential": GammaPrior,
}


@dataclass(frozen=True)
class MarginSpec:
    """A margin family together with the prior on its parameters."""

    family: str
    hyper: PriorHyper

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown margin family {self.family!r}")
        want = _HYPER_TYPES[self.family]
        if not isinstance(self.hyper, want):
            raise ParameterError(
                f"{self.family} margin requires {want.__name__}, got {type(self.hyper).__name__}"
            )


@dataclass(frozen=True)
class MarginParams:
    """Concrete parameter values for one margin.

    ``values`` is (mean, variance) for normal, (alpha, beta) for beta and
    (rate,) for exponential.
    """

    family: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown margin family {self.family!r}")
        v = self.values
        if self.family == "normal":
            if len(v) != 2 or not v[1] > 0:
                raise ParameterError(f"normal margin needs (mean, variance>0), got {v}")
        elif self.family == "beta":
            if len(v) != 2 or not (v[0] > 0 and v[1] > 0):
                raise ParameterError(f"beta margin needs positive (alpha, beta), got {v}")
        else:
            if len(v) != 1 or not v[0] > 0:
                raise ParameterError(f"exponential margin needs (rate>0,), got {v}")
        if not all(math.isfinite(x) for x in v):
            raise ParameterError(f"margin parameters must be finite, got {v}")


def normal_params(mean: float, variance: float) -> MarginParams:
    return MarginParams("normal", (float(mean), float(variance)))


def beta_params(alpha: float, beta: float) -> MarginParams:
    return MarginParams("beta", (float(alpha), float(beta)))


def exponential_params(rate: float) -> MarginParams:
    return MarginParams("exponential", (float(rate),))


# ---------------------------------------------------------------------------
# Standard normal helpers
# ---------------------------------------------------------------------------

def phi_cdf(z):
    """Standard normal CDF; accepts scalars or arrays."""
    return special.ndtr(z)


def probit(u):
    """Inverse standard normal CDF on the open interval (0, 1).

    Raises DomainError at 0 or 1; callers must clamp boundary values first.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("probit requires arguments strictly inside (0, 1)")
    out = special.ndtri(arr)
    return float(out) if np.isscalar(u) else out


# ---------------------------------------------------------------------------
# CDF / quantile / log-density
# ---------------------------------------------------------------------------

def margin_cdf(params: MarginParams, x):
    """CDF of the margin at ``x`` (scalar or array); exact 0/1 off support."""
    v = params.values
    xa = np.asarray(x, dtype=float)
    if params.family == "normal":
        out = special.ndtr((xa - v[0]) / math.sqrt(v[1]))
    elif params.family == "beta":
        out = special.betainc(v[0], v[1], np.clip(xa, 0.0, 1.0))
    else:
        out = np.where(xa > 0.0, -np.expm1(-v[0] * np.maximum(xa, 0.0)), 0.0)
    return float(out) if np.isscalar(x) else out


def margin_quantile(params: MarginParams, u):
    """Quantile function; arguments must lie strictly inside (0, 1)."""
    ua = np.asarray(u, dtype=float)
    if np.any(ua <= 0.0) or np.any(ua >= 1.0):
        raise DomainError("margin_quantile requires u strictly inside (0, 1)")
    v = params.values
    if params.family == "normal":
        out = v[0] + math.sqrt(v[1]) * special.ndtri(ua)
    elif params.family == "beta":
        out = special.betaincinv(v[0], v[1], ua)
    else:
        out = -np.log1p(-ua) / v[0]
    return float(out) if np.isscalar(u) else out


def margin_logpdf(params: MarginParams, x):
    """Log-density of the margin at ``x``; -inf outside the support."""
    v = params.values
    xa = np.asarray(x, dtype=float)
    if params.family == "normal":
        out = -0.5 * (math.log(2.0 * math.pi * v[1]) + (xa - v[0]) ** 2 / v[1])
    elif params.family == "beta":
        a, b = v
        inside = (xa >= 0.0) & (xa <= 1.0)
        xc = np.clip(xa, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (
                special.xlogy(a - 1.0, xc)
                + special.xlog1py(b - 1.0, -xc)
                - special.betaln(a, b)
            )
        out = np.where(inside, val, -np.inf)
    else:
        rate = v[0]
        out = np.where(xa >= 0.0, math.log(rate) - rate * xa, -np.inf)
    return float(out) if np.isscalar(x) else out


def normal_score(params: MarginParams, x):
    """Clamped probit of the margin CDF: the latent normal score of ``x``."""
    u = margin_cdf(params, x)
    u = np.clip(u, CDF_EPS, 1.0 - CDF_EPS)
    out = special.ndtri(u)
    return float(out) if np.isscalar(x) else out


def cdf_fv(family: str, v: tuple, x: float) -> float:
    """Scalar CDF on raw (family, values); the sampler's inner-loop path."""
    if family == "normal":
        return float(special.ndtr((x - v[0]) / math.sqrt(v[1])))
    if family == "beta":
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return 1.0
        return float(special.betainc(v[0], v[1], x))
    if x <= 0.0:
        return 0.0
    return -math.expm1(-v[0] * x)


def logpdf_fv(family: str, v: tuple, x: float) -> float:
    """Scalar log-density on raw (family, values); -inf outside the support."""
    if family == "normal":
        return -0.5 * (math.log(2.0 * math.pi * v[1]) + (x - v[0]) ** 2 / v[1])
    if family == "beta":
        if x < 0.0 or x > 1.0:
            return -math.inf
        a, b = v
        return float(
            special.xlogy(a - 1.0, x) + special.xlog1py(b - 1.0, -x) - special.betaln(a, b)
        )
    if x < 0.0:
        return -math.inf
    return math.log(v[0]) - v[0] * x


def cdf_scalar(params: MarginParams, x: float) -> float:
    """Scalar CDF fast path used by the sampler's inner loop."""
    return cdf_fv(params.family, params.values, x)


def logpdf_scalar(params: MarginParams, x: float) -> float:
    """Scalar log-density fast path; -inf outside the support."""
    return logpdf_fv(params.family, params.values, x)


# ---------------------------------------------------------------------------
# Parameter priors
# ---------------------------------------------------------------------------

def _gamma_logpdf(x: float, prior: GammaPrior) -> float:
    if x <= 0.0:
        return -math.inf
    k, r = prior.shape, prior.rate
    return k * math.log(r) - math.lgamma(k) + (k - 1.0) * math.log(x) - r * x


def _inv_gamma_logpdf(x: float, shape: float, scale: float) -> float:
    if x <= 0.0:
        return -math.inf
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * math.log(x) - scale / x


def prior_sample(spec: MarginSpec, rng: np.random.Generator) -> MarginParams:
    """Draw margin parameters from the prior given by ``spec.hyper``."""
    h = spec.hyper
    if spec.family == "normal":
        variance = 1.0 / rng.gamma(h.var_shape, 1.0 / h.var_scale)
        mean = rng.normal(h.mean_loc, math.sqrt(variance / h.mean_precision))
        return MarginParams("normal", (mean, variance))
    if spec.family == "beta":
        alpha = rng.gamma(h.alpha.shape, 1.0 / h.alpha.rate)
        beta = rng.gamma(h.beta.shape, 1.0 / h.beta.rate)
        return MarginParams("beta", (alpha, beta))
    rate = rng.gamma(h.shape, 1.0 / h.rate)
    return MarginParams("exponential", (rate,))


def prior_logpdf(spec: MarginSpec, params: MarginParams) -> float:
    """Log prior density of ``params`` under ``spec.hyper``."""
    if params.family != spec.family:
        raise ParameterError(f"params family {params.family} does not match spec {spec.family}")
    h = spec.hyper
    v = params.values
    if spec.family == "normal":
        mean, variance = v
        lp = _inv_gamma_logpdf(variance, h.var_shape, h.var_scale)
        sd = math.sqrt(variance / h.mean_precision)
        lp += -0.5 * math.log(2.0 * math.pi * sd * sd) - 0.5 * ((mean - h.mean_loc) / sd) ** 2
        return lp
    if spec.family == "beta":
        return _gamma_logpdf(v[0], h.alpha) + _gamma_logpdf(v[1], h.beta)
    return _gamma_logpdf(v[0], h)


# ---------------------------------------------------------------------------
# Unconstrained reparameterization (for random-walk MH on parameters)
# ---------------------------------------------------------------------------

def to_unconstrained(params: MarginParams) -> np.ndarray:
    """Map parameters to an unconstrained vector (log for positive params)."""
    v = params.values
    if params.family == "normal":
        return np.array([v[0], math.log(v[1])])
    return np.log(np.asarray(v))


def from_unconstrained(family: str, vec: np.ndarray) -> MarginParams:
    """Inverse of :func:`to_unconstrained`."""
    if family == "normal":
        return MarginParams("normal", (float(vec[0]), math.exp(float(vec[1]))))
    values = tuple(math.exp(float(t)) for t in vec)
    return MarginParams(family, values)


def log_jacobian(params: MarginParams) -> float:
    """Log |d params / d unconstrained| for the reparameterization above."""
    v = params.values
    if params.family == "normal":
        return math.log(v[1])
    return float(np.sum(np.log(np.asarray(v))))
