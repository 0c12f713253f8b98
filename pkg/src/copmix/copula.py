"""Correlation/covariance algebra and Gaussian-copula densities.

The meta-Gaussian log-density of a point x with margins F_j and correlation P
is the Gaussian-copula log-density evaluated at the normal scores
z_j = probit(F_j(x_j)) plus the sum of the margin log-densities.  All density
work happens in log space; P^{-1} and log|P| come from a Cholesky factor
cached at construction (with a single 1e-10 jitter retry before failing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special
from scipy.linalg import cho_solve, solve_triangular

from .errors import DegenerateDataError, MatrixError, NearSingularError, ParameterError
from .margins import CDF_EPS, MarginParams, margin_cdf, margin_logpdf, margin_quantile

_SYM_TOL = 1e-12
_JITTER = 1e-10
_COND_LIMIT = 1e8

_LOG_2PI = math.log(2.0 * math.pi)


def _decompose(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Cholesky factor, inverse (via the factor) and logdet of an SPD matrix.

    Dimensions 1 and 2 use closed forms; they dominate the sampler's inner
    loop.  Raises LinAlgError when the matrix is not positive definite.
    """
    d = a.shape[0]
    if d == 1:
        v = float(a[0, 0])
        if v <= 0.0:
            raise np.linalg.LinAlgError("not positive definite")
        return np.array([[math.sqrt(v)]]), np.array([[1.0 / v]]), math.log(v)
    if d == 2:
        a00, a01, a11 = float(a[0, 0]), float(a[0, 1]), float(a[1, 1])
        det = a00 * a11 - a01 * a01
        if a00 <= 0.0 or det <= 0.0:
            raise np.linalg.LinAlgError("not positive definite")
        l00 = math.sqrt(a00)
        l10 = a01 / l00
        l11 = math.sqrt(a11 - l10 * l10)
        chol = np.array([[l00, 0.0], [l10, l11]])
        inv = np.array([[a11 / det, -a01 / det], [-a01 / det, a00 / det]])
        return chol, inv, math.log(det)
    chol = np.linalg.cholesky(a)
    inv = cho_solve((chol, True), np.eye(d))
    logdet = 2.0 * float(np.log(np.diag(chol)).sum())
    return chol, inv, logdet


def _decompose_jittered(a: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray, float]:
    try:
        return _decompose(a)
    except np.linalg.LinAlgError:
        try:
            return _decompose(a + _JITTER * np.eye(a.shape[0]))
        except np.linalg.LinAlgError:
            raise MatrixError(f"{what} is not positive definite") from None


def _validated_symmetric(values, what: str) -> np.ndarray:
    a = np.array(values, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise MatrixError(f"{what} must be a nonempty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixError(f"{what} contains non-finite entries")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > _SYM_TOL * scale:
        raise MatrixError(f"{what} is not symmetric")
    return 0.5 * (a + a.T)


class CovarianceMatrix:
    """Symmetric positive-definite matrix with cached Cholesky data."""

    __slots__ = ("values", "chol", "logdet", "inv")

    def __init__(self, values):
        a = _validated_symmetric(values, type(self).__name__)
        self._finish_init(a)

    def _finish_init(self, a: np.ndarray):
        self.chol, self.inv, self.logdet = _decompose_jittered(a, type(self).__name__)
        a.setflags(write=False)
        self.values = a

    @classmethod
    def _trusted(cls, values: np.ndarray) -> "CovarianceMatrix":
        """Internal fast path for matrices symmetric/valid by construction."""
        obj = object.__new__(cls)
        obj._finish_init(values)
        return obj

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class CorrelationMatrix(CovarianceMatrix):
    """Covariance matrix with unit diagonal and off-diagonals in (-1, 1)."""

    __slots__ = ()

    def __init__(self, values):
        a = _validated_symmetric(values, "CorrelationMatrix")
        if float(np.abs(np.diag(a) - 1.0).max()) > _SYM_TOL:
            raise MatrixError("CorrelationMatrix requires a unit diagonal")
        off = a[~np.eye(a.shape[0], dtype=bool)]
        if off.size and float(np.abs(off).max()) >= 1.0:
            raise MatrixError("correlation entries must lie strictly inside (-1, 1)")
        np.fill_diagonal(a, 1.0)
        self._finish_init(a)


@dataclass(frozen=True)
class ViewLayout:
    """Dimensions of the two co-occurring views."""

    p: int
    q: int

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ParameterError(f"view dimensions must be >= 1, got p={self.p}, q={self.q}")

    @property
    def total(self) -> int:
        return self.p + self.q

    @property
    def x_slice(self) -> slice:
        return slice(0, self.p)

    @property
    def y_slice(self) -> slice:
        return slice(self.p, self.p + self.q)


# ---------------------------------------------------------------------------
# Correlation algebra
# ---------------------------------------------------------------------------

def cov_to_corr(cov: CovarianceMatrix) -> CorrelationMatrix:
    """Normalize a covariance matrix to its correlation matrix."""
    v = cov.values if isinstance(cov, CovarianceMatrix) else CovarianceMatrix(cov).values
    d = np.sqrt(np.diag(v))
    corr = v / np.outer(d, d)
    np.fill_diagonal(corr, 1.0)
    return CorrelationMatrix._trusted(corr)


def block_diag(p_x: CorrelationMatrix, p_y: CorrelationMatrix) -> CorrelationMatrix:
    """Block-diagonal correlation with zero cross-view entries."""
    px, py = p_x.values, p_y.values
    out = np.zeros((px.shape[0] + py.shape[0],) * 2)
    out[: px.shape[0], : px.shape[0]] = px
    out[px.shape[0]:, px.shape[0]:] = py
    return CorrelationMatrix._trusted(out)


def corr_of_latents(latents) -> CorrelationMatrix:
    """Sample correlation matrix of the rows of an n x d latent matrix.

    Raises DegenerateDataError for n < 2 or a constant column, and
    NearSingularError when the estimate has condition number above 1e8
    (callers typically treat that as an MH rejection).
    """
    x = np.asarray(latents, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2:
        raise DegenerateDataError(f"need at least 2 rows to estimate a correlation, got {n}")
    centered = x - x.mean(axis=0)
    norms = np.sqrt((centered**2).sum(axis=0))
    if np.any(norms == 0.0):
        raise DegenerateDataError("zero-variance column in latent matrix")
    if d == 1:
        return CorrelationMatrix(np.ones((1, 1)))
    scaled = centered / norms
    corr = scaled.T @ scaled
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    if d == 2:
        r = abs(float(corr[0, 1]))
        if 1.0 - r <= 0.0 or (1.0 + r) / (1.0 - r) > _COND_LIMIT:
            raise NearSingularError("latent correlation matrix is numerically singular")
    else:
        eigs = np.linalg.eigvalsh(corr)
        if eigs[0] <= 0.0 or eigs[-1] / eigs[0] > _COND_LIMIT:
            raise NearSingularError("latent correlation matrix is numerically singular")
    return CorrelationMatrix._trusted(corr)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def gaussian_copula_logdensity(scores, corr: CorrelationMatrix):
    """Log-density of the Gaussian copula at normal scores z.

    Returns -0.5*log|P| - 0.5 * z'(P^{-1} - I)z, for a single score vector or
    row-wise for an n x d matrix.
    """
    z = np.asarray(scores, dtype=float)
    single = z.ndim == 1
    zm = z[None, :] if single else z
    if zm.shape[1] != corr.dim:
        raise ParameterError(f"score dimension {zm.shape[1]} != correlation dim {corr.dim}")
    quad = ((zm @ corr.inv) * zm).sum(axis=1) - (zm * zm).sum(axis=1)
    out = -0.5 * corr.logdet - 0.5 * quad
    return float(out[0]) if single else out


def normal_scores(x, margins: Sequence[MarginParams]) -> np.ndarray:
    """Column-wise clamped normal scores probit(F_j(x_j)) of data rows."""
    xm = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.empty_like(xm)
    for j, m in enumerate(margins):
        u[:, j] = margin_cdf(m, xm[:, j])
    np.clip(u, CDF_EPS, 1.0 - CDF_EPS, out=u)
    return special.ndtri(u)


def meta_gaussian_logpdf(x, margins: Sequence[MarginParams], corr: CorrelationMatrix):
    """Log-density of the meta-Gaussian distribution with the given margins.

    Equals the copula log-density at the normal scores plus the margin
    log-densities; -inf wherever a coordinate falls outside its support.
    """
    xa = np.asarray(x, dtype=float)
    single = xa.ndim == 1
    xm = xa[None, :] if single else xa
    if xm.shape[1] != len(margins) or len(margins) != corr.dim:
        raise ParameterError("margins, correlation and data dimensions disagree")
    total = gaussian_copula_logdensity(normal_scores(xm, margins), corr)
    for j, m in enumerate(margins):
        total = total + margin_logpdf(m, xm[:, j])
    return float(total[0]) if single else total


def sample_meta_gaussian(
    n: int, margins: Sequence[MarginParams], corr: CorrelationMatrix, rng: np.random.Generator
) -> np.ndarray:
    """Draw n rows from the meta-Gaussian distribution (returns n x d)."""
    d = corr.dim
    if len(margins) != d:
        raise ParameterError("margins length must match correlation dimension")
    z = rng.standard_normal((n, d)) @ corr.chol.T
    u = np.clip(special.ndtr(z), CDF_EPS, 1.0 - CDF_EPS)
    out = np.empty_like(u)
    for j, m in enumerate(margins):
        out[:, j] = margin_quantile(m, u[:, j])
    return out


# ---------------------------------------------------------------------------
# Wishart-family samplers and the marginally uniform correlation prior
# ---------------------------------------------------------------------------

def sample_inv_wishart(scale, dof: float, rng: np.random.Generator) -> CovarianceMatrix:
    """Draw from the inverse-Wishart IW(scale, dof), mean scale/(dof-d-1).

    Uses a Bartlett-decomposition Wishart draw of the inverted scale; the
    result is assembled as G G' so it is SPD by construction.
    """
    if isinstance(scale, CovarianceMatrix):
        s_chol, d = scale.chol, scale.dim
    else:
        a_sym = _validated_symmetric(scale, "inverse-Wishart scale")
        s_chol, _, _ = _decompose_jittered(a_sym, "inverse-Wishart scale")
        d = s_chol.shape[0]
    if dof <= d - 1:
        raise ParameterError(f"inverse-Wishart requires dof > dim - 1, got dof={dof}, dim={d}")
    if d == 1:
        a_inv = np.array([[1.0 / math.sqrt(rng.chisquare(dof))]])
    elif d == 2:
        a00 = math.sqrt(rng.chisquare(dof))
        a11 = math.sqrt(rng.chisquare(dof - 1.0))
        a10 = float(rng.standard_normal())
        a_inv = np.array([[1.0 / a00, 0.0], [-a10 / (a00 * a11), 1.0 / a11]])
    else:
        a = np.zeros((d, d))
        for i in range(d):
            a[i, i] = math.sqrt(rng.chisquare(dof - i))
            if i:
                a[i, :i] = rng.standard_normal(i)
        a_inv = solve_triangular(a, np.eye(d), lower=True)
    g = s_chol @ a_inv.T
    return CovarianceMatrix._trusted(g @ g.T)


_IDENTITY_CACHE: dict[int, CovarianceMatrix] = {}


def identity_covariance(d: int) -> CovarianceMatrix:
    """Cached identity covariance (the IW prior scale used throughout)."""
    got = _IDENTITY_CACHE.get(d)
    if got is None:
        got = _IDENTITY_CACHE.setdefault(d, CovarianceMatrix(np.eye(d)))
    return got


def sample_corr_prior(d: int, rng: np.random.Generator) -> CorrelationMatrix:
    """Marginally uniform correlation prior: normalize an IW(I_d, d+1) draw.

    Off-diagonal entries of the result are marginally Uniform(-1, 1).
    """
    if d < 1:
        raise ParameterError("dimension must be >= 1")
    if d == 1:
        return CorrelationMatrix(np.ones((1, 1)))
    return cov_to_corr(sample_inv_wishart(identity_covariance(d), d + 1, rng))


def mvn_logpdf_rows(x, cov: CovarianceMatrix) -> np.ndarray:
    """Row-wise log-density of N(0, cov); used for latent-row priors."""
    xm = np.atleast_2d(np.asarray(x, dtype=float))
    if cov.dim == 1:
        quad = xm[:, 0] ** 2 * cov.inv[0, 0]
    else:
        quad = ((xm @ cov.inv) * xm).sum(axis=1)
    return -0.5 * (cov.dim * _LOG_2PI + cov.logdet + quad)
