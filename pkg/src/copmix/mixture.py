"""Dirichlet-process copula mixture model: configuration, base measure,
CRP partition prior and per-cluster likelihoods.

A cluster is parameterized by per-dimension margin parameters plus one
covariance matrix per view; the cluster's dependence structure is the
block-diagonal correlation derived from those covariances, which makes the
two views conditionally independent given the cluster assignment.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from scipy import special

from .copula import (
    CorrelationMatrix,
    CovarianceMatrix,
    ViewLayout,
    block_diag,
    cov_to_corr,
    identity_covariance,
    meta_gaussian_logpdf,
    sample_inv_wishart,
)
from .errors import ParameterError
from .margins import (
    CDF_EPS,
    MarginParams,
    MarginSpec,
    cdf_scalar,
    logpdf_scalar,
    margin_logpdf,
    prior_sample,
)


@dataclass(frozen=True)
class ModelConfig:
    """Mixture configuration: view layout, per-dimension margins, concentration."""

    layout: ViewLayout
    margin_specs: tuple[MarginSpec, ...]
    concentration: float

    def __post_init__(self):
        if len(self.margin_specs) != self.layout.total:
            raise ParameterError(
                f"need {self.layout.total} margin specs, got {len(self.margin_specs)}"
            )
        if not self.concentration > 0:
            raise ParameterError(f"concentration must be positive, got {self.concentration}")
        object.__setattr__(self, "margin_specs", tuple(self.margin_specs))


class ClusterParams:
    """Parameters of one mixture component (immutable snapshot).

    Holds the margin parameters for all p+q dimensions and one covariance per
    view; the per-view correlation matrices are derived once at construction.
    """

    __slots__ = ("theta", "theta_x", "theta_y", "sigma_x", "sigma_y", "corr_x", "corr_y",
                 "p", "q")

    def __init__(self, theta: Sequence[MarginParams], sigma_x: CovarianceMatrix,
                 sigma_y: CovarianceMatrix):
        self.theta = tuple(theta)
        self.sigma_x = sigma_x
        self.sigma_y = sigma_y
        self.p = sigma_x.dim
        self.q = sigma_y.dim
        if len(self.theta) != self.p + self.q:
            raise ParameterError(
                f"theta length {len(self.theta)} != p+q = {self.p + self.q}"
            )
        self.theta_x = self.theta[: self.p]
        self.theta_y = self.theta[self.p:]
        self.corr_x = cov_to_corr(sigma_x)
        self.corr_y = cov_to_corr(sigma_y)

    def block_corr(self) -> CorrelationMatrix:
        """Full (p+q) block-diagonal correlation of the component."""
        return block_diag(self.corr_x, self.corr_y)

    def with_theta(self, theta: Sequence[MarginParams]) -> "ClusterParams":
        return ClusterParams(theta, self.sigma_x, self.sigma_y)

    def with_sigmas(self, sigma_x: CovarianceMatrix, sigma_y: CovarianceMatrix) -> "ClusterParams":
        return ClusterParams(self.theta, sigma_x, sigma_y)

    def __repr__(self):
        return f"ClusterParams(p={self.p}, q={self.q})"


@dataclass(frozen=True)
class Partition:
    """Cluster assignment vector; identifiers are opaque stable handles."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ParameterError("partition labels must be a nonempty vector")
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.size

    def sizes(self) -> dict:
        return dict(Counter(self.labels.tolist()))

    @property
    def k(self) -> int:
        return len(set(self.labels.tolist()))


def canonical_labels(labels) -> np.ndarray:
    """Relabel cluster identifiers to 0..K-1 in order of first appearance."""
    out = np.empty(len(labels), dtype=int)
    seen: dict = {}
    for i, lab in enumerate(labels):
        out[i] = seen.setdefault(lab, len(seen))
    return out


# ---------------------------------------------------------------------------
# CRP prior
# ---------------------------------------------------------------------------

def crp_log_prior(partition: Partition, concentration: float) -> float:
    """Log CRP probability of a partition: lam^K prod (n_c-1)! G(lam)/G(lam+n)."""
    lam = float(concentration)
    if lam <= 0:
        raise ParameterError("concentration must be positive")
    sizes = list(partition.sizes().values())
    n = partition.n
    return (
        len(sizes) * math.log(lam)
        + sum(gammaln(s) for s in sizes)
        + gammaln(lam)
        - gammaln(lam + n)
    )


def crp_expected_k(concentration: float, n: int) -> float:
    """Expected number of clusters of a CRP(lam) seating of n customers."""
    lam = float(concentration)
    return sum(lam / (lam + i) for i in range(n))


def sample_crp_partition(concentration: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sequential CRP seating; returns labels 0..K-1."""
    labels = np.zeros(n, dtype=int)
    sizes = [1]
    lam = float(concentration)
    for i in range(1, n):
        probs = np.array(sizes + [lam])
        probs /= probs.sum()
        c = rng.choice(len(probs), p=probs)
        if c == len(sizes):
            sizes.append(1)
        else:
            sizes[c] += 1
        labels[i] = c
    return labels


# ---------------------------------------------------------------------------
# Base measure and likelihood
# ---------------------------------------------------------------------------

def draw_from_base(config: ModelConfig, rng: np.random.Generator) -> ClusterParams:
    """Draw fresh cluster parameters from G0.

    Margins come from their priors; each view covariance is IW(I_d, d+1), the
    inverse-Wishart behind the marginally uniform correlation prior.
    """
    theta = [prior_sample(spec, rng) for spec in config.margin_specs]
    p, q = config.layout.p, config.layout.q
    sigma_x = sample_inv_wishart(identity_covariance(p), p + 1, rng)
    sigma_y = sample_inv_wishart(identity_covariance(q), q + 1, rng)
    return ClusterParams(theta, sigma_x, sigma_y)


def view_rows_loglik(rows_v: np.ndarray, margins, corr: CorrelationMatrix) -> np.ndarray:
    """Meta-Gaussian log-density of one view, vectorized over rows.

    For a univariate view the copula factor is identically 1, so only the
    margin log-density is computed.
    """
    n, d = rows_v.shape
    if d == 1:
        return np.zeros(n) + margin_logpdf(margins[0], rows_v[:, 0])
    return np.asarray(meta_gaussian_logpdf(rows_v, margins, corr))


def rows_loglik(rows, params: ClusterParams) -> np.ndarray:
    """Vectorized per-row log-likelihood under one component.

    The block-diagonal correlation makes the joint density the sum of the two
    view densities, which is how it is computed.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.shape[0] == 0:
        return np.zeros(0)
    p = params.p
    out = view_rows_loglik(rows[:, :p], params.theta_x, params.corr_x)
    out = out + view_rows_loglik(rows[:, p:], params.theta_y, params.corr_y)
    return np.atleast_1d(out)


def _view_point_loglik(vals, margins, corr: CorrelationMatrix) -> float:
    d = len(margins)
    if d == 1:
        return logpdf_scalar(margins[0], float(vals[0]))
    u = np.empty(d)
    total = 0.0
    for j in range(d):
        x = float(vals[j])
        lp = logpdf_scalar(margins[j], x)
        if lp == -math.inf:
            return -math.inf
        total += lp
        c = cdf_scalar(margins[j], x)
        if c < CDF_EPS:
            c = CDF_EPS
        elif c > 1.0 - CDF_EPS:
            c = 1.0 - CDF_EPS
        u[j] = c
    z = special.ndtri(u)
    quad = float(z @ corr.inv @ z) - float(z @ z)
    return total - 0.5 * corr.logdet - 0.5 * quad


def point_loglik(row, params: ClusterParams) -> float:
    """Log-likelihood of a single observation under one component."""
    p = params.p
    lx = _view_point_loglik(row[:p], params.theta_x, params.corr_x)
    if lx == -math.inf:
        return -math.inf
    ly = _view_point_loglik(row[p:], params.theta_y, params.corr_y)
    return lx + ly


def cluster_loglik(rows, params: ClusterParams) -> float:
    """Sum of point log-likelihoods over a set of rows; empty set gives 0."""
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        return 0.0
    return float(rows_loglik(rows, params).sum())
