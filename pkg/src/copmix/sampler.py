"""Metropolis-within-Gibbs MCMC for the dependency-seeking copula mixture.

One sweep applies, in order:

1. a reassignment pass: non-singleton points propose a move to a fresh
   singleton cluster with parameters drawn from the base measure, singleton
   points propose merging into an existing cluster picked proportionally to
   its size, both accepted by Metropolis-Hastings ratios with the
   concentration-dependent prefactors of the non-conjugate scheme;
2. a partial Gibbs pass reassigning non-singleton points among existing
   clusters proportionally to size times likelihood;
3. per-cluster parameter refreshes: random-walk MH on each margin's
   parameters (unconstrained scale), random-walk MH on each latent
   normal-score column, and a conjugate inverse-Wishart redraw of the
   per-view covariances.

Cluster likelihood ratios in passes 1-2 use the stored per-view block
correlations (derived from the covariances); the parameter refreshes use the
empirical correlation of the cluster's latent matrix, with near-singular
estimates treated as MH rejections.  Points that change cluster get their
latent row re-initialized deterministically as the probit-transformed margin
CDF under the destination cluster's parameters.

A chain is strictly sequential and fully determined by its Generator: equal
seeds give bit-identical traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .copula import (
    corr_of_latents,
    identity_covariance,
    mvn_logpdf_rows,
    normal_scores,
    sample_inv_wishart,
)
from .errors import DataError, DegenerateDataError, MatrixError, ParameterError
from .margins import (
    CDF_EPS,
    MarginParams,
    cdf_fv,
    cdf_scalar,
    from_unconstrained,
    log_jacobian,
    logpdf_fv,
    prior_logpdf,
    to_unconstrained,
)
from .mixture import (
    ClusterParams,
    ModelConfig,
    canonical_labels,
    draw_from_base,
    point_loglik,
    rows_loglik,
    view_rows_loglik,
)

_STEP_MIN, _STEP_MAX = 1e-3, 10.0


@dataclass
class MhTuning:
    """Random-walk step sizes and burn-in adaptation settings."""

    theta_step: dict = field(
        default_factory=lambda: {"normal": 0.25, "beta": 0.25, "exponential": 0.25}
    )
    latent_step: float = 0.1
    adapt_window: int = 50
    target_accept: float = 0.35

    def __post_init__(self):
        if any(s <= 0 for s in self.theta_step.values()) or self.latent_step <= 0:
            raise ParameterError("MH step sizes must be positive")
        if not 0.2 <= self.target_accept <= 0.5:
            raise ParameterError("target acceptance must lie in [0.2, 0.5]")
        if self.adapt_window < 1:
            raise ParameterError("adaptation window must be >= 1")


@dataclass
class SweepRecord:
    """State summary of one post-burn-in sweep."""

    sweep: int
    labels: np.ndarray
    k: int
    loglik: float
    accepts: dict
    params: Optional[dict] = None


@dataclass
class ChainTrace:
    """Per-sweep partition trace with thinned parameter snapshots."""

    n: int
    records: list
    meta: dict

    def labels_matrix(self) -> np.ndarray:
        return np.array([r.labels for r in self.records])

    def k_values(self) -> np.ndarray:
        return np.array([r.k for r in self.records])


class _Cluster:
    __slots__ = ("params", "members", "latents")

    def __init__(self, params: ClusterParams, members: list, latents: np.ndarray):
        self.params = params
        self.members = members
        self.latents = latents


class Sampler:
    """Sequential chain over partitions and cluster parameters.

    ``likelihood_off`` replaces the per-point data likelihood used in the
    assignment passes (and the trace log-likelihood) by zero, leaving only
    the CRP dynamics; the parameter-refresh machinery still runs.
    """

    def __init__(self, rows, config: ModelConfig, tuning: Optional[MhTuning] = None,
                 rng: Optional[np.random.Generator] = None, likelihood_off: bool = False,
                 adapt_until: int = 0):
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise DataError("dataset must be a nonempty n x (p+q) matrix")
        if rows.shape[1] != config.layout.total:
            raise DataError(
                f"dataset has {rows.shape[1]} columns, config expects {config.layout.total}"
            )
        _validate_support(rows, config)
        self.rows = rows
        self.config = config
        self.tuning = tuning or MhTuning()
        self.rng = rng if rng is not None else np.random.default_rng()
        self.likelihood_off = likelihood_off
        self.adapt_until = adapt_until

        self.n = rows.shape[0]
        self._steps = dict(self.tuning.theta_step)
        self._steps["latent"] = self.tuning.latent_step
        self._window_counts = {g: [0, 0] for g in self._steps}
        self._window_index = 0
        self.sweep_count = 0
        self._sweep_accepts = {"reassign": [0, 0], "theta": [0, 0], "latent": [0, 0]}

        params = draw_from_base(config, self.rng)
        latents = normal_scores(rows, params.theta)
        self.clusters: dict[int, _Cluster] = {0: _Cluster(params, list(range(self.n)), latents)}
        self.assignments = np.zeros(self.n, dtype=int)
        self._next_id = 1
        self._cache = self._rows_ll(rows, params)

    # -- likelihood hooks ---------------------------------------------------

    def _rows_ll(self, rows, params) -> np.ndarray:
        if self.likelihood_off:
            return np.zeros(np.atleast_2d(rows).shape[0])
        return rows_loglik(rows, params)

    def _point_ll(self, row, params) -> float:
        if self.likelihood_off:
            return 0.0
        return point_loglik(row, params)

    # -- bookkeeping ----------------------------------------------------------

    def _probit_row(self, row, theta) -> np.ndarray:
        u = np.empty(len(theta))
        for j, m in enumerate(theta):
            c = cdf_scalar(m, float(row[j]))
            u[j] = min(max(c, CDF_EPS), 1.0 - CDF_EPS)
        return special.ndtri(u)

    def _detach(self, i: int) -> None:
        """Remove point i from its cluster, deleting the cluster if emptied."""
        cid = int(self.assignments[i])
        cl = self.clusters[cid]
        pos = cl.members.index(i)
        cl.members.pop(pos)
        cl.latents = np.delete(cl.latents, pos, axis=0)
        if not cl.members:
            del self.clusters[cid]

    def _attach(self, i: int, cid: int) -> None:
        cl = self.clusters[cid]
        cl.members.append(i)
        row = self._probit_row(self.rows[i], cl.params.theta)
        cl.latents = np.vstack([cl.latents, row[None, :]])
        self.assignments[i] = cid

    def partition_k(self) -> int:
        return len(self.clusters)

    def total_loglik(self) -> float:
        return float(self._cache.sum())

    def check_invariants(self) -> None:
        sizes = 0
        for cid, cl in self.clusters.items():
            assert cl.members, f"empty cluster {cid}"
            assert cl.latents.shape == (len(cl.members), self.config.layout.total)
            for i in cl.members:
                assert self.assignments[i] == cid
            sizes += len(cl.members)
        assert sizes == self.n

    # -- Metropolis-Hastings reassignment pass --------------------------------

    def _build_pool(self, m: int):
        """Vectorized G0 draws for one reassignment pass (views of dim <= 2).

        Candidate parameters stay as raw arrays; ClusterParams objects are
        only assembled for the few accepted proposals.
        """
        rng = self.rng
        theta_draws = []
        for spec in self.config.margin_specs:
            h = spec.hyper
            if spec.family == "normal":
                var = 1.0 / rng.gamma(h.var_shape, 1.0 / h.var_scale, m)
                mean = rng.normal(h.mean_loc, np.sqrt(var / h.mean_precision))
                theta_draws.append(("normal", (mean, var)))
            elif spec.family == "beta":
                a = rng.gamma(h.alpha.shape, 1.0 / h.alpha.rate, m)
                b = rng.gamma(h.beta.shape, 1.0 / h.beta.rate, m)
                theta_draws.append(("beta", (a, b)))
            else:
                theta_draws.append(("exponential", (rng.gamma(h.shape, 1.0 / h.rate, m),)))
        views = []
        for d in (self.config.layout.p, self.config.layout.q):
            if d == 1:
                views.append({"d": 1, "s00": 1.0 / rng.chisquare(2.0, m)})
            else:
                # IW(I_2, 3) via Bartlett: sigma = A^{-T} A^{-1}
                a00 = np.sqrt(rng.chisquare(3.0, m))
                a11 = np.sqrt(rng.chisquare(2.0, m))
                a10 = rng.standard_normal(m)
                t00 = 1.0 / a00
                t10 = -a10 / (a00 * a11)
                t11 = 1.0 / a11
                s00 = t00 * t00 + t10 * t10
                s01 = t10 * t11
                s11 = t11 * t11
                views.append({"d": 2, "s00": s00, "s01": s01, "s11": s11,
                              "rho": s01 / np.sqrt(s00 * s11)})
        return theta_draws, views

    def _pool_point_ll(self, row, theta_draws, views, idx: int) -> float:
        if self.likelihood_off:
            return 0.0
        total = 0.0
        start = 0
        for info in views:
            d = info["d"]
            if d == 1:
                fam, arrs = theta_draws[start]
                lp = logpdf_fv(fam, (arrs[0][idx],) if len(arrs) == 1
                               else (arrs[0][idx], arrs[1][idx]), float(row[start]))
                if lp == -math.inf:
                    return -math.inf
                total += lp
            else:
                z = [0.0, 0.0]
                for k in range(2):
                    fam, arrs = theta_draws[start + k]
                    vals = tuple(a[idx] for a in arrs)
                    x = float(row[start + k])
                    lp = logpdf_fv(fam, vals, x)
                    if lp == -math.inf:
                        return -math.inf
                    total += lp
                    u = cdf_fv(fam, vals, x)
                    if u < CDF_EPS:
                        u = CDF_EPS
                    elif u > 1.0 - CDF_EPS:
                        u = 1.0 - CDF_EPS
                    z[k] = float(special.ndtri(u))
                rho = float(info["rho"][idx])
                omr = 1.0 - rho * rho
                quad = (z[0] * z[0] + z[1] * z[1] - 2.0 * rho * z[0] * z[1]) / omr \
                    - z[0] * z[0] - z[1] * z[1]
                total += -0.5 * math.log(omr) - 0.5 * quad
            start += d
        return total

    def _pool_params(self, theta_draws, views, idx: int) -> ClusterParams:
        from .copula import CovarianceMatrix

        theta = [
            MarginParams(fam, tuple(float(a[idx]) for a in arrs))
            for fam, arrs in theta_draws
        ]
        sigmas = []
        for info in views:
            if info["d"] == 1:
                mat = np.array([[float(info["s00"][idx])]])
            else:
                s00, s01, s11 = (float(info[k][idx]) for k in ("s00", "s01", "s11"))
                mat = np.array([[s00, s01], [s01, s11]])
            sigmas.append(CovarianceMatrix._trusted(mat))
        return ClusterParams(theta, sigmas[0], sigmas[1])

    def step_reassign_mh(self) -> None:
        n = self.n
        if n < 2:
            return
        lam = self.config.concentration
        log_new = math.log(lam / (n - 1))
        log_move = math.log((n - 1) / lam)
        acc = self._sweep_accepts["reassign"]
        layout = self.config.layout
        use_pool = layout.p <= 2 and layout.q <= 2
        if use_pool:
            theta_draws, views = self._build_pool(n)
        pool_idx = 0
        for i in range(n):
            cid = int(self.assignments[i])
            cl = self.clusters[cid]
            if len(cl.members) > 1:
                if use_pool:
                    idx = pool_idx
                    pool_idx += 1
                    ll_new = self._pool_point_ll(self.rows[i], theta_draws, views, idx)
                else:
                    cand = draw_from_base(self.config, self.rng)
                    ll_new = self._point_ll(self.rows[i], cand)
                log_ratio = log_new + ll_new - self._cache[i]
                acc[1] += 1
                if self._mh_accept(log_ratio):
                    try:
                        params = self._pool_params(theta_draws, views, idx) if use_pool else cand
                    except MatrixError:
                        continue  # pathological candidate: treat as rejection
                    acc[0] += 1
                    self._detach(i)
                    nid = self._next_id
                    self._next_id += 1
                    lat = self._probit_row(self.rows[i], params.theta)[None, :]
                    self.clusters[nid] = _Cluster(params, [i], lat)
                    self.assignments[i] = nid
                    self._cache[i] = ll_new
            else:
                others = [c for c in sorted(self.clusters) if c != cid]
                if not others:
                    continue
                sizes = np.array([len(self.clusters[c].members) for c in others], dtype=float)
                target = others[self._pick(sizes)]
                ll_c = self._point_ll(self.rows[i], self.clusters[target].params)
                log_ratio = log_move + ll_c - self._cache[i]
                acc[1] += 1
                if self._mh_accept(log_ratio):
                    acc[0] += 1
                    self._detach(i)
                    self._attach(i, target)
                    self._cache[i] = ll_c

    def _mh_accept(self, log_ratio: float) -> bool:
        if not (log_ratio < 0.0):          # covers >= 0 and rejects NaN
            return log_ratio >= 0.0
        u = self.rng.random()
        return u == 0.0 or math.log(u) < log_ratio

    def _pick(self, weights: np.ndarray) -> int:
        """Categorical draw proportional to nonnegative weights."""
        total = weights.sum()
        u = self.rng.random() * total
        acc = 0.0
        for idx, w in enumerate(weights):
            acc += w
            if u < acc:
                return idx
        return len(weights) - 1

    # -- partial Gibbs pass ----------------------------------------------------

    def step_partial_gibbs(self) -> None:
        cids = sorted(self.clusters)
        if len(cids) < 2:
            return
        ll = np.column_stack([self._rows_ll(self.rows, self.clusters[c].params) for c in cids])
        sizes = np.array([len(self.clusters[c].members) for c in cids], dtype=float)
        index_of = {c: k for k, c in enumerate(cids)}
        for i in range(self.n):
            cid = int(self.assignments[i])
            pos = index_of[cid]
            if sizes[pos] <= 1:
                continue
            counts = sizes.copy()
            counts[pos] -= 1.0
            logw = np.log(counts) + ll[i]
            w = np.exp(logw - logw.max())
            choice = self._pick(w)
            if choice != pos:
                self._detach(i)
                self._attach(i, cids[choice])
                sizes[pos] -= 1.0
                sizes[choice] += 1.0
                self._cache[i] = ll[i, choice]

    # -- per-cluster parameter updates (three-step refresh) --------------------

    def _latent_corr(self, cl: _Cluster, view: int):
        """Empirical latent correlation for one view; stored correlation for
        singletons; None when the estimate is degenerate (treated as MH
        rejection by callers)."""
        sl = self.config.layout.x_slice if view == 0 else self.config.layout.y_slice
        stored = cl.params.corr_x if view == 0 else cl.params.corr_y
        if len(cl.members) == 1:
            return stored
        try:
            return corr_of_latents(cl.latents[:, sl])
        except DegenerateDataError:
            return None

    def update_cluster_theta(self, cl: _Cluster) -> None:
        layout = self.config.layout
        members = np.array(cl.members)
        theta = list(cl.params.theta)
        acc = self._sweep_accepts["theta"]
        changed = False
        for view, sl, offset in ((0, layout.x_slice, 0), (1, layout.y_slice, layout.p)):
            corr = self._latent_corr(cl, view)
            if corr is None:
                continue
            rows_v = self.rows[members][:, sl]
            dims = range(sl.start, sl.stop)
            margins = theta[sl]
            cur_ll = float(view_rows_loglik(rows_v, margins, corr).sum())
            for gj in dims:
                spec = self.config.margin_specs[gj]
                cur = theta[gj]
                step = self._steps[cur.family]
                phi = to_unconstrained(cur)
                prop_phi = phi + step * self.rng.standard_normal(phi.size)
                acc[1] += 1
                self._window_counts[cur.family][1] += 1
                try:
                    prop = from_unconstrained(cur.family, prop_phi)
                    margins_prop = list(margins)
                    margins_prop[gj - offset] = prop
                    prop_ll = float(view_rows_loglik(rows_v, margins_prop, corr).sum())
                    log_ratio = (
                        prop_ll + prior_logpdf(spec, prop) + log_jacobian(prop)
                        - cur_ll - prior_logpdf(spec, cur) - log_jacobian(cur)
                    )
                except (ParameterError, MatrixError, OverflowError):
                    continue
                if self._mh_accept(log_ratio):
                    acc[0] += 1
                    self._window_counts[cur.family][0] += 1
                    theta[gj] = prop
                    margins = margins_prop
                    cur_ll = prop_ll
                    changed = True
        if changed:
            cl.params = cl.params.with_theta(theta)

    def update_cluster_latents(self, cl: _Cluster) -> None:
        if len(cl.members) < 2:
            return
        layout = self.config.layout
        members = np.array(cl.members)
        acc = self._sweep_accepts["latent"]
        step = self._steps["latent"]
        for view, sl, cov in ((0, layout.x_slice, cl.params.sigma_x),
                              (1, layout.y_slice, cl.params.sigma_y)):
            lat = cl.latents[:, sl].copy()
            d_view = sl.stop - sl.start
            if d_view == 1:
                # copula factor is constant for a univariate view: the data
                # term cancels and the column target reduces to the N(0, cov)
                # prior.
                cur_prior = float(mvn_logpdf_rows(lat, cov).sum())
                prop = lat + step * self.rng.standard_normal(lat.shape)
                acc[1] += 1
                self._window_counts["latent"][1] += 1
                prop_prior = float(mvn_logpdf_rows(prop, cov).sum())
                if self._mh_accept(prop_prior - cur_prior):
                    acc[0] += 1
                    self._window_counts["latent"][0] += 1
                    cl.latents[:, sl] = prop
                continue
            try:
                corr = corr_of_latents(lat)
            except DegenerateDataError:
                continue
            margins = cl.params.theta_x if view == 0 else cl.params.theta_y
            scores = normal_scores(self.rows[members][:, sl], margins)
            cur_data = float(_copula_sum(scores, corr))
            cur_prior = float(mvn_logpdf_rows(lat, cov).sum())
            for lj in range(d_view):
                prop = lat.copy()
                prop[:, lj] += step * self.rng.standard_normal(prop.shape[0])
                acc[1] += 1
                self._window_counts["latent"][1] += 1
                try:
                    prop_corr = corr_of_latents(prop)
                except DegenerateDataError:
                    continue
                prop_data = float(_copula_sum(scores, prop_corr))
                prop_prior = float(mvn_logpdf_rows(prop, cov).sum())
                log_ratio = prop_data + prop_prior - cur_data - cur_prior
                if self._mh_accept(log_ratio):
                    acc[0] += 1
                    self._window_counts["latent"][0] += 1
                    lat = prop
                    cur_data, cur_prior = prop_data, prop_prior
            cl.latents[:, sl] = lat

    def update_cluster_sigma(self, cl: _Cluster) -> None:
        layout = self.config.layout
        n_c = len(cl.members)
        sigmas = []
        for sl, d in ((layout.x_slice, layout.p), (layout.y_slice, layout.q)):
            lat = cl.latents[:, sl]
            scale = identity_covariance(d).values + lat.T @ lat
            sigmas.append(sample_inv_wishart(scale, d + 1 + n_c, self.rng))
        try:
            cl.params = cl.params.with_sigmas(sigmas[0], sigmas[1])
        except MatrixError:
            pass  # pathological draw: keep the previous covariances

    # -- sweep orchestration ----------------------------------------------------

    def sweep(self) -> None:
        self._sweep_accepts = {"reassign": [0, 0], "theta": [0, 0], "latent": [0, 0]}
        self.step_reassign_mh()
        self.step_partial_gibbs()
        for cid in sorted(self.clusters):
            cl = self.clusters[cid]
            self.update_cluster_theta(cl)
            self.update_cluster_latents(cl)
            self.update_cluster_sigma(cl)
            if not self.likelihood_off:
                members = np.array(cl.members)
                self._cache[members] = rows_loglik(self.rows[members], cl.params)
        self.sweep_count += 1
        if self.sweep_count <= self.adapt_until and self.sweep_count % self.tuning.adapt_window == 0:
            self._adapt()

    def _adapt(self) -> None:
        """Robbins-Monro step-size adaptation toward the target acceptance."""
        self._window_index += 1
        gain = 1.0 / math.sqrt(self._window_index)
        for group, (a, p) in self._window_counts.items():
            if p == 0:
                continue
            rate = a / p
            new = self._steps[group] * math.exp(gain * (rate - self.tuning.target_accept))
            self._steps[group] = min(max(new, _STEP_MIN), _STEP_MAX)
        self._window_counts = {g: [0, 0] for g in self._steps}

    def sweep_record(self, snapshot: bool) -> SweepRecord:
        labels = canonical_labels(self.assignments)
        params = None
        if snapshot:
            order: dict[int, int] = {}
            for cid in self.assignments:
                order.setdefault(int(cid), len(order))
            params = {order[cid]: self.clusters[cid].params for cid in order}
        return SweepRecord(
            sweep=self.sweep_count,
            labels=labels,
            k=len(self.clusters),
            loglik=self.total_loglik(),
            accepts={k: tuple(v) for k, v in self._sweep_accepts.items()},
            params=params,
        )


def _copula_sum(scores: np.ndarray, corr) -> float:
    quad = ((scores @ corr.inv) * scores).sum() - (scores * scores).sum()
    return -0.5 * scores.shape[0] * corr.logdet - 0.5 * quad


def _validate_support(rows: np.ndarray, config: ModelConfig) -> None:
    if not np.all(np.isfinite(rows)):
        raise DataError("dataset contains non-finite values")
    for j, spec in enumerate(config.margin_specs):
        col = rows[:, j]
        if spec.family == "beta":
            if col.min() <= 0.0 or col.max() >= 1.0:
                bad = int(np.argmax((col <= 0.0) | (col >= 1.0)))
                raise DataError(
                    f"column {j} declared beta but row {bad} has value {col[bad]!r} "
                    "outside (0, 1)"
                )
        elif spec.family == "exponential":
            if col.min() < 0.0:
                bad = int(np.argmin(col))
                raise DataError(
                    f"column {j} declared exponential but row {bad} has negative value"
                )


def init_state(rows, config: ModelConfig, rng: np.random.Generator,
               tuning: Optional[MhTuning] = None, likelihood_off: bool = False) -> Sampler:
    """Build the initial chain state: one cluster holding every point."""
    return Sampler(rows, config, tuning=tuning, rng=rng, likelihood_off=likelihood_off)


def run(rows, config: ModelConfig, tuning: Optional[MhTuning], n_sweeps: int, burn_in: int,
        thin: int, rng: np.random.Generator, likelihood_off: bool = False,
        meta: Optional[dict] = None) -> ChainTrace:
    """Run a chain and collect the post-burn-in trace.

    Every post-burn-in sweep records the canonical partition, cluster count,
    total log-likelihood and acceptance counters; every ``thin``-th retained
    sweep additionally snapshots all cluster parameters.  Step-size
    adaptation happens only during burn-in.
    """
    if not (n_sweeps > burn_in >= 0):
        raise ParameterError(f"need n_sweeps > burn_in >= 0, got {n_sweeps}, {burn_in}")
    if thin < 1:
        raise ParameterError("thin must be >= 1")
    sampler = Sampler(rows, config, tuning=tuning, rng=rng,
                      likelihood_off=likelihood_off, adapt_until=burn_in)
    records = []
    for t in range(1, n_sweeps + 1):
        sampler.sweep()
        if t > burn_in:
            idx = t - burn_in
            records.append(sampler.sweep_record(snapshot=(idx - 1) % thin == 0))
    trace_meta = {
        "n": sampler.n,
        "p": config.layout.p,
        "q": config.layout.q,
        "n_sweeps": n_sweeps,
        "burn_in": burn_in,
        "thin": thin,
        "likelihood_off": likelihood_off,
    }
    if meta:
        trace_meta.update(meta)
    return ChainTrace(n=sampler.n, records=records, meta=trace_meta)
