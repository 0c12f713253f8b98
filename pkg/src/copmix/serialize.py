"""JSON-compatible serialization of model objects, traces and sampler state.

Trace files are line-oriented: the first line holds the run metadata, every
following line one post-burn-in sweep record (canonical labels, cluster
count, log-likelihood, acceptance counters, optional parameter snapshot).
All floats go through ``repr`` via ``json``, so identical runs give
byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .copula import CovarianceMatrix, ViewLayout
from .errors import DataError
from .margins import (
    BetaShapesPrior,
    GammaPrior,
    MarginParams,
    MarginSpec,
    NormalInverseGammaPrior,
)
from .mixture import ClusterParams, ModelConfig
from .sampler import ChainTrace, Sampler, SweepRecord, _Cluster


def margin_params_to_dict(p: MarginParams) -> dict:
    return {"family": p.family, "values": [float(v) for v in p.values]}


def margin_params_from_dict(d: dict) -> MarginParams:
    return MarginParams(d["family"], tuple(float(v) for v in d["values"]))


def hyper_to_dict(h) -> dict:
    if isinstance(h, NormalInverseGammaPrior):
        return {
            "mean_loc": h.mean_loc,
            "mean_precision": h.mean_precision,
            "var_shape": h.var_shape,
            "var_scale": h.var_scale,
        }
    if isinstance(h, BetaShapesPrior):
        return {
            "alpha": {"shape": h.alpha.shape, "rate": h.alpha.rate},
            "beta": {"shape": h.beta.shape, "rate": h.beta.rate},
        }
    return {"shape": h.shape, "rate": h.rate}


def hyper_from_dict(family: str, d: dict):
    if family == "normal":
        return NormalInverseGammaPrior(
            d["mean_loc"], d["mean_precision"], d["var_shape"], d["var_scale"]
        )
    if family == "beta":
        return BetaShapesPrior(
            GammaPrior(d["alpha"]["shape"], d["alpha"]["rate"]),
            GammaPrior(d["beta"]["shape"], d["beta"]["rate"]),
        )
    return GammaPrior(d["shape"], d["rate"])


def spec_to_dict(s: MarginSpec) -> dict:
    return {"family": s.family, "hyper": hyper_to_dict(s.hyper)}


def spec_from_dict(d: dict) -> MarginSpec:
    return MarginSpec(d["family"], hyper_from_dict(d["family"], d["hyper"]))


def model_config_to_dict(c: ModelConfig) -> dict:
    return {
        "p": c.layout.p,
        "q": c.layout.q,
        "margins": [spec_to_dict(s) for s in c.margin_specs],
        "concentration": c.concentration,
    }


def model_config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(
        ViewLayout(d["p"], d["q"]),
        tuple(spec_from_dict(s) for s in d["margins"]),
        d["concentration"],
    )


def cluster_params_to_dict(p: ClusterParams) -> dict:
    return {
        "theta": [margin_params_to_dict(t) for t in p.theta],
        "sigma_x": p.sigma_x.values.tolist(),
        "sigma_y": p.sigma_y.values.tolist(),
    }


def cluster_params_from_dict(d: dict) -> ClusterParams:
    return ClusterParams(
        [margin_params_from_dict(t) for t in d["theta"]],
        CovarianceMatrix(d["sigma_x"]),
        CovarianceMatrix(d["sigma_y"]),
    )


def record_to_dict(r: SweepRecord) -> dict:
    out = {
        "sweep": r.sweep,
        "k": r.k,
        "loglik": r.loglik,
        "labels": r.labels.tolist(),
        "accepts": {k: list(v) for k, v in r.accepts.items()},
    }
    if r.params is not None:
        out["params"] = {str(k): cluster_params_to_dict(v) for k, v in r.params.items()}
    return out


def record_from_dict(d: dict) -> SweepRecord:
    params = None
    if "params" in d:
        params = {int(k): cluster_params_from_dict(v) for k, v in d["params"].items()}
    return SweepRecord(
        sweep=d["sweep"],
        labels=np.array(d["labels"], dtype=int),
        k=d["k"],
        loglik=d["loglik"],
        accepts={k: tuple(v) for k, v in d["accepts"].items()},
        params=params,
    )


def write_trace(trace: ChainTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": trace.meta}, sort_keys=True) + "\n")
        for rec in trace.records:
            fh.write(json.dumps(record_to_dict(rec), sort_keys=True) + "\n")


def read_trace(path) -> ChainTrace:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise DataError(f"trace file {path} is empty")
        meta = json.loads(header)["meta"]
        records = [record_from_dict(json.loads(line)) for line in fh if line.strip()]
    if not records:
        raise DataError(f"trace file {path} has no sweep records")
    return ChainTrace(n=len(records[0].labels), records=records, meta=meta)


# ---------------------------------------------------------------------------
# Sampler state round trip
# ---------------------------------------------------------------------------

def sampler_state_dict(s: Sampler) -> dict:
    return {
        "config": model_config_to_dict(s.config),
        "assignments": s.assignments.tolist(),
        "next_id": s._next_id,
        "sweep_count": s.sweep_count,
        "adapt_until": s.adapt_until,
        "likelihood_off": s.likelihood_off,
        "steps": dict(s._steps),
        "window_counts": {k: list(v) for k, v in s._window_counts.items()},
        "window_index": s._window_index,
        "rng": s.rng.bit_generator.state,
        "clusters": {
            str(cid): {
                "params": cluster_params_to_dict(cl.params),
                "members": list(cl.members),
                "latents": cl.latents.tolist(),
            }
            for cid, cl in s.clusters.items()
        },
    }


def sampler_from_state(rows, state: dict, tuning=None) -> Sampler:
    config = model_config_from_dict(state["config"])
    rng = np.random.default_rng()
    rng.bit_generator.state = state["rng"]
    s = Sampler(rows, config, tuning=tuning, rng=rng,
                likelihood_off=state["likelihood_off"], adapt_until=state["adapt_until"])
    s.assignments = np.array(state["assignments"], dtype=int)
    s._next_id = state["next_id"]
    s.sweep_count = state["sweep_count"]
    s._steps = dict(state["steps"])
    s._window_counts = {k: list(v) for k, v in state["window_counts"].items()}
    s._window_index = state["window_index"]
    s.rng.bit_generator.state = state["rng"]
    s.clusters = {
        int(cid): _Cluster(
            cluster_params_from_dict(c["params"]),
            list(c["members"]),
            np.array(c["latents"], dtype=float),
        )
        for cid, c in state["clusters"].items()
    }
    s._cache = np.empty(s.n)
    for cl in s.clusters.values():
        members = np.array(cl.members)
        s._cache[members] = s._rows_ll(s.rows[members], cl.params)
    return s
