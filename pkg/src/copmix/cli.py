"""Command-line driver: simulate, fit, evaluate and report.

All randomness flows from one master seed.  Every stage derives its own
generator as ``default_rng(seed_for(master, stage, replicate))`` where the
stage tag is hashed with crc32, so replicates are independent, stages do not
share streams, and repeated runs are byte-identical.

Output layout under the configured directory:

    effective_config.json     config echo with every default resolved
    data/rep###.csv           dataset per replicate (+ .meta.json sidecar)
    traces/<method>/rep###.jsonl
    evaluation.csv            method,replicate,ari,k_mode
    report.txt                medians, cluster-count summaries, sign tests

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluate as ev
from . import serialize as sz
from . import synthdata as sd
from .copula import ViewLayout
from .errors import ConfigError, CopmixError, DataError, NumericalError
from .margins import BetaShapesPrior, GammaPrior, MarginSpec, NormalInverseGammaPrior
from .mixture import ModelConfig
from .sampler import MhTuning, run

METHODS = ("cm", "gm1", "gm2")

_DEFAULTS = {
    "model": {"concentration": 1.0},
    "tuning": {"theta_step": 0.25, "latent_step": 0.1, "adapt_window": 50,
               "target_accept": 0.35},
    "mcmc": {"sweeps": 5000, "burn_in": 2000, "thin": 10},
    "replicates": 1,
    "gm2_var_prior": {"shape": 10.0, "scale": 50.0},
}


def seed_for(master: int, stage: str, replicate: int) -> int:
    """Derived child seed: hash of (master, replicate, crc32(stage))."""
    ss = np.random.SeedSequence([int(master), int(replicate), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _need(cfg: dict, key: str, kind, where: str):
    if key not in cfg:
        raise ConfigError(f"missing {where}.{key}")
    val = cfg[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ConfigError(f"{where}.{key} must be a number, got {val!r}")
        return float(val)
    if kind is int:
        if not isinstance(val, int) or isinstance(val, bool):
            raise ConfigError(f"{where}.{key} must be an integer, got {val!r}")
        return val
    if not isinstance(val, kind):
        raise ConfigError(f"{where}.{key} has wrong type {type(val).__name__}")
    return val


def load_config(path, seed_override=None, out_override=None) -> dict:
    """Read, validate and default-fill an experiment configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    cfg: dict = {}
    dataset = _need(raw, "dataset", dict, "config")
    if ("sim" in dataset) == ("file" in dataset):
        raise ConfigError("config.dataset must contain exactly one of 'sim' or 'file'")
    if "sim" in dataset:
        sim = dataset["sim"]
        simcfg = {
            "which": _need(sim, "which", str, "dataset.sim"),
            "n": sim.get("n", 200),
            "group_fraction": sim.get("group_fraction", 0.65),
            "inter_view_rho": sim.get("inter_view_rho", 0.95),
        }
        sd.SimConfig(**simcfg)  # validate ranges now, before any file is written
        cfg["dataset"] = {"sim": simcfg}
        margins_default = sd.margin_families(simcfg["which"])
        layout = (2, 2)
    else:
        f = dataset["file"]
        layout = (_need(f, "p", int, "dataset.file"), _need(f, "q", int, "dataset.file"))
        cfg["dataset"] = {"file": {"path": _need(f, "path", str, "dataset.file"),
                                   "p": layout[0], "q": layout[1]}}
        margins_default = None

    model = raw.get("model", {})
    margins = model.get("margins", margins_default)
    if margins is None:
        raise ConfigError("config.model.margins is required for file datasets")
    if not isinstance(margins, list) or len(margins) != layout[0] + layout[1]:
        raise ConfigError(
            f"config.model.margins must list {layout[0] + layout[1]} families"
        )
    for fam in margins:
        if fam not in ("normal", "beta", "exponential"):
            raise ConfigError(f"unknown margin family {fam!r}")
    conc = model.get("concentration", _DEFAULTS["model"]["concentration"])
    if not isinstance(conc, (int, float)) or conc <= 0:
        raise ConfigError(f"model.concentration must be positive, got {conc!r}")
    cfg["model"] = {
        "margins": list(margins),
        "concentration": float(conc),
        "priors": model.get("priors", {}),
    }

    tuning = dict(_DEFAULTS["tuning"])
    tuning.update(raw.get("tuning", {}))
    cfg["tuning"] = tuning

    mcmc = dict(_DEFAULTS["mcmc"])
    mcmc.update(raw.get("mcmc", {}))
    sweeps = _need(mcmc, "sweeps", int, "mcmc")
    burn = _need(mcmc, "burn_in", int, "mcmc")
    thin = _need(mcmc, "thin", int, "mcmc")
    if not (sweeps > burn >= 0):
        raise ConfigError(f"mcmc.sweeps must exceed mcmc.burn_in >= 0, got {sweeps}, {burn}")
    if thin < 1:
        raise ConfigError("mcmc.thin must be >= 1")
    cfg["mcmc"] = {"sweeps": sweeps, "burn_in": burn, "thin": thin}

    reps = raw.get("replicates", _DEFAULTS["replicates"])
    if not isinstance(reps, int) or reps < 1:
        raise ConfigError(f"replicates must be a positive integer, got {reps!r}")
    cfg["replicates"] = reps

    seed = seed_override if seed_override is not None else raw.get("seed")
    if not isinstance(seed, int):
        raise ConfigError("config.seed (or --seed) must be an integer")
    cfg["seed"] = seed

    out = out_override if out_override is not None else raw.get("out")
    if not isinstance(out, str) or not out:
        raise ConfigError("config.out (or --out) must be a non-empty path")
    cfg["out"] = out

    # gm1 default: the same weak auto-calibrated variance prior as cm's normal
    # margins; an explicit gm1_var_prior pins an absolute IG(shape, scale).
    if "gm1_var_prior" in raw:
        pri = raw["gm1_var_prior"]
        cfg["gm1_var_prior"] = {"shape": float(pri["shape"]), "scale": float(pri["scale"])}
    else:
        cfg["gm1_var_prior"] = None
    pri = dict(_DEFAULTS["gm2_var_prior"])
    pri.update(raw.get("gm2_var_prior", {}))
    cfg["gm2_var_prior"] = {"shape": float(pri["shape"]), "scale": float(pri["scale"])}
    return cfg


def write_effective_config(cfg: dict) -> None:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "effective_config.json", "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Margin prior resolution
# ---------------------------------------------------------------------------

def resolve_margin_specs(families, rows, cfg: dict, method: str) -> list[MarginSpec]:
    """Per-dimension margin specs for one fitted dataset.

    Normal-margin hyperparameters are calibrated to the column scale unless
    the config pins them explicitly; beta and exponential margins use diffuse
    gamma priors.  gm1/gm2 force all-normal margins, gm2 additionally imposes
    the strong high-variance prior on the second view.
    """
    p = cfg_layout(cfg)[0]
    overrides = cfg["model"]["priors"]
    if method in ("gm1", "gm2"):
        families = ["normal"] * len(families)
    specs = []
    for j, fam in enumerate(families):
        col = rows[:, j]
        if fam == "normal":
            o = overrides.get("normal")
            if o:
                hyper = NormalInverseGammaPrior(
                    o["mean_loc"], o["mean_precision"], o["var_shape"], o["var_scale"]
                )
            else:
                var = float(col.var())
                hyper = NormalInverseGammaPrior(
                    float(col.mean()), 0.1, 2.0, max(0.5 * var, 1e-8)
                )
            if method == "gm2" and j >= p:
                gm2 = cfg["gm2_var_prior"]
                hyper = NormalInverseGammaPrior(
                    hyper.mean_loc, hyper.mean_precision, gm2["shape"], gm2["scale"]
                )
            elif method == "gm1" and cfg.get("gm1_var_prior"):
                gm1 = cfg["gm1_var_prior"]
                hyper = NormalInverseGammaPrior(
                    hyper.mean_loc, hyper.mean_precision, gm1["shape"], gm1["scale"]
                )
        elif fam == "beta":
            o = overrides.get("beta")
            if o:
                hyper = BetaShapesPrior(
                    GammaPrior(o["alpha_shape"], o["alpha_rate"]),
                    GammaPrior(o["beta_shape"], o["beta_rate"]),
                )
            else:
                hyper = BetaShapesPrior(GammaPrior(2.0, 0.25), GammaPrior(2.0, 0.25))
        else:
            o = overrides.get("exponential")
            if o:
                hyper = GammaPrior(o["shape"], o["rate"])
            else:
                hyper = GammaPrior(2.0, max(float(col.mean()), 1e-8))
        specs.append(MarginSpec(fam, hyper))
    return specs


def cfg_layout(cfg: dict) -> tuple[int, int]:
    if "sim" in cfg["dataset"]:
        return 2, 2
    f = cfg["dataset"]["file"]
    return f["p"], f["q"]


def _tuning_from_cfg(cfg: dict) -> MhTuning:
    t = cfg["tuning"]
    step = t["theta_step"]
    if isinstance(step, dict):
        theta = {fam: float(step.get(fam, 0.25)) for fam in ("normal", "beta", "exponential")}
    else:
        theta = {fam: float(step) for fam in ("normal", "beta", "exponential")}
    return MhTuning(
        theta_step=theta,
        latent_step=float(t["latent_step"]),
        adapt_window=int(t["adapt_window"]),
        target_accept=float(t["target_accept"]),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _dataset_path(cfg: dict, rep: int) -> Path:
    return Path(cfg["out"]) / "data" / f"rep{rep:03d}.csv"


def _trace_path(cfg: dict, method: str, rep: int) -> Path:
    return Path(cfg["out"]) / "traces" / method / f"rep{rep:03d}.jsonl"


def cmd_simulate(cfg: dict) -> int:
    if "sim" not in cfg["dataset"]:
        raise ConfigError("simulate requires a dataset.sim configuration")
    write_effective_config(cfg)
    data_dir = Path(cfg["out"]) / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    base = cfg["dataset"]["sim"]
    for rep in range(cfg["replicates"]):
        child = seed_for(cfg["seed"], "simulate", rep)
        simcfg = sd.SimConfig(seed=child, **base)
        ds = sd.simulate(simcfg, np.random.default_rng(child))
        path = _dataset_path(cfg, rep)
        sd.write_dataset(ds, path)
        m1 = int(np.sum(ds.true_labels == 1))
        sd.write_metadata(path, simcfg, {
            "master_seed": cfg["seed"], "replicate": rep,
            "group_sizes": [m1, ds.n - m1],
        })
        print(f"simulate rep={rep} n={ds.n} -> {path}")
    return 0


def _fit_one(cfg: dict, method: str, rep: int) -> tuple[int, int, float]:
    """Fit one replicate; returns (replicate, K mode, mean log-likelihood)."""
    p, q = cfg_layout(cfg)
    layout = ViewLayout(p, q)
    if "sim" in cfg["dataset"]:
        ds = sd.read_dataset(_dataset_path(cfg, rep), layout)
    else:
        ds = sd.read_dataset(cfg["dataset"]["file"]["path"], layout)
    specs = resolve_margin_specs(cfg["model"]["margins"], ds.rows, cfg, method)
    model = ModelConfig(layout, tuple(specs), cfg["model"]["concentration"])
    child = seed_for(cfg["seed"], f"fit:{method}", rep)
    rng = np.random.default_rng(child)
    mcmc = cfg["mcmc"]
    trace = run(
        ds.rows, model, _tuning_from_cfg(cfg), mcmc["sweeps"], mcmc["burn_in"],
        mcmc["thin"], rng,
        meta={
            "method": method, "replicate": rep, "seed": child,
            "master_seed": cfg["seed"],
            "model": sz.model_config_to_dict(model),
        },
    )
    path = _trace_path(cfg, method, rep)
    path.parent.mkdir(parents=True, exist_ok=True)
    sz.write_trace(trace, path)
    kmode = ev.k_posterior(trace).mode
    mean_ll = float(np.mean([r.loglik for r in trace.records]))
    return rep, kmode, mean_ll


def cmd_fit(cfg: dict, method: str, jobs: int) -> int:
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}, expected one of {METHODS}")
    write_effective_config(cfg)
    reps = range(cfg["replicates"])
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_worker, [(cfg, method, r) for r in reps]))
    else:
        results = [_fit_one(cfg, method, r) for r in reps]
    for rep, kmode, mean_ll in results:
        print(f"fit method={method} rep={rep} K_mode={kmode} mean_loglik={mean_ll:.3f}")
    return 0


def _fit_worker(args):
    return _fit_one(*args)


def cmd_evaluate(cfg: dict) -> int:
    p, q = cfg_layout(cfg)
    layout = ViewLayout(p, q)
    found = [m for m in METHODS if (Path(cfg["out"]) / "traces" / m).is_dir()]
    if not found:
        raise DataError(f"no trace directories under {cfg['out']}/traces; run fit first")
    rows_out = []
    for method in found:
        for rep in range(cfg["replicates"]):
            tpath = _trace_path(cfg, method, rep)
            if not tpath.exists():
                raise DataError(f"missing trace {tpath}")
            if "sim" in cfg["dataset"]:
                ds = sd.read_dataset(_dataset_path(cfg, rep), layout)
            else:
                ds = sd.read_dataset(cfg["dataset"]["file"]["path"], layout)
            if ds.true_labels is None:
                raise DataError("evaluation requires ground-truth labels in the dataset")
            trace = sz.read_trace(tpath)
            est = ev.map_partition(trace)
            ari = ev.adjusted_rand_index(est, ds.true_labels)
            kmode = ev.k_posterior(trace).mode
            rows_out.append((method, rep, ari, kmode))
    out_csv = Path(cfg["out"]) / "evaluation.csv"
    with open(out_csv, "w", encoding="utf-8") as fh:
        fh.write("method,replicate,ari,k_mode\n")
        for method, rep, ari, kmode in rows_out:
            fh.write(f"{method},{rep},{ari!r},{kmode}\n")
    for method in found:
        aris = [r[2] for r in rows_out if r[0] == method]
        print(f"evaluate method={method} replicates={len(aris)} "
              f"median_ari={ev.lower_median(aris)!r}")
    print(f"evaluate wrote {out_csv}")
    return 0


def read_evaluation(cfg: dict) -> dict:
    """Parse evaluation.csv into {method: {"ari": [...], "k_mode": [...]}}."""
    path = Path(cfg["out"]) / "evaluation.csv"
    if not path.exists():
        raise DataError(f"{path} not found; run evaluate first")
    table: dict = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "method,replicate,ari,k_mode":
            raise DataError(f"{path}: unexpected header {header!r}")
        for line in fh:
            method, rep, ari, kmode = line.strip().split(",")
            entry = table.setdefault(method, {"ari": [], "k_mode": []})
            entry["ari"].append(float(ari))
            entry["k_mode"].append(int(kmode))
    return table


def cmd_report(cfg: dict) -> int:
    table = read_evaluation(cfg)
    lines = ["method replicates median_ari frac_kmode_eq2 frac_kmode_gt2"]
    for method in METHODS:
        if method not in table:
            continue
        aris = table[method]["ari"]
        kmodes = table[method]["k_mode"]
        eq2 = sum(1 for k in kmodes if k == 2) / len(kmodes)
        gt2 = sum(1 for k in kmodes if k > 2) / len(kmodes)
        lines.append(
            f"{method} {len(aris)} {ev.lower_median(aris)!r} {eq2!r} {gt2!r}"
        )
    if "cm" in table:
        for other in ("gm1", "gm2"):
            if other not in table:
                continue
            a, b = table["cm"]["ari"], table[other]["ari"]
            if len(a) == len(b):
                wins = sum(1 for x, y in zip(a, b) if x > y)
                pval = ev.sign_test_pvalue(a, b)
                lines.append(
                    f"sign_test cm>{other} wins={wins}/{len(a)} p={pval!r}"
                )
    report = "\n".join(lines) + "\n"
    out_path = Path(cfg["out"]) / "report.txt"
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(report)
    sys.stdout.write(report)
    print(f"report wrote {out_path}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="copmix",
        description="Dependency-seeking copula mixture clustering",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "fit", "evaluate", "report"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="experiment config (JSON)")
        cmd.add_argument("--seed", type=int, default=None, help="override master seed")
        cmd.add_argument("--out", default=None, help="override output directory")
        if name == "fit":
            cmd.add_argument("--method", choices=METHODS, default="cm")
            cmd.add_argument("--jobs", type=int, default=1,
                             help="parallel replicates (default 1)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "fit":
            jobs = args.jobs if args.jobs and args.jobs > 0 else (os.cpu_count() or 1)
            return cmd_fit(cfg, args.method, jobs)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        return cmd_report(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, CopmixError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
