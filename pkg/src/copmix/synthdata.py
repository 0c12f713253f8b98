"""Synthetic two-view benchmark datasets and dataset file I/O.

Both benchmark generators draw a single meta-Gaussian population whose first
dimensions of the two views are strongly correlated, then split the sample
into two groups of unequal size by sorting on the first latent score and
independently permute the second view's rows within each group.  The
permutation kills the inter-view dependence inside the groups while leaving
every margin untouched, so the groups can only be recovered by looking at
the dependence between the views.

The generation correlation keeps the configured intra-view blocks and the
configured correlation between the first dimensions of the two views; the
remaining cross entries are filled in by the Gaussian chain rule
corr(x_i, y_j) = (P_x)_{1i} * rho * (P_y)_{1j}, which is positive definite
for any |rho| < 1.  (Leaving those entries at zero caps |rho| at
sqrt((1-(P_x)_{12}^2)(1-(P_y)_{12}^2)), far below the intended strong
dependence.)
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import special

from .copula import CorrelationMatrix, ViewLayout
from .errors import ConfigError, DataError
from .margins import CDF_EPS, MarginParams, beta_params, exponential_params, margin_quantile, normal_params

SIM_NAMES = ("sim1", "sim2")

# intra-view correlations of the two benchmark setups
_INTRA = {"sim1": (0.9, -0.5), "sim2": (0.9, 0.9)}


@dataclass(frozen=True)
class Dataset:
    """Two-view data matrix with optional ground-truth group labels."""

    layout: ViewLayout
    rows: np.ndarray
    true_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.layout.total:
            raise DataError(
                f"rows must be n x {self.layout.total}, got shape {rows.shape}"
            )
        if not np.all(np.isfinite(rows)):
            raise DataError("dataset contains non-finite or missing values")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if self.true_labels is not None:
            labels = np.asarray(self.true_labels, dtype=int).copy()
            if labels.shape != (rows.shape[0],):
                raise DataError("true_labels length must match the number of rows")
            labels.setflags(write=False)
            object.__setattr__(self, "true_labels", labels)

    @property
    def n(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one synthetic benchmark draw."""

    which: str
    n: int = 200
    group_fraction: float = 0.65
    inter_view_rho: float = 0.95
    seed: Optional[int] = None

    def __post_init__(self):
        if self.which not in SIM_NAMES:
            raise ConfigError(f"unknown simulation {self.which!r}, expected one of {SIM_NAMES}")
        if self.n < 10:
            raise ConfigError(f"simulation needs n >= 10, got {self.n}")
        if not 0.0 < self.group_fraction < 1.0:
            raise ConfigError(
                f"group_fraction must lie strictly between 0 and 1, got {self.group_fraction}"
            )
        if not -1.0 < self.inter_view_rho < 1.0:
            raise ConfigError(
                f"inter_view_rho must lie strictly inside (-1, 1), got {self.inter_view_rho}"
            )


def table1_margins(which: str) -> list[MarginParams]:
    """True margin parameters of the benchmark generators."""
    if which == "sim1":
        return [normal_params(0, 1), normal_params(0, 1), beta_params(3, 1), beta_params(1, 10)]
    if which == "sim2":
        return [normal_params(0, 1), normal_params(0, 1),
                exponential_params(2.5), exponential_params(2.5)]
    raise ConfigError(f"unknown simulation {which!r}")


def margin_families(which: str) -> list[str]:
    return [m.family for m in table1_margins(which)]


def generation_correlation(which: str, inter_view_rho: float) -> CorrelationMatrix:
    """4x4 generation correlation: intra-view blocks plus chain-completed cross."""
    rx, ry = _INTRA[which]
    rho = float(inter_view_rho)
    r = np.eye(4)
    r[0, 1] = r[1, 0] = rx
    r[2, 3] = r[3, 2] = ry
    cross = np.array([[1.0, ry], [rx, rx * ry]]) * rho
    r[:2, 2:] = cross
    r[2:, :2] = cross.T
    try:
        return CorrelationMatrix(r)
    except Exception as exc:  # infeasible correlation given the blocks
        raise ConfigError(f"generation correlation is not positive definite: {exc}") from exc


def simulate(config: SimConfig, rng: Optional[np.random.Generator] = None) -> Dataset:
    """Draw one benchmark dataset with ground-truth group labels.

    Rows are sorted by the first latent score, the lowest ceil(f*n) form
    group 1 and the rest group 2, and the second view is independently
    shuffled inside each group.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    corr = generation_correlation(config.which, config.inter_view_rho)
    margins = table1_margins(config.which)
    n = config.n
    z = rng.standard_normal((n, 4)) @ corr.chol.T
    u = np.clip(special.ndtr(z), CDF_EPS, 1.0 - CDF_EPS)
    rows = np.empty_like(u)
    for j, m in enumerate(margins):
        rows[:, j] = margin_quantile(m, u[:, j])
    order = np.argsort(z[:, 0], kind="stable")
    rows = rows[order]
    m1 = math.ceil(config.group_fraction * n)
    labels = np.where(np.arange(n) < m1, 1, 2)
    for lo, hi in ((0, m1), (m1, n)):
        perm = rng.permutation(hi - lo)
        rows[lo:hi, 2:] = rows[lo:hi, 2:][perm]
    return Dataset(ViewLayout(2, 2), rows, labels)


# ---------------------------------------------------------------------------
# Dataset file I/O
# ---------------------------------------------------------------------------

def _header(layout: ViewLayout, with_labels: bool) -> list[str]:
    cols = [f"x{j + 1}" for j in range(layout.p)] + [f"y{j + 1}" for j in range(layout.q)]
    if with_labels:
        cols.append("label")
    return cols


def write_dataset(dataset: Dataset, path) -> None:
    """Write a dataset as CSV (header x1..xp,y1..yq[,label], repr floats)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_header(dataset.layout, dataset.true_labels is not None))
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.rows[i]]
            if dataset.true_labels is not None:
                row.append(str(int(dataset.true_labels[i])))
            writer.writerow(row)


def read_dataset(path, layout: ViewLayout) -> Dataset:
    """Read a dataset CSV, validating the header against the layout."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        expected = _header(layout, False)
        with_labels = header == expected + ["label"]
        if not with_labels and header != expected:
            for k, name in enumerate(expected):
                if k >= len(header) or header[k] != name:
                    got = header[k] if k < len(header) else "<missing>"
                    raise DataError(
                        f"{path}: header column {k + 1} is {got!r}, expected {name!r}"
                    )
            raise DataError(f"{path}: unexpected trailing header columns {header[len(expected):]}")
        width = len(expected) + (1 if with_labels else 0)
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != width:
                raise DataError(f"{path}: row {lineno} has {len(rec)} cells, expected {width}")
            vals = []
            for k in range(len(expected)):
                cell = rec[k].strip()
                if not cell:
                    raise DataError(f"{path}: missing value at row {lineno}, column {header[k]!r}")
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} at row {lineno}, column {header[k]!r}"
                    ) from None
            rows.append(vals)
            if with_labels:
                try:
                    labels.append(int(rec[-1]))
                except ValueError:
                    raise DataError(
                        f"{path}: non-integer label {rec[-1]!r} at row {lineno}"
                    ) from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(layout, np.array(rows), np.array(labels) if with_labels else None)


def metadata_path(dataset_path) -> Path:
    p = Path(dataset_path)
    return p.with_suffix(".meta.json")


def write_metadata(dataset_path, config: SimConfig, extra: Optional[dict] = None) -> None:
    """Sidecar JSON recording the simulation configuration and seed."""
    record = asdict(config)
    if extra:
        record.update(extra)
    with open(metadata_path(dataset_path), "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_metadata(dataset_path) -> dict:
    with open(metadata_path(dataset_path), encoding="utf-8") as fh:
        return json.load(fh)
