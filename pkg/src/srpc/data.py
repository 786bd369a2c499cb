"""Domain types, dataset ingestion/validation, and probit design matrices.

The on-disk dataset format is a headered CSV with columns
``id, subpop, y, x1..xp, w1..wq``; exposure codes are positive integers and
``y`` is 0/1. Chain/hyperparameter configuration is read from a TOML file.
"""

import csv
import dataclasses
import math
import sys
import warnings

import numpy as np

from .errors import BadLevel, BadSubpop, MissingData, ShapeMismatch

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CELL_MEANS = "cell-means"
REFERENCE_CELL = "reference-cell"


@dataclasses.dataclass
class Schema:
    """Column declaration for :func:`load_dataset`.

    ``levels`` optionally declares d_j per exposure column; undeclared level
    counts are inferred from the data (and must come out >= 2).
    """

    subpop: str = "subpop"
    outcome: str = "y"
    exposures: list = None  # None -> every column starting with "x"
    demographics: list = None  # None -> every column starting with "w"
    levels: dict = None
    normalize_demographics: bool = True


@dataclasses.dataclass
class Dataset:
    x: np.ndarray  # (n, p) category codes, 1..d_j
    s: np.ndarray  # (n,) subpopulation index, 1..S
    y: np.ndarray  # (n,) binary outcome
    w_dem: np.ndarray  # (n, q) demographic covariates
    d: np.ndarray  # (p,) per-variable level counts
    S: int
    n: int
    p: int
    exposure_names: list = None
    demographic_names: list = None
    level_maps: list = None  # original code -> contiguous code, per column

    @property
    def q(self):
        return self.w_dem.shape[1]

    def validate(self):
        if self.x.shape != (self.n, self.p):
            raise ShapeMismatch(f"x has shape {self.x.shape}, expected {(self.n, self.p)}")
        if self.s.shape != (self.n,) or self.y.shape != (self.n,):
            raise ShapeMismatch("s and y must be length n")
        if not np.isin(self.y, (0, 1)).all():
            raise BadLevel("y must be 0/1")
        for j in range(self.p):
            col = self.x[:, j]
            if col.min() < 1 or col.max() > self.d[j]:
                raise BadLevel(
                    f"exposure column {j} has codes outside [1, {self.d[j]}]"
                )
            if self.d[j] < 2:
                raise BadLevel(f"exposure column {j} has d_j={self.d[j]} < 2")
        if self.s.min() < 1 or self.s.max() > self.S:
            raise BadSubpop(f"subpopulation indices outside [1, {self.S}]")
        seen = np.unique(self.s)
        if seen.size != self.S:
            missing = sorted(set(range(1, self.S + 1)) - set(seen.tolist()))
            raise BadSubpop(f"subpopulations never observed: {missing}")
        return self

    def subpop_sizes(self):
        return np.bincount(self.s - 1, minlength=self.S)


@dataclasses.dataclass
class DesignMatrix:
    W: np.ndarray
    coding: str
    column_labels: list

    @property
    def ncol(self):
        return self.W.shape[1]


@dataclasses.dataclass
class Hyperparameters:
    """Fixed prior constants; defaults follow the flat/sparse prior menu."""

    K0: int
    Ks: int
    alpha0: float = None  # default 1/K0 (sparsity-inducing)
    alpha_s: float = None  # default 1/Ks
    eta: float = 1.0
    a_beta: float = 1.0
    b_beta: float = 1.0
    a_sigma: float = 2.5
    b_sigma: float = 2.5

    def __post_init__(self):
        if self.K0 < 1 or self.Ks < 1:
            raise ValueError("cluster caps must be >= 1")
        if self.alpha0 is None:
            self.alpha0 = 1.0 / self.K0
        if self.alpha_s is None:
            self.alpha_s = 1.0 / self.Ks
        for name in ("alpha0", "alpha_s", "eta", "a_beta", "b_beta", "a_sigma", "b_sigma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


def default_cluster_cap(n):
    """Conservative overfitted-mixture cap with bounded memory."""
    return min(50, max(1, math.ceil(n / 20)))


@dataclasses.dataclass
class ChainConfig:
    n_iter: int = 20_000
    burn_in: int = 5_000
    thin: int = 1
    seed: int = 0
    fixed_K0: int = None  # override after model selection

    def __post_init__(self):
        if not self.burn_in < self.n_iter:
            raise ValueError("burn_in must be < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_retained(self):
        return (self.n_iter - self.burn_in) // self.thin


def _parse_cell(value, row, col):
    value = value.strip()
    if value == "":
        raise MissingData(row, col)
    return value


def load_dataset(path, schema=None):
    """Read and validate a dataset CSV; exposure codes are remapped to
    contiguous 1..d_j with the original labels recorded."""
    if schema is None:
        schema = Schema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingData(0, "header") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]

    exposures = schema.exposures
    if exposures is None:
        exposures = [h for h in header if h.startswith("x")]
    demographics = schema.demographics
    if demographics is None:
        demographics = [h for h in header if h.startswith("w")]
    for name in [schema.subpop, schema.outcome] + exposures + demographics:
        if name not in header:
            raise BadLevel(f"column {name!r} not found in {path}")
    col_idx = {h: i for i, h in enumerate(header)}

    n = len(rows)
    p = len(exposures)
    q = len(demographics)
    if n == 0:
        raise MissingData(1, "all")

    def cell(r, name):
        row = rows[r]
        i = col_idx[name]
        if i >= len(row):
            raise MissingData(r + 1, name)
        return _parse_cell(row[i], r + 1, name)

    try:
        s = np.array([int(cell(r, schema.subpop)) for r in range(n)], dtype=np.int64)
        y = np.array([int(cell(r, schema.outcome)) for r in range(n)], dtype=np.int64)
        x_raw = np.empty((n, p), dtype=np.int64)
        for j, name in enumerate(exposures):
            x_raw[:, j] = [int(cell(r, name)) for r in range(n)]
        w = np.empty((n, q), dtype=np.float64)
        for j, name in enumerate(demographics):
            w[:, j] = [float(cell(r, name)) for r in range(n)]
    except ValueError as exc:
        raise BadLevel(f"non-numeric cell in {path}: {exc}") from None

    if np.any(x_raw < 1):
        raise BadLevel("exposure codes must be positive integers")

    declared = schema.levels or {}
    x = np.empty_like(x_raw)
    d = np.empty(p, dtype=np.int64)
    level_maps = []
    for j, name in enumerate(exposures):
        if name in declared:
            dj = int(declared[name])
            if x_raw[:, j].max() > dj:
                raise BadLevel(f"column {name!r} has code above declared d={dj}")
            x[:, j] = x_raw[:, j]
            d[j] = dj
            level_maps.append({int(r): int(r) for r in range(1, dj + 1)})
        else:
            codes = np.unique(x_raw[:, j])
            if codes.size < 2:
                raise BadLevel(f"column {name!r} is constant (inferred d_j < 2)")
            mapping = {int(c): k + 1 for k, c in enumerate(codes)}
            x[:, j] = np.searchsorted(codes, x_raw[:, j]) + 1
            d[j] = codes.size
            level_maps.append(mapping)

    if schema.normalize_demographics and q:
        for j in range(q):
            col = w[:, j]
            if set(np.unique(col)) <= {0.0, 1.0}:
                continue
            sd = col.std()
            if sd > 0:
                w[:, j] = (col - col.mean()) / sd

    S = int(s.max()) if n else 0
    ds = Dataset(
        x=x,
        s=s,
        y=y,
        w_dem=w,
        d=d,
        S=S,
        n=n,
        p=p,
        exposure_names=exposures,
        demographic_names=demographics,
        level_maps=level_maps,
    )
    return ds.validate()


def save_dataset(ds, path):
    """Write a dataset as the canonical CSV (contiguous codes)."""
    header = ["id", "subpop", "y"] + (
        ds.exposure_names or [f"x{j + 1}" for j in range(ds.p)]
    ) + (ds.demographic_names or [f"w{j + 1}" for j in range(ds.q)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [i + 1, int(ds.s[i]), int(ds.y[i])]
            row += [int(v) for v in ds.x[i]]
            row += [repr(float(v)) for v in ds.w_dem[i]]
            writer.writerow(row)


def build_design_matrix(ds, C, K0, coding=CELL_MEANS):
    """Probit design matrix for the current global assignment.

    cell-means: one indicator column per subpopulation and per cluster plus
    the demographics (no intercept). reference-cell: intercept, S-1 subpop
    dummies, K0-1 cluster dummies, demographics (S+K0+q-1 columns).
    """
    C = np.asarray(C)
    if C.shape != (ds.n,):
        raise ShapeMismatch(f"C has shape {C.shape}, expected ({ds.n},)")
    if C.min() < 1 or C.max() > K0:
        raise ShapeMismatch(f"cluster assignments outside [1, {K0}]")
    q = ds.q
    rows = np.arange(ds.n)
    if coding == CELL_MEANS:
        W = np.zeros((ds.n, ds.S + K0 + q))
        W[rows, ds.s - 1] = 1.0
        W[rows, ds.S + C - 1] = 1.0
        labels = (
            [f"subpop:{s}" for s in range(1, ds.S + 1)]
            + [f"cluster:{k}" for k in range(1, K0 + 1)]
            + [f"dem:{nm}" for nm in (ds.demographic_names or range(1, q + 1))]
        )
    elif coding == REFERENCE_CELL:
        W = np.zeros((ds.n, ds.S + K0 + q - 1))
        W[:, 0] = 1.0
        for s in range(2, ds.S + 1):
            W[:, s - 1] = ds.s == s
        for k in range(2, K0 + 1):
            W[:, ds.S + k - 2] = C == k
        labels = (
            ["intercept"]
            + [f"subpop:{s}" for s in range(2, ds.S + 1)]
            + [f"cluster:{k}" for k in range(2, K0 + 1)]
            + [f"dem:{nm}" for nm in (ds.demographic_names or range(1, q + 1))]
        )
    else:
        raise ValueError(f"unknown coding {coding!r}")
    if q:
        W[:, -q:] = ds.w_dem
    empty = [labels[j] for j in np.flatnonzero(~W.any(axis=0))]
    if empty:
        warnings.warn(f"design matrix has all-zero columns (empty clusters): {empty}")
    return DesignMatrix(W=W, coding=coding, column_labels=labels)


def load_config(path):
    """Read hyperparameter + chain settings from a TOML file.

    Returns (hyper_kwargs, chain_kwargs, sim_kwargs); missing sections yield
    empty dicts so every field falls back to its default.
    """
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return (
        dict(doc.get("hyperparameters", {})),
        dict(doc.get("chain", {})),
        dict(doc.get("simulation", {})),
    )
