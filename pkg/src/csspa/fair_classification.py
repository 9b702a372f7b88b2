"""Fairness-constrained logistic regression.

The objective is the ridge-regularised logistic loss

    E[log(1 + exp(-y w.x))] + (mu/2) ||w||^2,      y in {-1, +1},

written as a composition with identity outer map.  The fairness constraint
bounds the risk difference

    RD(w) = P(w.x > 0 | s+) - P(w.x > 0 | s-)

through one of three convex relaxations.  Each replaces the indicator
1{w.x > 0} by hinge or clipped-linear surrogates and keeps the group
probabilities inside the inner expectation, so ratios such as
E[1{s+} max(0, 1 + w.x)] / E[1{s+}] are functions of tracked means.  Ratios
are evaluated with :func:`huber_ratio`, which stays finite when a tracked
group probability approaches zero.

Approximations (inner h, outer l):

A1, J = 2, h = [p, p max(0,1+u), p min(1,u), q, q max(0,1-u), q min(1,-u)]
    l1 = H(z0,z1) + H(z3,z4) - 1 - c tau
    l2 = 1 - H(z0,z2) - H(z3,z5) - c tau
A2, J = 1, h = [p, p max(0,1+u), q, q max(0,1-u)]
    l = (H(z0,z1) + H(z2,z3) - 1)^2 - (c tau)^2
A3, J = 1, h as A1, with A = H(z0,z1), B = H(z3,z4), C = H(z0,z2), D = H(z3,z5)
    l = A^2 + B^2 + 1 - (c tau)^2 - 2C - 2D + 2AB

where u = w.x, p = 1{s = s+} and q = 1{s = s-}.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._jit import njit
from .model import ConfigError, FeasibleSet
from .oracles import Composition, assemble_problem

APPROXIMATIONS = {"A1": 1, "A2": 2, "A3": 3}
NUM_CONSTRAINTS = {"A1": 2, "A2": 1, "A3": 1}
INNER_DIM = {"A1": 6, "A2": 4, "A3": 6}

# Tuning constants (mu = 1) per fairness budget tau: (c1, c2, c3)
TABLE2 = {
    0.3: (1.6706e-5, 1.3270, 1.3270),
    0.25: (1.0048e-5, 2.0047, 7.9810),
    0.2: (0.0016, 0.3972, 6.2946),
    0.15: (4.2064e-4, 1.6746, 1.6746),
    0.1: (3.9811e-4, 1.9953, 7.9433),
    0.05: (0.0032, 0.3991, 3.9905),
}


class UndefinedMetricError(ValueError):
    """The risk difference needs rows from both sensitive groups."""


@dataclass(frozen=True)
class ClassificationDataset:
    """Rows of (features, label in {0,1}, sensitive flag).

    ``sensitive`` is True for the s+ group.  ``info`` carries ingestion
    metadata (feature names, skipped rows, group counts).
    """

    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.features, dtype=float)))
        y = np.asarray(self.labels).astype(np.int64).ravel()
        s = np.asarray(self.sensitive).astype(bool).ravel()
        if X.shape[0] == 0:
            raise ConfigError("classification dataset is empty")
        if y.shape[0] != X.shape[0] or s.shape[0] != X.shape[0]:
            raise ConfigError("features, labels and sensitive flags differ in length")
        if not np.all((y == 0) | (y == 1)):
            raise ConfigError("labels must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise ConfigError("features must be finite")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "sensitive", s)

    @property
    def n_rows(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def feature_norm_bound(self) -> float:
        """Largest ||x|| over the rows."""
        return float(np.max(np.linalg.norm(self.features, axis=1)))

    @property
    def group_counts(self):
        k = int(self.sensitive.sum())
        return {"s_plus": k, "s_minus": self.n_rows - k}

    def check_groups(self):
        counts = self.group_counts
        if counts["s_plus"] == 0 or counts["s_minus"] == 0:
            raise UndefinedMetricError(f"both sensitive groups must be nonempty, got {counts}")
        return self

    def table(self) -> np.ndarray:
        """Kernel data: [features..., y in {-1,+1}, 1{s+}]."""
        return np.column_stack([self.features, 2.0 * self.labels - 1.0, self.sensitive.astype(float)])


@dataclass(frozen=True)
class FairClfConfig:
    mu: float = 1.0
    tau: float = 0.2
    approximation: str = "A1"
    c: float = 1.0
    huber_eps: float = 0.05
    weight_ball_radius: float = 10.0

    def __post_init__(self):
        if not self.mu >= 0:
            raise ConfigError("mu must be >= 0")
        for name in ("tau", "c", "huber_eps", "weight_ball_radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.approximation not in APPROXIMATIONS:
            raise ConfigError(f"unknown approximation {self.approximation!r}; use A1, A2 or A3")

    @property
    def budget(self) -> float:
        """c * tau, the quantity subtracted (A1) or squared (A2, A3)."""
        return self.c * self.tau

    @classmethod
    def from_table2(cls, tau: float, approximation: str = "A1", **overrides):
        """Preset tuning constants with mu = 1."""
        key = min(TABLE2, key=lambda k: abs(k - tau))
        if abs(key - tau) > 1e-12:
            raise ConfigError(f"no preset for tau={tau}; available: {sorted(TABLE2)}")
        if approximation not in APPROXIMATIONS:
            raise ConfigError(f"unknown approximation {approximation!r}")
        c = TABLE2[key][APPROXIMATIONS[approximation] - 1]
        return replace(cls(mu=1.0, tau=key, approximation=approximation, c=c), **overrides)

    def to_dict(self):
        return {"mu": self.mu, "tau": self.tau, "approximation": self.approximation, "c": self.c,
                "huber_eps": self.huber_eps, "weight_ball_radius": self.weight_ball_radius}


# kernels -----------------------------------------------------------------

@njit
def _huber(z1, z2, eps):
    if z1 > eps:
        return z2 / z1, -z2 / (z1 * z1), 1.0 / z1
    return (z2 / eps) * (2.0 - z1 / eps), -z2 / (eps * eps), (2.0 - z1 / eps) / eps


def huber_ratio(z1: float, z2: float, eps: float):
    """Smoothed ratio z2 / z1; returns (value, (d/dz1, d/dz2)).

    For z1 <= eps the ratio is replaced by its linearisation in z1 at eps,
    (z2/eps)(2 - z1/eps), which keeps value and gradient continuous.
    """
    if not eps > 0:
        raise ConfigError("huber_eps must be > 0")
    v, d1, d2 = _huber(float(z1), float(z2), float(eps))
    return v, np.array([d1, d2])


@njit
def _softplus(v):
    # log(1 + exp(v)) without overflow
    if v > 0.0:
        return v + np.log1p(np.exp(-v))
    return np.log1p(np.exp(v))


@njit
def _sigmoid(v):
    if v >= 0.0:
        return 1.0 / (1.0 + np.exp(-v))
    e = np.exp(v)
    return e / (1.0 + e)


@njit
def logistic_inner(w, data, params, row, noise, want_jac):
    """Per-sample regularised logistic loss and its gradient (m = 1)."""
    n = w.shape[0]
    mu = params[0]
    x = data[row, :n]
    yl = data[row, n]
    margin = yl * (x @ w)
    val = np.empty(1)
    val[0] = _softplus(-margin) + 0.5 * mu * (w @ w)
    if not want_jac:
        return val, np.zeros((0, 0))
    jac = np.empty((n, 1))
    coef = -yl * _sigmoid(-margin)
    for i in range(n):
        jac[i, 0] = coef * x[i] + mu * w[i]
    return val, jac


@njit
def identity_outer(z, data, params, row, noise):
    return z[0], np.ones(1)


@njit
def fair_inner(w, data, params, row, noise, want_jac):
    n = w.shape[0]
    approx = int(params[1])
    x = data[row, :n]
    p = data[row, n + 1]
    q = 1.0 - p
    u = x @ w
    k = 4 if approx == 2 else 6
    val = np.zeros(k)
    dcoef = np.zeros(k)
    val[0] = p
    val[1] = p * max(0.0, 1.0 + u)
    dcoef[1] = p if 1.0 + u > 0.0 else 0.0
    if approx == 2:
        val[2] = q
        val[3] = q * max(0.0, 1.0 - u)
        dcoef[3] = -q if 1.0 - u > 0.0 else 0.0
    else:
        val[2] = p * min(1.0, u)
        dcoef[2] = p if u < 1.0 else 0.0
        val[3] = q
        val[4] = q * max(0.0, 1.0 - u)
        dcoef[4] = -q if 1.0 - u > 0.0 else 0.0
        val[5] = q * min(1.0, -u)
        dcoef[5] = -q if -u < 1.0 else 0.0
    if not want_jac:
        return val, np.zeros((0, 0))
    jac = np.empty((n, k))
    for i in range(n):
        for c in range(k):
            jac[i, c] = dcoef[c] * x[i]
    return val, jac


@njit
def fair_outer(z, data, params, row, noise):
    approx = int(params[1])
    budget = params[2]
    eps = params[3]
    if approx == 2:
        a, a0, a1 = _huber(z[0], z[1], eps)
        b, b2, b3 = _huber(z[2], z[3], eps)
        s = a + b - 1.0
        vals = np.empty(1)
        vals[0] = s * s - budget * budget
        grads = np.zeros((4, 1))
        grads[0, 0] = 2.0 * s * a0
        grads[1, 0] = 2.0 * s * a1
        grads[2, 0] = 2.0 * s * b2
        grads[3, 0] = 2.0 * s * b3
        return vals, grads
    A, A0, A1 = _huber(z[0], z[1], eps)
    B, B3, B4 = _huber(z[3], z[4], eps)
    C, C0, C2 = _huber(z[0], z[2], eps)
    D, D3, D5 = _huber(z[3], z[5], eps)
    if approx == 1:
        vals = np.empty(2)
        vals[0] = A + B - 1.0 - budget
        vals[1] = 1.0 - C - D - budget
        grads = np.zeros((6, 2))
        grads[0, 0] = A0
        grads[1, 0] = A1
        grads[3, 0] = B3
        grads[4, 0] = B4
        grads[0, 1] = -C0
        grads[2, 1] = -C2
        grads[3, 1] = -D3
        grads[5, 1] = -D5
        return vals, grads
    vals = np.empty(1)
    vals[0] = A * A + B * B + 1.0 - budget * budget - 2.0 * C - 2.0 * D + 2.0 * A * B
    dA = 2.0 * A + 2.0 * B
    dB = 2.0 * B + 2.0 * A
    grads = np.zeros((6, 1))
    grads[0, 0] = dA * A0 - 2.0 * C0
    grads[1, 0] = dA * A1
    grads[2, 0] = -2.0 * C2
    grads[3, 0] = dB * B3 - 2.0 * D3
    grads[4, 0] = dB * B4
    grads[5, 0] = -2.0 * D5
    return vals, grads


def logistic_batch_inner(w, data, params):
    """Mean of :func:`logistic_inner` over all rows, vectorised."""
    n = w.shape[0]
    X, yl = data[:, :n], data[:, n]
    margin = yl * (X @ w)
    val = np.array([np.mean(np.logaddexp(0.0, -margin)) + 0.5 * params[0] * (w @ w)])
    coef = -yl * np.exp(-np.logaddexp(0.0, margin))
    jac = ((coef @ X) / X.shape[0] + params[0] * w)[:, None]
    return val, jac


def fair_batch_inner(w, data, params):
    """Mean of :func:`fair_inner` over all rows, vectorised."""
    n = w.shape[0]
    X = data[:, :n]
    p = data[:, n + 1]
    q = 1.0 - p
    u = X @ w
    if int(params[1]) == 2:
        cols = [p, p * np.maximum(0.0, 1.0 + u), q, q * np.maximum(0.0, 1.0 - u)]
        dcoef = [0 * p, p * (1.0 + u > 0), 0 * q, -q * (1.0 - u > 0)]
    else:
        cols = [p, p * np.maximum(0.0, 1.0 + u), p * np.minimum(1.0, u),
                q, q * np.maximum(0.0, 1.0 - u), q * np.minimum(1.0, -u)]
        dcoef = [0 * p, p * (1.0 + u > 0), p * (u < 1.0),
                 0 * q, -q * (1.0 - u > 0), -q * (-u < 1.0)]
    N = X.shape[0]
    val = np.array([c.mean() for c in cols])
    jac = X.T @ np.column_stack(dcoef) / N
    return val, jac


# builders ----------------------------------------------------------------

def _params(config: FairClfConfig):
    return np.array([config.mu, APPROXIMATIONS[config.approximation], config.budget,
                     config.huber_eps])


def logistic_loss_oracle(dataset: ClassificationDataset, mu: float) -> Composition:
    """Objective composition for the regularised logistic loss."""
    if not mu >= 0:
        raise ConfigError("mu must be >= 0")
    return Composition(logistic_inner, identity_outer, dataset.table(),
                       np.array([mu, 0.0, 0.0, 0.0]), decision_dim=dataset.n_features,
                       inner_dim=1, name="logistic", batch_inner=logistic_batch_inner,
                       outer_uses_row=False)


def build_constraint(dataset: ClassificationDataset, config: FairClfConfig) -> Composition:
    """Risk-difference constraint composition for ``config.approximation``."""
    dataset.check_groups()
    tag = config.approximation
    return Composition(fair_inner, fair_outer, dataset.table(), _params(config),
                       decision_dim=dataset.n_features, inner_dim=INNER_DIM[tag],
                       num_outputs=NUM_CONSTRAINTS[tag], name=f"risk_difference_{tag}",
                       batch_inner=fair_batch_inner, outer_uses_row=False)


def build_fair_clf_problem(dataset: ClassificationDataset, config: FairClfConfig, seed=0,
                           tightening=0.0, constrained=True):
    """Fair logistic regression over the ball ||w|| <= weight_ball_radius."""
    from .oracles import null_constraint

    objective = logistic_loss_oracle(dataset, config.mu)
    constraint = build_constraint(dataset, config) if constrained else null_constraint(dataset.n_features)
    ball = FeasibleSet.l2_ball(np.zeros(dataset.n_features), config.weight_ball_radius)
    return assemble_problem(objective, constraint, ball, seed=seed, tightening=tightening,
                            name="fair_clf", description=config.to_dict())


def risk_difference(dataset: ClassificationDataset, w) -> float:
    """Empirical P(w.x > 0 | s+) - P(w.x > 0 | s-), strict inequality."""
    counts = dataset.group_counts
    if counts["s_plus"] == 0 or counts["s_minus"] == 0:
        raise UndefinedMetricError("risk difference undefined with an empty sensitive group")
    pred = dataset.features @ np.asarray(w, dtype=float) > 0.0
    return float(pred[dataset.sensitive].mean() - pred[~dataset.sensitive].mean())


def accuracy(dataset: ClassificationDataset, w) -> float:
    pred = dataset.features @ np.asarray(w, dtype=float) > 0.0
    return float(np.mean(pred == (dataset.labels == 1)))


def generate_two_group(n_points=2000, n_features=5, group_shift=1.5, seed=0):
    """Synthetic data where the label leans on a group-correlated feature.

    The first feature is shifted by ``group_shift`` for the s+ group and
    carries most of the label signal, so an unconstrained classifier has a
    large risk difference.  A constant bias feature is appended.
    """
    if n_features < 2:
        raise ConfigError("need at least two features")
    rng = np.random.default_rng(seed)
    s = rng.random(n_points) < 0.5
    X = rng.standard_normal((n_points, n_features))
    X[:, 0] += group_shift * s
    coef = np.linspace(1.0, 0.2, n_features)
    logits = X @ coef - 0.5 * group_shift
    y = (logits + rng.standard_normal(n_points) > 0).astype(np.int64)
    X = np.column_stack([X, np.ones(n_points)])
    names = [f"x{i + 1}" for i in range(n_features)] + ["bias"]
    return ClassificationDataset(X, y, s, info={"feature_names": names, "seed": seed})


# files -------------------------------------------------------------------

def _load_schema(schema):
    if isinstance(schema, (str, Path)):
        try:
            schema = json.loads(Path(schema).read_text())
        except ValueError as exc:
            raise ConfigError(f"schema file is not valid JSON: {exc}") from exc
    if not isinstance(schema, dict) or "columns" not in schema:
        raise ConfigError("schema needs a 'columns' mapping of name -> role")
    roles = schema["columns"]
    allowed = {"numeric", "categorical", "sensitive", "income"}
    bad = {k: v for k, v in roles.items() if v not in allowed}
    if bad:
        raise ConfigError(f"unknown column roles {bad}; allowed {sorted(allowed)}")
    for role in ("sensitive", "income"):
        if sum(v == role for v in roles.values()) != 1:
            raise ConfigError(f"schema must name exactly one {role} column")
    if "sensitive_positive" not in schema:
        raise ConfigError("schema must give 'sensitive_positive', the value marking group s+")
    return schema


def _income_label(value: str, positive: str) -> int:
    # the Adult test split writes labels with a trailing period
    return int(value.strip().rstrip(".") == positive.rstrip("."))


def ingest_adult_csv(path, schema) -> ClassificationDataset:
    """Read an Adult-style CSV into a :class:`ClassificationDataset`.

    ``schema`` (dict or JSON file) maps column names to one of numeric,
    categorical, sensitive or income, and names ``sensitive_positive`` and
    optionally ``income_positive`` (default ">50K").  Categorical columns are
    one-hot encoded, numeric columns min-max scaled to [0, 1], the sensitive
    column is kept out of the features and a constant bias feature is
    appended.  Rows with a wrong field count, a missing value ("" or "?") or
    an unparsable number are skipped and counted in ``info['skipped_rows']``.
    """
    schema = _load_schema(schema)
    roles = schema["columns"]
    positive_income = schema.get("income_positive", ">50K")
    positive_group = str(schema["sensitive_positive"]).strip()
    numeric = [c for c, r in roles.items() if r == "numeric"]
    categorical = [c for c, r in roles.items() if r == "categorical"]
    sens_col = next(c for c, r in roles.items() if r == "sensitive")
    inc_col = next(c for c, r in roles.items() if r == "income")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path} is empty") from None
        missing = [c for c in roles if c not in header]
        if missing:
            raise ConfigError(f"columns missing from {path}: {missing}")
        idx = {c: header.index(c) for c in roles}
        num_rows, cat_rows, labels, groups = [], [], [], []
        skipped = 0
        for rec in reader:
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                skipped += 1
                continue
            vals = {c: rec[i].strip() for c, i in idx.items()}
            if any(v in ("", "?") for v in vals.values()):
                skipped += 1
                continue
            try:
                nums = [float(vals[c]) for c in numeric]
            except ValueError:
                skipped += 1
                continue
            num_rows.append(nums)
            cat_rows.append([vals[c] for c in categorical])
            labels.append(_income_label(vals[inc_col], positive_income))
            groups.append(vals[sens_col] == positive_group)

    if not labels:
        raise ConfigError(f"no usable rows in {path} ({skipped} skipped)")
    blocks, names = [], []
    if numeric:
        A = np.asarray(num_rows, dtype=float)
        lo, hi = A.min(axis=0), A.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        blocks.append((A - lo) / span)
        names += numeric
    for j, col in enumerate(categorical):
        column = [r[j] for r in cat_rows]
        levels = sorted(set(column))
        onehot = np.zeros((len(column), len(levels)))
        pos = {lvl: k for k, lvl in enumerate(levels)}
        for i, v in enumerate(column):
            onehot[i, pos[v]] = 1.0
        blocks.append(onehot)
        names += [f"{col}={lvl}" for lvl in levels]
    blocks.append(np.ones((len(labels), 1)))
    names.append("bias")
    ds = ClassificationDataset(np.hstack(blocks), np.array(labels), np.array(groups),
                               info={"feature_names": names, "skipped_rows": skipped,
                                     "source": str(path)})
    ds.info["group_counts"] = ds.group_counts
    ds.info["n_features"] = ds.n_features
    ds.check_groups()
    return ds


def save_classification_csv(dataset: ClassificationDataset, path):
    """Write features, label and sensitive flag (1 for s+) as CSV."""
    names = dataset.info.get("feature_names") or [f"x{i + 1}" for i in range(dataset.n_features)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(list(names) + ["label", "sensitive"])
        for x, y, s in zip(dataset.features, dataset.labels, dataset.sensitive):
            out.writerow([repr(float(v)) for v in x] + [int(y), int(s)])


def load_classification_csv(path) -> ClassificationDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-2:] != ["label", "sensitive"]:
            raise ConfigError(f"{path}: last two columns must be label, sensitive")
        rows = [[float(v) for v in r] for r in reader if r]
    A = np.asarray(rows, dtype=float)
    return ClassificationDataset(A[:, :-2], A[:, -2], A[:, -1] > 0.5,
                                 info={"feature_names": header[:-2], "source": str(path)})
