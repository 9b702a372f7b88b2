"""Fair sparse additive regression.

Each feature j gets a fitted function sum_k w_jk zeta_k(x_j) over a fixed
basis.  The objective

    E[(y - sum_j pred_j)^2] + mu * sum_j sqrt(E[pred_j^2])

is a composition with inner g = [residual^2, pred_1^2, ..., pred_d^2] and
outer f(z) = z_0 + mu * sum_j sqrt(z_j + eps_s); eps_s keeps the outer
gradient bounded at z_j = 0.  Fairness bounds the covariance between the
sensitive attribute s and the prediction,

    -tau <= E[s pred] - E[s] E[pred] <= tau,

through inner h = [s pred, s, pred] and two outer constraints.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ._jit import njit
from .model import ConfigError, DomainError, FeasibleSet
from .oracles import Composition, assemble_problem, null_constraint

SQRT_EPS = 1e-8


@dataclass(frozen=True)
class SpamBasis:
    """Basis functions zeta_1..zeta_p applied to each feature.

    The default is the polynomial basis u, u^2, ..., u^p.  Custom
    ``functions`` must be vectorised callables bounded on [0, 1].
    """

    p: int = 4
    functions: Optional[Sequence[Callable]] = None

    def __post_init__(self):
        if self.functions is not None:
            object.__setattr__(self, "functions", tuple(self.functions))
            object.__setattr__(self, "p", len(self.functions))
        if self.p < 1:
            raise ConfigError("basis size p must be >= 1")

    @property
    def kind(self):
        return "polynomial" if self.functions is None else "custom"

    def expand(self, X) -> np.ndarray:
        """(N, d) features -> (N, d*p) design; column j*p + k is zeta_k(x_j)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        N, d = X.shape
        out = np.empty((N, d, self.p))
        for k in range(self.p):
            if self.functions is None:
                out[:, :, k] = X ** (k + 1)
            else:
                with np.errstate(all="ignore"):
                    out[:, :, k] = np.asarray(self.functions[k](X), dtype=float)
        if not np.all(np.isfinite(out)):
            raise ConfigError("basis functions produced non-finite values")
        return out.reshape(N, d * self.p)

    def bound(self, grid=1001) -> float:
        """B_zeta: max |zeta_k| on [0, 1], estimated on a grid for custom bases."""
        u = np.linspace(0.0, 1.0, grid)[:, None]
        return float(np.max(np.abs(self.expand(u))))


@dataclass(frozen=True)
class SpamSyntheticSpec:
    n_points: int = 2000
    d_features: int = 30
    noise_std: float = float(np.sqrt(0.1))
    seed: int = 0

    def __post_init__(self):
        if self.d_features < 4:
            raise ConfigError("d_features must be >= 4 (four features carry signal)")
        if self.n_points < 1:
            raise ConfigError("n_points must be >= 1")
        if not self.noise_std >= 0:
            raise ConfigError("noise_std must be >= 0")


@dataclass(frozen=True)
class SpamDataset:
    """Features in [0, 1]^d, target y and sensitive attribute s."""

    X: np.ndarray
    y: np.ndarray
    s: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        s = np.asarray(self.s, dtype=float).ravel()
        if X.shape[0] == 0 or y.shape[0] != X.shape[0] or s.shape[0] != X.shape[0]:
            raise ConfigError("X, y and s must be nonempty and equally long")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)

    @property
    def n_points(self):
        return self.X.shape[0]

    @property
    def d_features(self):
        return self.X.shape[1]

    def table(self, basis: SpamBasis) -> np.ndarray:
        """Kernel data: [basis design (d*p), y, s]."""
        return np.column_stack([basis.expand(self.X), self.y, self.s])


def generate_spam_synthetic(spec: SpamSyntheticSpec = SpamSyntheticSpec()) -> SpamDataset:
    """Uniform features; y = r1 x1^4 + r2 x2^3 + r3 x3^2 + r4 x4 + noise; s = a x1 + b."""
    rng = np.random.default_rng(spec.seed)
    r = rng.random(4)
    a, b = rng.random(2)
    X = rng.random((spec.n_points, spec.d_features))
    signal = r[0] * X[:, 0] ** 4 + r[1] * X[:, 1] ** 3 + r[2] * X[:, 2] ** 2 + r[3] * X[:, 3]
    y = signal + spec.noise_std * rng.standard_normal(spec.n_points)
    s = a * X[:, 0] + b
    meta = {"spec": asdict(spec), "r": r.tolist(), "a": float(a), "b": float(b)}
    return SpamDataset(X, y, s, meta=meta)


def spam_signal(dataset: SpamDataset) -> np.ndarray:
    """Noise-free part of y for a generated dataset."""
    r = dataset.meta["r"]
    X = dataset.X
    return r[0] * X[:, 0] ** 4 + r[1] * X[:, 1] ** 3 + r[2] * X[:, 2] ** 2 + r[3] * X[:, 3]


# kernels -----------------------------------------------------------------
# params = [mu, eps_s, tau, d, p]

@njit
def spam_inner(w, data, params, row, noise, want_jac):
    d = int(params[3])
    p = int(params[4])
    n = d * p
    phi = data[row, :n]
    y = data[row, n]
    preds = np.zeros(d)
    for j in range(d):
        acc = 0.0
        for k in range(p):
            acc += w[j * p + k] * phi[j * p + k]
        preds[j] = acc
    r = y - preds.sum()
    val = np.empty(d + 1)
    val[0] = r * r
    for j in range(d):
        val[j + 1] = preds[j] * preds[j]
    if not want_jac:
        return val, np.zeros((0, 0))
    jac = np.zeros((n, d + 1))
    for j in range(d):
        for k in range(p):
            i = j * p + k
            jac[i, 0] = -2.0 * r * phi[i]
            jac[i, j + 1] = 2.0 * preds[j] * phi[i]
    return val, jac


@njit
def spam_outer(z, data, params, row, noise):
    mu = params[0]
    eps = params[1]
    m = z.shape[0]
    grad = np.empty(m)
    value = z[0]
    grad[0] = 1.0
    for j in range(1, m):
        root = np.sqrt(z[j] + eps)
        value += mu * root
        grad[j] = 0.5 * mu / root
    return value, grad


@njit
def spam_cov_inner(w, data, params, row, noise, want_jac):
    n = w.shape[0]
    phi = data[row, :n]
    s = data[row, n + 1]
    pred = phi @ w
    val = np.empty(3)
    val[0] = s * pred
    val[1] = s
    val[2] = pred
    if not want_jac:
        return val, np.zeros((0, 0))
    jac = np.zeros((n, 3))
    for i in range(n):
        jac[i, 0] = s * phi[i]
        jac[i, 2] = phi[i]
    return val, jac


@njit
def spam_cov_outer(z, data, params, row, noise):
    tau = params[2]
    cov = z[0] - z[1] * z[2]
    vals = np.empty(2)
    vals[0] = cov - tau
    vals[1] = -cov - tau
    grads = np.empty((3, 2))
    grads[0, 0] = 1.0
    grads[1, 0] = -z[2]
    grads[2, 0] = -z[1]
    grads[0, 1] = -1.0
    grads[1, 1] = z[2]
    grads[2, 1] = z[1]
    return vals, grads


def spam_batch_inner(w, data, params):
    """Mean of :func:`spam_inner` over all rows, vectorised."""
    d, p = int(params[3]), int(params[4])
    n = d * p
    N = data.shape[0]
    phi3 = data[:, :n].reshape(N, d, p)
    preds = np.einsum("ndk,dk->nd", phi3, w.reshape(d, p))
    r = data[:, n] - preds.sum(axis=1)
    val = np.concatenate([[np.mean(r * r)], np.mean(preds * preds, axis=0)])
    jac = np.zeros((n, d + 1))
    jac[:, 0] = -2.0 * (r @ data[:, :n]) / N
    blocks = np.einsum("ndk,nd->dk", phi3, preds) * (2.0 / N)
    jac[np.arange(n), 1 + np.arange(n) // p] = blocks.ravel()
    return val, jac


def spam_cov_batch_inner(w, data, params):
    n = w.shape[0]
    phi = data[:, :n]
    s = data[:, n + 1]
    pred = phi @ w
    N = data.shape[0]
    val = np.array([np.mean(s * pred), np.mean(s), np.mean(pred)])
    jac = np.zeros((n, 3))
    jac[:, 0] = (s @ phi) / N
    jac[:, 2] = phi.mean(axis=0)
    return val, jac


# builders ----------------------------------------------------------------

def _params(dataset, basis, mu=0.0, tau=0.5):
    return np.array([mu, SQRT_EPS, tau, dataset.d_features, basis.p])


def build_spam_objective(dataset: SpamDataset, basis: SpamBasis, mu: float) -> Composition:
    if not mu >= 0:
        raise ConfigError("mu must be >= 0")
    return Composition(spam_inner, spam_outer, dataset.table(basis), _params(dataset, basis, mu=mu),
                       decision_dim=dataset.d_features * basis.p,
                       inner_dim=dataset.d_features + 1, name="spam",
                       batch_inner=spam_batch_inner, outer_uses_row=False)


def build_spam_constraint(dataset: SpamDataset, basis: SpamBasis, tau: float) -> Composition:
    if not tau > 0:
        raise ConfigError("tau must be > 0")
    return Composition(spam_cov_inner, spam_cov_outer, dataset.table(basis),
                       _params(dataset, basis, tau=tau),
                       decision_dim=dataset.d_features * basis.p, inner_dim=3, num_outputs=2,
                       name="spam_covariance", batch_inner=spam_cov_batch_inner,
                       outer_uses_row=False)


def build_spam_problem(dataset: SpamDataset, basis: SpamBasis = SpamBasis(), mu: float = 0.1,
                       tau: float = 0.5, bound: float = 10.0, constrained: bool = True, seed=0,
                       tightening=0.0):
    """Fair SpAM over the box [-bound, bound]^(d p)."""
    n = dataset.d_features * basis.p
    objective = build_spam_objective(dataset, basis, mu)
    constraint = build_spam_constraint(dataset, basis, tau) if constrained else null_constraint(n)
    box = FeasibleSet.box(-bound, bound, dim=n)
    return assemble_problem(objective, constraint, box, seed=seed, tightening=tightening,
                            name="fair_spam",
                            description={"mu": mu, "tau": tau, "bound": bound, "p": basis.p,
                                         "basis": basis.kind, "constrained": constrained})


def group_norms(w, d: int, p: int) -> np.ndarray:
    """||w_j|| for each feature block j."""
    w = np.asarray(w, dtype=float)
    if w.shape != (d * p,):
        raise DomainError(f"expected {d * p} coefficients, got {w.shape}")
    return np.linalg.norm(w.reshape(d, p), axis=1)


# files -------------------------------------------------------------------

def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_spam_csv(dataset: SpamDataset, path):
    """Write columns x1..xd, y, s plus a sidecar ``<path>.meta.json``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow([f"x{j + 1}" for j in range(dataset.d_features)] + ["y", "s"])
        for x, y, s in zip(dataset.X, dataset.y, dataset.s):
            out.writerow([repr(float(v)) for v in x] + [repr(float(y)), repr(float(s))])
    meta_path(path).write_text(json.dumps(dataset.meta, indent=2) + "\n")


def load_spam_csv(path) -> SpamDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[-2:] != ["y", "s"]:
            raise ConfigError(f"{path}: last two columns must be y, s")
        A = np.asarray([[float(v) for v in r] for r in reader if r], dtype=float)
    side = meta_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    return SpamDataset(A[:, :-2], A[:, -2], A[:, -1], meta=meta)
