"""Problem data model and step-size schedules.

Nothing here depends on a solver.  A :class:`ProblemInstance` bundles the
dimensions of the compositional problem

    min_{x in X}  E[f(E[g(x; xi)]; zeta)]
    s.t.          E[l_j(E[h(x; phi)]; psi)] + theta <= 0,   j = 1..J

with its sampling oracles and feasible set.  :class:`Schedule` produces the
primal/tracker step sizes and the dual regularisation weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Optional

import numpy as np

if TYPE_CHECKING:
    from .oracles import StochasticOracleSet


class ConfigError(ValueError):
    """Invalid problem or schedule configuration."""


class DomainError(ValueError):
    """An argument has the wrong shape or lies outside an operation's domain."""


BOX = 0
BALL = 1
WHOLE = 2
ORTHANT = 3

_KIND_CODES = {"box": BOX, "l2_ball": BALL, "whole_space": WHOLE, "nonneg_orthant": ORTHANT}


@dataclass(frozen=True)
class FeasibleSet:
    """A closed convex set that is cheap to project onto.

    Use the constructors :meth:`box`, :meth:`l2_ball`, :meth:`whole_space`
    and :meth:`nonneg_orthant` rather than building one by hand.
    """

    kind: str
    dim: int
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ConfigError(f"unknown feasible set kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("feasible set dimension must be >= 1")
        if self.kind == "box":
            lo, up = self.lower, self.upper
            if lo is None or up is None or lo.shape != (self.dim,) or up.shape != (self.dim,):
                raise ConfigError("box bounds must both have length dim")
            if np.any(lo > up):
                raise ConfigError("box requires lower <= upper componentwise")
        elif self.kind == "l2_ball":
            if self.center is None or self.center.shape != (self.dim,):
                raise ConfigError("ball center must have length dim")
            if not self.radius > 0:
                raise ConfigError("ball radius must be > 0")

    @classmethod
    def box(cls, lower, upper, dim=None):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if dim is not None:
            lower = np.broadcast_to(lower, (dim,)).copy()
            upper = np.broadcast_to(upper, (dim,)).copy()
        return cls("box", len(lower), lower=lower, upper=upper)

    @classmethod
    def l2_ball(cls, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        return cls("l2_ball", len(center), center=center, radius=float(radius))

    @classmethod
    def whole_space(cls, dim):
        return cls("whole_space", int(dim))

    @classmethod
    def nonneg_orthant(cls, dim):
        return cls("nonneg_orthant", int(dim))

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    def kernel_args(self):
        """Flat arguments for the compiled projection kernel."""
        n = self.dim
        lower = self.lower if self.lower is not None else np.full(n, -np.inf)
        upper = self.upper if self.upper is not None else np.full(n, np.inf)
        center = self.center if self.center is not None else np.zeros(n)
        return self.code, lower, upper, center, float(self.radius)

    def contains(self, x, atol=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        if self.kind == "box":
            return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))
        if self.kind == "l2_ball":
            return bool(np.linalg.norm(x - self.center) <= self.radius * (1 + 1e-12) + atol)
        if self.kind == "nonneg_orthant":
            return bool(np.all(x >= -atol))
        return bool(np.all(np.isfinite(x)))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "box":
            out.update(lower=self.lower.tolist(), upper=self.upper.tolist())
        elif self.kind == "l2_ball":
            out.update(center=self.center.tolist(), radius=self.radius)
        return out


@dataclass(frozen=True)
class ProblemInstance:
    """The compositional problem (P), or its tightened surrogate when theta > 0."""

    objective_inner_dim: int
    constraint_inner_dim: int
    decision_dim: int
    num_constraints: int
    oracles: "StochasticOracleSet"
    feasible_set: FeasibleSet
    tightening: float = 0.0
    name: str = "custom"
    description: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for label in ("objective_inner_dim", "constraint_inner_dim", "decision_dim"):
            if getattr(self, label) < 1:
                raise ConfigError(f"{label} must be >= 1")
        if self.num_constraints < 0:
            raise ConfigError("num_constraints must be >= 0")
        if not self.tightening >= 0:
            raise ConfigError("tightening theta must be >= 0")
        if self.feasible_set.dim != self.decision_dim:
            raise ConfigError("feasible set dimension does not match decision_dim")

    @property
    def m(self):
        return self.objective_inner_dim

    @property
    def d(self):
        return self.constraint_inner_dim

    @property
    def n(self):
        return self.decision_dim

    @property
    def J(self):
        return self.num_constraints

    def with_tightening(self, theta: float) -> "ProblemInstance":
        return replace(self, tightening=float(theta))

    def with_seed(self, seed: int) -> "ProblemInstance":
        """Same problem, fresh oracle streams derived from ``seed``."""
        return replace(self, oracles=self.oracles.reseeded(seed))


@dataclass(frozen=True)
class AssumptionConstants:
    """Optional problem constants, only used to report theoretical bounds."""

    C_g: Optional[float] = None
    C_h: Optional[float] = None
    V_g: Optional[float] = None
    V_h: Optional[float] = None
    C_f: Optional[float] = None
    C_l: Optional[float] = None
    L_f: Optional[float] = None
    L_l: Optional[float] = None
    B_l: Optional[float] = None
    D_x: Optional[float] = None
    sigma0: Optional[float] = None

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive when given")

    def _need(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigError("missing constants: " + ", ".join(missing))
        return [getattr(self, n) for n in names]

    def tightening_cost_bound(self, theta: float) -> float:
        """Upper bound on |F(x*) - F(x^theta)| for 0 <= theta <= sigma0/2."""
        C_f, C_g, D_x, s0 = self._need("C_f", "C_g", "D_x", "sigma0")
        return theta * 2.0 * math.sqrt(C_f * C_g) * D_x / s0

    def dual_norm_bound(self, num_constraints: int) -> float:
        C_f, C_g, D_x, s0 = self._need("C_f", "C_g", "D_x", "sigma0")
        return 2.0 * math.sqrt(num_constraints * C_f * C_g) * D_x / s0

    def violation_factor(self) -> float:
        """Multiplier of the rate term in the constraint-violation bound."""
        C_f, C_g, D_x, s0 = self._need("C_f", "C_g", "D_x", "sigma0")
        return 2.0 + 8.0 * C_f * C_g * D_x ** 2 / s0 ** 2


SCHEDULE_MODES = ("per_iteration", "constant_in_t")


@dataclass(frozen=True)
class Schedule:
    """Power-law step sizes alpha_t, beta_t and the dual regulariser delta_t.

    ``per_iteration`` uses alpha0 * t**-a, ``constant_in_t`` uses alpha0 * T**-a
    for every t (likewise for beta).  ``delta_scale`` multiplies the delta_t
    lower-bound formula; 0 turns the dual regularisation off.
    """

    horizon: int
    alpha0: float = 1.0
    a: float = 0.75
    beta0: float = 1.0
    b: float = 0.5
    mode: str = "per_iteration"
    delta_scale: float = 1.0

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ConfigError("horizon T must be a positive integer")
        if not self.alpha0 > 0 or not self.beta0 > 0:
            raise ConfigError("alpha0 and beta0 must be > 0")
        if not 0 < self.a < 1 or not 0 < self.b < 1:
            raise ConfigError("exponents must satisfy 0 < a < 1 and 0 < b < 1")
        if self.a < self.b:
            raise ConfigError(f"step-size exponents must satisfy a ≥ b (got a={self.a}, b={self.b})")
        if self.mode not in SCHEDULE_MODES:
            raise ConfigError(f"unknown schedule mode {self.mode!r}")
        if not self.delta_scale >= 0:
            raise ConfigError("delta_scale must be >= 0")

    def validate(self):
        """Check beta_t <= 1 and alpha_t <= beta_t over the whole horizon."""
        alpha, beta, _ = self.arrays()
        if np.any(beta > 1.0):
            raise ConfigError("beta_t exceeds 1 (tracker updates need beta_t in (0, 1])")
        if np.any(alpha > beta):
            t = int(np.argmax(alpha > beta)) + 1
            raise ConfigError(f"alpha_t > beta_t at t={t}; choose alpha0 <= beta0")
        return self

    def _check_t(self, t):
        if int(t) != t or t < 1 or t > self.horizon:
            raise DomainError(f"t={t} outside 1..{self.horizon}")

    def _alpha(self, t):
        # t may exceed the horizon here: the delta formula reads alpha_{T+1}
        base = self.horizon if self.mode == "constant_in_t" else t
        return self.alpha0 * np.power(base, -self.a, dtype=float)

    def _beta(self, t):
        base = self.horizon if self.mode == "constant_in_t" else t
        return self.beta0 * np.power(base, -self.b, dtype=float)

    def _delta(self, t):
        t = np.asarray(t, dtype=float)
        a_t, a_n, a_T = self._alpha(t), self._alpha(t + 1), self._alpha(float(self.horizon))
        b_t, b_n = self._beta(t), self._beta(t + 1)
        bracket = (a_t / b_t + a_t ** 2 / (a_n * b_n) + a_t ** 2 / (a_T * b_n)
                   + (1.0 / a_n - 1.0 / a_t) + a_t)
        return self.delta_scale * bracket / a_t

    def arrays(self):
        """(alpha, beta, delta) for t = 1..T as float arrays."""
        t = np.arange(1, self.horizon + 1, dtype=float)
        return tuple(np.broadcast_to(v, t.shape).astype(float)
                     for v in (self._alpha(t), self._beta(t), self._delta(t)))

    def to_dict(self) -> dict:
        return {"horizon": self.horizon, "alpha0": self.alpha0, "a": self.a,
                "beta0": self.beta0, "b": self.b, "mode": self.mode,
                "delta_scale": self.delta_scale}


def alpha_at(schedule: Schedule, t: int) -> float:
    schedule._check_t(t)
    return float(schedule._alpha(t))


def beta_at(schedule: Schedule, t: int) -> float:
    schedule._check_t(t)
    value = float(schedule._beta(t))
    if value > 1.0:
        raise ConfigError(f"beta_{t} = {value:g} > 1 violates the tracker update contract")
    return value


def delta_at(schedule: Schedule, t: int) -> float:
    """Dual regularisation weight delta_t (scaled lower-bound formula)."""
    schedule._check_t(t)
    return float(schedule._delta(t))


def theta_for_horizon(theta0: float, horizon: int) -> float:
    """Tightening theta = theta0 * T**(-1/4) for the zero-violation regime."""
    if theta0 < 0:
        raise ConfigError("theta0 must be >= 0")
    return float(theta0) * float(horizon) ** -0.25
