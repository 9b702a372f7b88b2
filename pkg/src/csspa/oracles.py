"""Stochastic sampling oracles for compositional objectives and constraints.

A :class:`Composition` pairs an inner map (value and jacobian of g or h at a
point, for one sample) with an outer map (value and gradient of f or of every
l_j, for one sample).  Both maps are plain kernels with a fixed signature so
that the fused solver loop can call them from compiled code::

    inner(x, data, params, row, noise, want_jac) -> (value[k], jac[n, k])
    outer(z, data, params, row, noise)           -> (value, grad)

A composition may also carry ``batch_inner(x, data, params)``, a vectorised
shortcut returning the mean inner value and jacobian over all records at
zero noise.  Full-batch evaluation uses it when present; sampling never does.
``outer_uses_row=False`` declares that the outer map ignores ``row``, so a
full-batch mean of it needs one evaluation instead of one per record.

``row`` indexes a record of ``data`` (always 0 for analytic oracles) and
``noise`` is a vector of standard normal draws that the kernel scales itself.
For the objective, ``value`` is a float and ``grad`` has length m; for
constraints ``value`` has length J and ``grad`` is d x J.  When ``want_jac``
is false an inner kernel may return a 0 x 0 jacobian.

:class:`StochasticOracleSet` owns four independent, seeded draw streams
(xi, zeta, phi, psi), all derived from one seed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._jit import njit
from .model import ConfigError, DomainError

XI, ZETA, PHI, PSI = range(4)
STREAM_NAMES = ("xi", "zeta", "phi", "psi")
DEFAULT_BLOCK = 4096


@dataclass(frozen=True)
class Composition:
    """One compositional function: an inner map, an outer map and their data.

    ``num_outputs`` is 1 for an objective and J for a constraint block.
    """

    inner: Callable
    outer: Callable
    data: np.ndarray
    params: np.ndarray
    decision_dim: int
    inner_dim: int
    num_outputs: int = 1
    inner_noise_dim: int = 0
    outer_noise_dim: int = 0
    name: str = ""
    batch_inner: Optional[Callable] = None
    outer_uses_row: bool = True

    def __post_init__(self):
        data = np.ascontiguousarray(np.atleast_2d(np.asarray(self.data, dtype=float)))
        params = np.ascontiguousarray(np.atleast_1d(np.asarray(self.params, dtype=float)))
        if data.shape[0] < 1:
            raise ConfigError(f"composition {self.name!r} has no records")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "params", params)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    def _noise(self, noise, dim):
        if noise is None:
            return np.zeros(dim)
        return np.ascontiguousarray(np.asarray(noise, dtype=float).reshape(dim))

    def inner_at(self, x, row=0, noise=None, jac=True):
        x = _as_point(x, self.decision_dim)
        return self.inner(x, self.data, self.params, np.int64(row),
                          self._noise(noise, self.inner_noise_dim), jac)

    def outer_at(self, z, row=0, noise=None):
        z = _as_point(z, self.inner_dim)
        return self.outer(z, self.data, self.params, np.int64(row),
                          self._noise(noise, self.outer_noise_dim))


def _as_point(x, dim):
    x = np.ascontiguousarray(np.asarray(x, dtype=float).ravel())
    if x.shape[0] != dim:
        raise DomainError(f"expected a vector of length {dim}, got {x.shape[0]}")
    return x


@njit
def _null_inner(x, data, params, row, noise, want_jac):
    n = x.shape[0]
    if want_jac:
        return np.zeros(1), np.zeros((n, 1))
    return np.zeros(1), np.zeros((0, 0))


@njit
def _null_outer(z, data, params, row, noise):
    return np.zeros(0), np.zeros((z.shape[0], 0))


def null_constraint(decision_dim: int) -> Composition:
    """Placeholder constraint block with J = 0 (unconstrained mode)."""
    return Composition(_null_inner, _null_outer, np.zeros((1, 1)), np.zeros(1),
                       decision_dim=decision_dim, inner_dim=1, num_outputs=0,
                       name="none")


class DrawStream:
    """Buffered draws (record index, standard-normal noise) for one substream.

    Draws are generated in fixed-size blocks, so the sequence a caller sees
    does not depend on how it slices its requests.
    """

    def __init__(self, seed_seq: np.random.SeedSequence, n_rows: int, noise_dim: int,
                 block: int = DEFAULT_BLOCK):
        self._gen = np.random.Generator(np.random.PCG64(seed_seq))
        self.n_rows = int(n_rows)
        self.noise_dim = int(noise_dim)
        self.block = int(block)
        self._rows = np.zeros(0, dtype=np.int64)
        self._noise = np.zeros((0, self.noise_dim))
        self._pos = 0
        self.consumed = 0

    def _refill(self):
        if self.n_rows > 1:
            rows = self._gen.integers(0, self.n_rows, size=self.block, dtype=np.int64)
        else:
            rows = np.zeros(self.block, dtype=np.int64)
        if self.noise_dim > 0:
            noise = self._gen.standard_normal((self.block, self.noise_dim))
        else:
            noise = np.zeros((self.block, 0))
        self._rows = np.concatenate([self._rows[self._pos:], rows])
        self._noise = np.concatenate([self._noise[self._pos:], noise])
        self._pos = 0

    def take(self, count: int):
        """Next ``count`` draws as (rows[count], noise[count, noise_dim])."""
        while self._rows.shape[0] - self._pos < count:
            self._refill()
        sl = slice(self._pos, self._pos + count)
        self._pos += count
        self.consumed += count
        return self._rows[sl], np.ascontiguousarray(self._noise[sl])


class StochasticOracleSet:
    """Sampling interface for the objective and constraint compositions.

    Parameters
    ----------
    objective, constraint : Composition
        The objective (f o g) and the constraint block (l_j o h).
    seed : int
        Root seed; the xi, zeta, phi and psi streams are independent children
        of ``np.random.SeedSequence(seed)``.
    """

    def __init__(self, objective: Composition, constraint: Composition, seed: int = 0,
                 block: int = DEFAULT_BLOCK):
        if objective.decision_dim != constraint.decision_dim:
            raise ConfigError("objective and constraint disagree on decision_dim")
        if objective.num_outputs != 1:
            raise ConfigError("objective composition must have a scalar outer function")
        self.objective = objective
        self.constraint = constraint
        self.seed = int(seed)
        self.block = block
        children = np.random.SeedSequence(self.seed).spawn(4)
        spec = [(objective.n_rows, objective.inner_noise_dim),
                (objective.n_rows, objective.outer_noise_dim),
                (constraint.n_rows, constraint.inner_noise_dim),
                (constraint.n_rows, constraint.outer_noise_dim)]
        self.streams = tuple(DrawStream(ss, rows, nd, block) for ss, (rows, nd) in zip(children, spec))

    # dimensions -------------------------------------------------------
    @property
    def decision_dim(self):
        return self.objective.decision_dim

    @property
    def objective_inner_dim(self):
        return self.objective.inner_dim

    @property
    def constraint_inner_dim(self):
        return self.constraint.inner_dim

    @property
    def num_constraints(self):
        return self.constraint.num_outputs

    @property
    def rng_stream(self):
        return f"seed={self.seed}"

    def reseeded(self, seed: int) -> "StochasticOracleSet":
        return type(self)(self.objective, self.constraint, seed=seed, block=self.block)

    # single draws -----------------------------------------------------
    def _one(self, k):
        rows, noise = self.streams[k].take(1)
        return rows[0], noise[0]

    def sample_objective_inner(self, x):
        row, noise = self._one(XI)
        return self.objective.inner_at(x, row, noise, True)

    def sample_objective_outer(self, y):
        """One draw of (f(y; zeta), grad f(y; zeta))."""
        row, noise = self._one(ZETA)
        value, grad = self.objective.outer_at(y, row, noise)
        return float(value), grad

    def sample_objective_outer_grad(self, y):
        return self.sample_objective_outer(y)[1]

    def sample_constraint_inner(self, x):
        row, noise = self._one(PHI)
        return self.constraint.inner_at(x, row, noise, True)

    def sample_constraint_outer(self, w):
        """Per-constraint values (J,) and gradients (d, J) for one draw."""
        row, noise = self._one(PSI)
        return self.constraint.outer_at(w, row, noise)

    def take(self, count):
        """Draw blocks for all four streams, in stream order."""
        return tuple(s.take(count) for s in self.streams)


class DatasetOracle(StochasticOracleSet):
    """Oracle set whose draws are records sampled uniformly with replacement.

    Each inner or outer draw consumes exactly one record index from its own
    stream; there is no additive noise.
    """

    def __init__(self, objective: Composition, constraint: Composition, seed: int = 0,
                 block: int = DEFAULT_BLOCK):
        for comp in (objective, constraint):
            if comp.inner_noise_dim or comp.outer_noise_dim:
                raise ConfigError("dataset oracles draw records only, not noise")
        super().__init__(objective, constraint, seed=seed, block=block)

    @property
    def records(self):
        return self.objective.data



def assemble_problem(objective: Composition, constraint: Composition, feasible_set,
                     seed: int = 0, tightening: float = 0.0, name: str = "custom",
                     description=None):
    """Wrap two compositions into a :class:`~csspa.model.ProblemInstance`."""
    from .model import ProblemInstance

    noisy = any((objective.inner_noise_dim, objective.outer_noise_dim,
                 constraint.inner_noise_dim, constraint.outer_noise_dim))
    cls = StochasticOracleSet if noisy else DatasetOracle
    oracles = cls(objective, constraint, seed=seed)
    return ProblemInstance(
        objective_inner_dim=objective.inner_dim,
        constraint_inner_dim=constraint.inner_dim,
        decision_dim=objective.decision_dim,
        num_constraints=constraint.num_outputs,
        oracles=oracles,
        feasible_set=feasible_set,
        tightening=tightening,
        name=name,
        description=dict(description or {}),
    )
