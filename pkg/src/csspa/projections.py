"""Euclidean projections onto boxes, l2 balls, the whole space and the
nonnegative orthant."""
import numpy as np

from ._jit import njit
from .model import BALL, BOX, ORTHANT, WHOLE, DomainError, FeasibleSet


@njit
def project_inplace(x, kind, lower, upper, center, radius):
    """Overwrite ``x`` with its projection.  ``kind`` is a FeasibleSet code."""
    n = x.shape[0]
    if kind == BOX:
        for i in range(n):
            if x[i] < lower[i]:
                x[i] = lower[i]
            elif x[i] > upper[i]:
                x[i] = upper[i]
    elif kind == BALL:
        sq = 0.0
        for i in range(n):
            sq += (x[i] - center[i]) ** 2
        dist = np.sqrt(sq)
        if dist > radius:
            scale = radius / dist
            for i in range(n):
                x[i] = center[i] + scale * (x[i] - center[i])
    elif kind == ORTHANT:
        for i in range(n):
            if x[i] < 0.0:
                x[i] = 0.0
    # WHOLE: nothing to do


def project(target: FeasibleSet, p) -> np.ndarray:
    """Return the projection of ``p`` onto ``target`` as a new array.

    Raises
    ------
    DomainError
        If ``p`` has the wrong length or contains NaN/inf.
    """
    p = np.array(p, dtype=float, ndmin=1)
    if p.ndim != 1 or p.shape[0] != target.dim:
        raise DomainError(f"point of length {p.shape} does not match set dimension {target.dim}")
    if not np.all(np.isfinite(p)):
        raise DomainError("cannot project a non-finite point")
    if target.code == WHOLE:
        return p
    project_inplace(p, *target.kernel_args())
    return p


def project_orthant(p) -> np.ndarray:
    """[p]_+ componentwise."""
    return np.maximum(np.asarray(p, dtype=float), 0.0)
