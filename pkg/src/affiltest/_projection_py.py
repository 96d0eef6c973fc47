"""Pure NumPy cone projection kernel.

Reference implementation of the hot loop behind the chi-bar-squared
mixture weights: for each Gaussian draw z, solve

    minimize (b - z)' W (b - z)   subject to  b >= 0

with W positive definite, and report how many coordinates of the solution
end up clamped at zero.  The compiled module ``_projection`` implements the
same active-set algorithm with identical pivoting rules; this module is the
fallback when the extension is unavailable and the ground truth it is
benchmarked against.
"""

from __future__ import annotations

import numpy as np

IMPLEMENTATION = "pure"

_REL_TOL = 1e-12
_DROP_TOL = 1e-14


def _support_size(w: np.ndarray, q: np.ndarray) -> int:
    """Size of the passive (unclamped) set at the constrained minimum.

    ``q`` is W z.  Classical Lawson-Hanson active-set iteration on the
    normal-equations form: the gradient at b is W b - q.
    """
    j = q.size
    passive = np.zeros(j, dtype=bool)
    b = np.zeros(j)
    tol = _REL_TOL * max(1.0, float(np.abs(q).max()))
    for _ in range(10 * j + 10):
        grad = w[:, passive] @ b[passive] - q
        cand = np.where(passive, np.inf, grad)
        i = int(np.argmin(cand))
        if cand[i] >= -tol:
            break
        passive[i] = True
        while True:
            idx = np.flatnonzero(passive)
            sol = np.linalg.solve(w[np.ix_(idx, idx)], q[idx])
            if sol.min() > 0.0:
                b[:] = 0.0
                b[idx] = sol
                break
            cur = b[idx]
            blocking = sol <= 0.0
            steps = cur[blocking] / (cur[blocking] - sol[blocking])
            alpha = float(steps.min())
            moved = cur + alpha * (sol - cur)
            moved[moved < _DROP_TOL] = 0.0
            b[:] = 0.0
            b[idx] = moved
            passive[idx[moved == 0.0]] = False
            if not passive.any():
                break
        if not passive.any():
            # only reachable through degenerate blocking at the origin
            continue
    return int(passive.sum())


def binding_counts(w, z) -> np.ndarray:
    """Number of zero (binding) coordinates of each projected draw.

    Parameters
    ----------
    w : ndarray, shape (J, J)
        Positive definite metric (inverse covariance of the draws).
    z : ndarray, shape (n, J)
        Points to project onto the nonnegative cone.

    Returns
    -------
    ndarray of int64, shape (n,)
        Per draw, the count of coordinates at zero in the projection.
    """
    w = np.ascontiguousarray(w, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("w must be a square matrix")
    if z.ndim != 2 or z.shape[1] != w.shape[0]:
        raise ValueError(f"z must have shape (n, {w.shape[0]})")
    j = w.shape[0]
    if j == 0:
        return np.zeros(z.shape[0], dtype=np.int64)
    q_all = z @ w.T
    out = np.empty(z.shape[0], dtype=np.int64)
    for r in range(z.shape[0]):
        out[r] = j - _support_size(w, q_all[r])
    return out
