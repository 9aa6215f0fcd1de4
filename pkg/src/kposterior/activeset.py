"""Primal active-set solver for nonnegative least squares.

Minimizes ``||A x - d||^2`` subject to ``x >= 0``, the form a convex QP
with bound constraints takes after whitening. Follows the classic
Lawson-Hanson scheme: grow the passive set one index at a time by the
largest dual value, and step back along the segment whenever the
unconstrained subproblem leaves the orthant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


@dataclass
class ActiveSetResult:
    x: np.ndarray
    passive: list[int]
    iterations: int
    trace: list[dict] = field(default_factory=list)


def nonneg_lstsq(A: np.ndarray, d: np.ndarray, max_iter: int | None = None, tol: float | None = None) -> ActiveSetResult:
    A = np.asarray(A, dtype=float)
    d = np.asarray(d, dtype=float)
    m, p = A.shape
    if max_iter is None:
        max_iter = 3 * p + 10
    if tol is None:
        tol = 10 * np.finfo(float).eps * max(m, p) * np.abs(A).sum(axis=0).max() * max(np.linalg.norm(d), 1e-300)

    x = np.zeros(p)
    passive = np.zeros(p, dtype=bool)
    trace: list[dict] = []
    w = A.T @ (d - A @ x)
    it = 0
    while (~passive).any() and w[~passive].max() > tol:
        it += 1
        if it > max_iter:
            raise ConvergenceError(f"active set did not settle in {max_iter} iterations", trace)
        j = int(np.flatnonzero(~passive)[np.argmax(w[~passive])])
        passive[j] = True
        while True:
            z = np.zeros(p)
            idx = np.flatnonzero(passive)
            if idx.size == 0:
                x = z
                break
            z[idx] = np.linalg.lstsq(A[:, idx], d, rcond=None)[0]
            if (z[idx] > 0).all():
                x = z
                break
            bad = idx[z[idx] <= 0]
            ratios = x[bad] / (x[bad] - z[bad])
            step = ratios.min()
            x = x + step * (z - x)
            # the blocking index, and any others driven to the bound, leave the passive set
            passive[bad[np.argmin(ratios)]] = False
            passive &= x > 0
            x[~passive] = 0.0
        w = A.T @ (d - A @ x)
        trace.append({"iteration": it, "added": j, "passive": np.flatnonzero(passive).tolist(),
                      "objective": float(np.sum((A @ x - d) ** 2))})
    return ActiveSetResult(x, np.flatnonzero(passive).tolist(), it, trace)
