"""Dense two-phase tableau simplex with Bland's rule.

Solves ``min c.x  s.t.  A x = b, x >= 0``. Sized for the small exact
transport instances of this package (a few hundred rows at most); Bland's
rule keeps the highly degenerate transportation LPs from cycling.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidArgumentError

TOL = 1e-11


class LPResult:
    __slots__ = ("x", "objective", "iterations")

    def __init__(self, x, objective, iterations):
        self.x = x
        self.objective = objective
        self.iterations = iterations


class InfeasibleError(InvalidArgumentError):
    pass


class UnboundedError(InvalidArgumentError):
    pass


def _pivot(T, row, col):
    T[row] /= T[row, col]
    factor = T[:, col].copy()
    factor[row] = 0.0
    T -= np.outer(factor, T[row])


def _run(T, basis, allowed, max_iter):
    """Iterate on tableau ``T`` (last row = reduced costs, last column = rhs)."""
    m = T.shape[0] - 1
    it = 0
    while True:
        cost = T[-1, :-1]
        candidates = np.flatnonzero((cost < -TOL) & allowed)
        if candidates.size == 0:
            return it
        col = candidates[0]  # Bland: lowest index entering
        column = T[:m, col]
        positive = column > TOL
        if not positive.any():
            raise UnboundedError("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + TOL * max(1.0, abs(best)))
        row = ties[np.argmin(basis[ties])]  # Bland: lowest-index leaving variable
        _pivot(T, row, col)
        basis[row] = col
        it += 1
        if it > max_iter:
            raise RuntimeError("simplex iteration limit reached")


def linprog_eq(c, A, b, max_iter=50_000):
    """Minimize ``c.x`` subject to ``A x = b``, ``x >= 0``.

    Columns of ``A`` that are unit vectors on rows with ``b >= 0`` start in the
    basis directly (slacks); the remaining rows get phase-one artificials.
    """
    c = np.asarray(c, dtype=np.float64)
    A = np.array(A, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    basis = -np.ones(m, dtype=int)
    for j in range(n):
        col = A[:, j]
        nz = np.flatnonzero(col)
        if nz.size == 1 and col[nz[0]] == 1.0 and basis[nz[0]] < 0:
            basis[nz[0]] = j
    need = np.flatnonzero(basis < 0)
    n_art = need.size
    T = np.zeros((m + 1, n + n_art + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    for k, r in enumerate(need):
        T[r, n + k] = 1.0
        basis[r] = n + k

    iterations = 0
    if n_art:
        # phase one: minimize the sum of artificials
        T[-1, n:n + n_art] = 1.0
        for r in need:
            T[-1] -= T[r]
        allowed = np.ones(n + n_art, dtype=bool)
        iterations += _run(T, basis, allowed, max_iter)
        if T[-1, -1] < -1e-9:
            raise InfeasibleError("linear program is infeasible")
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(m + 1, dtype=bool)
        for r in range(m):
            if basis[r] >= n:
                nz = np.flatnonzero(np.abs(T[r, :n]) > 1e-9)
                if nz.size:
                    _pivot(T, r, nz[0])
                    basis[r] = nz[0]
                else:
                    keep[r] = False
        T = T[keep]
        basis = basis[keep[:-1]]
        T = np.delete(T, np.s_[n:n + n_art], axis=1)

    T[-1] = 0.0
    T[-1, :n] = c
    for r, j in enumerate(basis):
        if T[-1, j] != 0.0:
            T[-1] -= T[-1, j] * T[r]
    iterations += _run(T, basis, np.ones(n, dtype=bool), max_iter)
    x = np.zeros(n)
    x[basis] = T[:-1, -1]
    x[np.abs(x) < 1e-15] = 0.0
    return LPResult(x, float(c @ x), iterations)
