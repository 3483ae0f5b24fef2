"""Exact Wasserstein-1 distances between small discrete measures.

The transport problems are solved as linear programs with the in-repo simplex
(:mod:`otus.ot.simplex`); the 1-D closed form integrates ``|CDF_mu - CDF_nu|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BudgetExceededError, InvalidArgumentError
from .measures import pushforward
from .simplex import linprog_eq

MAX_ATOMS = 12


@dataclass
class TransportPlan:
    coupling: np.ndarray
    cost: float

    def marginal_error(self, mu, nu):
        return max(np.abs(self.coupling.sum(axis=1) - mu.weights).max(),
                   np.abs(self.coupling.sum(axis=0) - nu.weights).max())


def ground_distance(p, q, metric="L1"):
    diff = np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)
    if metric == "L1":
        return np.abs(diff).sum(axis=-1)
    if metric == "L2":
        return np.sqrt((diff ** 2).sum(axis=-1))
    raise InvalidArgumentError(f"unknown metric {metric!r}")


def cost_matrix(xs, ys, metric="L1"):
    return ground_distance(xs[:, None, :], ys[None, :, :], metric)


def _check_budget(*measures):
    for m in measures:
        if m.n > MAX_ATOMS:
            raise BudgetExceededError(f"{m.n} atoms exceeds the exact budget of {MAX_ATOMS}")


def solve_transport(a, b, C):
    """Minimum-cost coupling with row sums ``a`` and column sums ``b``."""
    n, m = C.shape
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j::m] = 1.0
    res = linprog_eq(C.ravel(), A, np.concatenate([a, b]))
    coupling = np.clip(res.x.reshape(n, m), 0.0, None)
    return TransportPlan(coupling, float((coupling * C).sum()))


def w1_exact(mu, nu, metric="L1"):
    """(cost, TransportPlan) of the Kantorovich problem with a metric ground cost."""
    _check_budget(mu, nu)
    if mu.dim != nu.dim:
        raise InvalidArgumentError("measures live in different dimensions")
    plan = solve_transport(mu.weights, nu.weights, cost_matrix(mu.support, nu.support, metric))
    return plan.cost, plan


def w1_1d(mu, nu):
    """Exact W1 on the real line: integral of |F_mu - F_nu| over the merged breakpoints."""
    if mu.dim != 1 or nu.dim != 1:
        raise InvalidArgumentError("w1_1d needs measures on the real line")
    xs = mu.support[:, 0]
    ys = nu.support[:, 0]
    grid = np.union1d(xs, ys)
    cdf_mu = np.array([mu.weights[xs <= t].sum() for t in grid])
    cdf_nu = np.array([nu.weights[ys <= t].sum() for t in grid])
    return float(np.sum(np.abs(cdf_mu - cdf_nu)[:-1] * np.diff(grid)))


def w1_dual(mu, nu, metric="L1"):
    """Kantorovich-Rubinstein dual: max sum(phi dmu) - sum(phi dnu) over 1-Lipschitz phi.

    The potential lives on the union of both supports. Returns
    ``(cost, points, phi)`` with ``phi[k]`` the potential at ``points[k]``.
    """
    _check_budget(mu, nu)
    points, inverse = np.unique(np.vstack([mu.support, nu.support]), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    k = points.shape[0]
    w = np.zeros(k)
    np.add.at(w, inverse[:mu.n], mu.weights)
    np.add.at(w, inverse[mu.n:], -nu.weights)
    if k == 1:
        return 0.0, points, np.zeros(1)
    D = cost_matrix(points, points, metric)
    pairs = [(p, q) for p in range(k) for q in range(k) if p != q]
    # variables: u (k), v (k) with phi = u - v, then one slack per pair
    n_var = 2 * k + len(pairs)
    A = np.zeros((len(pairs), n_var))
    rhs = np.zeros(len(pairs))
    for r, (p, q) in enumerate(pairs):
        A[r, p] += 1.0
        A[r, k + p] -= 1.0
        A[r, q] -= 1.0
        A[r, k + q] += 1.0
        A[r, 2 * k + r] = 1.0
        rhs[r] = D[p, q]
    c = np.zeros(n_var)
    c[:k] = -w
    c[k:2 * k] = w
    res = linprog_eq(c, A, rhs)
    phi = res.x[:k] - res.x[k:2 * k]
    phi -= phi.min()
    return float(phi @ w), points, phi


def joint_transport_cost(mu, nu, G, F, metric="L1"):
    """min over couplings pi of sum pi(x, y) (|x - G(y)| + |F(x) - y|).

    ``mu`` lives in the target space X, ``nu`` in the input space Y;
    ``G: Y -> X`` and ``F: X -> Y``. One coupling serves both terms.
    """
    _check_budget(mu, nu)
    gy = np.array([np.atleast_1d(G(y)) for y in nu.support], dtype=np.float64)
    fx = np.array([np.atleast_1d(F(x)) for x in mu.support], dtype=np.float64)
    C = cost_matrix(mu.support, gy, metric) + cost_matrix(fx, nu.support, metric)
    plan = solve_transport(mu.weights, nu.weights, C)
    return plan.cost, plan


def joint_cost_lower_bound(mu, nu, G, F, metric="L1"):
    """max(W1(mu, G#nu), W1(F#mu, nu)); the shared-coupling cost can never go below it."""
    return max(w1_exact(mu, pushforward(G, nu), metric)[0],
               w1_exact(pushforward(F, mu), nu, metric)[0])
