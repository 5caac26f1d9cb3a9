"""Weighted point measures on phase space and transport distances between them.

Exact distances solve the transportation LP: as an assignment problem when
both measures have equal atoms (replicating atoms up to a common count), and
with the HiGHS simplex otherwise.  Problems beyond the exact limits use
log-domain Sinkhorn iterations; the result then carries a certified bracket
[dual lower bound, primal upper bound] whose width is reported as the gap.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

EXACT_POINT_LIMIT = 4096
LP_CELL_LIMIT = 250_000
MASS_TOL = 1e-9


@dataclass
class WeightedPointMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.points = np.array(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[None, :]
        self.weights = np.array(self.weights, dtype=float).reshape(-1)
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights differ in length")

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def is_probability(self, tol=MASS_TOL) -> bool:
        return bool(np.all(self.weights >= 0) and abs(self.total - 1.0) <= tol)

    def merged(self) -> "WeightedPointMeasure":
        """Combine atoms at identical points (the canonical form of the measure)."""
        if self.size == 0:
            return self
        uniq, inv = np.unique(self.points, axis=0, return_inverse=True)
        w = np.zeros(len(uniq))
        np.add.at(w, inv.reshape(-1), self.weights)
        return WeightedPointMeasure(uniq, w)

    def __sub__(self, other: "WeightedPointMeasure") -> "WeightedPointMeasure":
        return WeightedPointMeasure(np.vstack([self.points, other.points]),
                                    np.concatenate([self.weights, -other.weights]))


def dirac(z, mass: float = 1.0) -> WeightedPointMeasure:
    return WeightedPointMeasure(np.atleast_2d(np.asarray(z, dtype=float)), [mass])


def empirical(e) -> WeightedPointMeasure:
    """Measure with atoms (q_i, p_i) and the ensemble weights."""
    return WeightedPointMeasure(np.hstack([e.q, e.p]), e.weight)


@dataclass
class TransportResult:
    value: float
    mode: str  # "assignment", "simplex" or "entropic"
    gap: float = 0.0  # width of the certified bracket; 0 for exact modes
    lower: float | None = None
    upper: float | None = None
    eps_ent: float | None = None
    iterations: int = 0


def cost_matrix(x, y, truncate: float | None = None) -> np.ndarray:
    c = cdist(x, y)
    if truncate is not None:
        np.minimum(c, truncate, out=c)
    return c


def _uniform_count(w, tol=1e-12):
    """(count, atom mass) if all weights are equal, else None."""
    if len(w) == 0 or np.ptp(w) > tol * max(abs(w[0]), 1e-300):
        return None
    return len(w), float(w[0])


def _assignment(x, y, a, b, truncate, limit):
    ua, ub = _uniform_count(a), _uniform_count(b)
    if ua is None or ub is None:
        return None
    m, n = ua[0], ub[0]
    L = m * n // math.gcd(m, n)
    if L > limit:
        return None
    xr = np.repeat(x, L // m, axis=0)
    yr = np.repeat(y, L // n, axis=0)
    C = cost_matrix(xr, yr, truncate)
    r, c = linear_sum_assignment(C)
    total = float(np.sum(a))
    return TransportResult(float(np.sum(C[r, c])) * total / L, "assignment")


def _simplex(C, a, b):
    m, n = C.shape
    rows = np.concatenate([np.repeat(np.arange(m), n), m + np.tile(np.arange(n), m)])
    cols = np.concatenate([np.arange(m * n), np.arange(m * n)])
    A = coo_matrix((np.ones(2 * m * n), (rows, cols)), shape=(m + n, m * n)).tocsr()
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transportation LP failed: {res.message}")
    return TransportResult(float(res.fun), "simplex")


def sinkhorn(C, a, b, eps_ent: float | None = None, iters: int = 5000, tol: float = 1e-9) -> TransportResult:
    """Log-domain Sinkhorn with a certified bracket on the unregularized optimum.

    Lower bound: the dual value of (f, f^c), f^c the exact c-transform, which
    is dual feasible.  Upper bound: the cost of the Sinkhorn plan rounded onto
    the transport polytope.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if eps_ent is None:
        eps_ent = 1e-3 * max(float(np.median(C)), 1e-12)
    la, lb = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    it = 0
    for it in range(1, iters + 1):
        f = -eps_ent * logsumexp((g[None, :] - C) / eps_ent + lb[None, :], axis=1)
        g = -eps_ent * logsumexp((f[:, None] - C) / eps_ent + la[:, None], axis=0)
        if it % 20 == 0:
            logP = (f[:, None] + g[None, :] - C) / eps_ent + la[:, None] + lb[None, :]
            err = np.abs(np.exp(logsumexp(logP, axis=1)) - a).sum()
            if err < tol:
                break
    P = np.exp((f[:, None] + g[None, :] - C) / eps_ent + la[:, None] + lb[None, :])
    # rounding onto the polytope (row scaling, column scaling, rank-one fix)
    P *= np.minimum(a / np.maximum(P.sum(1), 1e-300), 1.0)[:, None]
    P *= np.minimum(b / np.maximum(P.sum(0), 1e-300), 1.0)[None, :]
    ea, eb = a - P.sum(1), b - P.sum(0)
    if ea.sum() > 0:
        P += np.outer(ea, eb) / ea.sum()
    upper = float(np.sum(P * C))
    gc = np.min(C - f[:, None], axis=0)
    lower = float(a @ f + b @ gc)
    return TransportResult(0.5 * (upper + lower), "entropic", gap=upper - lower, lower=lower, upper=upper,
                           eps_ent=eps_ent, iterations=it)


def transport(mu: WeightedPointMeasure, nu: WeightedPointMeasure, truncate: float | None = None,
              exact_limit: int = EXACT_POINT_LIMIT, lp_limit: int = LP_CELL_LIMIT,
              approx_limit: int = 40_000_000, eps_ent: float | None = None) -> TransportResult:
    """Optimal transport cost between nonnegative measures of equal mass."""
    a, b = mu.weights, nu.weights
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("transport needs nonnegative measures")
    if abs(a.sum() - b.sum()) > MASS_TOL * max(1.0, abs(a.sum())):
        raise ValueError(f"unequal masses {a.sum()} and {b.sum()}")
    if mu.size == 0 or nu.size == 0:
        return TransportResult(0.0, "assignment")
    ka, kb = a > 0, b > 0
    x, y, a, b = mu.points[ka], nu.points[kb], a[ka], b[kb]
    if max(len(a), len(b)) <= exact_limit:
        res = _assignment(x, y, a, b, truncate, exact_limit)
        if res is not None:
            return res
        if len(a) * len(b) <= lp_limit:
            return _simplex(cost_matrix(x, y, truncate), a, b)
    if len(a) * len(b) > approx_limit:
        raise ValueError(f"{len(a)} x {len(b)} transport problem exceeds the approximate-mode limit")
    s = a.sum()
    res = sinkhorn(cost_matrix(x, y, truncate), a / s, b / s, eps_ent=eps_ent)
    res.value *= s
    res.lower *= s
    res.upper *= s
    res.gap *= s
    return res


def kr_distance(mu, nu, full: bool = False, **kw):
    """Kantorovich-Rubinstein (W1) distance with Euclidean cost on R^6."""
    res = transport(mu, nu, **kw)
    return res if full else res.value


def bl_distance(mu, nu, full: bool = False, **kw):
    """Dual bounded-Lipschitz distance: W1 with cost min{2, |z - z'|}."""
    res = transport(mu, nu, truncate=2.0, **kw)
    return res if full else res.value


def signed_extension_norm(sigma: WeightedPointMeasure, anchor: WeightedPointMeasure | None = None, **kw) -> float:
    """||sigma|| = d((sigma - sigma(R^d) anchor)_+, (sigma - sigma(R^d) anchor)_-) + |sigma(R^d)|."""
    if anchor is None:
        anchor = dirac(np.zeros(sigma.dim))
    c = sigma.total
    s = WeightedPointMeasure(np.vstack([sigma.points, anchor.points]),
                             np.concatenate([sigma.weights, -c * anchor.weights])).merged()
    pos = s.weights > 0
    neg = s.weights < 0
    plus = WeightedPointMeasure(s.points[pos], s.weights[pos])
    minus = WeightedPointMeasure(s.points[neg], -s.weights[neg])
    if plus.size == 0 and minus.size == 0:
        return abs(c)
    mass = max(plus.total, minus.total)
    # remove the rounding mismatch between the two parts before transporting
    if plus.size and minus.size:
        minus.weights *= plus.total / minus.total
    elif mass < 1e-14:
        return abs(c)
    return transport(plus, minus, **kw).value + abs(c)


def brute_force_transport(mu: WeightedPointMeasure, nu: WeightedPointMeasure, truncate: float | None = None,
                          chunk: int = 100_000) -> float:
    """Minimum cost over all vertices of the transportation polytope.

    Every basis is a set of m + n - 1 cells whose constraint matrix (one
    redundant column constraint dropped) is nonsingular; each nonsingular
    basis with a nonnegative solution is a vertex.  Exhaustive, so only for
    small supports (5 x 5 means two million candidate bases).
    """
    a, b = mu.weights, nu.weights
    m, n = len(a), len(b)
    C = cost_matrix(mu.points, nu.points, truncate)
    cells = [(i, j) for i in range(m) for j in range(n)]
    k = m + n - 1
    # full constraint matrix without the last column constraint: (m + n - 1) x (m n)
    A = np.zeros((k, m * n))
    for c, (i, j) in enumerate(cells):
        A[i, c] = 1.0
        if j < n - 1:
            A[m + j, c] = 1.0
    rhs = np.concatenate([a, b[:-1]])
    cflat = C.ravel()
    best = np.inf
    combos = itertools.combinations(range(m * n), k)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        block = block.reshape(-1, k)
        M = np.transpose(A[:, block], (1, 0, 2))  # (batch, k, k)
        det = np.linalg.det(M)
        ok = np.abs(det) > 0.5  # totally unimodular: det in {-1, 0, 1}
        if not np.any(ok):
            continue
        sol = np.linalg.solve(M[ok], np.broadcast_to(rhs, (int(ok.sum()), k))[..., None])[..., 0]
        feas = np.all(sol >= -1e-12, axis=1)
        if np.any(feas):
            costs = np.sum(sol[feas] * cflat[block[ok][feas]], axis=1)
            best = min(best, float(costs.min()))
    return best
