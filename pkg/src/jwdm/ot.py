"""Discrete optimal transport: exact solvers, entropic Sinkhorn, and the
joint-vs-marginal Wasserstein decomposition check.

Two exact solvers are provided and are deliberately independent:

* :func:`hungarian` -- shortest augmenting path assignment (uniform weights,
  equal sizes);
* :func:`network_simplex` -- primal simplex on the transportation polytope
  (arbitrary weights).

:func:`exact_wasserstein` dispatches between them.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

METRICS = ("l1", "l2", "sqeuclidean")

WEIGHT_TOL = 1e-12
MARGINAL_TOL = 1e-9


class SinkhornConvergenceError(RuntimeError):
    def __init__(self, violation: float, iterations: int, value: float, coupling: "Coupling"):
        super().__init__(
            f"sinkhorn did not converge after {iterations} iterations (marginal violation {violation:.3e})"
        )
        self.violation = violation
        self.iterations = iterations
        self.value = value
        self.coupling = coupling


@dataclass(frozen=True)
class DiscreteDistribution:
    points: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if pts.shape[0] < 1:
            raise ValueError("distribution needs at least one point")
        if w.shape[0] != pts.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if np.any(w < 0):
            raise ValueError("negative weight")
        if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, not 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "DiscreteDistribution":
        pts = np.asarray(points, dtype=np.float64)
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    metric: str = "custom"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"cost matrix must be 2-D, got shape {v.shape}")
        if np.any(v < 0):
            raise ValueError("cost entries must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __add__(self, other: "CostMatrix") -> "CostMatrix":
        return CostMatrix(self.values + other.values, f"{self.metric}+{other.metric}")

    @property
    def T(self) -> "CostMatrix":
        return CostMatrix(self.values.T, self.metric)


@dataclass
class Coupling:
    plan: np.ndarray  # (n, m), nonnegative
    iterations: int = 0
    violation: float = 0.0

    def marginal_violation(self, mu: DiscreteDistribution, nu: DiscreteDistribution) -> float:
        return float(
            np.abs(self.plan.sum(axis=1) - mu.weights).sum() + np.abs(self.plan.sum(axis=0) - nu.weights).sum()
        )

    def is_feasible(self, mu: DiscreteDistribution, nu: DiscreteDistribution, atol: float = MARGINAL_TOL) -> bool:
        return (
            bool(np.all(self.plan >= 0))
            and np.allclose(self.plan.sum(axis=1), mu.weights, rtol=0, atol=atol)
            and np.allclose(self.plan.sum(axis=0), nu.weights, rtol=0, atol=atol)
        )


def cost_matrix(a, b, metric: str = "l2") -> CostMatrix:
    """Pairwise ``metric`` distances between rows of ``a`` and rows of ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"point dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    diff = a[:, None, :] - b[None, :, :]
    if metric == "l1":
        c = np.abs(diff).sum(axis=2)
    elif metric == "sqeuclidean":
        c = (diff * diff).sum(axis=2)
    elif metric == "l2":
        c = np.sqrt((diff * diff).sum(axis=2))
    else:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return CostMatrix(c, metric)


def _values(C) -> np.ndarray:
    return C.values if isinstance(C, CostMatrix) else np.asarray(C, dtype=np.float64)


# ---------------------------------------------------------------- Hungarian

def hungarian(cost) -> np.ndarray:
    """Min-cost assignment of rows to distinct columns (rows <= columns).

    Shortest augmenting path with dual potentials, O(n^2 m).  Returns
    ``perm`` with row ``i`` assigned to column ``perm[i]``.
    """
    C = _values(cost)
    n, m = C.shape
    if n > m:
        raise ValueError(f"hungarian needs rows <= columns, got {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    # 1-based columns; column 0 is the virtual root of each search
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    match = np.zeros(m + 1, dtype=np.int64)  # match[j] = row (1-based) on column j, 0 if free
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = C[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            j1 = int(np.argmin(np.where(free, minv[1:], np.inf))) + 1
            delta = minv[j1]
            u[match[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    perm = np.empty(n, dtype=np.int64)
    for j in range(1, m + 1):
        if match[j]:
            perm[match[j] - 1] = j - 1
    return perm


# ---------------------------------------------------------- network simplex

def _northwest_corner(a: np.ndarray, b: np.ndarray):
    n, m = len(a), len(b)
    s, d = a.copy(), b.copy()
    flow = np.zeros((n, m))
    basis = []
    i = j = 0
    while True:
        x = min(s[i], d[j])
        flow[i, j] = x
        basis.append((i, j))
        row_done = s[i] <= d[j]
        s[i] -= x
        d[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if (row_done and i < n - 1) or j == m - 1:
            i += 1
        else:
            j += 1
    return flow, basis


def _potentials(C: np.ndarray, adj: list[list[int]], n: int):
    # nodes 0..n-1 are rows, n..n+m-1 columns; u[0] = 0 anchors the tree
    pot = np.full(len(adj), np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other in adj[node]:
            if np.isnan(pot[other]):
                if node < n:
                    pot[other] = C[node, other - n] - pot[node]
                else:
                    pot[other] = C[other, node - n] - pot[node]
                queue.append(other)
    return pot[:n], pot[n:]


def _tree_path(adj: list[list[int]], start: int, goal: int) -> list[int]:
    parent = {start: -1}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for other in adj[node]:
            if other not in parent:
                parent[other] = node
                queue.append(other)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def network_simplex(a, b, cost, max_iter: int = 100_000) -> tuple[float, np.ndarray]:
    """Exact transportation LP by primal simplex on the bipartite spanning-tree basis.

    Starts from the northwest-corner basis, prices with dual potentials, and
    pivots along the unique tree cycle.  Dantzig pricing, switching to
    Bland's rule after a run of degenerate pivots to rule out cycling.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    C = _values(cost)
    n, m = C.shape
    if (n, m) != (len(a), len(b)):
        raise ValueError(f"cost shape {C.shape} does not match weights ({len(a)}, {len(b)})")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    flow, basis = _northwest_corner(a, b)
    in_basis = np.zeros((n, m), dtype=bool)
    for i, j in basis:
        in_basis[i, j] = True
    tol = 1e-12 * max(1.0, float(np.abs(C).max(initial=0.0)))
    degenerate_run = 0
    for _ in range(max_iter):
        adj: list[list[int]] = [[] for _ in range(n + m)]
        for i, j in zip(*np.nonzero(in_basis)):
            adj[i].append(n + j)
            adj[n + j].append(i)
        u, v = _potentials(C, adj, n)
        reduced = C - u[:, None] - v[None, :]
        reduced[in_basis] = 0.0
        if reduced.min() >= -tol:
            break
        if degenerate_run < 2 * (n + m):
            ie, je = np.unravel_index(int(np.argmin(reduced)), reduced.shape)
        else:
            ie, je = np.unravel_index(int(np.flatnonzero(reduced.reshape(-1) < -tol)[0]), reduced.shape)
        # cycle: entering (ie, je) then the tree path je -> ... -> ie
        path = _tree_path(adj, n + je, ie)
        cells = []
        for p, q in zip(path, path[1:]):
            cells.append((p, q - n) if p < n else (q, p - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leave = min((c for c in minus if flow[c] == theta))
        for c in plus:
            flow[c] += theta
        for c in minus:
            flow[c] -= theta
        flow[ie, je] += theta
        flow[leave] = 0.0
        in_basis[leave] = False
        in_basis[ie, je] = True
        degenerate_run = degenerate_run + 1 if theta == 0 else 0
    else:
        raise RuntimeError(f"network simplex hit the {max_iter} pivot limit")
    flow = np.maximum(flow, 0.0)
    return math.fsum((flow * C).reshape(-1)), flow


# ------------------------------------------------------------ exact W and Sinkhorn

def _check_pair(mu: DiscreteDistribution, nu: DiscreteDistribution, C: np.ndarray) -> None:
    if C.shape != (len(mu), len(nu)):
        raise ValueError(f"cost shape {C.shape} does not match distributions ({len(mu)}, {len(nu)})")


def exact_wasserstein(
    mu: DiscreteDistribution, nu: DiscreteDistribution, C, solver: str = "auto"
) -> tuple[float, Coupling]:
    """Optimal transport cost and an optimal coupling.

    ``solver="auto"`` uses :func:`hungarian` for equal-size uniform inputs and
    :func:`network_simplex` otherwise.
    """
    Cv = _values(C)
    _check_pair(mu, nu, Cv)
    n, m = Cv.shape
    if solver == "auto":
        solver = "hungarian" if n == m and mu.is_uniform() and nu.is_uniform() else "network_simplex"
    if solver == "hungarian":
        if n != m or not (mu.is_uniform() and nu.is_uniform()):
            raise ValueError("hungarian solver needs equal sizes and uniform weights")
        perm = hungarian(Cv)
        plan = np.zeros((n, m))
        plan[np.arange(n), perm] = 1.0 / n
        return math.fsum(Cv[np.arange(n), perm]) / n, Coupling(plan)
    if solver == "network_simplex":
        value, plan = network_simplex(mu.weights, nu.weights, Cv)
        return value, Coupling(plan)
    raise ValueError(f"unknown solver {solver!r}")


def sinkhorn(
    mu: DiscreteDistribution,
    nu: DiscreteDistribution,
    C,
    epsilon: float,
    max_iters: int = 20_000,
    tol: float = 1e-9,
    eps_scaling: bool = True,
    check_every: int = 10,
) -> tuple[float, Coupling]:
    """Entropic OT in the log domain, warm-started by epsilon scaling.

    Returns the transport cost <P, C> of the regularised plan (entropy term
    excluded).  Raises :class:`SinkhornConvergenceError` if the L1 marginal
    violation is still above ``tol`` after ``max_iters`` iterations.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    Cv = _values(C)
    _check_pair(mu, nu, Cv)
    a, b = mu.weights, nu.weights
    with np.errstate(divide="ignore"):
        log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))

    def half_steps(eps, f, g):
        M = (g[None, :] - Cv) / eps + log_b[None, :]
        top = M.max(axis=1)
        f = -eps * (top + np.log(np.exp(M - top[:, None]).sum(axis=1)))
        M = (f[:, None] - Cv) / eps + log_a[:, None]
        top = M.max(axis=0)
        g = -eps * (top + np.log(np.exp(M - top[None, :]).sum(axis=0)))
        return f, g

    def plan_of(eps, f, g):
        return np.exp((f[:, None] + g[None, :] - Cv) / eps + log_a[:, None] + log_b[None, :])

    iterations = 0
    if eps_scaling:
        eps_k = max(float(Cv.max(initial=0.0)), epsilon)
        while eps_k > epsilon:
            for _ in range(20):
                f, g = half_steps(eps_k, f, g)
                iterations += 1
            eps_k = max(eps_k / 4.0, epsilon)
    violation = np.inf
    while iterations < max_iters:
        for _ in range(check_every):
            f, g = half_steps(epsilon, f, g)
            iterations += 1
        # columns are exact after the g half-step; rows carry the error
        P = plan_of(epsilon, f, g)
        violation = float(np.abs(P.sum(axis=1) - a).sum() + np.abs(P.sum(axis=0) - b).sum())
        if violation < tol:
            break
    P = plan_of(epsilon, f, g)
    value = math.fsum((P * Cv).reshape(-1))
    coupling = Coupling(P, iterations, violation)
    if violation >= tol:
        raise SinkhornConvergenceError(violation, iterations, value, coupling)
    return value, coupling


# ------------------------------------------------------- joint distributions

def _merge_atoms(points: np.ndarray, weights: np.ndarray):
    uniq, inverse = np.unique(points, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    w = np.zeros(len(uniq))
    np.add.at(w, inverse, weights)
    return uniq, w, inverse


@dataclass(frozen=True)
class JointPairDistribution:
    """Discrete joint law of a pair (first, second) living in two spaces."""

    first: np.ndarray  # (k, d1)
    second: np.ndarray  # (k, d2)
    weights: np.ndarray  # (k,)

    def __post_init__(self):
        a = np.asarray(self.first, dtype=np.float64)
        b = np.asarray(self.second, dtype=np.float64)
        a = a[:, None] if a.ndim == 1 else a
        b = b[:, None] if b.ndim == 1 else b
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if not (a.shape[0] == b.shape[0] == w.shape[0]):
            raise ValueError("support arrays and weights must have equal length")
        if np.any(w < 0) or abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError("joint weights must be nonnegative and sum to 1")
        object.__setattr__(self, "first", a)
        object.__setattr__(self, "second", b)
        object.__setattr__(self, "weights", w)

    @classmethod
    def product(cls, p: DiscreteDistribution, q: DiscreteDistribution) -> "JointPairDistribution":
        i, j = np.meshgrid(np.arange(len(p)), np.arange(len(q)), indexing="ij")
        i, j = i.reshape(-1), j.reshape(-1)
        return cls(p.points[i], q.points[j], p.weights[i] * q.weights[j])

    @classmethod
    def pushforward(cls, p: DiscreteDistribution, images) -> "JointPairDistribution":
        """Law of (X, f(X)) for X ~ p, given ``images[i] = f(p.points[i])``."""
        return cls(p.points, np.asarray(images, dtype=np.float64), p.weights)

    def first_marginal(self) -> DiscreteDistribution:
        pts, w, _ = _merge_atoms(self.first, self.weights)
        return DiscreteDistribution(pts, w / math.fsum(w))

    def second_marginal(self) -> DiscreteDistribution:
        pts, w, _ = _merge_atoms(self.second, self.weights)
        return DiscreteDistribution(pts, w / math.fsum(w))

    def is_product(self, atol: float = 1e-12) -> bool:
        _, wa, ia = _merge_atoms(self.first, self.weights)
        _, wb, ib = _merge_atoms(self.second, self.weights)
        table = np.zeros((len(wa), len(wb)))
        np.add.at(table, (ia, ib), self.weights)
        return bool(np.allclose(table, np.outer(wa, wb), rtol=0, atol=atol))


def joint_cost(PA: JointPairDistribution, PB: JointPairDistribution, c1: str = "l1", c2: str = "l1") -> CostMatrix:
    """Additive cost c1(first_A, first_B) + c2(second_A, second_B) over the two supports."""
    return cost_matrix(PA.first, PB.first, c1) + cost_matrix(PA.second, PB.second, c2)


def joint_wasserstein(
    PA: JointPairDistribution, PB: JointPairDistribution, c1: str = "l1", c2: str = "l1"
) -> tuple[float, Coupling]:
    mu = DiscreteDistribution(PA.first, PA.weights)
    nu = DiscreteDistribution(PB.first, PB.weights)
    return exact_wasserstein(mu, nu, joint_cost(PA, PB, c1, c2))


@dataclass(frozen=True)
class DecompositionReport:
    w_c: float
    w_c1: float
    w_c2: float
    gap: float
    independent: bool
    extra: dict = field(default_factory=dict, compare=False)

    CSV_FIELDS = ("W_c", "W_c1", "W_c2", "gap", "independent")

    def csv_row(self) -> list[str]:
        return [repr(self.w_c), repr(self.w_c1), repr(self.w_c2), repr(self.gap), str(self.independent).lower()]

    def text_block(self) -> str:
        return "\n".join(
            [
                f"W_c (joint)        = {self.w_c:.12g}",
                f"W_c1 (first pair)  = {self.w_c1:.12g}",
                f"W_c2 (second pair) = {self.w_c2:.12g}",
                f"gap                = {self.gap:.3e}",
                f"product measures   = {'yes' if self.independent else 'no'}",
            ]
        )


def decomposition_report(
    PA: JointPairDistribution, PB: JointPairDistribution, c1: str = "l1", c2: str = "l1"
) -> DecompositionReport:
    """Compare W_c on the joints with W_c1 + W_c2 on the matched marginals.

    ``PA`` is the law of (X, Y') and ``PB`` of (X', Y); c1 compares X with X'
    and c2 compares Y' with Y.  The gap is always >= 0 and vanishes when both
    joints are product measures.
    """
    w_c, _ = joint_wasserstein(PA, PB, c1, c2)
    px, pxp = PA.first_marginal(), PB.first_marginal()
    pyp, py = PA.second_marginal(), PB.second_marginal()
    w_c1, _ = exact_wasserstein(px, pxp, cost_matrix(px.points, pxp.points, c1), solver="network_simplex")
    w_c2, _ = exact_wasserstein(pyp, py, cost_matrix(pyp.points, py.points, c2), solver="network_simplex")
    independent = PA.is_product() and PB.is_product()
    return DecompositionReport(w_c, w_c1, w_c2, w_c - (w_c1 + w_c2), independent)
