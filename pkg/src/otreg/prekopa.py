"""Prékopa–Leindler inequalities on one-dimensional grids.

The quantitative form compares ``sum_i lambda_i log int e^{f_i}`` with
``log int e^h`` plus a correction integral over the multimarginal coupling
of the probability measures ``nu_i ~ e^{f_i}``. In one dimension the
coupling that minimizes the barycentric spread is comonotone: every
marginal is driven by one uniform variable through its quantile function.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def _log_trapezoid(logy: np.ndarray, x: np.ndarray) -> float:
    top = float(np.max(logy))
    if not math.isfinite(top):
        return -math.inf
    return top + math.log(_trapezoid(np.exp(logy - top), x))


@dataclass(frozen=True, eq=False)
class PLInstance:
    """Log-density tables ``f_i`` and ``h`` on a common uniform grid."""

    grid: np.ndarray
    lambdas: np.ndarray
    f_tables: np.ndarray
    h_table: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.grid, dtype=float).ravel()
        lam = np.asarray(self.lambdas, dtype=float).ravel()
        F = np.atleast_2d(np.asarray(self.f_tables, dtype=float))
        h = np.asarray(self.h_table, dtype=float).ravel()
        if z.size < 4 or np.any(np.diff(z) <= 0):
            raise ValueError("grid must be increasing with at least 4 points")
        dz = np.diff(z)
        if np.any(np.abs(dz - dz[0]) > 1e-9 * dz[0]):
            raise ValueError("grid must be uniform")
        if F.shape != (lam.size, z.size) or h.size != z.size:
            raise ValueError("table shapes do not match the grid")
        if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-12:
            raise ValueError("lambdas must be non-negative and sum to 1")
        if np.any(np.isnan(F)) or np.any(F == np.inf) or np.any(np.isnan(h)) or np.any(h == np.inf):
            raise ValueError("tables must be finite or -inf")
        for row in F:
            if not np.any(np.isfinite(row)):
                raise ValueError("every f_i needs positive mass")
        for a in (z, lam, F, h):
            a.setflags(write=False)
        object.__setattr__(self, "grid", z)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "f_tables", F)
        object.__setattr__(self, "h_table", h)

    @property
    def n_marginals(self) -> int:
        return self.lambdas.size

    def shifted(self, i: int, c: float) -> PLInstance:
        F = np.array(self.f_tables)
        F[i] = F[i] + c
        return PLInstance(self.grid, self.lambdas, F, self.h_table)

    def to_dict(self) -> dict:
        def enc(a):
            return [x if math.isfinite(x) else "-inf" for x in np.asarray(a, dtype=float).tolist()]

        return {
            "grid": self.grid.tolist(),
            "lambdas": self.lambdas.tolist(),
            "f_tables": [enc(r) for r in self.f_tables],
            "h_table": enc(self.h_table),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PLInstance:
        def dec(a):
            return np.array([-math.inf if x == "-inf" else float(x) for x in a])

        return cls(
            np.asarray(d["grid"], dtype=float),
            np.asarray(d["lambdas"], dtype=float),
            np.array([dec(r) for r in d["f_tables"]]),
            dec(d["h_table"]),
        )


def save_instance(inst: PLInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(inst.to_dict(), fh)


def load_instance(path) -> PLInstance:
    with open(path) as fh:
        return PLInstance.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# interpolation of log-densities


def interp_table(grid: np.ndarray, vals: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Local cubic interpolation on a uniform grid, linear in the end cells.

    Stencils touching ``-inf`` give ``-inf``.
    """
    z0, dz = grid[0], grid[1] - grid[0]
    n = grid.size
    s = (np.asarray(x, dtype=float) - z0) / dz
    i = np.clip(np.floor(s).astype(int), 0, n - 2)
    u = s - i
    cubic = (i >= 1) & (i <= n - 3)
    ic = np.where(cubic, i, 1)
    w = np.stack(
        [
            -u * (u - 1) * (u - 2) / 6.0,
            (u + 1) * (u - 1) * (u - 2) / 2.0,
            -(u + 1) * u * (u - 2) / 2.0,
            (u + 1) * u * (u - 1) / 6.0,
        ]
    )
    stencil = np.stack([vals[ic - 1], vals[ic], vals[ic + 1], vals[np.minimum(ic + 2, n - 1)]])
    with np.errstate(invalid="ignore"):
        cub = np.sum(w * stencil, axis=0)
        lin = (1 - u) * vals[i] + u * vals[i + 1]
    bad = np.any(np.isneginf(stencil), axis=0)
    cub = np.where(bad, -np.inf, cub)
    lin = np.where(np.isneginf(vals[i]) | np.isneginf(vals[i + 1]), -np.inf, lin)
    return np.where(cubic, cub, lin)


# ---------------------------------------------------------------------------
# comonotone couplings


def _grid_cdf(grid: np.ndarray, logf: np.ndarray) -> np.ndarray:
    """Node values of the CDF of ``e^f`` by cumulative trapezoid."""
    top = np.max(logf)
    d = np.exp(logf - top)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(grid))])
    cum /= cum[-1]
    cum[-1] = 1.0
    return cum


@dataclass(frozen=True, eq=False)
class ComonotoneCoupling:
    """Quantile functions of several 1D laws on a common partition of (0, 1).

    Each quantile ``Q_i`` is linear on every piece ``[u_k, u_{k+1}]``;
    ``start[i, k]`` and ``end[i, k]`` are its values at the piece ends and
    ``slope[i, k]`` its derivative there (cell width over cell mass).
    """

    u: np.ndarray
    start: np.ndarray
    end: np.ndarray
    slope: np.ndarray

    def at(self, k: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Points ``Q_i`` at relative position ``s`` inside pieces ``k``."""
        return self.start[:, k] + s * (self.end[:, k] - self.start[:, k])

    def pieces(self) -> np.ndarray:
        return np.diff(self.u)

    def cost(self, lambdas) -> float:
        """``int sum_{i != j} lambda_i lambda_j |Q_i - Q_j|^2 du`` (exact)."""
        lam = np.asarray(lambdas, dtype=float)
        du = self.pieces()
        total = 0.0
        for i, j in itertools.permutations(range(lam.size), 2):
            a = self.start[i] - self.start[j]
            b = self.end[i] - self.end[j]
            total += lam[i] * lam[j] * float(np.sum(du * (a * a + a * b + b * b) / 3.0))
        return total

    def cell_masses(self, i: int, edges: np.ndarray) -> np.ndarray:
        """Mass that marginal ``i`` puts in each cell ``[edges_c, edges_{c+1}]``."""
        mid = 0.5 * (self.start[i] + self.end[i])
        c = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, edges.size - 2)
        return np.bincount(c, weights=self.pieces(), minlength=edges.size - 1)


def barycentric_coupling(instance: PLInstance) -> ComonotoneCoupling:
    """Comonotone coupling of the laws ``nu_i ~ e^{f_i}``.

    Each ``nu_i`` has the piecewise-linear CDF through the cumulative
    trapezoid values at the grid nodes. The partition of (0, 1) merges the
    CDF node values of all marginals, so every quantile is linear on each
    piece. One-dimensional with at most three marginals.
    """
    N = instance.n_marginals
    if N > 3:
        raise ValueError("barycentric coupling is supported for at most 3 marginals")
    z = instance.grid
    cdfs = [_grid_cdf(z, f) for f in instance.f_tables]
    u = np.unique(np.concatenate(cdfs))
    du = np.diff(u)
    keep = du > 0
    u0, u1 = u[:-1][keep], u[1:][keep]
    start = np.empty((N, u0.size))
    end = np.empty((N, u0.size))
    slope = np.empty((N, u0.size))
    for i, C in enumerate(cdfs):
        # locate by the left end: a midpoint next to u = 1 can round up to 1
        c = np.clip(np.searchsorted(C, u0, side="right") - 1, 0, z.size - 2)
        span = C[c + 1] - C[c]
        zc, dz = z[c], z[c + 1] - z[c]
        start[i] = zc + (u0 - C[c]) / span * dz
        end[i] = zc + (u1 - C[c]) / span * dz
        slope[i] = dz / span
    return ComonotoneCoupling(np.concatenate([u0, u1[-1:]]), start, end, slope)


def comonotone_plan(a, b) -> np.ndarray:
    """North-west corner plan between weight vectors on sorted atoms."""
    a = np.asarray(a, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    if abs(a.sum() - b.sum()) > 1e-12 * max(1.0, a.sum()):
        raise ValueError("marginals must have equal mass")
    P = np.zeros((a.size, b.size))
    i = j = 0
    while i < a.size and j < b.size:
        q = min(a[i], b[j])
        P[i, j] += q
        a[i] -= q
        b[j] -= q
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return P


def pair_cost_matrix(x, y, lambdas=(0.5, 0.5)) -> np.ndarray:
    """``sum_{i != j} lambda_i lambda_j |z_i - z_j|^2`` for two marginals."""
    l1, l2 = lambdas
    return 2.0 * l1 * l2 * (np.asarray(x)[:, None] - np.asarray(y)[None, :]) ** 2


def lp_vertex_optimum(a, b, C) -> tuple[float, np.ndarray]:
    """Minimum of ``<C, P>`` over the transport polytope by visiting vertices.

    Equal uniform marginals use the permutation matrices (the vertices of
    the Birkhoff polytope). Otherwise every spanning tree of the complete
    bipartite graph is tried and kept when its tree flow is non-negative;
    that is only practical for a handful of atoms per side.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = a.size, b.size
    if m == n and np.allclose(a, 1.0 / m, rtol=0, atol=1e-15) and np.allclose(b, 1.0 / n, rtol=0, atol=1e-15):
        if m > 9:
            raise ValueError("permutation enumeration limited to 9 atoms")
        best, arg = math.inf, None
        rows = np.arange(m)
        for p in itertools.permutations(range(m)):
            v = float(C[rows, list(p)].sum()) / m
            if v < best:
                best, arg = v, p
        P = np.zeros((m, m))
        P[rows, list(arg)] = 1.0 / m
        return best, P
    if m * n > 20:
        raise ValueError("spanning-tree enumeration limited to m * n <= 20")
    cells = [(i, j) for i in range(m) for j in range(n)]
    best, bestP = math.inf, None
    for combo in itertools.combinations(range(len(cells)), m + n - 1):
        edges = [cells[k] for k in combo]
        if not _is_spanning_tree(edges, m, n):
            continue
        flow = _solve_tree(edges, a, b)
        if flow is None or np.any(flow < -1e-14):
            continue
        v = float(sum(C[i, j] * f for (i, j), f in zip(edges, flow)))
        if v < best:
            best = v
            bestP = np.zeros((m, n))
            for (i, j), f in zip(edges, flow):
                bestP[i, j] = f
    return best, bestP


def _is_spanning_tree(edges, m, n) -> bool:
    parent = list(range(m + n))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i, j in edges:
        ri, rj = find(i), find(m + j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def _solve_tree(edges, a, b):
    """Flow on a spanning tree meeting row sums ``a`` and column sums ``b``."""
    m = a.size
    rem = np.concatenate([a, b]).astype(float)
    adj: dict[int, list] = {}
    for e, (i, j) in enumerate(edges):
        adj.setdefault(i, []).append((m + j, e))
        adj.setdefault(m + j, []).append((i, e))
    flow = np.zeros(len(edges))
    deg = {v: len(adj[v]) for v in adj}
    done = np.zeros(len(edges), dtype=bool)
    stack = [v for v, d in deg.items() if d == 1]
    while stack:
        v = stack.pop()
        if deg[v] != 1:
            continue
        w, e = next((w, e) for w, e in adj[v] if not done[e])
        flow[e] = rem[v]
        rem[w] -= rem[v]
        rem[v] = 0.0
        done[e] = True
        deg[v] -= 1
        deg[w] -= 1
        if deg[w] == 1:
            stack.append(w)
    if not np.all(done) or np.max(np.abs(rem)) > 1e-12:
        return None
    return flow


# ---------------------------------------------------------------------------
# verifiers


@dataclass(frozen=True)
class QPLResult:
    slack: float
    lhs: float
    rhs: float
    correction: float
    flags: tuple = ()


def verify_qpl(instance: PLInstance) -> QPLResult:
    """``slack = RHS - LHS`` for the quantitative Prékopa–Leindler inequality.

    ``LHS = sum_i lambda_i log int e^{f_i}`` and
    ``RHS = log int e^h + int (sum_i lambda_i f_i(z_i) - h(sum_i lambda_i z_i)) dpi``
    with ``pi`` the comonotone coupling. Integrals over the grid use the
    trapezoid rule; the coupling integral uses 4-point Gauss–Legendre on
    every piece of the quantile partition, with ``f_i`` and ``h``
    interpolated cubically. If ``h`` is ``-inf`` at a barycenter reached by
    the coupling the right side is ``+inf`` and flagged.
    """
    z, lam = instance.grid, instance.lambdas
    lhs = float(sum(l * _log_trapezoid(f, z) for l, f in zip(lam, instance.f_tables)))
    log_h = _log_trapezoid(instance.h_table, z)
    cp = barycentric_coupling(instance)
    du = cp.pieces()
    s = 0.5 * (_GL_NODES + 1.0)
    total = 0.0
    flags: list = []
    for sj, wj in zip(s, _GL_WEIGHTS):
        k = np.arange(du.size)
        pts = cp.at(k, np.full(du.size, sj))
        fi = np.array([interp_table(z, instance.f_tables[i], pts[i]) for i in range(lam.size)])
        bary = lam @ pts
        hb = interp_table(z, instance.h_table, bary)
        if np.any(np.isneginf(hb) & (du > 0)):
            flags.append("h is -inf at a barycenter")
            return QPLResult(math.inf, lhs, math.inf, math.inf, tuple(flags))
        with np.errstate(invalid="ignore"):
            integrand = np.sum(lam[:, None] * np.where(lam[:, None] > 0, fi, 0.0), axis=0) - hb
        integrand = np.where(du > 0, integrand, 0.0)
        total += 0.5 * wj * float(np.sum(du * integrand))
    if not math.isfinite(log_h):
        flags.append("h has no mass")
    rhs = log_h + total
    return QPLResult(rhs - lhs, lhs, rhs, total, tuple(flags))


@dataclass(frozen=True)
class ClassicalPLResult:
    slack: float
    hypothesis_slack: float
    hypothesis_ok: bool
    lhs: float
    rhs: float


def sup_convolution(grid, f0, f1, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Smallest ``h`` with ``h((1-t) y0 + t y1) >= f0(y0)^{1-t} f1(y1)^t`` on
    all grid pairs; returned on the sorted set of reachable points.

    Useful for ``t`` with a small denominator (1/2, 1/3, ...), where many
    pairs land on each reachable point. For other ``t`` nearly every point
    is hit by a single pair and the table badly underestimates the true
    sup-convolution.
    """
    y = np.asarray(grid, dtype=float)
    Z = (1 - t) * y[:, None] + t * y[None, :]
    with np.errstate(divide="ignore"):
        V = (1 - t) * np.log(np.asarray(f0))[:, None] + t * np.log(np.asarray(f1))[None, :]
    key = np.round(Z.ravel() / (y[1] - y[0]) * 1e6).astype(np.int64)
    order = np.argsort(key, kind="stable")
    k_sorted = key[order]
    v_sorted = V.ravel()[order]
    z_sorted = Z.ravel()[order]
    first = np.concatenate([[True], k_sorted[1:] != k_sorted[:-1]])
    starts = np.flatnonzero(first)
    hz = z_sorted[starts]
    hv = np.maximum.reduceat(v_sorted, starts)
    return hz, np.exp(hv)


def verify_classical_pl(grid, f0, f1, h, t: float) -> ClassicalPLResult:
    """Prékopa–Leindler ``int h >= (int f0)^{1-t} (int f1)^t`` on a grid.

    ``f0`` and ``f1`` are non-negative values on the uniform ``grid``; ``h``
    is a callable or a pair ``(z, values)``. The hypothesis
    ``h((1-t) y0 + t y1) >= f0(y0)^{1-t} f1(y1)^t`` is first checked on all
    grid pairs (tables are interpolated linearly); when it fails the result
    is marked ``hypothesis_ok=False`` rather than counted as a violation.
    """
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    y = np.asarray(grid, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    if np.any(f0 < 0) or np.any(f1 < 0):
        raise ValueError("functions must be non-negative")
    Z = (1 - t) * y[:, None] + t * y[None, :]
    target = f0[:, None] ** (1 - t) * f1[None, :] ** t
    if callable(h):
        hZ = np.asarray(h(Z), dtype=float)
        hz = np.linspace(y[0], y[-1], 4 * y.size - 3)
        hv = np.asarray(h(hz), dtype=float)
    else:
        hz, hv = (np.asarray(a, dtype=float) for a in h)
        hZ = np.interp(Z, hz, hv, left=0.0, right=0.0)
    scale = max(1e-300, float(target.max()))
    hyp = float(np.min(hZ - target)) / scale
    ok = hyp >= -1e-12
    lhs = _trapezoid(hv, hz)
    rhs = _trapezoid(f0, y) ** (1 - t) * _trapezoid(f1, y) ** t
    return ClassicalPLResult(lhs - rhs, hyp, ok, lhs, rhs)


def grid_entropy(masses: np.ndarray, cells: np.ndarray) -> float:
    """``sum p log(p / cell)``, the entropy of the piecewise-constant density."""
    p = np.asarray(masses, dtype=float)
    c = np.asarray(cells, dtype=float)
    keep = p > 0
    return float(np.sum(p[keep] * np.log(p[keep] / c[keep])))


def entropy_convexity_slack(instance: PLInstance) -> tuple[float, float, list]:
    """``sum_i lambda_i H(nu_i) - H(nu_bar)`` with ``nu_bar`` the law of the
    barycenter under the comonotone coupling.

    Returns the slack, ``H(nu_bar)`` and the list of ``H(nu_i)``.
    """
    z = instance.grid
    cells = np.diff(z)
    cp = barycentric_coupling(instance)
    Hs = []
    for i in range(instance.n_marginals):
        Hs.append(grid_entropy(cp.cell_masses(i, z), cells))
    lam = instance.lambdas
    du = cp.pieces()
    H_bar = float(-np.sum(du * np.log(lam @ cp.slope)))
    return float(lam @ np.array(Hs)) - H_bar, H_bar, Hs


__all__ = [
    "PLInstance",
    "save_instance",
    "load_instance",
    "interp_table",
    "ComonotoneCoupling",
    "barycentric_coupling",
    "comonotone_plan",
    "pair_cost_matrix",
    "lp_vertex_optimum",
    "QPLResult",
    "verify_qpl",
    "ClassicalPLResult",
    "sup_convolution",
    "verify_classical_pl",
    "grid_entropy",
    "entropy_convexity_slack",
]
