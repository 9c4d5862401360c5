"""Log-domain Sinkhorn for the entropic quadratic transport problem.

Potentials follow the convex convention: with ``K(x, y) = <x, y>``,

    phi(x) = eps * log sum_y exp((<x, y> - psi(y)) / eps) nu(y)
    psi(y) = eps * log sum_x exp((<x, y> - phi(x)) / eps) mu(x)

and the optimal plan is ``exp((<x, y> - phi(x) - psi(y)) / eps) mu(x) nu(y)``.
As ``eps -> 0``, ``phi`` tends to a Kantorovich potential whose gradient is
the Brenier map.

When both measures live on tensor grids the kernel factorizes across
coordinates and every log-sum-exp is done one axis at a time.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure, GridInfo

DEFAULT_EPS_LADDER = (0.5, 0.2, 0.1, 0.05, 0.02)

_DENSE_LIMIT = 30_000_000


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted ``log sum exp`` along ``axis``; all ``-inf`` gives ``-inf``."""
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def _is_tensor(m: DiscreteMeasure) -> bool:
    return m.grid is not None and m.frame is None and len(m.grid.axes) == m.dim


def _lse_separable(x_axes, y_axes, g: np.ndarray, eps: float) -> np.ndarray:
    """``LSE_y(<x, y>/eps + g(y))`` for tensor grids, one axis at a time."""
    G = g.reshape(tuple(a.size for a in y_axes))
    for k, (xa, ya) in enumerate(zip(x_axes, y_axes)):
        G = np.moveaxis(G, k, -1)
        lead = G.shape[:-1]
        flat = G.reshape(-1, 1, ya.size)
        ker = (xa[:, None] * ya[None, :] / eps)[None, :, :]
        G = logsumexp(flat + ker, axis=-1).reshape(lead + (xa.size,))
        G = np.moveaxis(G, -1, k)
    return G.ravel()


class _Kernel:
    """Evaluates ``LSE_y(<x, y>/eps + g(y))`` for a fixed pair of point sets."""

    def __init__(self, x: np.ndarray, y: np.ndarray, eps: float, x_grid=None, y_grid=None):
        self.x, self.y, self.eps = x, y, eps
        self.separable = x_grid is not None and y_grid is not None
        self.x_grid, self.y_grid = x_grid, y_grid
        self.K = None
        if not self.separable and x.shape[0] * y.shape[0] <= _DENSE_LIMIT:
            self.K = (x @ y.T) / eps

    def rows(self, g: np.ndarray) -> np.ndarray:
        if self.separable:
            return _lse_separable(self.x_grid.axes, self.y_grid.axes, g, self.eps)
        if self.K is not None:
            return logsumexp(self.K + g[None, :], axis=1)
        out = np.empty(self.x.shape[0])
        step = max(1, _DENSE_LIMIT // max(1, self.y.shape[0]))
        for s in range(0, self.x.shape[0], step):
            out[s : s + step] = logsumexp(self.x[s : s + step] @ self.y.T / self.eps + g[None, :], axis=1)
        return out

    def transpose(self) -> _Kernel:
        k = _Kernel.__new__(_Kernel)
        k.x, k.y, k.eps = self.y, self.x, self.eps
        k.separable = self.separable
        k.x_grid, k.y_grid = self.y_grid, self.x_grid
        k.K = None if self.K is None else self.K.T
        return k


def _kernel_for(x_measure: DiscreteMeasure, y_measure: DiscreteMeasure, eps: float) -> _Kernel:
    if x_measure.dim >= 2 and _is_tensor(x_measure) and _is_tensor(y_measure):
        return _Kernel(x_measure.points, y_measure.points, eps, x_measure.grid, y_measure.grid)
    return _Kernel(x_measure.points, y_measure.points, eps)


def entropic_legendre(psi, measure: DiscreteMeasure, epsilon: float, x) -> np.ndarray:
    """``eps * log sum_y exp((<x, y> - psi(y)) / eps) w(y)`` at query points ``x``.

    ``x`` has shape (k, n) or (k,) in 1D. The log-sum-exp is max-shifted;
    points where every term vanishes give ``-inf`` with a warning.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    xq = np.asarray(x, dtype=float)
    scalar = xq.ndim == 0
    xq = np.atleast_1d(xq)
    if xq.ndim == 1:
        xq = xq[:, None] if measure.dim == 1 else xq[None, :]
    g = -np.asarray(psi, dtype=float) / epsilon + measure.log_weights
    out = epsilon * _Kernel(xq, measure.points, epsilon).rows(g)
    if np.any(np.isneginf(out)):
        warnings.warn("entropic Legendre transform is -inf at some points", RuntimeWarning)
    return float(out[0]) if scalar else out


@dataclass(frozen=True, eq=False)
class EntropicSolution:
    mu: DiscreteMeasure
    nu: DiscreteMeasure
    epsilon: float
    phi: np.ndarray
    psi: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    tol: float

    def phi_at(self, x) -> np.ndarray:
        """Evaluate ``phi_eps`` anywhere through its defining transform."""
        return entropic_legendre(self.psi, self.nu, self.epsilon, x)

    def psi_at(self, y) -> np.ndarray:
        return entropic_legendre(self.phi, self.mu, self.epsilon, y)

    def phi_on_grid(self, grid: GridInfo) -> np.ndarray:
        """``phi_eps`` on a tensor grid, using the separable kernel when possible."""
        g = -self.psi / self.epsilon + self.nu.log_weights
        if _is_tensor(self.nu) and len(grid.axes) == self.nu.dim:
            vals = _lse_separable(grid.axes, self.nu.grid.axes, g, self.epsilon)
        else:
            mesh = np.meshgrid(*grid.axes, indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
            vals = _Kernel(pts, self.nu.points, self.epsilon).rows(g)
        return (self.epsilon * vals).reshape(grid.shape)


def sinkhorn(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    epsilon: float,
    tol: float | None = None,
    max_iter: int = 100_000,
    psi0: np.ndarray | None = None,
) -> EntropicSolution:
    """Alternate the two potential updates until ``phi`` stops moving.

    Stops when the sup-norm change of ``phi`` over one sweep is at most
    ``tol`` (default ``1e-9 * epsilon``) or after ``max_iter`` sweeps. The
    gauge is fixed by setting ``phi = 0`` at the atom of ``mu`` nearest to
    its barycenter; ``psi`` absorbs the opposite shift. ``psi0`` warm-starts
    the iteration, e.g. from the solution at a larger ``epsilon``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if mu.dim != nu.dim:
        raise ValueError("mu and nu live in different dimensions")
    tol = 1e-9 * epsilon if tol is None else float(tol)
    if tol <= 0:
        raise ValueError("tol must be positive")
    kxy = _kernel_for(mu, nu, epsilon)
    kyx = kxy.transpose()
    lmu, lnu = mu.log_weights, nu.log_weights
    phi = np.zeros(mu.size)
    psi = np.zeros(nu.size) if psi0 is None else np.array(psi0, dtype=float).ravel()
    if psi.size != nu.size:
        raise ValueError("psi0 has the wrong length")
    res = np.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        phi_new = epsilon * kxy.rows(-psi / epsilon + lnu)
        psi = epsilon * kyx.rows(-phi_new / epsilon + lmu)
        res = float(np.max(np.abs(phi_new - phi)))
        phi = phi_new
        if res <= tol:
            converged = True
            break
    anchor = int(np.argmin(np.sum((mu.points - mu.mean()) ** 2, axis=1)))
    shift = phi[anchor]
    phi = phi - shift
    psi = psi + shift
    return EntropicSolution(mu, nu, float(epsilon), phi, psi, it, res, converged, tol)


def fixed_point_residual(sol: EntropicSolution) -> float:
    """Sup-norm defect of both defining equations at the stored potentials."""
    eps = sol.epsilon
    k = _kernel_for(sol.mu, sol.nu, eps)
    r1 = np.max(np.abs(sol.phi - eps * k.rows(-sol.psi / eps + sol.nu.log_weights)))
    r2 = np.max(np.abs(sol.psi - eps * k.transpose().rows(-sol.phi / eps + sol.mu.log_weights)))
    return float(max(r1, r2))


def _log_plan(sol: EntropicSolution) -> np.ndarray:
    if sol.mu.size * sol.nu.size > _DENSE_LIMIT:
        raise MemoryError("plan too large to materialize")
    eps = sol.epsilon
    return (
        (sol.mu.points @ sol.nu.points.T - sol.phi[:, None] - sol.psi[None, :]) / eps
        + sol.mu.log_weights[:, None]
        + sol.nu.log_weights[None, :]
    )


def plan(sol: EntropicSolution) -> np.ndarray:
    """Dense coupling matrix assembled from log-domain entries."""
    return np.exp(_log_plan(sol))


def barycentric_map(sol: EntropicSolution, x=None) -> np.ndarray:
    """Conditional mean ``E[Y | X = x]`` under the entropic plan.

    Defaults to the atoms of ``mu``. Any other query point uses the
    conditional law ``exp((<x, y> - psi(y)) / eps) nu(y)`` normalized.
    """
    eps = sol.epsilon
    xq = sol.mu.points if x is None else np.asarray(x, dtype=float)
    if xq.ndim == 1:
        xq = xq[:, None] if sol.nu.dim == 1 else xq[None, :]
    g = -sol.psi / eps + sol.nu.log_weights
    out = np.empty((xq.shape[0], sol.nu.dim))
    step = max(1, _DENSE_LIMIT // max(1, sol.nu.size))
    for s in range(0, xq.shape[0], step):
        L = xq[s : s + step] @ sol.nu.points.T / eps + g[None, :]
        L = L - L.max(axis=1, keepdims=True)
        W = np.exp(L)
        mass = W.sum(axis=1, keepdims=True)
        if np.any(mass == 0):
            warnings.warn("zero conditional mass at some query points", RuntimeWarning)
        out[s : s + step] = (W @ sol.nu.points) / mass
    return out[:, 0] if sol.nu.dim == 1 else out


def entropic_cost(sol: EntropicSolution) -> float:
    """Transport cost ``sum |x-y|^2/2 pi`` plus ``eps`` times the relative
    entropy of the plan against ``mu x nu``."""
    lp = _log_plan(sol)
    P = np.exp(lp)
    X, Y = sol.mu.points, sol.nu.points
    sq = 0.5 * (np.sum(X**2, 1)[:, None] + np.sum(Y**2, 1)[None, :] - 2.0 * X @ Y.T)
    logratio = lp - sol.mu.log_weights[:, None] - sol.nu.log_weights[None, :]
    ent = np.where(P > 0, P * logratio, 0.0)
    return float(np.sum(P * sq) + sol.epsilon * np.sum(ent))


def solution_to_dict(sol: EntropicSolution) -> dict:
    return {
        "epsilon": sol.epsilon,
        "grid": {"mu": sol.mu.points.tolist(), "nu": sol.nu.points.tolist()},
        "phi": sol.phi.tolist(),
        "psi": sol.psi.tolist(),
        "residual": sol.final_residual,
        "iterations": sol.iterations,
        "converged": sol.converged,
    }


def dump_solution(sol: EntropicSolution, path) -> None:
    with open(path, "w") as fh:
        json.dump(solution_to_dict(sol), fh)


__all__ = [
    "DEFAULT_EPS_LADDER",
    "EntropicSolution",
    "entropic_legendre",
    "sinkhorn",
    "fixed_point_residual",
    "plan",
    "barycentric_map",
    "entropic_cost",
    "solution_to_dict",
    "dump_solution",
]
