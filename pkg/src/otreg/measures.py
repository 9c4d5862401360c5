"""Potentials ``V`` with declared moduli, and their grid discretizations.

Measures are always of the form ``exp(-V(x)) dx / Z``. The catalogue in
:func:`builtin` attaches to each potential the smoothness and convexity
moduli that can be proved for it, so that verifiers can compare empirical
moduli against them.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import moduli as md

Array = np.ndarray


@dataclass(frozen=True)
class Support:
    """Where a potential is finite.

    ``kind`` is ``"full"``, ``"box"`` (with ``lower``/``upper``) or
    ``"affine"`` (with ``base`` and an orthonormal ``frame`` whose columns
    span the direction space).
    """

    kind: str = "full"
    lower: Array | None = None
    upper: Array | None = None
    base: Array | None = None
    frame: Array | None = None

    def __post_init__(self):
        if self.kind not in ("full", "box", "affine"):
            raise ValueError(f"unknown support kind {self.kind!r}")
        if self.kind == "affine":
            F = np.atleast_2d(np.asarray(self.frame, dtype=float))
            if F.shape[0] < F.shape[1]:
                F = F.T
            if not np.allclose(F.T @ F, np.eye(F.shape[1]), atol=1e-10):
                raise ValueError("affine frame must be orthonormal")
            object.__setattr__(self, "frame", F)
            base = np.zeros(F.shape[0]) if self.base is None else np.asarray(self.base, dtype=float)
            object.__setattr__(self, "base", base)


@dataclass(frozen=True)
class PotentialSpec:
    """A potential ``V`` on R^n with optional derivatives and declared moduli.

    ``value``, ``gradient`` and ``hessian`` act on arrays of shape
    ``(..., n)``. ``center`` and ``scale`` are rough location/spread
    parameters used to pick a default discretization box.
    """

    name: str
    dim: int
    value: Callable[[Array], Array]
    gradient: Callable[[Array], Array] | None = None
    hessian: Callable[[Array], Array] | None = None
    support: Support = field(default_factory=Support)
    declared_sigma: object | None = None
    declared_rho: object | None = None
    params: dict = field(default_factory=dict)
    center: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.hessian is not None and self.gradient is None:
            raise ValueError("a hessian requires a gradient")

    def __call__(self, x) -> Array:
        return self.value(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class GridInfo:
    """Tensor grid of cell midpoints: one axis array per coordinate."""

    axes: tuple
    lower: Array
    upper: Array

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def cell(self) -> Array:
        return (self.upper - self.lower) / np.asarray(self.shape, dtype=float)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms in R^n.

    ``points`` has shape (N, n); ``weights`` are non-negative and sum to 1.
    ``log_weights`` are kept alongside so that Sinkhorn never takes the log
    of an underflowed weight. ``grid`` describes the originating tensor grid
    (in frame coordinates when ``frame`` is set).
    """

    points: Array
    weights: Array
    log_weights: Array | None = None
    grid: GridInfo | None = None
    frame: Array | None = None
    base: Array | None = None
    tail_flag: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise ValueError("points and weights disagree in length")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        lw = self.log_weights
        if lw is None:
            with np.errstate(divide="ignore"):
                lw = np.log(w)
        lw = np.asarray(lw, dtype=float).ravel()
        for a in (pts, w, lw):
            a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "log_weights", lw)

    @classmethod
    def from_log_weights(cls, points, log_weights, **kw) -> DiscreteMeasure:
        lw = np.asarray(log_weights, dtype=float).ravel()
        lw = lw - logsumexp(lw)
        w = np.exp(lw)
        w = w / w.sum()
        return cls(points, w, log_weights=lw, **kw)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def mean(self) -> Array:
        return self.weights @ self.points

    def covariance(self) -> Array:
        c = self.points - self.mean()
        return (c * self.weights[:, None]).T @ c

    def coords(self) -> Array:
        """Coordinates in the originating frame (the points themselves if none)."""
        if self.frame is None:
            return self.points
        return (self.points - self.base) @ self.frame


def _box(box, dim: int, center: float, scale: float):
    if box is None:
        half = abs(center) + 8.0 * scale
        lo, hi = np.full(dim, -half), np.full(dim, half)
    else:
        b = np.asarray(box, dtype=float)
        if b.ndim == 1:
            lo, hi = np.full(dim, b[0]), np.full(dim, b[1])
        else:
            lo, hi = b[:, 0], b[:, 1]
    if np.any(hi <= lo):
        raise ValueError("empty box")
    return lo, hi


def discretize(spec: PotentialSpec, box=None, points_per_axis: int = 256) -> DiscreteMeasure:
    """Midpoint-rule discretization of ``exp(-V)`` on a tensor grid.

    ``box`` is ``(lo, hi)`` for every axis or an array of per-axis pairs;
    by default ``[-(|center| + 8 scale), |center| + 8 scale]``. For affine
    supports the grid lives in frame coordinates and is pushed forward.
    The returned measure has ``tail_flag`` set when a boundary cell carries
    more than 1e-10 of the largest weight.
    """
    affine = spec.support.kind == "affine"
    k = spec.support.frame.shape[1] if affine else spec.dim
    lo, hi = _box(box, k, spec.center, spec.scale)
    n = int(points_per_axis)
    if n < 1:
        raise ValueError("points_per_axis must be positive")
    h = (hi - lo) / n
    axes = tuple(lo[i] + h[i] * (np.arange(n) + 0.5) for i in range(k))
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    if affine:
        F, base = spec.support.frame, spec.support.base
        pts = base + coords @ F.T
    else:
        pts = coords
    with np.errstate(over="ignore", invalid="ignore"):
        lw = -np.asarray(spec.value(pts), dtype=float) + float(np.sum(np.log(h)))
    lw = np.where(np.isnan(lw), -np.inf, lw)
    if not np.any(np.isfinite(lw)):
        raise ValueError("all weights underflow on this box; shrink or recenter it")
    top = lw.max()
    lw_grid = lw.reshape((n,) * k)
    edge = np.zeros(lw_grid.shape, dtype=bool)
    for ax in range(k):
        sl = [slice(None)] * k
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    tail = bool(np.any(lw_grid[edge] - top > math.log(1e-10)))
    grid = GridInfo(axes, lo, hi)
    return DiscreteMeasure.from_log_weights(
        pts,
        lw,
        grid=grid,
        frame=spec.support.frame if affine else None,
        base=spec.support.base if affine else None,
        tail_flag=tail,
    )


# ---------------------------------------------------------------------------
# 1D cumulative distribution and quantile


def _cell_edges(m: DiscreteMeasure) -> Array:
    x = m.coords()[:, 0]
    if m.grid is not None and len(m.grid.axes) == 1:
        n = x.size
        return m.grid.lower[0] + m.grid.cell[0] * np.arange(n + 1)
    if x.size == 1:
        return np.array([x[0] - 0.5, x[0] + 0.5])
    mid = 0.5 * (x[1:] + x[:-1])
    return np.concatenate([[x[0] - (mid[0] - x[0])], mid, [x[-1] + (x[-1] - mid[-1])]])


def cdf_and_quantile(m: DiscreteMeasure, mode: str = "cell"):
    """Continuous CDF and its generalized inverse for a 1D measure.

    ``mode="cell"`` spreads each atom uniformly over its cell, so the CDF is
    piecewise linear. ``mode="node"`` reads ``w_i / cell_i`` as density
    samples at the atoms and interpolates the density linearly between
    them, giving a piecewise-quadratic CDF on ``[x_0, x_{N-1}]``; this is
    second-order accurate for smooth densities and is what the 1D transport
    maps use.
    """
    if m.dim != 1 and (m.frame is None or m.frame.shape[1] != 1):
        raise ValueError("cdf_and_quantile needs a one-dimensional measure")
    x = m.coords()[:, 0]
    if np.any(np.diff(x) <= 0):
        order = np.argsort(x)
        x = x[order]
        w = m.weights[order]
    else:
        w = m.weights
    if mode == "cell":
        edges = _cell_edges(m)
        cum = np.concatenate([[0.0], np.cumsum(w)])
        cum[-1] = 1.0

        def cdf(z):
            return np.interp(z, edges, cum, left=0.0, right=1.0)

        def quantile(u):
            u = np.asarray(u, dtype=float)
            # right end of flat stretches: sup{z : F(z) <= u} would jump; use
            # the left-continuous inverse inf{z : F(z) >= u}
            i = np.clip(np.searchsorted(cum, u, side="left"), 1, cum.size - 1)
            c0, c1 = cum[i - 1], cum[i]
            frac = np.where(c1 > c0, (u - c0) / np.where(c1 > c0, c1 - c0, 1.0), 0.0)
            return edges[i - 1] + frac * (edges[i] - edges[i - 1])

        return cdf, quantile
    if mode != "node":
        raise ValueError(f"unknown mode {mode!r}")
    if x.size < 2:
        raise ValueError("node mode needs at least two atoms")
    edges = _cell_edges(m)
    dens = w / np.diff(edges)
    dx = np.diff(x)
    seg = 0.5 * (dens[1:] + dens[:-1]) * dx
    total = seg.sum()
    dens = dens / total
    cum = np.concatenate([[0.0], np.cumsum(seg / total)])
    cum[-1] = 1.0
    slope = np.diff(dens) / dx

    def cdf(z):
        z = np.asarray(z, dtype=float)
        i = np.clip(np.searchsorted(x, z, side="right") - 1, 0, x.size - 2)
        s = np.clip(z - x[i], 0.0, dx[i])
        val = cum[i] + dens[i] * s + 0.5 * slope[i] * s**2
        return np.clip(np.where(z <= x[0], 0.0, np.where(z >= x[-1], 1.0, val)), 0.0, 1.0)

    def quantile(u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        i = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, x.size - 2)
        c = u - cum[i]
        p0, a = dens[i], slope[i]
        # positive root of a s^2/2 + p0 s - c = 0 in cancellation-free form
        disc = np.sqrt(np.maximum(p0**2 + 2.0 * a * c, 0.0))
        denom = p0 + disc
        s = np.where(denom > 0, 2.0 * c / np.where(denom > 0, denom, 1.0), 0.0)
        return x[i] + np.clip(s, 0.0, dx[i])

    return cdf, quantile


def write_csv(m: DiscreteMeasure, path) -> None:
    """Dump atoms and weights with columns ``x_1..x_n, weight``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x_{i + 1}" for i in range(m.dim)] + ["weight"])
        for p, w in zip(m.points, m.weights):
            wr.writerow([repr(float(c)) for c in p] + [repr(float(w))])


# ---------------------------------------------------------------------------
# catalogue


def _sq(x):
    return np.sum(x * x, axis=-1)


def _gaussian(cov=1.0, mean=0.0, dim=None) -> PotentialSpec:
    S = np.atleast_2d(np.asarray(cov, dtype=float))
    if dim is not None and S.shape == (1, 1) and dim > 1:
        S = S[0, 0] * np.eye(dim)
    n = S.shape[0]
    P = np.linalg.inv(S)
    P = 0.5 * (P + P.T)
    m = np.broadcast_to(np.asarray(mean, dtype=float), (n,)).copy()
    lam = np.linalg.eigvalsh(P)
    if lam[0] <= 0:
        raise ValueError("covariance must be positive definite")

    def value(x):
        c = x - m
        return 0.5 * np.einsum("...i,ij,...j->...", c, P, c)

    def grad(x):
        return (x - m) @ P

    def hess(x):
        return np.broadcast_to(P, np.shape(x)[:-1] + (n, n))

    return PotentialSpec(
        "gaussian",
        n,
        value,
        grad,
        hess,
        declared_sigma=md.Quadratic(float(lam[-1])),
        declared_rho=md.Quadratic(float(lam[0])),
        params={"cov": S, "mean": m, "precision": P, "alpha": float(lam[-1]), "beta": float(lam[0])},
        center=float(np.max(np.abs(m))),
        scale=float(np.sqrt(np.linalg.eigvalsh(S)[-1])),
    )


def _power_norm(p: float, alpha: float = 1.0, dim: int = 1, c_p: float | None = None) -> PotentialSpec:
    if p <= 1:
        raise ValueError("power_norm needs p > 1")

    def value(x):
        return alpha * np.sum(np.abs(x) ** p, axis=-1) / p

    def grad(x):
        return alpha * np.sign(x) * np.abs(x) ** (p - 1)

    sigma = rho = None
    if p <= 2:
        ps = p / (p - 1.0)
        c = 2.0 ** (1.0 - ps) if c_p is None else c_p
        sigma = md.PowerNorm(alpha * c ** (1.0 - p) / p, p, p, dim)
    if p >= 2:
        c = 2.0 ** (1.0 - p) if c_p is None else c_p
        rho = md.PowerNorm(alpha * c / p, p, p, dim)
    return PotentialSpec(
        "power_norm",
        dim,
        value,
        grad,
        declared_sigma=sigma,
        declared_rho=rho,
        params={"p": p, "alpha": alpha, "c_p": c_p},
        scale=max(1.0, (p / alpha) ** (1.0 / p)) * 2.0,
    )


def _cauchy(n: int = 1) -> PotentialSpec:
    def value(x):
        return n * np.log1p(_sq(x))

    def grad(x):
        return 2.0 * n * x / (1.0 + _sq(x))[..., None]

    return PotentialSpec(
        "cauchy",
        n,
        value,
        grad,
        declared_sigma=md.MinOf((md.Power(6.0 * n, 2.0), md.Power(4.0 * n, 1.0))),
        declared_rho=None,
        params={"n": n},
        scale=50.0,
    )


def _lipschitz_radial(L: float = 1.0, dim: int = 1) -> PotentialSpec:
    def value(x):
        return L * np.sqrt(1.0 + _sq(x))

    def grad(x):
        return L * x / np.sqrt(1.0 + _sq(x))[..., None]

    def hess(x):
        s = 1.0 + _sq(x)
        eye = np.eye(x.shape[-1])
        return L * (eye / np.sqrt(s)[..., None, None] - x[..., :, None] * x[..., None, :] / s[..., None, None] ** 1.5)

    return PotentialSpec(
        "lipschitz_radial",
        dim,
        value,
        grad,
        hess,
        declared_sigma=md.Power(4.0 * L, 1.0),
        declared_rho=md.Zero(),
        params={"L": L},
        scale=5.0 / max(L, 1e-3),
    )


# 1-Lipschitz profiles for log-Lipschitz perturbations; each entry is
# (value, gradient) acting on arrays of shape (..., n)
_PROFILES: dict[str, tuple[Callable, Callable]] = {
    "sin": (lambda x: np.sin(x[..., 0]), lambda x: np.concatenate([np.cos(x[..., :1]), np.zeros_like(x[..., 1:])], -1)),
    "cos": (lambda x: np.cos(x[..., 0]), lambda x: np.concatenate([-np.sin(x[..., :1]), np.zeros_like(x[..., 1:])], -1)),
    "neg_abs": (lambda x: -np.sqrt(_sq(x)), lambda x: -x / np.maximum(np.sqrt(_sq(x)), 1e-300)[..., None]),
    "zero": (lambda x: np.zeros(x.shape[:-1]), lambda x: np.zeros_like(x)),
}


def _log_lip_gaussian(a="sin", L: float = 1.0, alpha: float = 1.0, dim: int = 1) -> PotentialSpec:
    """``V = alpha |x|^2 / 2 + L * profile(x)`` with a 1-Lipschitz profile."""
    if isinstance(a, str):
        if a not in _PROFILES:
            raise ValueError(f"unknown perturbation profile {a!r}")
        f, g = _PROFILES[a]
    else:
        f, g = a

    def value(x):
        return 0.5 * alpha * _sq(x) + L * f(x)

    def grad(x):
        return alpha * x + L * g(x)

    return PotentialSpec(
        "log_lip_gaussian",
        dim,
        value,
        grad,
        declared_sigma=md.SumOf((md.Quadratic(alpha), md.Power(2.0 * L, 1.0))),
        declared_rho=md.QuadraticMinusLinear(alpha, L),
        params={"a": a if isinstance(a, str) else "custom", "L": L, "alpha": alpha, "beta": alpha},
        scale=1.0 / math.sqrt(alpha),
        center=L / alpha,
    )


def _subspace_gaussian(frame, cov=1.0, base=None) -> PotentialSpec:
    sup = Support("affine", base=base, frame=frame)
    F, b = sup.frame, sup.base
    k = F.shape[1]
    S = np.atleast_2d(np.asarray(cov, dtype=float))
    if S.shape == (1, 1) and k > 1:
        S = S[0, 0] * np.eye(k)
    P = np.linalg.inv(S)

    def value(x):
        c = x - b
        xi = c @ F
        off = c - xi @ F.T
        v = 0.5 * np.einsum("...i,ij,...j->...", xi, P, xi)
        return np.where(np.sqrt(_sq(off)) > 1e-9, np.inf, v)

    lam = np.linalg.eigvalsh(P)
    return PotentialSpec(
        "subspace_gaussian",
        F.shape[0],
        value,
        support=sup,
        declared_sigma=md.Quadratic(float(lam[-1])),
        declared_rho=md.Quadratic(float(lam[0])),
        params={"cov": S, "frame": F, "base": b, "alpha": float(lam[-1]), "beta": float(lam[0])},
        scale=float(np.sqrt(np.linalg.eigvalsh(S)[-1])),
    )


_BUILTINS = {
    "gaussian": _gaussian,
    "power_norm": _power_norm,
    "cauchy": _cauchy,
    "lipschitz_radial": _lipschitz_radial,
    "log_lip_gaussian": _log_lip_gaussian,
    "subspace_gaussian": _subspace_gaussian,
}


def builtin(name: str, **params) -> PotentialSpec:
    """Look up a catalogue potential by name.

    Names: ``gaussian(cov, mean)``, ``power_norm(p, alpha, dim, c_p)``,
    ``cauchy(n)``, ``lipschitz_radial(L, dim)``,
    ``log_lip_gaussian(a, L, alpha, dim)`` and
    ``subspace_gaussian(frame, cov, base)``.
    """
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown potential {name!r}; choose from {sorted(_BUILTINS)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# consistency checks


def gradient_error(spec: PotentialSpec, probes: int = 20, rng=None, step: float = 1e-5, spread: float = 2.0) -> float:
    """Largest central-difference mismatch of the declared gradient."""
    if spec.gradient is None:
        return 0.0
    rng = np.random.default_rng(rng)
    x = rng.normal(scale=spread, size=(probes, spec.dim))
    g = spec.gradient(x)
    fd = np.empty_like(x)
    for i in range(spec.dim):
        e = np.zeros(spec.dim)
        e[i] = step
        fd[:, i] = (spec.value(x + e) - spec.value(x - e)) / (2 * step)
    return float(np.max(np.abs(g - fd)))


def hessian_error(spec: PotentialSpec, probes: int = 20, rng=None, step: float = 1e-5, spread: float = 2.0) -> float:
    if spec.hessian is None:
        return 0.0
    rng = np.random.default_rng(rng)
    x = rng.normal(scale=spread, size=(probes, spec.dim))
    H = spec.hessian(x)
    err = 0.0
    for i in range(spec.dim):
        e = np.zeros(spec.dim)
        e[i] = step
        col = (spec.gradient(x + e) - spec.gradient(x - e)) / (2 * step)
        err = max(err, float(np.max(np.abs(H[:, :, i] - col))))
    return err


def midpoint_convexity_slack(spec: PotentialSpec, beta: float, pairs: int = 200, rng=None, spread: float = 3.0) -> float:
    """Smallest slack of ``V(mid) <= (V(x)+V(y))/2 - beta |x-y|^2 / 8``."""
    rng = np.random.default_rng(rng)
    x = rng.normal(scale=spread, size=(pairs, spec.dim))
    y = rng.normal(scale=spread, size=(pairs, spec.dim))
    lhs = spec.value(0.5 * (x + y))
    rhs = 0.5 * (spec.value(x) + spec.value(y)) - beta * _sq(x - y) / 8.0
    return float(np.min(rhs - lhs))


__all__ = [
    "Support",
    "PotentialSpec",
    "GridInfo",
    "DiscreteMeasure",
    "builtin",
    "discretize",
    "cdf_and_quantile",
    "write_csv",
    "gradient_error",
    "hessian_error",
    "midpoint_convexity_slack",
]
