"""Moduli of convexity and smoothness and the calculus acting on them.

A modulus is an extended-real function on the half-line ``[0, inf)``. The
parametric families are kept symbolic so that conjugates, biconjugates and
generalized inverses can use closed forms; everything else is tabulated on
a grid and handled by exact piecewise-linear algorithms.

Directional moduli live on R^n and are even functions of the displacement.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

INF = math.inf

# bisection steps for the generalized inverse; 60 halvings take any
# bracket below double precision
_BISECT_STEPS = 60
_SIMPSON_RTOL = 1e-8
_SIMPSON_MAX_LEVEL = 20


def _as_radius(r) -> np.ndarray:
    arr = np.asarray(r, dtype=float)
    if np.any(np.isnan(arr)):
        raise ValueError("radius is NaN")
    if np.any(arr < 0):
        raise ValueError("moduli are only defined for r >= 0")
    return arr


def _finish(out: np.ndarray, like: np.ndarray):
    out = np.asarray(out, dtype=float)
    if np.ndim(like) == 0:
        return float(out.reshape(()))
    return out.reshape(np.shape(like))


class Modulus:
    """Extended-real function on ``[0, inf)``.

    Subclasses implement ``_eval`` on a float array of non-negative radii.
    Calling a modulus validates the input and returns a float for scalar
    input or an array of the same shape.
    """

    def __call__(self, r):
        arr = _as_radius(r)
        return _finish(self._eval(np.atleast_1d(arr).ravel()), arr)

    def _eval(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # closed-form monotone conjugate, or None when only brute force applies
    def _conjugate(self, v: np.ndarray) -> np.ndarray | None:
        return None

    # closed-form generalized inverse, or None
    def _inverse(self, t: np.ndarray) -> np.ndarray | None:
        return None

    # closed-form biconjugate, or None
    def _biconjugate(self) -> Modulus | None:
        return None

    def __add__(self, other: Modulus) -> Modulus:
        return SumOf((self, other))


def evaluate(m: Modulus, r):
    """Evaluate ``m`` at ``r >= 0``; negative radii raise ``ValueError``."""
    return m(r)


@dataclass(frozen=True)
class Power(Modulus):
    """``c * r**p``."""

    c: float
    p: float

    def __post_init__(self):
        if self.c < 0 or self.p <= 0:
            raise ValueError("Power needs c >= 0 and p > 0")

    def _eval(self, r):
        return self.c * r**self.p

    def _conjugate(self, v):
        c, p = self.c, self.p
        if c == 0 or p < 1:
            return np.where(v > 0, INF, 0.0)
        if p == 1:
            return np.where(v > c, INF, 0.0)
        q = p / (p - 1.0)
        return (1.0 - 1.0 / p) * v**q * (p * c) ** (-1.0 / (p - 1.0))

    def _inverse(self, t):
        if self.c == 0:
            return np.full_like(t, INF)
        return (t / self.c) ** (1.0 / self.p)

    def _biconjugate(self):
        if self.c == 0 or self.p < 1:
            return Zero()
        return self


@dataclass(frozen=True)
class Quadratic(Modulus):
    """``alpha * r**2 / 2``."""

    alpha: float

    def _eval(self, r):
        return 0.5 * self.alpha * r**2

    def _conjugate(self, v):
        a = self.alpha
        if a > 0:
            return v**2 / (2.0 * a)
        if a == 0:
            return np.where(v > 0, INF, 0.0)
        return np.full_like(v, INF)

    def _inverse(self, t):
        a = self.alpha
        if a < 0:
            raise ValueError("Quadratic with alpha < 0 is not non-decreasing")
        if a == 0:
            return np.full_like(t, INF)
        return np.sqrt(2.0 * t / a)

    def _biconjugate(self):
        return self if self.alpha >= 0 else None


@dataclass(frozen=True)
class QuadraticMinusLinear(Modulus):
    """``beta * r**2 / 2 - 2 L r``: the convexity modulus of a quadratic
    potential perturbed by an ``L``-Lipschitz function."""

    beta: float
    L: float

    def __post_init__(self):
        if self.beta <= 0 or self.L < 0:
            raise ValueError("QuadraticMinusLinear needs beta > 0, L >= 0")

    def _eval(self, r):
        return 0.5 * self.beta * r**2 - 2.0 * self.L * r

    def _conjugate(self, v):
        return (v + 2.0 * self.L) ** 2 / (2.0 * self.beta)

    def _inverse(self, t):
        if self.L > 0:
            raise ValueError(
                "QuadraticMinusLinear is decreasing near 0; take the biconjugate first"
            )
        return np.sqrt(2.0 * t / self.beta)

    def _biconjugate(self):
        return QuadraticMinusLinearHull(self.beta, self.L)


@dataclass(frozen=True)
class QuadraticMinusLinearHull(Modulus):
    """Non-decreasing convex hull of :class:`QuadraticMinusLinear`.

    Equal to ``beta u^2/2 - 2 L u`` for ``u >= 2L/beta`` and to the minimum
    ``-2 L^2 / beta`` on ``[0, 2L/beta]``.
    """

    beta: float
    L: float

    def _eval(self, r):
        b, L = self.beta, self.L
        rr = np.maximum(r, 2.0 * L / b)
        return 0.5 * b * rr**2 - 2.0 * L * rr

    def _conjugate(self, v):
        return (v + 2.0 * self.L) ** 2 / (2.0 * self.beta)

    def _inverse(self, t):
        b, L = self.beta, self.L
        disc = 4.0 * L**2 / b**2 + 2.0 * t / b
        return np.where(disc >= 0, 2.0 * L / b + np.sqrt(np.maximum(disc, 0.0)), 0.0)

    def _biconjugate(self):
        return self


@dataclass(frozen=True)
class Zero(Modulus):
    """Identically zero."""

    def _eval(self, r):
        return np.zeros_like(r)

    def _conjugate(self, v):
        return np.where(v > 0, INF, 0.0)

    def _inverse(self, t):
        return np.where(t >= 0, INF, 0.0)

    def _biconjugate(self):
        return self


@dataclass(frozen=True)
class PlusInfBeyond(Modulus):
    """Zero on ``[0, r0]`` and ``+inf`` beyond."""

    r0: float

    def _eval(self, r):
        return np.where(r <= self.r0, 0.0, INF)

    def _conjugate(self, v):
        return self.r0 * v

    def _inverse(self, t):
        return np.where(t >= 0, float(self.r0), 0.0)

    def _biconjugate(self):
        return self


@dataclass(frozen=True)
class Scaled(Modulus):
    """``outer * m(r / inner)``, e.g. ``eps * rho(. / eps)``."""

    base: Modulus
    outer: float = 1.0
    inner: float = 1.0

    def __post_init__(self):
        if self.outer <= 0 or self.inner <= 0:
            raise ValueError("Scaled needs positive factors")

    def _eval(self, r):
        return self.outer * self.base._eval(r / self.inner)

    def _conjugate(self, v):
        inner = self.base._conjugate(self.inner * v / self.outer)
        return None if inner is None else self.outer * inner

    def _inverse(self, t):
        inner = self.base._inverse(t / self.outer)
        return None if inner is None else self.inner * inner

    def _biconjugate(self):
        b = self.base._biconjugate()
        return None if b is None else Scaled(b, self.outer, self.inner)


@dataclass(frozen=True)
class SumOf(Modulus):
    terms: tuple

    def _eval(self, r):
        out = np.zeros_like(r)
        for t in self.terms:
            out = out + t._eval(r)
        return out


@dataclass(frozen=True)
class MinOf(Modulus):
    terms: tuple

    def _eval(self, r):
        return np.min([t._eval(r) for t in self.terms], axis=0)

    def _conjugate(self, v):
        parts = [t._conjugate(v) for t in self.terms]
        if any(p is None for p in parts):
            return None
        return np.max(parts, axis=0)


@dataclass(frozen=True, eq=False)
class Tabulated(Modulus):
    """Piecewise-linear interpolation of ``values`` on an increasing ``grid``.

    ``beyond`` controls evaluation past the last node: ``"inf"`` (default,
    the function is the restriction to the grid), ``"linear"`` (extend the
    last segment) or ``"hold"`` (constant). Below the first node the first
    segment is extended. Segments touching an infinite value are infinite
    in their interior.
    """

    grid: np.ndarray
    values: np.ndarray
    beyond: str = "inf"

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if g.size == 0 or g.size != v.size:
            raise ValueError("grid and values must be non-empty and of equal length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("Tabulated grid must be strictly increasing")
        if g[0] < 0:
            raise ValueError("Tabulated grid must lie in [0, inf)")
        if np.any(np.isnan(v)):
            raise ValueError("Tabulated values must not be NaN")
        if self.beyond not in ("inf", "linear", "hold"):
            raise ValueError(f"unknown beyond={self.beyond!r}")
        g.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def _eval(self, r):
        g, v = self.grid, self.values
        if g.size == 1:
            inside = np.where(r == g[0], v[0], INF if self.beyond == "inf" else v[0])
            return np.where(r < g[0], v[0], inside)
        i = np.clip(np.searchsorted(g, r, side="right") - 1, 0, g.size - 2)
        g0, g1 = g[i], g[i + 1]
        v0, v1 = v[i], v[i + 1]
        w = (r - g0) / (g1 - g0)
        with np.errstate(invalid="ignore"):
            lin = v0 + w * (v1 - v0)
        bad = ~np.isfinite(v0) | ~np.isfinite(v1)
        out = np.where(bad, np.where(w <= 0, v0, np.where(w >= 1, v1, np.maximum(v0, v1))), lin)
        past = r > g[-1]
        if np.any(past):
            if self.beyond == "inf":
                out = np.where(past, INF, out)
            elif self.beyond == "hold":
                out = np.where(past, v[-1], out)
        return out

    def _conjugate(self, v):
        g, vals = self.grid, self.values
        keep = np.isfinite(vals)
        pts, fs = g[keep], vals[keep]
        if pts.size == 0:
            return np.full_like(v, -INF)
        if g[0] > 0 and keep[0] and keep[1 if g.size > 1 else 0] and g.size > 1:
            # the first segment extends down to the origin
            slope0 = (vals[1] - vals[0]) / (g[1] - g[0])
            pts = np.concatenate([[0.0], pts])
            fs = np.concatenate([[vals[0] - slope0 * g[0]], fs])
        out = discrete_legendre_1d(pts, fs, v)
        if self.beyond == "linear" and g.size > 1:
            slope = (vals[-1] - vals[-2]) / (g[-1] - g[-2])
            out = np.where(v > slope, INF, out)
        elif self.beyond == "hold":
            out = np.where(v > 0, INF, out)
        return out

    def _inverse(self, t):
        g, vals = self.grid, self.values
        scale = np.max(np.abs(vals[np.isfinite(vals)]), initial=1.0)
        if np.any(np.diff(vals) < -1e-12 * scale):
            raise ValueError("generalized_inverse needs a non-decreasing modulus")
        k = np.searchsorted(vals, t, side="right") - 1
        out = np.zeros_like(t)
        last = k == g.size - 1
        mid = (k >= 0) & ~last
        if np.any(last):
            if self.beyond == "inf":
                out[last] = g[-1]
            elif self.beyond == "hold" or g.size == 1:
                out[last] = INF
            else:
                slope = (vals[-1] - vals[-2]) / (g[-1] - g[-2])
                out[last] = INF if slope <= 0 else g[-1] + (t[last] - vals[-1]) / slope
        if np.any(mid):
            km = k[mid]
            v0, v1 = vals[km], vals[km + 1]
            step = np.where(np.isfinite(v1) & (v1 > v0), v1 - v0, 1.0)
            frac = np.where(np.isfinite(v1) & (v1 > v0), (t[mid] - v0) / step, 0.0)
            out[mid] = g[km] + frac * (g[km + 1] - g[km])
        return out


# ---------------------------------------------------------------------------
# discrete Legendre transforms


def _lower_hull(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of points ``(x_i, f_i)``, x increasing."""
    hull: list[int] = []
    for i in range(x.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it lies on or above the chord from a to i
            if (f[b] - f[a]) * (x[i] - x[a]) >= (f[i] - f[a]) * (x[b] - x[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


def discrete_legendre_1d(x, f, y) -> np.ndarray:
    """``max_i (x_i * y - f_i)`` for every ``y``.

    Linear-time in the number of points after sorting: the maximizer moves
    monotonically along the lower convex hull as the slope ``y`` grows, so
    a single merge (``searchsorted``) locates it.
    """
    x = np.asarray(x, dtype=float).ravel()
    f = np.asarray(f, dtype=float).ravel()
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        raise ValueError("empty primal grid")
    order = np.argsort(x, kind="stable")
    x, f = x[order], f[order]
    h = _lower_hull(x, f)
    xs, fs = x[h], f[h]
    slopes = np.diff(fs) / np.diff(xs)
    j = np.searchsorted(slopes, y, side="left")
    return xs[j] * y - fs[j]


def discrete_legendre_nd(points, values, dual_points, chunk: int = 4096) -> np.ndarray:
    """Brute-force ``max_i (<x_i, y> - f_i)`` for points in R^n."""
    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float).ravel()
    dual = np.asarray(dual_points, dtype=float)
    keep = np.isfinite(vals)
    pts, vals = pts[keep], vals[keep]
    out = np.empty(dual.shape[0])
    for s in range(0, dual.shape[0], chunk):
        block = dual[s : s + chunk] @ pts.T - vals[None, :]
        out[s : s + chunk] = block.max(axis=1)
    return out


# ---------------------------------------------------------------------------
# conjugation and inverses


def _default_primal_grid(dual: np.ndarray) -> np.ndarray:
    top = 10.0 * (1.0 + float(np.max(np.abs(dual))))
    return np.linspace(0.0, top, 2**16 + 1)


def monotone_conjugate(m: Modulus, dual_grid, primal_grid=None) -> Tabulated:
    """Tabulate ``m*(v) = sup_{u >= 0} (u v - m(u))`` on ``dual_grid``.

    Closed forms are used for the parametric families; tabulated moduli are
    conjugated exactly as piecewise-linear functions; any other modulus is
    sampled on ``primal_grid`` (a heuristic default is used when omitted).
    """
    v = np.asarray(dual_grid, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("dual grid is empty")
    if np.any(v < 0):
        raise ValueError("dual grid must lie in [0, inf)")
    vals = m._conjugate(v)
    if vals is None:
        u = _default_primal_grid(v) if primal_grid is None else _as_radius(primal_grid).ravel()
        mu = m._eval(u)
        keep = np.isfinite(mu)
        vals = discrete_legendre_1d(u[keep], mu[keep], v)
        if primal_grid is None:
            arg = u[keep][np.searchsorted(np.diff(mu[keep]) / np.diff(u[keep]), v)]
            if np.any(arg >= u[keep][-1]):
                warnings.warn("conjugate maximizer reached the end of the primal grid", RuntimeWarning)
    return Tabulated(v, vals, beyond="inf")


def biconjugate(m: Modulus, grid=None) -> Modulus:
    """Largest convex, lower semicontinuous, non-decreasing minorant ``m**``.

    Parametric families return a parametric result. Otherwise ``m`` is
    sampled on ``grid`` and the result is the lower convex hull of the
    samples flattened to the left of its minimum, i.e. the monotone
    biconjugate of the restriction of ``m`` to the grid.
    """
    closed = m._biconjugate()
    if closed is not None:
        return closed
    if grid is None:
        if isinstance(m, Tabulated):
            grid = m.grid
        else:
            raise ValueError("a grid is needed to biconjugate this modulus")
    g = _as_radius(grid).ravel()
    vals = m._eval(g)
    keep = np.isfinite(vals)
    gk, vk = g[keep], vals[keep]
    h = _lower_hull(gk, vk)
    hull = np.interp(gk, gk[h], vk[h])
    imin = int(np.argmin(hull))
    hull[:imin] = hull[imin]
    out = np.full(g.size, INF)
    out[keep] = hull
    # inside the finite range the hull is finite even where m is +inf
    lo, hi = np.nonzero(keep)[0][[0, -1]]
    inner = np.arange(lo, hi + 1)
    out[inner] = np.interp(g[inner], gk, hull)
    return Tabulated(g, out, beyond="inf")


def _is_nondecreasing_probe(m: Modulus, top: float = 1e3) -> bool:
    u = np.concatenate([np.linspace(0, 10, 2001), np.geomspace(10, top, 2001)])
    vals = m._eval(u)
    fin = vals[np.isfinite(vals)]
    scale = max(1.0, float(np.max(np.abs(fin)))) if fin.size else 1.0
    with np.errstate(invalid="ignore"):
        d = np.diff(vals)
    d = np.where(np.isnan(d), 0.0, d)
    return bool(np.all(d >= -1e-12 * scale))


def generalized_inverse(m: Modulus, t):
    """``sup{u >= 0 : m(u) <= t}`` for a non-decreasing modulus.

    Returns ``inf`` when ``m <= t`` everywhere. Closed forms are used when
    available, tabulated moduli are scanned, and everything else is solved
    by bisection with a fixed number of halvings.
    """
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0):
        raise ValueError("generalized_inverse needs t >= 0")
    flat = np.atleast_1d(tt).ravel()
    out = m._inverse(flat)
    if out is None:
        if not _is_nondecreasing_probe(m):
            raise ValueError("generalized_inverse needs a non-decreasing modulus")
        out = _bisect_inverse(m, flat)
    return _finish(out, tt)


def _bisect_inverse(m: Modulus, t: np.ndarray) -> np.ndarray:
    lo = np.zeros_like(t)
    hi = np.ones_like(t)
    unbounded = np.zeros(t.shape, dtype=bool)
    active = m._eval(hi) <= t
    for _ in range(64):
        if not np.any(active):
            break
        lo = np.where(active, hi, lo)
        hi = np.where(active, 2.0 * hi, hi)
        active = m._eval(hi) <= t
    unbounded |= active
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        below = m._eval(mid) <= t
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.where(unbounded, INF, lo)


def inf_convolution(f: Modulus, g: Modulus, grid) -> Tabulated:
    """``(f box g)(x) = min_{y in grid, y <= x} f(y) + g(x - y)`` on ``grid``."""
    x = _as_radius(grid).ravel()
    fx = f._eval(x)
    diff = x[:, None] - x[None, :]
    mask = diff >= 0
    gv = g._eval(np.where(mask, diff, 0.0).ravel()).reshape(diff.shape)
    with np.errstate(invalid="ignore"):
        tot = fx[None, :] + gv
    tot = np.where(np.isnan(tot), INF, tot)
    tot = np.where(mask, tot, INF)
    return Tabulated(x, tot.min(axis=1), beyond="inf")


# ---------------------------------------------------------------------------
# quadrature


def _simpson_dyadic(func: Callable[[np.ndarray], np.ndarray], n_out: int):
    """Integrate ``func`` over [0, 1] for ``n_out`` integrands at once.

    ``func`` maps nodes of shape (k,) to values of shape (n_out, k). Uses
    composite Simpson with dyadic refinement after the substitution
    ``w = s**2``, which removes square-root endpoint singularities.
    Returns (integrals, panels, converged).
    """

    def g(s):
        return func(s**2) * (2.0 * s)[None, :]

    level = 1
    prev = None
    while True:
        n = 2**level
        s = np.linspace(0.0, 1.0, n + 1)
        vals = g(s)
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        with np.errstate(invalid="ignore"):
            cur = (vals * w[None, :]).sum(axis=1) / (3.0 * n)
        if prev is not None:
            with np.errstate(invalid="ignore"):
                change = np.abs(cur - prev)
                ok = (change <= _SIMPSON_RTOL * np.abs(cur)) | (change == 0) | ~np.isfinite(cur)
            if np.all(ok):
                return cur, n, True
        if level >= _SIMPSON_MAX_LEVEL:
            return cur, n, False
        prev = cur
        level += 1


def compose_regularity_bound(sigma_v: Modulus, rho_w: Modulus, r, *, grid=None, full_output=False):
    """``sigma_bar(r) = int_0^r (rho_w**)^{-1}(sigma_v(s)) ds``.

    Vectorized over ``r``. The integrand is formed with the biconjugate of
    ``rho_w`` (``grid`` is used only when no closed form exists). Values are
    ``inf`` when the integrand is infinite on a set of positive length.
    With ``full_output`` a dict with ``panels``, ``converged`` and
    ``infinite`` flags is returned alongside the value.
    """
    rr = _as_radius(r)
    flat_all = np.atleast_1d(rr).ravel()
    rho2 = biconjugate(rho_w, grid)
    vals, panels, converged, infinite = [], 0, True, []
    for s0 in range(0, flat_all.size, 64):
        v, p, c, i = _sigma_bar_chunk(sigma_v, rho2, flat_all[s0 : s0 + 64])
        vals.append(v)
        infinite.append(i)
        panels = max(panels, p)
        converged &= c
    out = _finish(np.concatenate(vals), rr)
    if full_output:
        inf_flags = _finish(np.concatenate(infinite).astype(float), rr)
        return out, {"panels": panels, "converged": converged, "infinite": inf_flags}
    return out


def _sigma_bar_chunk(sigma_v, rho2, flat):

    def integrand(w):
        s = flat[:, None] * w[None, :]
        sig = sigma_v._eval(s.ravel())
        if np.any(sig < 0):
            raise ValueError("sigma_v must be non-negative")
        inv = np.asarray(generalized_inverse(rho2, sig), dtype=float).reshape(s.shape)
        return inv * flat[:, None]

    # infinite integrand at any interior node means positive-length blowup
    probe = integrand(np.linspace(0.0, 1.0, 65)[1:])
    infinite = ~np.all(np.isfinite(probe), axis=1) & (flat > 0)
    vals, panels, converged = _simpson_dyadic(
        lambda w: np.where(infinite[:, None], 0.0, integrand(w)), flat.size
    )
    vals = np.where(infinite, INF, vals)
    vals = np.where(flat == 0, 0.0, vals)
    return vals, panels, converged, infinite


def sigma_bar_modulus(sigma_v: Modulus, rho_w: Modulus, r_max: float, n: int = 2049) -> Tabulated:
    """Tabulate :func:`compose_regularity_bound` on ``[0, r_max]``."""
    grid = np.linspace(0.0, r_max, n)
    return Tabulated(grid, compose_regularity_bound(sigma_v, rho_w, grid), beyond="linear")


# ---------------------------------------------------------------------------
# radial moduli from a monotone profile


def _pl_integral(xs: np.ndarray, ys: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Integral from xs[0] to x of the piecewise-linear interpolant."""
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])
    i = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.size - 2)
    dx = x - xs[i]
    slope = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
    return cum[i] + ys[i] * dx + 0.5 * slope * dx**2


def radial_modulus(grid, alpha_values, r):
    """Convexity and smoothness moduli generated by a radial profile.

    For a non-decreasing, superhomogeneous profile ``alpha`` given as a
    table, returns ``(rho(r), sigma(r))`` with ``rho(r) = 2 int_0^{r/2} alpha``
    and ``sigma(r) = 2 int_0^r alpha^{-1}``, integrating the piecewise-linear
    interpolant exactly.
    """
    g = np.asarray(grid, dtype=float).ravel()
    a = np.asarray(alpha_values, dtype=float).ravel()
    if g.size < 2 or g.size != a.size:
        raise ValueError("need a table with at least two nodes")
    if g[0] != 0 or a[0] != 0:
        raise ValueError("the profile must start at alpha(0) = 0")
    if np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.any(np.diff(a) < -1e-12 * scale):
        raise ValueError("alpha must be non-decreasing")
    # superhomogeneity on the table: alpha(u)/u non-decreasing
    ratio = a[1:] / g[1:]
    if np.any(np.diff(ratio) < -1e-9 * max(1.0, float(np.max(np.abs(ratio))))):
        raise ValueError("alpha is not superhomogeneous on the table")
    rr = _as_radius(r)
    flat = np.atleast_1d(rr).ravel()
    if np.any(flat / 2 > g[-1]):
        raise ValueError("r/2 exceeds the table range")
    rho = 2.0 * _pl_integral(g, a, flat / 2.0)
    # inverse profile: swap axes, keep the right end of flat pieces
    au, idx = np.unique(a[::-1], return_index=True)
    gu = g[::-1][idx]
    if np.any(flat > au[-1]):
        raise ValueError("r exceeds the range of alpha on the table")
    sigma = 2.0 * _pl_integral(au, gu, flat)
    return _finish(rho, rr), _finish(sigma, rr)


# ---------------------------------------------------------------------------
# directional moduli


class DirectionalModulus:
    """Even extended-real function of a displacement ``d`` in R^n."""

    dim: int

    def __call__(self, d):
        arr = np.asarray(d, dtype=float)
        flat = arr.reshape(-1, arr.shape[-1]) if arr.ndim > 0 else arr.reshape(1, 1)
        out = self._eval(flat)
        if arr.ndim <= 1:
            return float(out[0])
        return out.reshape(arr.shape[:-1])

    def _eval(self, d: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class QuadraticForm(DirectionalModulus):
    """``<d, Q d> / 2`` for a symmetric ``Q``."""

    Q: np.ndarray

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, atol=1e-12, rtol=0):
            raise ValueError("QuadraticForm needs a symmetric matrix")
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        object.__setattr__(self, "dim", Q.shape[0])

    def _eval(self, d):
        return 0.5 * np.einsum("ki,ij,kj->k", d, self.Q, d)


@dataclass(frozen=True, eq=False)
class ProjectedProduct(DirectionalModulus):
    """``kappa |d| |P d|`` for a projector ``P``."""

    kappa: float
    P: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "dim", P.shape[1])

    def _eval(self, d):
        return self.kappa * np.linalg.norm(d, axis=1) * np.linalg.norm(d @ self.P.T, axis=1)


@dataclass(frozen=True)
class PowerNorm(DirectionalModulus):
    """``c * ||d||_q ** p``."""

    c: float
    p: float
    q: float = 2.0
    dim: int = 1

    def _eval(self, d):
        return self.c * np.linalg.norm(d, ord=self.q, axis=1) ** self.p


@dataclass(frozen=True, eq=False)
class GridTabulated(DirectionalModulus):
    """Multilinear interpolation of values on a symmetric tensor grid.

    The value array is symmetrized under ``d -> -d`` at construction, so
    evenness holds by construction. Outside the grid the value is ``+inf``.
    """

    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        for a in axes:
            if not np.allclose(a, -a[::-1], atol=1e-12):
                raise ValueError("GridTabulated axes must be symmetric about 0")
        vals = np.asarray(self.values, dtype=float)
        flipped = vals[tuple(slice(None, None, -1) for _ in axes)]
        vals = 0.5 * (vals + flipped)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "dim", len(axes))

    def _eval(self, d):
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator(self.axes, self.values, bounds_error=False, fill_value=INF)
        return interp(d)


def directional_bound(S: DirectionalModulus, R: DirectionalModulus, d, *, full_output=False):
    """``S_bar(d) = int_0^1 sup{<p, d> : R**(p) <= S(t d)} dt``.

    Implemented for convex ``R`` of type :class:`QuadraticForm` (inner
    supremum ``sqrt(2 S(td) <d, Q^{-1} d>)``) and :class:`PowerNorm` with
    ``p, q >= 1`` (inner supremum ``(S(td)/c)^{1/p} ||d||_{q*}``).
    """
    d = np.asarray(d, dtype=float).ravel()
    flag = ""
    if np.all(d == 0):
        return (0.0, {"flag": flag}) if full_output else 0.0
    if isinstance(R, QuadraticForm):
        w, V = np.linalg.eigh(R.Q)
        if np.any(w < -1e-12 * max(1.0, np.abs(w).max())):
            raise ValueError("R must be convex (Q positive semidefinite)")
        coef = V.T @ d
        pos = w > 1e-12 * max(1.0, np.abs(w).max())
        if np.any(np.abs(coef[~pos]) > 1e-12 * np.linalg.norm(d)):
            flag = "singular"
            return (INF, {"flag": flag}) if full_output else INF
        dQd = float(np.sum(coef[pos] ** 2 / w[pos]))

        def inner(s):
            return np.sqrt(2.0 * np.maximum(s, 0.0) * dQd)

    elif isinstance(R, PowerNorm):
        if R.p < 1 or R.q < 1:
            raise ValueError("R must be convex (p, q >= 1)")
        qstar = INF if R.q == 1 else (1.0 if R.q == INF else R.q / (R.q - 1.0))
        dual_norm = float(np.linalg.norm(d, ord=qstar))

        def inner(s):
            return (np.maximum(s, 0.0) / R.c) ** (1.0 / R.p) * dual_norm

    else:
        raise NotImplementedError("directional_bound supports QuadraticForm and PowerNorm R only")

    def func(t):
        svals = S(t[:, None] * d[None, :])
        return inner(np.asarray(svals, dtype=float))[None, :]

    val, _, _ = _simpson_dyadic(func, 1)
    out = float(val[0])
    return (out, {"flag": flag}) if full_output else out


__all__ = [
    "Modulus",
    "Power",
    "Quadratic",
    "QuadraticMinusLinear",
    "QuadraticMinusLinearHull",
    "Zero",
    "PlusInfBeyond",
    "Scaled",
    "SumOf",
    "MinOf",
    "Tabulated",
    "evaluate",
    "monotone_conjugate",
    "biconjugate",
    "generalized_inverse",
    "inf_convolution",
    "compose_regularity_bound",
    "sigma_bar_modulus",
    "radial_modulus",
    "discrete_legendre_1d",
    "discrete_legendre_nd",
    "DirectionalModulus",
    "QuadraticForm",
    "ProjectedProduct",
    "PowerNorm",
    "GridTabulated",
    "directional_bound",
]
