"""Empirical moduli and falsification-style verifiers.

Every verifier returns a :class:`ViolationReport` whose ``slack`` is the
worst value of ``bound - observed`` (negative means violated) together with
the inputs that achieved it. The tolerance is always the sum of named
parts, so a failure can be traced to discretization, finite differences or
the solver.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import moduli as md
from .measures import DiscreteMeasure, cdf_and_quantile

DEFAULT_T = (0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)


# ---------------------------------------------------------------------------
# reports


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass(frozen=True)
class ViolationReport:
    check: str
    slack: float
    witness: dict
    tolerances: dict
    flags: tuple = ()

    @property
    def tolerance(self) -> float:
        return float(sum(self.tolerances.values()))

    @property
    def passed(self) -> bool:
        return bool(self.slack >= -self.tolerance)

    def to_dict(self) -> dict:
        return _plain(
            {
                "check": self.check,
                "pass": self.passed,
                "slack": self.slack,
                "tolerance": self.tolerance,
                "tolerances": self.tolerances,
                "witness": self.witness,
                "flags": list(self.flags),
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self) -> list[str]:
        return [
            self.check,
            "1" if self.passed else "0",
            f"{self.slack:.12g}",
            f"{self.tolerance:.12g}",
            json.dumps(_plain(self.witness), sort_keys=True),
        ]


CSV_HEADER = ["check", "pass", "slack", "tolerance", "witness"]


def _tolerances(tol) -> dict:
    if isinstance(tol, dict):
        parts = {k: float(v) for k, v in tol.items()}
    else:
        parts = {"total": float(tol)}
    if any(v < 0 for v in parts.values()) or sum(parts.values()) <= 0:
        raise ValueError("tolerances must be non-negative with a positive total")
    return parts


def _worst(check, slack, witness_of, tol, flags=()) -> ViolationReport:
    slack = np.asarray(slack, dtype=float).ravel()
    if slack.size == 0:
        return ViolationReport(check, math.inf, {}, _tolerances(tol), tuple(flags) + ("empty",))
    with np.errstate(invalid="ignore"):
        s = np.where(np.isnan(slack), -np.inf, slack)
    i = int(np.argmin(s))
    return ViolationReport(check, float(s[i]), witness_of(i), _tolerances(tol), tuple(flags))


def normal_cdf(x):
    return ndtr(x)


def normal_quantile(p):
    return ndtri(p)


# ---------------------------------------------------------------------------
# empirical moduli


@dataclass(frozen=True, eq=False)
class EmpiricalModulus(md.Tabulated):
    """Tabulated estimate with the triples that produced each value."""

    witnesses: tuple = ()
    skipped: tuple = ()
    flags: tuple = ()


def _lattice_t(m: int, t_samples) -> np.ndarray:
    if isinstance(t_samples, str):
        if t_samples != "all":
            raise ValueError("t_samples must be a sequence or 'all'")
        return np.arange(1, m)
    k = np.rint(np.asarray(t_samples, dtype=float) * m).astype(int)
    return np.unique(np.clip(k, 1, m - 1))


def _scan_grid(values, h, radii, t_samples, sign):
    f = np.asarray(values, dtype=float).ravel()
    N = f.size
    out_r, out_v, wit, skipped, flags = [], [], [], [], []
    for r in radii:
        m_real = r / h
        m = int(round(m_real))
        if abs(m - m_real) > 1e-6 * max(1.0, m_real):
            flags.append(f"snapped r={r:g} to {m * h:g}")
        if m < 2 or m > N - 1:
            skipped.append(float(r))
            continue
        best, arg = -np.inf, None
        # visit t from the middle outwards so near-ties keep the centred triple
        ks = _lattice_t(m, t_samples)
        ks = ks[np.argsort(np.abs(ks - m / 2.0), kind="stable")]
        for k in ks:
            t = k / m
            q = ((1 - t) * f[: N - m] + t * f[m:] - f[k : N - m + k]) / (t * (1 - t))
            q = sign * q
            i = int(np.argmax(q))
            if arg is None or q[i] > best + 1e-12 * max(1.0, abs(best)):
                best, arg = float(q[i]), (i, m, t)
        i, m_, t = arg
        out_r.append(m_ * h)
        out_v.append(sign * best)
        wit.append({"r": m_ * h, "i0": i, "i1": i + m_, "t": t, "value": sign * best})
    return out_r, out_v, wit, skipped, flags


def _scan_callable_1d(f, lo, hi, radii, t_samples, sign, n_base, refine):
    t = np.asarray(t_samples, dtype=float)
    out_r, out_v, wit, skipped = [], [], [], []
    for r in radii:
        if r <= 0 or hi - lo < r:
            skipped.append(float(r))
            continue

        def score(x0):
            x1 = x0 + r
            f0, f1 = np.asarray(f(x0)), np.asarray(f(x1))
            xt = x0[:, None] + t[None, :] * r
            ft = np.asarray(f(xt.ravel())).reshape(xt.shape)
            q = ((1 - t) * f0[:, None] + t * f1[:, None] - ft) / (t * (1 - t))
            return sign * q

        x0 = np.linspace(lo, hi - r, n_base)
        q = score(x0)
        i, j = np.unravel_index(int(np.argmax(q)), q.shape)
        best, bx = float(q[i, j]), float(x0[i])
        bt = float(t[j])
        step = (hi - r - lo) / max(1, n_base - 1)
        for _ in range(refine):
            xs = np.clip(np.linspace(bx - step, bx + step, 33), lo, hi - r)
            q = score(xs)
            i, j = np.unravel_index(int(np.argmax(q)), q.shape)
            if q[i, j] > best:
                best, bx, bt = float(q[i, j]), float(xs[i]), float(t[j])
            step /= 16.0
        out_r.append(float(r))
        out_v.append(sign * best)
        wit.append({"r": float(r), "x0": bx, "x1": bx + r, "t": bt, "value": sign * best})
    return out_r, out_v, wit, skipped


def _scan_callable_nd(f, lo, hi, radii, t_samples, sign, n_random, refine, rng):
    t = np.asarray(t_samples, dtype=float)
    n = lo.size
    out_r, out_v, wit, skipped = [], [], [], []

    def score(x0, u, r):
        x1 = x0 + r * u
        xt = x0[:, None, :] + (t[None, :, None] * r) * u[:, None, :]
        f0, f1 = np.asarray(f(x0)), np.asarray(f(x1))
        ft = np.asarray(f(xt.reshape(-1, n))).reshape(xt.shape[:2])
        return sign * ((1 - t) * f0[:, None] + t * f1[:, None] - ft) / (t * (1 - t))

    def inside(x):
        return np.all((x >= lo) & (x <= hi), axis=-1)

    for r in radii:
        if r <= 0 or np.linalg.norm(hi - lo) < r:
            skipped.append(float(r))
            continue
        # Latin-hypercube base points and uniform directions
        strata = (np.argsort(rng.random((n_random, n)), axis=0) + rng.random((n_random, n))) / n_random
        x0 = lo + strata * (hi - lo)
        u = rng.normal(size=(n_random, n))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        flip = ~inside(x0 + r * u)
        u[flip] = -u[flip]
        ok = inside(x0 + r * u)
        if not np.any(ok):
            skipped.append(float(r))
            continue
        x0, u = x0[ok], u[ok]
        q = score(x0, u, r)
        i, j = np.unravel_index(int(np.argmax(q)), q.shape)
        best, bx, bu, bt = float(q[i, j]), x0[i].copy(), u[i].copy(), float(t[j])
        spread = 0.25 * r
        for _ in range(refine):
            xs = np.clip(bx + spread * rng.normal(size=(64, n)), lo, hi)
            us = bu + 0.25 * rng.normal(size=(64, n)) * spread / max(r, 1e-300)
            us /= np.linalg.norm(us, axis=1, keepdims=True)
            good = inside(xs + r * us)
            if np.any(good):
                q = score(xs[good], us[good], r)
                i, j = np.unravel_index(int(np.argmax(q)), q.shape)
                if q[i, j] > best:
                    best, bx, bu, bt = float(q[i, j]), xs[good][i].copy(), us[good][i].copy(), float(t[j])
            spread /= 2.0
        out_r.append(float(r))
        out_v.append(sign * best)
        wit.append({"r": float(r), "x0": bx.tolist(), "x1": (bx + r * bu).tolist(), "t": bt, "value": sign * best})
    return out_r, out_v, wit, skipped


def _estimate(f, radii, t_samples, sign, grid, box, n_base, n_random, refine, rng) -> EmpiricalModulus:
    radii = np.asarray(radii, dtype=float).ravel()
    if np.any(radii < 0):
        raise ValueError("radii must be non-negative")
    radii = np.unique(radii[radii > 0])
    flags: list = []
    if grid is not None:
        g = np.asarray(grid, dtype=float).ravel()
        h = np.diff(g)
        if g.size < 3 or np.any(np.abs(h - h[0]) > 1e-9 * abs(h[0])) or h[0] <= 0:
            raise ValueError("grid must be uniform, increasing, with at least 3 points")
        rs, vs, wit, skipped, flags = _scan_grid(f, float(h[0]), radii, t_samples, sign)
        for w in wit:
            w["x0"], w["x1"] = float(g[w["i0"]]), float(g[w["i1"]])
    else:
        if isinstance(t_samples, str):
            raise ValueError("t_samples='all' needs grid values")
        if box is None:
            raise ValueError("callable input needs a box")
        b = np.asarray(box, dtype=float)
        if b.ndim == 1:
            rs, vs, wit, skipped = _scan_callable_1d(f, b[0], b[1], radii, t_samples, sign, n_base, refine)
        else:
            lo, hi = b[:, 0], b[:, 1]
            rng = np.random.default_rng(rng)
            rs, vs, wit, skipped = _scan_callable_nd(f, lo, hi, radii, t_samples, sign, n_random, refine, rng)
    if skipped:
        flags.append("skipped radii: " + ",".join(f"{r:g}" for r in skipped))
    order = np.argsort(rs)
    rs = [0.0] + [rs[i] for i in order]
    vs = [0.0] + [vs[i] for i in order]
    wit = tuple(wit[i] for i in order)
    # snapping can produce a repeated radius; keep the extreme value
    uniq_r, uniq_v = [], []
    for r, v in zip(rs, vs):
        if uniq_r and r == uniq_r[-1]:
            uniq_v[-1] = max(uniq_v[-1], v) if sign > 0 else min(uniq_v[-1], v)
        else:
            uniq_r.append(r)
            uniq_v.append(v)
    return EmpiricalModulus(
        np.array(uniq_r), np.array(uniq_v), "inf", witnesses=wit, skipped=tuple(skipped), flags=tuple(flags)
    )


def empirical_smoothness(
    f,
    radii,
    t_samples=DEFAULT_T,
    *,
    grid=None,
    box=None,
    n_base: int = 401,
    n_random: int = 4000,
    refine: int = 3,
    rng=0,
) -> EmpiricalModulus:
    """Lower estimate of the smoothness modulus from sampled collinear triples.

    For each radius ``r`` returns the largest observed
    ``((1-t) f(x0) + t f(x1) - f((1-t) x0 + t x1)) / (t (1-t))`` with
    ``|x1 - x0| = r``.

    ``f`` is either an array of values on the uniform 1D ``grid`` (every
    lattice triple is scanned, with ``t`` snapped to the lattice; pass
    ``t_samples="all"`` for every interior lattice point), or a callable
    with a domain ``box``: ``(lo, hi)`` for 1D, or an ``(n, 2)`` array for
    stratified random triples in higher dimension. Callable scans refine
    around the best triple found. Radii with no admissible triple are
    skipped and listed in ``skipped``.
    """
    return _estimate(f, radii, t_samples, 1.0, grid, box, n_base, n_random, refine, rng)


def empirical_convexity(
    f,
    radii,
    t_samples=DEFAULT_T,
    *,
    grid=None,
    box=None,
    n_base: int = 401,
    n_random: int = 4000,
    refine: int = 3,
    rng=0,
) -> EmpiricalModulus:
    """Upper estimate of the convexity modulus; the smallest observed
    quotient, otherwise as :func:`empirical_smoothness`."""
    return _estimate(f, radii, t_samples, -1.0, grid, box, n_base, n_random, refine, rng)


def _directional_quotients(f, box, n_triples, t_samples, rng, min_length):
    rng = np.random.default_rng(rng)
    b = np.asarray(box, dtype=float)
    lo, hi = b[:, 0], b[:, 1]
    n = lo.size
    x0 = lo + rng.random((n_triples, n)) * (hi - lo)
    x1 = lo + rng.random((n_triples, n)) * (hi - lo)
    d = x1 - x0
    keep = np.linalg.norm(d, axis=1) > min_length
    x0, x1, d = x0[keep], x1[keep], d[keep]
    t = np.asarray(t_samples, dtype=float)
    xt = x0[:, None, :] + t[None, :, None] * d[:, None, :]
    f0, f1 = np.asarray(f(x0)), np.asarray(f(x1))
    ft = np.asarray(f(xt.reshape(-1, n))).reshape(xt.shape[:2])
    q = ((1 - t) * f0[:, None] + t * f1[:, None] - ft) / (t * (1 - t))
    return x0, x1, d, t, q


def check_directional_smoothness(
    f, S, box, tol, *, n_triples: int = 4000, t_samples=DEFAULT_T, rng=0, min_length: float = 0.0, convexity: bool = False
) -> ViolationReport:
    """Random-triple test of ``M_t(x0, x1) / (t(1-t)) <= S(x1 - x0)``.

    ``f`` is a callable on ``(k, n)`` points and ``S`` a directional
    modulus; ``box`` is an ``(n, 2)`` array. With ``convexity=True`` tests
    the reverse inequality for a directional convexity modulus.
    """
    x0, x1, d, t, q = _directional_quotients(f, box, n_triples, t_samples, rng, min_length)
    Sd = np.asarray(S(d), dtype=float)[:, None]
    slack = (q - Sd) if convexity else (Sd - q)
    k = slack.shape[1]
    return _worst(
        "directional_convexity" if convexity else "directional_smoothness",
        slack,
        lambda i: {"x0": x0[i // k], "x1": x1[i // k], "t": t[i % k], "quotient": q.ravel()[i], "modulus": Sd[i // k, 0]},
        tol,
    )


def check_modulus_dominated(estimate: md.Tabulated, bound, tol, check: str = "modulus_bound") -> ViolationReport:
    """``bound(r) - estimate(r)`` at every positive tabulated radius.

    ``bound`` is a modulus or an array of values on ``estimate.grid``.
    """
    r = estimate.grid
    b = bound(r) if callable(bound) else np.asarray(bound, dtype=float)
    keep = r > 0
    r, b, v = r[keep], b[keep], estimate.values[keep]
    return _worst(
        check,
        b - v,
        lambda i: {"r": r[i], "estimate": v[i], "bound": b[i]},
        tol,
    )


def check_fixed_point(estimate: md.Tabulated, sigma_v: md.Modulus, rho_w: md.Modulus, epsilon: float, tol) -> ViolationReport:
    """``s <= (s + eps sigma_V) box eps rho_W*(. / eps)`` on the radii of ``s``.

    The inf-convolution is a minimum over the same radii, so it can only
    overestimate the right-hand side.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    r = estimate.grid
    if r[0] != 0.0:
        raise ValueError("estimate must be tabulated from r = 0")
    left = md.Tabulated(r, estimate.values + epsilon * sigma_v(r), "inf")
    conj = md.monotone_conjugate(rho_w, r / epsilon)
    right = md.Tabulated(r, epsilon * conj.values, "inf")
    rhs = md.inf_convolution(left, right, r).values
    return check_modulus_dominated(estimate, rhs, tol, "fixed_point")


# ---------------------------------------------------------------------------
# maps on pairs


def _as_points(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def sample_pairs(lo, hi, count: int, rng=0, *, dim: int = 1, near_fraction: float = 0.2, anchor_fraction: float = 0.05):
    """Random pairs in a box: uniform pairs, close pairs, and pairs with one
    end on a corner of the box. Returns two ``(count, dim)`` arrays."""
    rng = np.random.default_rng(rng)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,))
    x = lo + rng.random((count, dim)) * (hi - lo)
    y = lo + rng.random((count, dim)) * (hi - lo)
    n_near = int(near_fraction * count)
    n_anchor = int(anchor_fraction * count)
    width = float(np.min(hi - lo))
    scale = width * 10.0 ** rng.uniform(-4, -1, size=(n_near, 1))
    y[:n_near] = np.clip(x[:n_near] + scale * rng.normal(size=(n_near, dim)), lo, hi)
    corners = np.where(rng.random((n_anchor, dim)) < 0.5, lo, hi)
    y[n_near : n_near + n_anchor] = corners
    return x, y


def _pair_distances(x, y, Tx, Ty):
    x, y, Tx, Ty = (_as_points(a) for a in (x, y, Tx, Ty))
    dx = np.linalg.norm(x - y, axis=1)
    dT = np.linalg.norm(Tx - Ty, axis=1)
    keep = dx > 0
    return x[keep], y[keep], dx[keep], dT[keep]


def check_map_regularity(x, y, Tx, Ty, sigma: md.Modulus, tol=1e-3) -> tuple[ViolationReport, ViolationReport]:
    """Both forms of the map bound induced by a smoothness modulus.

    Quotient form: ``|T(x) - T(y)| <= 2 sigma(|x-y|) / |x-y|``.
    Conjugate form: ``sigma*(|T(x) - T(y)|) <= sigma(|x-y|)``.
    Coincident pairs are skipped.
    """
    x, y, dx, dT = _pair_distances(x, y, Tx, Ty)
    sx = np.asarray(sigma(dx), dtype=float)
    q_slack = 2.0 * sx / dx - dT
    uniq, inv = np.unique(dT, return_inverse=True)
    conj = md.monotone_conjugate(sigma, uniq).values[inv] if uniq.size else np.zeros(0)
    with np.errstate(invalid="ignore"):
        c_slack = sx - conj

    def wit(i):
        return {"x": x[i], "y": y[i], "dx": dx[i], "dT": dT[i]}

    return (
        _worst("map_quotient", q_slack, wit, tol),
        _worst("map_conjugate", c_slack, wit, tol),
    )


def holder_constant(x, y, Tx, Ty, h: float) -> tuple[float, dict]:
    """Largest ``|T(x) - T(y)| / |x - y|^h`` over the pairs, with its witness."""
    if not 0 < h <= 1:
        raise ValueError("Hölder exponent must lie in (0, 1]")
    x, y, dx, dT = _pair_distances(x, y, Tx, Ty)
    if dx.size == 0:
        return 0.0, {}
    q = dT / dx**h
    i = int(np.argmax(q))
    return float(q[i]), {"x": x[i].tolist(), "y": y[i].tolist(), "quotient": float(q[i])}


def check_holder(x, y, Tx, Ty, h: float, constant: float, tol=1e-2) -> ViolationReport:
    x, y, dx, dT = _pair_distances(x, y, Tx, Ty)
    q = dT / dx**h
    return _worst(
        "holder",
        constant - q,
        lambda i: {"x": x[i], "y": y[i], "quotient": q[i], "constant": constant, "exponent": h},
        tol,
    )


def kolesnikov_constant(p: float, q: float, alpha_v: float, beta_w: float) -> float:
    """``(q/p)^{p/(p+q)} (alpha_V / beta_W)^{1/q}`` for ``1 <= p <= 2 <= q``."""
    if not (1 <= p <= 2 <= q):
        raise ValueError("need 1 <= p <= 2 <= q")
    return (q / p) ** (p / (p + q)) * (alpha_v / beta_w) ** (1.0 / q)


def check_growth(x, Tx, T0, sigma: md.Modulus, rho: md.Modulus, tol=1e-3) -> ViolationReport:
    """``|T(x)| <= |T(0)| + 2 (rho**)^{-1}(sigma(|x|))`` at every sample."""
    x, Tx = _as_points(x), _as_points(Tx)
    nx = np.linalg.norm(x, axis=1)
    nT = np.linalg.norm(Tx, axis=1)
    t0 = float(np.linalg.norm(np.atleast_1d(T0)))
    inv = md.generalized_inverse(md.biconjugate(rho), np.asarray(sigma(nx), dtype=float))
    bound = t0 + 2.0 * np.atleast_1d(inv)
    return _worst(
        "growth",
        bound - nT,
        lambda i: {"x": x[i], "norm_T": nT[i], "bound": bound[i]},
        tol,
    )


def check_affine_growth(x, Tx, c: float, tol=1e-3) -> ViolationReport:
    """``|T(x)| <= c + |x|``."""
    x, Tx = _as_points(x), _as_points(Tx)
    nx = np.linalg.norm(x, axis=1)
    nT = np.linalg.norm(Tx, axis=1)
    return _worst("affine_growth", c + nx - nT, lambda i: {"x": x[i], "norm_T": nT[i], "c": c}, tol)


def check_approximate_isometry(x, y, Tx, Ty, L: float, tol=1e-3) -> ViolationReport:
    """``|x-y| - 8L <= |T(x) - T(y)| <= |x-y| + 8L``; the worse of the two sides."""
    if L < 0:
        raise ValueError("L must be non-negative")
    x, y, Tx, Ty = (_as_points(a) for a in (x, y, Tx, Ty))
    dx = np.linalg.norm(x - y, axis=1)
    dT = np.linalg.norm(Tx - Ty, axis=1)
    upper = 8.0 * L + dx - dT
    lower = dT - (dx - 8.0 * L)
    s = np.minimum(upper, lower)
    return _worst(
        "approximate_isometry",
        s,
        lambda i: {"x": x[i], "y": y[i], "dx": dx[i], "dT": dT[i], "side": "upper" if upper[i] <= lower[i] else "lower"},
        tol,
    )


def _line_map(mu: DiscreteMeasure, nu: DiscreteMeasure, s, antitone: bool):
    F, _ = cdf_and_quantile(mu, "node")
    _, Q = cdf_and_quantile(nu, "node")
    u = F(s)
    return Q(1.0 - u if antitone else u)


def check_subspace_contraction(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    alpha_v: float,
    beta_w: float,
    *,
    pairs: int = 10_000,
    span: tuple | None = None,
    rng=0,
    tol=1e-3,
) -> ViolationReport:
    """Lipschitz quotient of ``Proj_K o T`` for measures on two lines.

    ``mu`` and ``nu`` carry one-column frames (the unit directions of the
    lines). The transport between lines is monotone in frame coordinates
    when the directions make an acute angle and antitone otherwise; the
    projected map is read in ``mu``'s frame coordinate. The bound is
    ``sqrt(alpha_V / beta_W) |cos theta|``.
    """
    for m in (mu, nu):
        if m.frame is None or m.frame.shape[1] != 1:
            raise ValueError("measures must live on lines given by one-column frames")
    uK, uL = mu.frame[:, 0], nu.frame[:, 0]
    if np.linalg.norm(uK) == 0 or np.linalg.norm(uL) == 0:
        raise ValueError("degenerate direction")
    c = float(uK @ uL)
    s_all = mu.coords()[:, 0]
    lo, hi = (float(np.quantile(s_all, 0.0)), float(np.quantile(s_all, 1.0))) if span is None else span
    s0, s1 = sample_pairs(lo, hi, pairs, rng)
    s0, s1 = s0[:, 0], s1[:, 0]
    t0 = _line_map(mu, nu, s0, c < 0)
    t1 = _line_map(mu, nu, s1, c < 0)
    offset = float(uK @ (nu.base - mu.base))
    p0, p1 = offset + c * t0, offset + c * t1
    ds = np.abs(s0 - s1)
    keep = ds > 0
    quot = np.abs(p0 - p1)[keep] / ds[keep]
    bound = math.sqrt(alpha_v / beta_w) * abs(c)
    s0k, s1k = s0[keep], s1[keep]
    return _worst(
        "subspace_contraction",
        bound - quot,
        lambda i: {"s": s0k[i], "s2": s1k[i], "quotient": quot[i], "bound": bound, "cos": c},
        tol,
    )


# ---------------------------------------------------------------------------
# grid derivatives


def _cells(h, ndim: int) -> np.ndarray:
    h = np.broadcast_to(np.asarray(h, dtype=float), (ndim,)).copy()
    if np.any(h <= 0):
        raise ValueError("cell sizes must be positive")
    return h


def _shift(f: np.ndarray, off, margin: int) -> np.ndarray:
    sl = tuple(slice(margin + o, f.shape[k] - margin + o) for k, o in enumerate(off))
    return f[sl]


def fd_hessian(f: np.ndarray, h, step: int = 2, margin: int | None = None) -> np.ndarray:
    """Central-difference Hessian on the interior; shape ``interior + (n, n)``."""
    f = np.asarray(f, dtype=float)
    n = f.ndim
    h = _cells(h, n)
    m = step if margin is None else margin
    H = np.empty(tuple(s - 2 * m for s in f.shape) + (n, n))
    c = _shift(f, (0,) * n, m)
    for i in range(n):
        e = np.zeros(n, dtype=int)
        e[i] = step
        H[..., i, i] = (_shift(f, e, m) - 2 * c + _shift(f, -e, m)) / (step * h[i]) ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n, dtype=int)
            ej[j] = step
            v = (_shift(f, e + ej, m) - _shift(f, e - ej, m) - _shift(f, -e + ej, m) + _shift(f, -e - ej, m)) / (
                4 * step**2 * h[i] * h[j]
            )
            H[..., i, j] = H[..., j, i] = v
    return H


def fd_laplacian(f: np.ndarray, h, step: int = 2, margin: int | None = None) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    n = f.ndim
    h = _cells(h, n)
    m = step if margin is None else margin
    c = _shift(f, (0,) * n, m)
    out = np.zeros_like(c)
    for i in range(n):
        e = np.zeros(n, dtype=int)
        e[i] = step
        out += (_shift(f, e, m) - 2 * c + _shift(f, -e, m)) / (step * h[i]) ** 2
    return out


def _require_grid(f: np.ndarray, min_points: int = 5):
    if min(f.shape) < min_points:
        raise ValueError(f"grid too coarse: need at least {min_points} points per axis")


def _interior_coords(shape, margin, axes):
    idx = np.meshgrid(*[np.arange(margin, s - margin) for s in shape], indexing="ij")
    if axes is None:
        return [i.ravel() for i in idx]
    return [np.asarray(a)[i].ravel() for a, i in zip(axes, idx)]


def check_aniso_hessian(phi: np.ndarray, h, bound: np.ndarray, tol=1e-6, *, axes=None) -> ViolationReport:
    """``lambda_max(FD Hessian of phi - bound) <= 0`` at interior grid points.

    ``bound`` is the symmetric matrix the Hessian must stay below (for
    Gaussian-comparable marginals, the linear Brenier map between the
    comparison Gaussians). Differences use a 2-cell step; when the result
    lies within twice the tolerance of failing, it is sharpened by one
    Richardson step-halving.
    """
    phi = np.asarray(phi, dtype=float)
    _require_grid(phi)
    bound = np.atleast_2d(np.asarray(bound, dtype=float))
    tols = _tolerances(tol)
    total = sum(tols.values())
    margin = 2

    def worst(H):
        lam = np.linalg.eigvalsh(H - bound)[..., -1]
        return -lam.ravel()

    s = worst(fd_hessian(phi, h, 2, margin))
    flags = []
    if -2 * total <= s.min() < total:
        H = (4.0 * fd_hessian(phi, h, 1, margin) - fd_hessian(phi, h, 2, margin)) / 3.0
        s = worst(H)
        flags.append("richardson")
    pts = _interior_coords(phi.shape, margin, axes)
    return _worst(
        "aniso_hessian",
        s,
        lambda i: {"point": [float(p[i]) for p in pts], "max_eig_excess": -s[i]},
        tols,
        flags,
    )


def _cubic_weights(u: np.ndarray) -> np.ndarray:
    """Lagrange weights on nodes -1, 0, 1, 2 for offsets ``u`` in [0, 1)."""
    return np.stack(
        [
            -u * (u - 1) * (u - 2) / 6.0,
            (u + 1) * (u - 1) * (u - 2) / 2.0,
            -(u + 1) * u * (u - 2) / 2.0,
            (u + 1) * u * (u - 1) / 6.0,
        ],
        axis=-1,
    )


def interpolate_cubic(f: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Tensor-product 4-point Lagrange interpolation at fractional indices.

    ``coords`` has shape (k, ndim). Exact for polynomials of degree three
    in each coordinate; every stencil must fit inside the array.
    """
    f = np.asarray(f, dtype=float)
    n = f.ndim
    base = np.floor(coords).astype(int)
    u = coords - base
    if np.any(base - 1 < 0) or np.any(base + 2 > np.asarray(f.shape) - 1):
        raise ValueError("interpolation stencil leaves the grid")
    W = _cubic_weights(u)  # (k, n, 4)
    out = np.zeros(coords.shape[0])
    for offs in np.ndindex(*(4,) * n):
        idx = tuple(base[:, d] + offs[d] - 1 for d in range(n))
        w = np.prod([W[:, d, offs[d]] for d in range(n)], axis=0)
        out += w * f[idx]
    return out


def _sphere_directions(n: int, count: int = 64) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        th = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if n == 3:
        # antipodally symmetric Fibonacci sphere
        k = np.arange(count // 2) + 0.5
        z = 1.0 - k / (count // 2)
        r = np.sqrt(1 - z**2)
        th = np.pi * (1 + 5**0.5) * k
        half = np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)
        return np.vstack([half, -half])
    raise ValueError("mean-value check supports dimensions 1 to 3")


def check_superharmonic(
    phi: np.ndarray,
    h,
    alpha: float,
    tol=1e-6,
    *,
    radii_cells=(1, 2, 3),
    axes=None,
) -> tuple[ViolationReport, ViolationReport]:
    """Two forms of ``alpha``-superharmonicity for grid values ``phi``.

    Laplacian form: ``FD Laplacian <= alpha n`` at interior points.
    Mean-value form: with ``R`` uniform on the sphere of radius ``sqrt(n)``
    (so ``E|R|^2 = n``), ``E phi(x + r R) <= phi(x) + alpha n r^2 / 2`` for
    ``r`` equal to 1, 2 and 3 cells, averaged over 64 directions with local
    cubic interpolation. Its slack is divided by ``r^2 / 2`` so both forms
    share Laplacian units and the same tolerance.
    """
    phi = np.asarray(phi, dtype=float)
    _require_grid(phi)
    n = phi.ndim
    hc = _cells(h, n)
    tols = _tolerances(tol)
    lap = fd_laplacian(phi, hc, 2)
    s1 = (alpha * n - lap).ravel()
    pts = _interior_coords(phi.shape, 2, axes)
    rep1 = _worst(
        "superharmonic_laplacian",
        s1,
        lambda i: {"point": [float(p[i]) for p in pts], "laplacian": float(lap.ravel()[i]), "bound": alpha * n},
        tols,
    )
    dirs = _sphere_directions(n) * math.sqrt(n)
    rmax = max(radii_cells)
    margin = int(math.ceil(rmax * math.sqrt(n) * float(hc.max() / hc.min()))) + 2
    if min(phi.shape) <= 2 * margin:
        raise ValueError("grid too coarse for the requested mean-value radii")
    idx = np.meshgrid(*[np.arange(margin, s - margin) for s in phi.shape], indexing="ij")
    centers = np.stack([i.ravel() for i in idx], axis=1).astype(float)
    f0 = phi[tuple(i.ravel() for i in idx)]
    worst_s = np.full(f0.size, np.inf)
    worst_r = np.zeros(f0.size)
    for rc in radii_cells:
        r = rc * float(hc.min())
        acc = np.zeros(f0.size)
        for d in dirs:
            off = r * d / hc
            acc += interpolate_cubic(phi, centers + off)
        mean = acc / len(dirs)
        s = (f0 + alpha * n * r * r / 2.0 - mean) / (r * r / 2.0)
        better = s < worst_s
        worst_s = np.where(better, s, worst_s)
        worst_r = np.where(better, r, worst_r)
    mv_pts = _interior_coords(phi.shape, margin, axes)
    rep2 = _worst(
        "superharmonic_mean_value",
        worst_s,
        lambda i: {"point": [float(p[i]) for p in mv_pts], "radius": float(worst_r[i])},
        tols,
    )
    return rep1, rep2


# ---------------------------------------------------------------------------
# concentration and entropic bounds


def log_lipschitz_constant(L: float, beta: float) -> float:
    """``C = 64 L^2 / beta + 16 L sqrt(2 / pi) / sqrt(beta)``."""
    return 64.0 * L**2 / beta + 16.0 * L / math.sqrt(beta) * math.sqrt(2.0 / math.pi)


def entropic_hessian_constant(alpha_v: float, beta_w: float, L: float, epsilon: float) -> float:
    """Smoothness constant of the entropic potential under a log-Lipschitz
    perturbation of a strongly log-concave target."""
    C = log_lipschitz_constant(L, beta_w)
    k = epsilon**2 * alpha_v * beta_w
    return ((C - k) + math.sqrt((C - k) ** 2 + 4.0 * C * k)) / (2.0 * epsilon * beta_w)


def check_concentration_1d(
    nu: DiscreteMeasure,
    L: float,
    beta: float,
    *,
    s_grid=None,
    r_grid=None,
    tol=1e-3,
) -> tuple[ViolationReport, ViolationReport]:
    """Gaussian-type concentration of half-lines, and the variance bound.

    For ``A = (-inf, s]`` and ``A = [s, inf)`` checks
    ``nu(A_r) >= Phi(Phi^{-1}(nu(A)) + [sqrt(beta) r - 8 L / sqrt(beta)]_+)``.
    The variance check compares ``Var_nu(x)`` with
    ``1/beta + 16 L sqrt(2/pi) / beta^{3/2} + 64 L^2 / beta^2``.
    """
    if nu.dim != 1:
        raise ValueError("concentration check is one-dimensional")
    s = np.linspace(-3, 3, 61) if s_grid is None else np.asarray(s_grid, dtype=float)
    r = np.linspace(0, 4, 41) if r_grid is None else np.asarray(r_grid, dtype=float)
    F, _ = cdf_and_quantile(nu, "node")
    S, R = np.meshgrid(s, r, indexing="ij")
    shift = np.maximum(0.0, math.sqrt(beta) * R - 8.0 * L / math.sqrt(beta))
    with np.errstate(divide="ignore", invalid="ignore"):
        lower_A = F(S)
        lower_lhs = F(S + R)
        lower_rhs = ndtr(ndtri(lower_A) + shift)
        upper_A = 1.0 - F(S)
        upper_lhs = 1.0 - F(S - R)
        upper_rhs = ndtr(ndtri(upper_A) + shift)
    sl = np.stack([lower_lhs - lower_rhs, upper_lhs - upper_rhs])
    side = np.array(["lower", "upper"])

    def wit(i):
        k, a, b = np.unravel_index(i, sl.shape)
        return {"s": S[a, b], "r": R[a, b], "half_line": side[k], "slack": sl[k, a, b]}

    rep1 = _worst("concentration", sl, wit, tol)
    var = float(nu.covariance()[0, 0])
    bound = 1.0 / beta + 16.0 * L / beta**1.5 * math.sqrt(2.0 / math.pi) + 64.0 * L**2 / beta**2
    rep2 = _worst("variance", [bound - var], lambda i: {"variance": var, "bound": bound}, tol)
    return rep1, rep2


def check_entropic_hessian_bound(
    estimate: md.Tabulated, alpha_v: float, beta_w: float, L: float, epsilon: float, tol=5e-2
) -> ViolationReport:
    """Compare an empirical smoothness modulus of ``phi_eps`` with
    ``alpha_eps r^2 / 2``.

    With ``L = 0`` the constant degenerates to zero, so the check falls
    back to the epsilon-free bound ``sqrt(alpha_V / beta_W) r^2 / 2`` and
    says so in its flags.
    """
    r = estimate.grid
    if L == 0:
        bound = md.compose_regularity_bound(md.Quadratic(alpha_v), md.Quadratic(beta_w), r)
        rep = check_modulus_dominated(estimate, bound, tol, "entropic_hessian")
        return ViolationReport(rep.check, rep.slack, rep.witness, rep.tolerances, rep.flags + ("L=0 fallback",))
    a = entropic_hessian_constant(alpha_v, beta_w, L, epsilon)
    return check_modulus_dominated(estimate, a * r**2 / 2.0, tol, "entropic_hessian")


__all__ = [
    "DEFAULT_T",
    "CSV_HEADER",
    "ViolationReport",
    "EmpiricalModulus",
    "normal_cdf",
    "normal_quantile",
    "empirical_smoothness",
    "empirical_convexity",
    "check_directional_smoothness",
    "check_modulus_dominated",
    "check_fixed_point",
    "sample_pairs",
    "check_map_regularity",
    "holder_constant",
    "check_holder",
    "kolesnikov_constant",
    "check_growth",
    "check_affine_growth",
    "check_approximate_isometry",
    "check_subspace_contraction",
    "fd_hessian",
    "fd_laplacian",
    "interpolate_cubic",
    "check_aniso_hessian",
    "check_superharmonic",
    "log_lipschitz_constant",
    "entropic_hessian_constant",
    "check_concentration_1d",
    "check_entropic_hessian_bound",
]
