"""Named experiments: each assembles measures, solvers and verifiers and
returns a list of :class:`~otreg.lab.ViolationReport`.

Every experiment reads its parameters from an :class:`ExperimentConfig`
whose defaults live in :data:`DEFAULTS`; raw data goes through a
:class:`Dumper` into the output directory.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from . import lab
from . import moduli as md
from . import prekopa as pk
from .entropic import barycentric_map, fixed_point_residual, sinkhorn, solution_to_dict
from .measures import GridInfo, builtin, discretize
from .oracles import (
    aniso_S_eps_closed,
    aniso_S_eps_limit,
    aniso_S_eps_truncated,
    characteristic_root,
    entropic_gaussian_map,
    gaussian_map,
    gaussian_map_discrepancy,
    quantile_map_1d,
)

Report = lab.ViolationReport


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        if self.experiment not in DEFAULTS:
            raise KeyError(self.experiment)
        merged = dict(DEFAULTS[self.experiment])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValueError(f"unknown parameters for {self.experiment}: {sorted(unknown)}")
        merged.update(self.params)
        for k, v in merged.items():
            if k.startswith("tol") and not (isinstance(v, (int, float)) and v > 0):
                raise ValueError(f"tolerance {k} must be a positive number")
        if "eps_ladder" in merged:
            lad = tuple(float(e) for e in np.atleast_1d(merged["eps_ladder"]))
            if not lad or any(e <= 0 for e in lad):
                raise ValueError("eps_ladder must contain positive values")
            merged["eps_ladder"] = lad
        object.__setattr__(self, "params", merged)

    def __getitem__(self, key):
        return self.params[key]

    def canonical(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "params": _jsonable(self.params)}

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def _fmt(x) -> str:
    return f"{float(x):.12g}"


class Dumper:
    """Writes raw experiment data under one directory."""

    def __init__(self, out_dir):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)

    def json(self, name: str, obj) -> None:
        with open(self.root / name, "w") as fh:
            json.dump(_jsonable(obj), fh, sort_keys=True)

    def csv(self, name: str, header, rows) -> None:
        with open(self.root / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def _named(rep: Report, name: str) -> Report:
    return dataclasses.replace(rep, check=name)


def _scalar(check: str, slack: float, tol, witness=None, flags=()) -> Report:
    return Report(check, float(slack), witness or {}, lab._tolerances(tol), tuple(flags))


def _eps_tag(eps: float) -> str:
    return f"eps={eps:g}"


# ---------------------------------------------------------------------------
# shared pieces


def _entropic_1d_checks(tag, mu, nu, sigma_v, rho_w, eps, psi0, cfg, dump):
    """Sinkhorn at one epsilon plus the modulus checks on its potential."""
    sol = sinkhorn(mu, nu, eps, psi0=psi0)
    reps = [
        _scalar(
            f"{tag}/sinkhorn_residual",
            -fixed_point_residual(sol),
            cfg["tol_solver"],
            {"iterations": sol.iterations, "converged": sol.converged},
        )
    ]
    a = cfg["est_box"]
    xg = np.linspace(-a, a, cfg["est_points"])
    h = xg[1] - xg[0]
    radii = h * np.arange(0, int(cfg["r_max"] / h) + 1, 2)
    est = lab.empirical_smoothness(sol.phi_at(xg), radii, grid=xg)
    bar = md.compose_regularity_bound(sigma_v, rho_w, est.grid)
    reps.append(_named(lab.check_modulus_dominated(est, bar, cfg["tol"]), f"{tag}/sigma_bar"))
    reps.append(_named(lab.check_fixed_point(est, sigma_v, rho_w, eps, cfg["tol"]), f"{tag}/fixed_point"))
    dump.csv(
        f"sigma_hat_{tag.replace('=', '')}.csv",
        ["r", "sigma_hat", "sigma_bar"],
        zip(est.grid, est.values, bar),
    )
    return sol, est, reps


def _line_quantile_map(mu_spec, nu_spec, mu_box, nu_box, points):
    mu = discretize(mu_spec, mu_box, points)
    nu = discretize(nu_spec, nu_box, points)

    def T(x):
        return quantile_map_1d(mu, nu, np.asarray(x, dtype=float), "node")[0]

    return mu, nu, T


def _pairs(cfg, lo, hi, rng):
    x, y = lab.sample_pairs(lo, hi, cfg["pairs"], rng)
    return x[:, 0], y[:, 0]


# ---------------------------------------------------------------------------
# experiments


def run_caffarelli_1d(cfg: ExperimentConfig, dump: Dumper) -> list[Report]:
    mu_spec = builtin("gaussian", cov=cfg["mu_var"])
    nu_spec = builtin("gaussian", cov=cfg["nu_var"])
    b = cfg["box"]
    mu = discretize(mu_spec, (-b, b), cfg["points"])
    nu = discretize(nu_spec, (-b, b), cfg["points"])
    sv, rw = mu_spec.declared_sigma, nu_spec.declared_rho
    reps = []
    psi = None
    rng = np.random.default_rng(cfg.seed)
    bar_mod = md.sigma_bar_modulus(sv, rw, 4.0 * cfg["map_box"])
    x = np.linspace(-cfg["map_box"], cfg["map_box"], 601)
    for eps in sorted(cfg["eps_ladder"], reverse=True):
        tag = _eps_tag(eps)
        sol, est, r = _entropic_1d_checks(tag, mu, nu, sv, rw, eps, psi, cfg, dump)
        psi = sol.psi
        reps += r
        T = barycentric_map(sol, x)
        slope = float(entropic_gaussian_map(cfg["mu_var"], cfg["nu_var"], eps)[0, 0])
        err = np.abs(T - slope * x)
        i = int(np.argmax(err))
        reps.append(
            _scalar(f"{tag}/map_vs_entropic_gaussian", -err[i], cfg["tol_map"], {"x": x[i], "slope": slope})
        )
        xs, ys = _pairs(cfg, -cfg["map_box"], cfg["map_box"], rng)
        q, c = lab.check_map_regularity(xs, ys, barycentric_map(sol, xs), barycentric_map(sol, ys), bar_mod, cfg["tol"])
        reps += [_named(q, f"{tag}/map_quotient"), _named(c, f"{tag}/map_conjugate")]
        dump.json(f"potentials_{tag.replace('=', '')}.json", solution_to_dict(sol))
    return reps


def run_kolesnikov_holder(cfg, dump):
    L = cfg["L"]
    mu_spec = builtin("lipschitz_radial", L=L)
    nu_spec = builtin("gaussian", cov=1.0)
    _, _, T = _line_quantile_map(
        mu_spec, nu_spec, (-cfg["mu_box"], cfg["mu_box"]), (-cfg["nu_box"], cfg["nu_box"]), cfg["points"]
    )
    sv, rw = mu_spec.declared_sigma, nu_spec.declared_rho
    closed = math.sqrt(8.0 * L) * 2.0 / 3.0  # sigma_bar(r) = closed * r^{3/2}
    numeric = float(md.compose_regularity_bound(sv, rw, 1.0))
    reps = [_scalar("sigma_bar_closed_form", -abs(numeric - closed), cfg["tol_closed"], {"numeric": numeric, "closed": closed})]
    rng = np.random.default_rng(cfg.seed)
    xs, ys = _pairs(cfg, -cfg["pair_box"], cfg["pair_box"], rng)
    Tx, Ty = T(xs), T(ys)
    reps.append(lab.check_holder(xs, ys, Tx, Ty, 0.5, 2.0 * closed, cfg["tol"]))
    q, c = lab.check_map_regularity(xs, ys, Tx, Ty, md.Power(closed, 1.5), cfg["tol"])
    reps += [q, c]
    xg = np.linspace(-cfg["pair_box"], cfg["pair_box"], 2001)
    h = xg[1] - xg[0]
    est = lab.empirical_smoothness(mu_spec(xg[:, None]), h * np.arange(2, 1001, 4), grid=xg)
    reps.append(_named(lab.check_modulus_dominated(est, sv, cfg["tol_closed"]), "declared_sigma_V"))
    dump.csv("map_samples.csv", ["x", "T"], zip(xg[::10], T(xg[::10])))
    return reps


def _cauchy_setup(cfg):
    mu_spec = builtin("cauchy", n=1)
    nu_spec = builtin("gaussian", cov=1.0)
    mu, nu, T = _line_quantile_map(
        mu_spec, nu_spec, (-cfg["mu_box"], cfg["mu_box"]), (-cfg["nu_box"], cfg["nu_box"]), cfg["points"]
    )
    return mu_spec, nu_spec, T


def run_cauchy_gaussian(cfg, dump):
    mu_spec, nu_spec, T = _cauchy_setup(cfg)
    xm = cfg["x_max"]
    x = np.linspace(-xm, xm, 4001)
    exact = lab.normal_quantile(0.5 + np.arctan(x) / math.pi)
    err = np.abs(T(x) - exact)
    i = int(np.argmax(err))
    reps = [_scalar("quantile_oracle", -err[i], cfg["tol_oracle"], {"x": x[i]})]
    sv, rw = mu_spec.declared_sigma, nu_spec.declared_rho
    bar_mod = md.sigma_bar_modulus(sv, rw, 2.0 * xm + 1.0)
    rng = np.random.default_rng(cfg.seed)
    xs, ys = _pairs(cfg, -xm, xm, rng)
    q, c = lab.check_map_regularity(xs, ys, T(xs), T(ys), bar_mod, cfg["tol"])
    reps += [q, c]
    reps.append(lab.check_growth(x, T(x), T(np.zeros(1)), sv, rw, cfg["tol"]))
    h = x[1] - x[0]
    est = lab.empirical_smoothness(mu_spec(x[:, None]), h * np.arange(2, 2001, 8), grid=x)
    reps.append(_named(lab.check_modulus_dominated(est, sv, cfg["tol_declared"]), "declared_sigma_V"))
    dump.csv("map_samples.csv", ["x", "T", "exact"], zip(x[::20], T(x[::20]), exact[::20]))
    return reps


def _random_spd(rng, n):
    G = rng.normal(size=(n, n))
    return G @ G.T + 0.1 * np.eye(n)


def run_aniso_gaussian(cfg, dump):
    rng = np.random.default_rng(cfg.seed)
    gap_w = res_w = rel_w = halve_w = 0.0
    wit_rel = wit_halve = {}
    for k in range(cfg["instances"]):
        n = 2 + k % 2
        A, B = _random_spd(rng, n), _random_spd(rng, n)
        gap, res = gaussian_map_discrepancy(A, B)
        gap_w, res_w = max(gap_w, gap), max(res_w, res)
        d = rng.normal(size=n)
        for eps in cfg["s_eps"]:
            c = aniso_S_eps_closed(A, B, eps, d)
            t = aniso_S_eps_truncated(A, B, eps, d)
            rel = abs(c - t) / max(abs(t), 1e-300)
            if rel > rel_w:
                rel_w, wit_rel = rel, {"instance": k, "eps": eps}
        lim = aniso_S_eps_limit(A, B, d)
        e0 = min(cfg["s_eps"])
        ratio = abs(aniso_S_eps_closed(A, B, e0, d) - lim) / abs(aniso_S_eps_closed(A, B, e0 / 2, d) - lim)
        dev = abs(ratio - 2.0) / 2.0
        if dev > halve_w:
            halve_w, wit_halve = dev, {"instance": k, "ratio": ratio}
    reps = [
        _scalar("map_formulas_agree", -gap_w, cfg["tol_formula"]),
        _scalar("riccati_residual", -res_w, cfg["tol_riccati"]),
        _scalar("S_eps_closed_vs_banded", -rel_w, cfg["tol_seps"], wit_rel),
        _scalar("S_eps_halving", 0.2 - halve_w, cfg["tol_seps"], wit_halve),
    ]
    r11 = characteristic_root(1.0, 1.0)
    a_l, e_l = np.meshgrid(np.geomspace(1e-2, 1e2, 10), np.geomspace(1e-2, 1e1, 10))
    rr = characteristic_root(a_l, e_l)
    quad_res = float(np.max(np.abs(rr**2 - (2.0 + a_l * e_l**2) * rr + 1.0)))
    reps += [
        _scalar("characteristic_root_golden", -abs(r11 - (3.0 - math.sqrt(5.0)) / 2.0), cfg["tol_root"]),
        _scalar("characteristic_root_residual", -quad_res, cfg["tol_root"]),
    ]
    A = np.asarray(cfg["A"], dtype=float).reshape(2, 2)
    B = np.asarray(cfg["B"], dtype=float).reshape(2, 2)
    Tm = gaussian_map(A, B)
    e = cfg["eval_box"]
    ax = np.linspace(-e, e, cfg["eval_points"])
    h = ax[1] - ax[0]
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    P = np.stack([X, Y], -1)
    exact = 0.5 * np.einsum("...i,ij,...j->...", P, Tm, P)
    reps.append(_named(lab.check_aniso_hessian(exact, h, Tm, cfg["tol_fd"], axes=(ax, ax)), "exact_quadratic/aniso_hessian"))
    mu_spec, nu_spec = builtin("gaussian", cov=A), builtin("gaussian", cov=B)
    ba = 6.0 * math.sqrt(np.linalg.eigvalsh(A)[-1])
    bb = 6.0 * math.sqrt(np.linalg.eigvalsh(B)[-1])
    mu = discretize(mu_spec, (-ba, ba), cfg["grid_points"])
    nu = discretize(nu_spec, (-bb, bb), cfg["grid_points"])
    grid = GridInfo((ax, ax), np.array([ax[0], ax[0]]), np.array([ax[-1], ax[-1]]))
    for eps in cfg["eps_ladder"]:
        tag = _eps_tag(eps)
        sol = sinkhorn(mu, nu, eps)
        phi = sol.phi_on_grid(grid)
        Pe = entropic_gaussian_map(A, B, eps)
        corr = max(0.0, float(np.linalg.eigvalsh(Pe - Tm)[-1]))
        tol = {"solver_fd": cfg["tol"], "eps_correction": corr}
        reps.append(_named(lab.check_aniso_hessian(phi, h, Tm, tol, axes=(ax, ax)), f"{tag}/aniso_hessian"))
        H = lab.fd_hessian(phi, h, 2)
        dev = float(np.max(np.abs(H - Pe)))
        reps.append(_scalar(f"{tag}/hessian_vs_entropic_gaussian", -dev, cfg["tol"], {"iterations": sol.iterations}))
        dump.csv(
            f"phi_{tag.replace('=', '')}.csv",
            ["x", "y", "phi"],
            zip(X.ravel()[::7], Y.ravel()[::7], phi.ravel()[::7]),
        )
    return reps


def run_subspace_lines(cfg, dump):
    reps = []
    rng = np.random.default_rng(cfg.seed)
    e1 = np.array([[1.0], [0.0]])
    s = cfg["span"]
    for deg in cfg["angles"]:
        th = math.radians(deg)
        uL = np.array([[math.cos(th)], [math.sin(th)]])
        mu_spec = builtin("subspace_gaussian", frame=e1, cov=cfg["mu_var"])
        nu_spec = builtin("subspace_gaussian", frame=uL, cov=cfg["nu_var"])
        mu = discretize(mu_spec, None, cfg["points"])
        nu = discretize(nu_spec, None, cfg["points"])
        a, b = mu_spec.declared_sigma.alpha, nu_spec.declared_rho.alpha
        rep = lab.check_subspace_contraction(
            mu, nu, a, b, pairs=cfg["pairs"], span=(-s, s), rng=int(rng.integers(2**31)), tol=cfg["tol"]
        )
        reps.append(_named(rep, f"theta={deg:g}/subspace_contraction"))
    return reps


def run_lp_norm(cfg, dump):
    p = cfg["p"]
    ps = p / (p - 1.0)
    al, be = cfg["alpha"], cfg["beta"]
    c = 2.0 ** (1.0 - ps)
    const = (al / be) ** (1.0 / ps) * c ** (-(p - 1.0)) / (p - 1.0) ** (2.0 / ps)
    mu1 = builtin("power_norm", p=p, alpha=al)
    nu1 = builtin("power_norm", p=ps, alpha=be)
    _, _, T = _line_quantile_map(mu1, nu1, (-cfg["mu_box"], cfg["mu_box"]), (-cfg["nu_box"], cfg["nu_box"]), cfg["points"])
    rng = np.random.default_rng(cfg.seed)
    reps = []
    for dim in (1, 2):
        x, y = lab.sample_pairs(-cfg["pair_box"], cfg["pair_box"], cfg["pairs"], rng, dim=dim)
        Tx, Ty = T(x), T(y)
        dx = np.sum(np.abs(x - y) ** p, axis=1) ** (1.0 / p)
        dT = np.sum(np.abs(Tx - Ty) ** ps, axis=1) ** (1.0 / ps)
        keep = dx > 0
        bound = const * dx[keep] ** (p - 1.0)
        xs, ys = x[keep], y[keep]
        reps.append(
            lab._worst(
                f"dim={dim}/lp_holder",
                bound - dT[keep],
                lambda i: {"x": xs[i], "y": ys[i], "constant": const},
                cfg["tol"],
            )
        )
    box2 = np.array([[-3.0, 3.0], [-3.0, 3.0]])
    muN = builtin("power_norm", p=p, alpha=al, dim=2)
    nuN = builtin("power_norm", p=ps, alpha=be, dim=2)
    r1 = lab.check_directional_smoothness(muN, muN.declared_sigma, box2, cfg["tol_declared"], rng=cfg.seed)
    r2 = lab.check_directional_smoothness(nuN, nuN.declared_rho, box2, cfg["tol_declared"], rng=cfg.seed + 1, convexity=True)
    reps += [_named(r1, "declared_S_p"), _named(r2, "declared_R_pstar")]
    xg = np.linspace(-cfg["pair_box"], cfg["pair_box"], 601)
    dump.csv("map_samples.csv", ["x", "T"], zip(xg, T(xg)))
    return reps


def z_a_quadrature(L: float) -> float:
    """``int exp(L |u| - u^2 / 2) du`` by adaptive quadrature."""
    val, _ = quad(lambda u: math.exp(L * u - 0.5 * u * u), 0.0, math.inf, epsabs=1e-14, epsrel=1e-13)
    return 2.0 * val


def z_a_closed(L: float) -> float:
    """``2 e^{L^2/2} sqrt(2 pi) Phi(L)``."""
    return 2.0 * math.exp(0.5 * L * L) * math.sqrt(2 * math.pi) * float(lab.normal_cdf(L))


def _log_lip_map(cfg):
    L = cfg["L"]
    mu_spec = builtin("gaussian", cov=1.0)
    nu_spec = builtin("log_lip_gaussian", a="neg_abs", L=L)
    return _line_quantile_map(
        mu_spec, nu_spec, (-cfg["mu_box"], cfg["mu_box"]), (-cfg["nu_box"], cfg["nu_box"]), cfg["points"]
    )


def run_log_lipschitz(cfg, dump):
    L = cfg["L"]
    _, _, T = _log_lip_map(cfg)
    rng = np.random.default_rng(cfg.seed)
    pb = cfg["pair_box"]
    xs, ys = _pairs(cfg, -pb, pb, rng)
    reps = [lab.check_approximate_isometry(xs, ys, T(xs), T(ys), L, cfg["tol"])]
    xg = np.linspace(-pb, pb, 4001)
    reps.append(lab.check_affine_growth(xg, T(xg), 2.0 * L, cfg["tol"]))
    za_q, za_c = z_a_quadrature(L), z_a_closed(L)
    reps.append(_scalar("Z_a_quadrature_vs_closed", -abs(za_q - za_c), cfg["tol_closed"], {"quad": za_q, "closed": za_c}))
    st = cfg["fd_step"]
    deriv = float((T(np.array([st])) - T(np.array([-st])))[0] / (2 * st))
    target = za_q / math.sqrt(2 * math.pi)
    reps.append(_scalar("T_a_derivative_at_0", -abs(deriv - target), cfg["tol_deriv"], {"fd": deriv, "expected": target}))
    # entropic potential for a log-Lipschitz target
    mu_spec = builtin("gaussian", cov=1.0)
    nu_spec = builtin("log_lip_gaussian", a=cfg["profile"], L=L)
    b = cfg["ent_box"]
    mu = discretize(mu_spec, (-b, b), cfg["ent_points"])
    nu = discretize(nu_spec, (-b, b), cfg["ent_points"])
    psi = None
    for eps in sorted(cfg["eps_ladder"], reverse=True):
        tag = _eps_tag(eps)
        sol, est, r = _entropic_1d_checks(tag, mu, nu, mu_spec.declared_sigma, nu_spec.declared_rho, eps, psi, cfg, dump)
        psi = sol.psi
        reps += r
        reps.append(_named(lab.check_entropic_hessian_bound(est, 1.0, 1.0, L, eps, cfg["tol"]), f"{tag}/entropic_hessian"))
    dump.csv("map_samples.csv", ["x", "T_a"], zip(xg[::10], T(xg[::10])))
    return reps


def run_growth(cfg, dump):
    reps = []
    mu_spec, nu_spec, T = _cauchy_setup(cfg)
    x = np.linspace(-cfg["x_max"], cfg["x_max"], 4001)
    reps.append(_named(lab.check_growth(x, T(x), T(np.zeros(1)), mu_spec.declared_sigma, nu_spec.declared_rho, cfg["tol"]), "cauchy/growth"))
    g1, g2 = builtin("gaussian", cov=1.0), builtin("gaussian", cov=0.25)
    _, _, Tg = _line_quantile_map(g1, g2, (-10, 10), (-5, 5), cfg["points"] // 4)
    reps.append(_named(lab.check_growth(x, Tg(x) * 0 + x / 2, 0.0, g1.declared_sigma, g2.declared_rho, cfg["tol"]), "linear/growth"))
    xb = np.linspace(-6, 6, 2001)
    reps.append(_named(lab.check_growth(xb, Tg(xb), Tg(np.zeros(1)), g1.declared_sigma, g2.declared_rho, cfg["tol"]), "gaussian/growth"))
    nb = builtin("log_lip_gaussian", a=cfg["profile"], L=cfg["L"])
    _, _, Tb = _line_quantile_map(g1, nb, (-10, 10), (-12, 12), cfg["points"] // 4)
    reps.append(_named(lab.check_growth(xb, Tb(xb), Tb(np.zeros(1)), g1.declared_sigma, nb.declared_rho, cfg["tol"]), "log_lipschitz/growth"))
    dump.csv("cauchy_growth.csv", ["x", "T"], zip(x[::20], T(x[::20])))
    return reps


def run_concentration(cfg, dump):
    b = cfg["box"]
    nb = builtin("log_lip_gaussian", a=cfg["profile"], L=cfg["L"], alpha=cfg["beta"])
    nu = discretize(nb, (-b, b), cfg["points"])
    s = np.linspace(-3, 3, 61)
    r = np.linspace(0, 4, 41)
    c1, v1 = lab.check_concentration_1d(nu, cfg["L"], cfg["beta"], s_grid=s, r_grid=r, tol=cfg["tol"])
    g = discretize(builtin("gaussian", cov=1.0 / cfg["beta"]), (-b, b), cfg["points"])
    c0, _ = lab.check_concentration_1d(g, 0.0, cfg["beta"], s_grid=s, r_grid=r, tol=cfg["tol_equality"])
    at0, _ = lab.check_concentration_1d(nu, cfg["L"], cfg["beta"], s_grid=s, r_grid=[0.0], tol=cfg["tol_equality"])
    F = lab.cdf_and_quantile(nu, "node")[0]
    dump.csv("cdf.csv", ["s", "F"], zip(s, F(s)))
    return [
        _named(c1, "log_lipschitz/concentration"),
        _named(v1, "log_lipschitz/variance"),
        _named(c0, "gaussian/concentration_equality"),
        _named(at0, "log_lipschitz/concentration_r0"),
    ]


def run_superharmonic(cfg, dump):
    n = 2
    av, bw = 1.0 / cfg["mu_var"], 1.0 / cfg["nu_var"]
    e = cfg["eval_box"]
    ax = np.linspace(-e, e, cfg["eval_points"])
    h = ax[1] - ax[0]
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    k = math.sqrt(av / bw)
    exact = 0.5 * k * (X**2 + Y**2)
    l1, m1 = lab.check_superharmonic(exact, h, k, cfg["tol_exact"], axes=(ax, ax))
    reps = [_named(l1, "exact/laplacian"), _named(m1, "exact/mean_value")]
    mu = discretize(builtin("gaussian", cov=cfg["mu_var"], dim=n), (-cfg["mu_box"], cfg["mu_box"]), cfg["grid_points"])
    nu = discretize(builtin("gaussian", cov=cfg["nu_var"], dim=n), (-cfg["nu_box"], cfg["nu_box"]), cfg["grid_points"])
    grid = GridInfo((ax, ax), np.array([-e, -e]), np.array([e, e]))
    for eps in cfg["eps_ladder"]:
        tag = _eps_tag(eps)
        sol = sinkhorn(mu, nu, eps)
        phi = sol.phi_on_grid(grid)
        alpha = -eps * av / 2 + math.sqrt(av / bw + eps**2 * av**2 / 4)
        l2, m2 = lab.check_superharmonic(phi, h, alpha, cfg["tol"], axes=(ax, ax))
        reps += [_named(l2, f"{tag}/laplacian"), _named(m2, f"{tag}/mean_value")]
        dump.csv(f"laplacian_{tag.replace('=', '')}.csv", ["x", "y", "phi"], zip(X.ravel()[::7], Y.ravel()[::7], phi.ravel()[::7]))
    return reps


def _qpl_random_instance(rng, z, amp, kmin, kmax):
    k = rng.uniform(kmin, kmax, 2)
    ph = rng.uniform(0, 2 * math.pi, 2)
    F = np.array([-(z**2) / 2 + amp * np.sin(ki * z + p) for ki, p in zip(k, ph)])
    return pk.PLInstance(z, np.array([0.5, 0.5]), F, -(z**2) / 2)


def _random_log_concave_table(rng, y):
    a, b = rng.uniform(0.3, 2.0), rng.uniform(-1.0, 1.0)
    c, m = rng.uniform(0.0, 1.0), rng.uniform(-1.0, 1.0)
    return np.exp(-a * (y - b) ** 2 - c * np.abs(y - m))


def run_qpl(cfg, dump):
    rng = np.random.default_rng(cfg.seed)
    b = cfg["box"]
    z = np.linspace(-b, b, cfg["grid_points"])
    worst = math.inf
    worst_ent = math.inf
    worst_shift = 0.0
    wit = {}
    for k in range(cfg["instances"]):
        inst = _qpl_random_instance(rng, z, cfg["amp"], cfg["k_min"], cfg["k_max"])
        res = pk.verify_qpl(inst)
        if res.slack < worst:
            worst, wit = res.slack, {"instance": k, "lhs": res.lhs, "rhs": res.rhs}
        worst_ent = min(worst_ent, pk.entropy_convexity_slack(inst)[0])
        if k < 5:
            c = float(rng.normal() * 3)
            worst_shift = max(worst_shift, abs(pk.verify_qpl(inst.shifted(k % 2, c)).slack - res.slack))
        if k == 0:
            pk.save_instance(inst, dump.root / "instance_0.json")
    m = np.array([rng.normal(), rng.normal()])
    lam = np.array([0.5, 0.5])
    g = pk.PLInstance(z, lam, np.array([-(z - mi) ** 2 / 2 for mi in m]), -(z - lam @ m) ** 2 / 2)
    geq = pk.verify_qpl(g)
    cp = pk.barycentric_coupling(inst)
    marg = max(
        float(np.max(np.abs(cp.cell_masses(i, z) - np.diff(pk._grid_cdf(z, inst.f_tables[i]))))) for i in range(2)
    )
    reps = [
        _scalar("qpl_random", worst, cfg["tol"], wit),
        _scalar("qpl_gaussian_equality", -abs(geq.slack), cfg["tol_eq"], {"means": m}),
        _scalar("entropy_convexity", worst_ent, cfg["tol_eq"]),
        _scalar("qpl_shift_invariance", -worst_shift, cfg["tol_shift"]),
        _scalar("coupling_marginals", -marg, cfg["tol_marginal"]),
    ]
    # comonotone optimality against vertex enumeration
    lp_err = 0.0
    for k in range(cfg["lp_uniform"]):
        x, y = np.sort(rng.normal(size=8)), np.sort(rng.normal(size=8))
        a = np.full(8, 1 / 8)
        C = pk.pair_cost_matrix(x, y)
        v, _ = pk.lp_vertex_optimum(a, a, C)
        lp_err = max(lp_err, abs(float(np.sum(pk.comonotone_plan(a, a) * C)) - v))
    for k in range(cfg["lp_general"]):
        x, y = np.sort(rng.normal(size=4)), np.sort(rng.normal(size=4))
        a, bb = rng.random(4), rng.random(4)
        a, bb = a / a.sum(), bb / bb.sum()
        C = pk.pair_cost_matrix(x, y)
        v, _ = pk.lp_vertex_optimum(a, bb, C)
        lp_err = max(lp_err, abs(float(np.sum(pk.comonotone_plan(a, bb) * C)) - v))
    reps.append(_scalar("comonotone_vs_lp_vertices", -lp_err, cfg["tol_lp"]))
    two = np.array([0.5, 0.5])
    C2 = pk.pair_cost_matrix([0.0, 1.0], [0.0, 1.0])
    como = float(np.sum(pk.comonotone_plan(two, two) * C2))
    anti = float(np.sum(np.fliplr(pk.comonotone_plan(two, two)) * C2))
    reps.append(_scalar("comonotone_vs_antitone", anti - como, cfg["tol_lp"]))
    # classical inequality
    y = np.linspace(-8, 8, cfg["classical_points"])

    def gfun(q):
        return np.exp(-(q**2))

    r_eq = pk.verify_classical_pl(y, gfun(y), gfun(y), gfun, 0.5)
    r_sh = pk.verify_classical_pl(y, gfun(y - 1.0), gfun(y + 2.0), lambda q: gfun(q + 0.5), 0.5)
    reps.append(_scalar("classical_pl_identical", -abs(r_eq.slack), cfg["tol_classical_eq"]))
    reps.append(_scalar("classical_pl_shifted", r_sh.slack if r_sh.hypothesis_ok else -math.inf, cfg["tol_classical_eq"]))
    worst_c, ok = math.inf, True
    for k in range(cfg["classical_seeds"]):
        f0, f1 = _random_log_concave_table(rng, y), _random_log_concave_table(rng, y)
        hz, hv = pk.sup_convolution(y, f0, f1, 0.5)
        res = pk.verify_classical_pl(y, f0, f1, (hz, hv), 0.5)
        ok &= res.hypothesis_ok
        worst_c = min(worst_c, res.slack)
    reps.append(_scalar("classical_pl_random", worst_c, cfg["tol_classical"], flags=() if ok else ("hypothesis failed",)))
    return reps


def run_moduli_duality(cfg, dump):
    rng = np.random.default_rng(cfg.seed)
    n = cfg["grid_points"]
    order_w = fy_w = bic_w = math.inf
    for k in range(cfg["instances"]):
        U = rng.uniform(1.0, 5.0)
        u = np.linspace(0.0, U, n)
        m1 = np.concatenate([[0.0], np.cumsum(rng.exponential(size=n - 1) * rng.uniform(0, 2))]) * (U / n)
        m2 = m1 + np.concatenate([[0.0], np.cumsum(rng.exponential(size=n - 1))]) * (U / n)
        t1, t2 = md.Tabulated(u, m1), md.Tabulated(u, m2)
        v = np.linspace(0.0, rng.uniform(0.5, 5.0), n)
        c1 = md.monotone_conjugate(t1, v).values
        c2 = md.monotone_conjugate(t2, v).values
        order_w = min(order_w, float(np.min(c1 - c2)))
        fy = m1[:, None] + c1[None, :] - u[:, None] * v[None, :]
        fy_w = min(fy_w, float(np.min(fy)))
        bic = md.biconjugate(t1)
        bic_w = min(bic_w, float(np.min(m1 - bic(u))))
    reps = [
        _scalar("conjugate_order_reversal", order_w, cfg["tol"]),
        _scalar("fenchel_young", fy_w, cfg["tol"]),
        _scalar("biconjugate_minorant", bic_w, cfg["tol"]),
    ]
    # closed-form conjugates against sampled discrete Legendre transforms
    # the sampled conjugate is the exact conjugate of the piecewise-linear
    # interpolant, which overshoots a convex m by at most its midpoint gap
    worst_cf = math.inf
    for k in range(cfg["instances"]):
        fam = k % 3
        if fam == 0:
            m = md.Quadratic(rng.uniform(0.2, 3.0))
            vmax = 2.0 * m.alpha
        elif fam == 1:
            m = md.Power(rng.uniform(0.2, 2.0), rng.uniform(1.2, 3.0))
            vmax = m.c * m.p * 2.0 ** (m.p - 1.0)
        else:
            m = md.QuadraticMinusLinear(rng.uniform(0.5, 3.0), rng.uniform(0.0, 1.0))
            vmax = 2.0 * m.beta - 2.0 * m.L
        u = np.linspace(0.0, 4.0, 4001)
        v = np.linspace(0.0, vmax, 101)
        brute = md.monotone_conjugate(md.Tabulated(u, m(u)), v).values
        closed = md.monotone_conjugate(m, v).values
        mid = 0.5 * (u[1:] + u[:-1])
        gap = float(np.max(0.5 * (m(u[1:]) + m(u[:-1])) - m(mid)))
        worst_cf = min(worst_cf, 2.0 * gap - float(np.max(np.abs(brute - closed))))
    reps.append(_scalar("closed_vs_discrete_conjugate", worst_cf, cfg["tol"]))
    # Legendre transform of a sigma-smooth function is sigma*-convex
    worst_sc, worst_sub = math.inf, math.inf
    sc_tol = 0.0
    for k in range(cfg["instances"] // 4):
        c = rng.uniform(0.5, 3.0)
        a = rng.uniform(0.0, 0.9) * c
        X = 6.0
        x = np.linspace(-X, X, 2001)
        hx = x[1] - x[0]
        f = 0.5 * c * x**2 - a * np.log(np.cosh(x))
        lo, hi = (c - a) * -X * 0.5, (c - a) * X * 0.5
        y = np.linspace(lo, hi, 401)
        fs = md.discrete_legendre_1d(x, f, y)
        hy = y[1] - y[0]
        t = np.array(lab.DEFAULT_T)
        delta = c * hx**2 / 8.0
        tol_k = 2.0 * delta / float(np.min(t * (1 - t)))
        sc_tol = max(sc_tol, tol_k)
        est = lab.empirical_convexity(fs, hy * np.arange(2, 301, 6), grid=y)
        s = est.values[1:] - est.grid[1:] ** 2 / (2.0 * c)
        worst_sc = min(worst_sc, float(np.min(s)) + (sc_tol - tol_k))
        xs, ys = lab.sample_pairs(-X, X, 500, rng)
        grad = lambda q: c * q - a * np.tanh(q)  # noqa: E731
        qr, cr = lab.check_map_regularity(xs[:, 0], ys[:, 0], grad(xs[:, 0]), grad(ys[:, 0]), md.Quadratic(c), cfg["tol"])
        worst_sub = min(worst_sub, qr.slack, cr.slack)
    reps.append(_scalar("sigma_star_convexity_1d", worst_sc, {"grid": sc_tol, "round": cfg["tol"]}))
    reps.append(_scalar("subgradient_bound", worst_sub, cfg["tol"]))
    # directional version in 2D
    Q = np.array([[2.0, 0.6], [0.6, 1.0]])
    a = 0.5 * float(np.linalg.eigvalsh(Q)[0])
    X = 4.0
    ax = np.linspace(-X, X, cfg["grid_2d"])
    h2 = ax[1] - ax[0]
    G = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    fv = 0.5 * np.einsum("ki,ij,kj->k", G, Q, G) - a * np.sum(np.log(np.cosh(G)), axis=1)
    Qi = np.linalg.inv(Q)

    def fstar(pts):
        return md.discrete_legendre_nd(G, fv, np.atleast_2d(pts))

    Sstar = md.QuadraticForm(Qi)
    tset = (0.25, 0.5, 0.75)
    lam_max = float(np.linalg.eigvalsh(Q)[-1])
    delta2 = lam_max * h2**2 / 4.0
    tol2 = 2.0 * delta2 / (0.25 * 0.75)
    b = 0.3 * (float(np.linalg.eigvalsh(Q)[0]) - a) * X
    rep = lab.check_directional_smoothness(
        fstar, Sstar, np.array([[-b, b], [-b, b]]), {"grid": tol2, "round": cfg["tol"]},
        n_triples=cfg["triples_2d"], t_samples=tset, rng=cfg.seed, convexity=True,
    )
    reps.append(_named(rep, "directional_star_convexity_2d"))
    dump.csv("sigma_star_convexity.csv", ["r", "rho_hat_of_conjugate"], zip(est.grid, est.values))
    return reps


# ---------------------------------------------------------------------------
# registry


_ENT_1D = {"est_box": 4.0, "est_points": 321, "r_max": 3.0, "tol_solver": 1e-6}

DEFAULTS: dict[str, dict] = {
    "caffarelli_1d": {
        "mu_var": 1.0, "nu_var": 0.25, "box": 6.0, "points": 512, "eps_ladder": (0.5, 0.1, 0.05),
        "map_box": 3.0, "pairs": 2000, "tol": 5e-2, "tol_map": 1e-3, **_ENT_1D,
    },
    "kolesnikov_holder": {
        "L": 1.0, "mu_box": 40.0, "nu_box": 10.0, "points": 16001, "pair_box": 10.0, "pairs": 10000,
        "tol": 1e-2, "tol_closed": 1e-8,
    },
    "cauchy_gaussian": {
        "mu_box": 400.0, "nu_box": 10.0, "points": 65537, "x_max": 20.0, "pairs": 10000,
        "tol": 1e-3, "tol_oracle": 5e-2, "tol_declared": 1e-9,
    },
    "aniso_gaussian": {
        "instances": 100, "s_eps": (0.2, 0.1), "A": (1.0, 0.4, 0.4, 0.5), "B": (0.5, -0.2, -0.2, 0.8),
        "eps_ladder": (0.1,), "grid_points": 64, "eval_box": 1.5, "eval_points": 64,
        "tol": 5e-2, "tol_fd": 1e-6, "tol_formula": 1e-11, "tol_riccati": 1e-10, "tol_seps": 1e-8,
        "tol_root": 1e-13,
    },
    "subspace_lines": {
        "angles": (0.0, 60.0, 90.0), "mu_var": 1.0, "nu_var": 0.25, "points": 4096, "span": 3.0,
        "pairs": 10000, "tol": 1e-3,
    },
    "lp_norm": {
        "p": 1.5, "alpha": 1.0, "beta": 1.0, "mu_box": 12.0, "nu_box": 6.0, "points": 8001,
        "pair_box": 3.0, "pairs": 10000, "tol": 1e-3, "tol_declared": 1e-9,
    },
    "log_lipschitz": {
        "L": 1.0, "mu_box": 10.0, "nu_box": 12.0, "points": 16001, "pair_box": 4.0, "pairs": 10000,
        "tol": 1e-3, "tol_closed": 1e-10, "tol_deriv": 1e-4, "fd_step": 1e-7,
        "profile": "sin", "ent_box": 6.0, "ent_points": 512, "eps_ladder": (0.5, 0.1, 0.05), **_ENT_1D,
    },
    "growth": {
        "mu_box": 400.0, "nu_box": 10.0, "points": 65537, "x_max": 20.0, "profile": "sin", "L": 1.0,
        "tol": 1e-3,
    },
    "concentration": {
        "L": 1.0, "beta": 1.0, "profile": "sin", "box": 12.0, "points": 8001, "tol": 1e-3,
        "tol_equality": 1e-4,
    },
    "superharmonic": {
        "mu_var": 1.0, "nu_var": 0.25, "mu_box": 7.0, "nu_box": 4.0, "grid_points": 64,
        "eval_box": 3.0, "eval_points": 64, "eps_ladder": (0.1,), "tol": 5e-2, "tol_exact": 1e-6,
    },
    "qpl": {
        "instances": 50, "grid_points": 4001, "box": 10.0, "amp": 0.3, "k_min": 0.5, "k_max": 3.0,
        "lp_uniform": 5, "lp_general": 2, "classical_points": 401, "classical_seeds": 50,
        "tol": 1e-3, "tol_eq": 1e-6, "tol_shift": 1e-10, "tol_marginal": 1e-14, "tol_lp": 1e-12,
        "tol_classical_eq": 1e-8, "tol_classical": 1e-6,
    },
    "moduli_duality": {
        "instances": 100, "grid_points": 257, "grid_2d": 81, "triples_2d": 3000,
        "tol": 1e-9,
    },
}

EXPERIMENTS = {
    "caffarelli_1d": run_caffarelli_1d,
    "kolesnikov_holder": run_kolesnikov_holder,
    "cauchy_gaussian": run_cauchy_gaussian,
    "aniso_gaussian": run_aniso_gaussian,
    "subspace_lines": run_subspace_lines,
    "lp_norm": run_lp_norm,
    "log_lipschitz": run_log_lipschitz,
    "growth": run_growth,
    "concentration": run_concentration,
    "superharmonic": run_superharmonic,
    "qpl": run_qpl,
    "moduli_duality": run_moduli_duality,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[Report]:
    dump = Dumper(cfg.out_dir if out_dir is None else out_dir)
    reps = EXPERIMENTS[cfg.experiment](cfg, dump)
    names = [r.check for r in reps]
    if len(set(names)) != len(names):
        raise RuntimeError("duplicate check names")
    return sorted(reps, key=lambda r: r.check)


__all__ = ["ExperimentConfig", "DEFAULTS", "EXPERIMENTS", "Dumper", "run_experiment", "z_a_quadrature", "z_a_closed"]
