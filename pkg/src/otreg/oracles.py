"""Closed-form and brute-force reference transports.

Gaussian-to-Gaussian maps, the sequence-space value ``S_eps`` that governs
entropic potentials between Gaussians (closed form and an independent
truncated linear-system route), and 1D quantile maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .measures import DiscreteMeasure, cdf_and_quantile


class ConsistencyError(RuntimeError):
    """Two routes to the same quantity disagree beyond round-off."""


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """Symmetric positive-definite matrix with its eigendecomposition."""

    entries: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if M.shape[0] != M.shape[1]:
            raise ValueError("matrix must be square")
        scale = max(1.0, float(np.abs(M).max()))
        if not np.allclose(M, M.T, atol=1e-12 * scale, rtol=0):
            raise ValueError("matrix is not symmetric")
        M = 0.5 * (M + M.T)
        lam, P = np.linalg.eigh(M)
        if lam[0] <= 0:
            raise ValueError("matrix is not positive definite")
        M.setflags(write=False)
        object.__setattr__(self, "entries", M)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", P)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def power(self, s: float) -> np.ndarray:
        P, lam = self.eigenvectors, self.eigenvalues
        out = (P * lam**s) @ P.T
        return 0.5 * (out + out.T)


def _spd(M) -> SpdMatrix:
    return M if isinstance(M, SpdMatrix) else SpdMatrix(M)


def spd_sqrt(M) -> SpdMatrix:
    return SpdMatrix(_spd(M).power(0.5))


def _map_routes(A: SpdMatrix, B: SpdMatrix):
    Bh, Bmh = B.power(0.5), B.power(-0.5)
    Ah, Amh = A.power(0.5), A.power(-0.5)
    inner = SpdMatrix(Bmh @ np.linalg.inv(A.entries) @ Bmh)
    T1 = Bh @ inner.power(0.5) @ Bh
    T2 = Amh @ SpdMatrix(Ah @ B.entries @ Ah).power(0.5) @ Amh
    return T1, T2


def gaussian_map_discrepancy(A, B) -> tuple[float, float]:
    """Relative gap between the two map formulas and the relative Riccati
    residual ``||T A T - B|| / max(1, ||B||)`` (Frobenius norms)."""
    A, B = _spd(A), _spd(B)
    T1, T2 = _map_routes(A, B)
    gap = float(np.linalg.norm(T1 - T2)) / max(1.0, float(np.linalg.norm(T1)))
    res = float(np.linalg.norm(T1 @ A.entries @ T1 - B.entries)) / max(1.0, float(np.linalg.norm(B.entries)))
    return gap, res


def gaussian_map(A, B) -> np.ndarray:
    """Linear Brenier map from N(0, A) to N(0, B).

    Computes ``B^{1/2} (B^{-1/2} A^{-1} B^{-1/2})^{1/2} B^{1/2}`` and checks it
    against ``A^{-1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}`` and against the
    Riccati equation ``T A T = B``.
    """
    A, B = _spd(A), _spd(B)
    T1, _ = _map_routes(A, B)
    gap, res = gaussian_map_discrepancy(A, B)
    if gap > 1e-11:
        raise ConsistencyError(f"map formulas disagree by {gap:.3e}")
    if res > 1e-10:
        raise ConsistencyError(f"Riccati residual {res:.3e}")
    return 0.5 * (T1 + T1.T)


def entropic_gaussian_map(A, B, eps: float) -> np.ndarray:
    """Linear barycentric map ``E[Y | X = x] = P x`` of the entropic plan
    between N(0, A) and N(0, B) with cost ``|x - y|^2 / 2`` and penalty
    ``eps * KL``.

    The plan is Gaussian with cross-covariance
    ``C = A^{1/2} (A^{1/2} B A^{1/2} + eps^2 I / 4)^{1/2} A^{-1/2} - eps I / 2``
    and ``P = C^T A^{-1}``. Since ``grad phi_eps = P x``, ``P`` is also the
    Hessian of the entropic potential. Tends to :func:`gaussian_map` as
    ``eps -> 0``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    A, B = _spd(A), _spd(B)
    Ah, Amh = A.power(0.5), A.power(-0.5)
    n = A.n
    D = SpdMatrix(Ah @ B.entries @ Ah + 0.25 * eps**2 * np.eye(n)).power(0.5)
    C = Ah @ D @ Amh - 0.5 * eps * np.eye(n)
    P = C.T @ np.linalg.inv(A.entries)
    return 0.5 * (P + P.T)


def characteristic_root(a, eps):
    """Root in (0, 1) of ``r^2 - (2 + a eps^2) r + 1 = 0``.

    Evaluated as ``1 / s`` with ``s`` the root above 1, which avoids the
    cancellation in ``(2 + a eps^2 - sqrt(...)) / 2`` for small ``a eps^2``.
    """
    a = np.asarray(a, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if np.any(a <= 0) or np.any(eps <= 0):
        raise ValueError("need a > 0 and eps > 0")
    c = a * eps**2
    s = 0.5 * (2.0 + c + np.sqrt(c * (4.0 + c)))
    r = 1.0 / s
    return float(r) if r.ndim == 0 else r


def _aniso_spectrum(A, B, d):
    A, B = _spd(A), _spd(B)
    Bh, Bmh = B.power(0.5), B.power(-0.5)
    M = SpdMatrix(Bmh @ np.linalg.inv(A.entries) @ Bmh)
    w0 = M.eigenvectors.T @ (Bh @ np.asarray(d, dtype=float))
    return A, B, M, w0


def aniso_S_eps_closed(A, B, eps: float, d) -> float:
    """Closed-form value of the sequence problem for each eigen-mode of
    ``M = B^{-1/2} A^{-1} B^{-1/2}``."""
    _, _, M, w0 = _aniso_spectrum(A, B, d)
    a = M.eigenvalues
    r = characteristic_root(a, eps)
    r = np.atleast_1d(r)
    one_m = 1.0 - r**2
    term = eps * a * r**2 / one_m + (1.0 - r) ** 2 / (eps * one_m)
    return float(0.5 * np.sum(term * w0**2))


def aniso_S_eps_limit(A, B, d) -> float:
    """``<d, B^{1/2} M^{1/2} B^{1/2} d> / 2``, the value at ``eps = 0``."""
    _, B, M, _ = _aniso_spectrum(A, B, d)
    Bh = B.power(0.5)
    d = np.asarray(d, dtype=float)
    return float(0.5 * d @ Bh @ M.power(0.5) @ Bh @ d)


def aniso_S_eps_truncated(A, B, eps: float, d, N: int | None = None) -> float:
    """Minimize the truncated sequence problem by one banded linear solve.

    Minimizes ``eps sum_{i=1}^{N} S(u_i) + (1/eps) sum_{i=0}^{N-1} R*(u_i - u_{i+1})``
    with ``u_0 = d``, ``u_N = 0``, ``S = <., A^{-1} .>/2`` and ``R* = <., B .>/2``.
    The first-order conditions form a block-tridiagonal system, assembled
    in banded storage and solved exactly. When ``N`` is omitted it is chosen
    so that the geometric tail of the slowest mode is below 1e-20.
    """
    A, B = _spd(A), _spd(B)
    d = np.asarray(d, dtype=float).ravel()
    n = A.n
    if N is None:
        _, _, M, _ = _aniso_spectrum(A, B, d)
        rmax = float(np.max(characteristic_root(M.eigenvalues, eps)))
        N = max(10, int(np.ceil(np.log(1e-20) / np.log(rmax))) + 1)
    if N < 10:
        raise ValueError("N must be at least 10")
    if not np.any(d):
        return 0.0
    Ainv = np.linalg.inv(A.entries)
    Bm = B.entries
    diag_block = eps * Ainv + (2.0 / eps) * Bm
    off_block = -(1.0 / eps) * Bm
    m = N - 1  # unknowns u_1 .. u_{N-1}
    size = m * n
    bw = 2 * n - 1
    ab = np.zeros((2 * bw + 1, size))

    k = np.arange(m)[:, None, None]
    p = np.arange(n)[None, :, None]
    q = np.arange(n)[None, None, :]
    rows = (k * n + p) + 0 * q
    cols = (k * n + q) + 0 * p
    ab[bw + rows - cols, cols] = np.broadcast_to(diag_block, rows.shape)
    if m > 1:
        r_up, c_up = rows[:-1], cols[:-1] + n
        ab[bw + r_up - c_up, c_up] = np.broadcast_to(off_block, r_up.shape)
        r_lo, c_lo = rows[:-1] + n, cols[:-1]
        ab[bw + r_lo - c_lo, c_lo] = np.broadcast_to(off_block, r_lo.shape)
    rhs = np.zeros(size)
    rhs[:n] = (1.0 / eps) * Bm @ d
    u = solve_banded((bw, bw), ab, rhs).reshape(m, n)
    seq = np.vstack([d, u, np.zeros(n)])
    S_part = 0.5 * np.einsum("ij,jk,ik->", seq[1:], Ainv, seq[1:])
    diffs = seq[:-1] - seq[1:]
    R_part = 0.5 * np.einsum("ij,jk,ik->", diffs, Bm, diffs)
    return float(eps * S_part + R_part / eps)


def quantile_map_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, x, mode: str = "node"):
    """Monotone transport ``T = Q_nu o F_mu`` between 1D measures.

    Returns ``(T(x), clamped)`` where ``clamped`` marks inputs outside the
    support box of ``mu`` (they are clamped to it).
    """
    F, _ = cdf_and_quantile(mu, mode)
    _, Q = cdf_and_quantile(nu, mode)
    x = np.asarray(x, dtype=float)
    xs = mu.coords()[:, 0]
    if mode == "node":
        lo, hi = xs.min(), xs.max()
    elif mu.grid is not None:
        lo, hi = float(mu.grid.lower[0]), float(mu.grid.upper[0])
    else:
        lo, hi = xs.min(), xs.max()
    clamped = (x < lo) | (x > hi)
    T = Q(F(np.clip(x, lo, hi)))
    return T, clamped


__all__ = [
    "ConsistencyError",
    "SpdMatrix",
    "spd_sqrt",
    "gaussian_map",
    "gaussian_map_discrepancy",
    "entropic_gaussian_map",
    "characteristic_root",
    "aniso_S_eps_closed",
    "aniso_S_eps_limit",
    "aniso_S_eps_truncated",
    "quantile_map_1d",
]
