"""Low-rank matrix factors F = U S V^T and operations that stay in factored form."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .linalg import mgs_qr, reduced_svd


@dataclass(frozen=True)
class LowRankFactors:
    """F = U @ S @ V.T with U (n1 x r), S (r x r), V (n2 x r).

    ``orthonormal`` marks factors whose U and V columns are orthonormal; the
    truncation step re-orthonormalizes when the flag is unset.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    orthonormal: bool = False

    def __post_init__(self):
        u, s, v = self.u, self.s, self.v
        if u.ndim != 2 or s.ndim != 2 or v.ndim != 2:
            raise DimensionMismatch("factors must be 2-D arrays")
        if s.shape != (u.shape[1], v.shape[1]):
            raise DimensionMismatch(
                "core must be %d x %d, got %s" % (u.shape[1], v.shape[1], s.shape)
            )

    @property
    def rank(self):
        return self.s.shape[0]

    @property
    def shape(self):
        return (self.u.shape[0], self.v.shape[0])

    def materialize(self):
        return self.u @ self.s @ self.v.T

    def scaled(self, alpha):
        return LowRankFactors(self.u, alpha * self.s, self.v, self.orthonormal)


def truncate(f, eps):
    """SVD truncation keeping exactly the singular values sigma_j > eps.

    Non-orthonormal factors are first re-orthonormalized by QR on both sides
    (core absorbs the triangular factors).  At least one mode is always kept so
    the result never has rank zero.  Output factors are orthonormal.
    """
    if eps < 0:
        raise DimensionMismatch("truncation threshold must be >= 0")
    if f.orthonormal:
        u, core, v = f.u, f.s, f.v
    else:
        u, r1 = mgs_qr(f.u)
        v, r2 = mgs_qr(f.v)
        core = r1 @ f.s @ r2.T
    w1, sig, w2 = reduced_svd(core)
    keep = int(np.sum(sig > eps))
    keep = max(keep, 1)
    keep = min(keep, sig.shape[0])
    uu = u @ w1[:, :keep]
    vv = v @ w2[:, :keep]
    return LowRankFactors(uu, np.diag(sig[:keep]), vv, orthonormal=True)


def joint_basis(f, extra_u, extra_v):
    """Orthonormal bases spanning [f.u | extra_u] and [f.v | extra_v].

    Returns (qu, qv, core_f, cu, cv) with f = qu core_f qv^T and the extra
    columns at coordinates cu, cv, so any update extra_u C extra_v^T has
    joint core cu @ C @ cv.T.  Lets a caller apply several low-rank
    corrections and truncations as small-core operations in one fixed basis.
    """
    ru_cols = f.u.shape[1]
    rv_cols = f.v.shape[1]
    qu, ru = mgs_qr(
        np.hstack([f.u, extra_u]), ortho_prefix=ru_cols if f.orthonormal else 0
    )
    qv, rv = mgs_qr(
        np.hstack([f.v, extra_v]), ortho_prefix=rv_cols if f.orthonormal else 0
    )
    core_f = ru[:, :ru_cols] @ f.s @ rv[:, :rv_cols].T
    return qu, qv, core_f, ru[:, ru_cols:], rv[:, rv_cols:]


def core_truncate(core, eps):
    """SVD-truncate a core held in orthonormal bases, keeping sigma > eps.

    Returns (w1 diag(sigma) w2^T as a dense core, w1, sigma, w2) with the
    rank floor of one mode, mirroring ``truncate`` without touching the
    outer factors.
    """
    w1, sig, w2 = reduced_svd(core)
    keep = max(1, int(np.sum(sig > eps)))
    w1 = w1[:, :keep]
    w2 = w2[:, :keep]
    sig = sig[:keep]
    return (w1 * sig) @ w2.T, w1, sig, w2


def lr_add(f, g, alpha=1.0, beta=1.0):
    """alpha*F + beta*G in factored form by block stacking; caller truncates."""
    if f.shape != g.shape:
        raise DimensionMismatch("lr_add: shapes %s and %s differ" % (f.shape, g.shape))
    u = np.hstack([f.u, g.u])
    v = np.hstack([f.v, g.v])
    rf, rg = f.rank, g.rank
    s = np.zeros((rf + rg, rf + rg))
    s[:rf, :rf] = alpha * f.s
    s[rf:, rf:] = beta * g.s
    return LowRankFactors(u, s, v, orthonormal=False)


def lr_frobenius(f):
    """Frobenius norm without materializing F."""
    if f.orthonormal:
        return float(np.linalg.norm(f.s))
    gu = f.u.T @ f.u
    gv = f.v.T @ f.v
    val = float(np.einsum("ij,ik,kl,jl->", gu, f.s, gv, f.s))
    return float(np.sqrt(max(val, 0.0)))


def spectral_scale(f):
    """Largest singular value of the core, used to scale relative tolerances."""
    return float(np.linalg.norm(f.s, 2))


def lr_moments(f, grid1, grid2, dv):
    """Discrete number density, fluxes and energy of a distribution in factored form.

    Midpoint quadrature with cell area dv^2:
      n     = dv^2 * 1^T F 1
      gam1  = dv^2 * v1^T F 1
      gam2  = dv^2 * 1^T F v2
      E     = dv^2/2 * (v1^2^T F 1 + 1^T F v2^2)

    Returns (n, gam1, gam2, energy).  Cost O((n1+n2) r).
    """
    grid1 = np.asarray(grid1, dtype=float)
    grid2 = np.asarray(grid2, dtype=float)
    if grid1.shape[0] != f.u.shape[0] or grid2.shape[0] != f.v.shape[0]:
        raise DimensionMismatch("grids do not match factor dimensions")
    w = dv * dv
    us = f.u.T.sum(axis=1) @ f.s          # 1^T U S
    vs = f.v.T.sum(axis=1)                # V^T 1
    u1 = (grid1 @ f.u) @ f.s              # v1^T U S
    v2 = grid2 @ f.v                      # v2^T V
    u2 = (grid1**2 @ f.u) @ f.s
    v22 = grid2**2 @ f.v
    n = w * float(us @ vs)
    gam1 = w * float(u1 @ vs)
    gam2 = w * float(us @ v2)
    energy = 0.5 * w * (float(u2 @ vs) + float(us @ v22))
    return n, gam1, gam2, energy
