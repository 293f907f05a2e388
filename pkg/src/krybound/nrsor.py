"""NR-SOR inner iteration: column sweeps on the least-squares normal
system, used as an implicit preconditioner inside BA-GMRES.

The solver path touches only A itself, one column at a time; the
normal-equation matrix is formed densely only in the analysis helpers
(explicit splitting and the preconditioned matrix), never while
solving.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dd
from .errors import DimensionMismatchError, InvalidMatrixError
from .gmres import ba_gmres

__all__ = [
    "NrsorConfig", "nrsor_config", "nrsor_apply", "SplittingMatrices",
    "explicit_splitting", "preconditioned_matrix", "nrsor_ba_gmres",
]


@dataclass
class NrsorConfig:
    omega: float
    inner_steps: int
    column_norms: object     # ||a_i||^2, one per column, working precision


def nrsor_config(a, omega=1.0, inner_steps=1):
    """Validate parameters and precompute squared column norms once."""
    if not (0.0 < omega < 2.0):
        raise ValueError(f"omega must lie in (0, 2), got {omega}")
    if inner_steps < 1:
        raise ValueError(f"inner_steps must be >= 1, got {inner_steps}")
    n = a.shape[1]
    norms = dd.zeros_like(a, (n,))
    dead = []
    for i in range(n):
        nn = dd.vdot(a[:, i], a[:, i])
        norms[i] = nn
        if float(dd.approx(nn)) == 0.0:
            dead.append(i)
    if dead:
        raise InvalidMatrixError(f"zero columns at indices {dead}")
    return NrsorConfig(float(omega), int(inner_steps), norms)


def nrsor_apply(a, cfg, u):
    """w = P^(l) A^T u: l relaxation sweeps on A^T A w = A^T u from w = 0.

    Each sweep visits columns in natural order; the running residual r
    starts at u and is corrected column by column.
    """
    m, n = a.shape
    if u.shape != (m,):
        raise DimensionMismatchError(f"operand shape {u.shape} vs m={m}")
    w = dd.zeros_like(u, (n,))
    r = u.copy()
    omega = cfg.omega
    for _ in range(cfg.inner_steps):
        for i in range(n):
            col = a[:, i]
            delta = (dd.vdot(col, r) * omega) / cfg.column_norms[i]
            w[i] = w[i] + delta
            r = r - col * delta
    return w


@dataclass
class SplittingMatrices:
    m: object     # D/omega + L  (lower triangular)
    n: object     # (1/omega - 1) D - U
    h: object     # M^{-1} N


def explicit_splitting(a, omega=1.0):
    """Dense splitting of A^T A for analysis; M - N = A^T A by design."""
    if not (0.0 < omega < 2.0):
        raise ValueError(f"omega must lie in (0, 2), got {omega}")
    ata = a.T @ a
    n = ata.shape[0]
    diag_img = np.diag(dd.approx(ata))
    if np.any(diag_img == 0.0):
        dead = [int(i) for i in np.nonzero(diag_img == 0.0)[0]]
        raise InvalidMatrixError(f"zero columns at indices {dead}")
    m = dd.zeros_like(ata, (n, n))
    nn = dd.zeros_like(ata, (n, n))
    for i in range(n):
        m[i, i] = ata[i, i] / omega
        # D/omega - D, in working precision so M - N = A^T A holds exactly
        nn[i, i] = m[i, i] - ata[i, i]
        if i > 0:
            m[i, :i] = ata[i, :i]
        if i + 1 < n:
            nn[i, i + 1:] = -ata[i, i + 1:]
    h = _forward_solve_matrix(m, nn)
    return SplittingMatrices(m, nn, h)


def _forward_solve_matrix(lower, rhs):
    n = lower.shape[0]
    x = rhs.copy()
    for k in range(n):
        if k > 0:
            x[k, :] = x[k, :] - lower[k, :k] @ x[:k, :]
        x[k, :] = x[k, :] / lower[k, k]
    return x


def preconditioned_matrix(a, omega=1.0, inner_steps=1):
    """I - H^l, the matrix BA-GMRES effectively iterates with.

    Formed by square-and-multiply on H; analysis use only.
    """
    h = explicit_splitting(a, omega).h
    n = h.shape[0]
    power = _matrix_power(h, inner_steps)
    return dd.eye_like(h, n) - power


def _matrix_power(h, l):
    n = h.shape[0]
    result = None
    base = h.copy()
    e = int(l)
    while e > 0:
        if e & 1:
            result = base.copy() if result is None else result @ base
        e >>= 1
        if e:
            base = base @ base
    return dd.eye_like(h, n) if result is None else result


def nrsor_ba_gmres(a, cfg, b, x0=None, opts=None):
    """BA-GMRES with the NR-SOR sweep as the preconditioner map."""
    return ba_gmres(a, lambda u: nrsor_apply(a, cfg, u), b, x0, opts)
