"""Red-black projected SOR sweeps (pure numpy fallback).

Same contracts and the same arithmetic, expression for expression, as the
compiled twin in ``_sweeps.pyx``; within one color pass every update reads
only opposite-color neighbors, so a vectorized masked assignment reproduces
the sequential result bit for bit.
"""

from __future__ import annotations

import numpy as np


def _parity_mask(shape, color):
    idx = np.add.outer(np.arange(shape[0]), np.arange(shape[1]))
    if len(shape) == 3:
        idx = idx[:, :, None] + np.arange(shape[2])[None, None, :]
    return (idx & 1) == color


def psor_sweep_2d(u, wy, wz, diag, rhs2, qpen, psi, lower, upper,
                  free, omega, color):
    c = (slice(1, -1), slice(1, -1))
    S = (wy[:-2, 1:-1] * u[:-2, 1:-1] + wy[1:-1, 1:-1] * u[2:, 1:-1]
         + wz[1:-1, :-2] * u[1:-1, :-2] + wz[1:-1, 1:-1] * u[1:-1, 2:])
    d = diag[c]
    ustar = (S + rhs2[c]) / d
    q = qpen[c]
    pen = (q > 0.0) & (ustar < psi[c])
    with np.errstate(divide="ignore", invalid="ignore"):
        un = np.where(pen, (S + rhs2[c] + q * psi[c]) / (d + q),
                      u[c] + omega * (ustar - u[c]))
    np.maximum(un, lower[c], out=un)
    np.minimum(un, upper[c], out=un)
    # padded parity: interior node (i,k) sits at padded (i+1,k+1), parity shift 0
    mask = _parity_mask(un.shape, (color + 2) % 2) & (free[c] != 0)
    u[c][mask] = un[mask]


def psor_sweep_3d(u, wx, wy, wz, diag, rhs2, qpen, psi, lower, upper,
                  free, omega, color):
    c = (slice(1, -1), slice(1, -1), slice(1, -1))
    S = (wx[:-2, 1:-1, 1:-1] * u[:-2, 1:-1, 1:-1]
         + wx[1:-1, 1:-1, 1:-1] * u[2:, 1:-1, 1:-1]
         + wy[1:-1, :-2, 1:-1] * u[1:-1, :-2, 1:-1]
         + wy[1:-1, 1:-1, 1:-1] * u[1:-1, 2:, 1:-1]
         + wz[1:-1, 1:-1, :-2] * u[1:-1, 1:-1, :-2]
         + wz[1:-1, 1:-1, 1:-1] * u[1:-1, 1:-1, 2:])
    d = diag[c]
    ustar = (S + rhs2[c]) / d
    q = qpen[c]
    pen = (q > 0.0) & (ustar < psi[c])
    with np.errstate(divide="ignore", invalid="ignore"):
        un = np.where(pen, (S + rhs2[c] + q * psi[c]) / (d + q),
                      u[c] + omega * (ustar - u[c]))
    np.maximum(un, lower[c], out=un)
    np.minimum(un, upper[c], out=un)
    mask = _parity_mask(un.shape, (color + 3) % 2) & (free[c] != 0)
    u[c][mask] = un[mask]


def psor_sweep_3d_plain(u, wx, wy, wz, diag, free, omega, color, lo, hi):
    c = (slice(1, -1), slice(1, -1), slice(1, -1))
    S = (wx[:-2, 1:-1, 1:-1] * u[:-2, 1:-1, 1:-1]
         + wx[1:-1, 1:-1, 1:-1] * u[2:, 1:-1, 1:-1]
         + wy[1:-1, :-2, 1:-1] * u[1:-1, :-2, 1:-1]
         + wy[1:-1, 1:-1, 1:-1] * u[1:-1, 2:, 1:-1]
         + wz[1:-1, 1:-1, :-2] * u[1:-1, 1:-1, :-2]
         + wz[1:-1, 1:-1, 1:-1] * u[1:-1, 1:-1, 2:])
    with np.errstate(divide="ignore", invalid="ignore"):
        un = u[c] + omega * (S / diag[c] - u[c])
    np.clip(un, lo, hi, out=un)
    mask = _parity_mask(un.shape, (color + 3) % 2) & (free[c] != 0)
    u[c][mask] = un[mask]
