"""Cubic B-spline warping of feature channels and its exact adjoint.

Channels are prefiltered into interpolating spline coefficients, so warping
with the identity deformation reproduces the channel instead of blurring it.
Sample positions outside the grid are clamped.  Beyond the border the
coefficient array is extended by linear extrapolation, which makes the
spline reproduce affine channels exactly up to the boundary; the prefilter
system, evaluation stencil, and adjoint all share that extension.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import DimensionMismatchError


def _interp_bands(n: int, transpose: bool) -> np.ndarray:
    # Interpolation system: rows 1..n-2 are (c[i-1] + 4 c[i] + c[i+1]) / 6 = y[i];
    # with the linearly extrapolated ghost coefficients the end rows collapse
    # to c[0] = y[0] and c[n-1] = y[n-1].
    if n < 3:
        raise DimensionMismatchError(f"spline prefilter needs length >= 3, got {n}")
    ab = np.zeros((3, n))
    ab[1, :] = 4.0 / 6.0
    ab[1, 0] = 1.0
    ab[1, n - 1] = 1.0
    ab[0, 1:] = 1.0 / 6.0
    ab[2, :-1] = 1.0 / 6.0
    if transpose:
        ab[0, n - 1] = 0.0
        ab[2, 0] = 0.0
    else:
        ab[0, 1] = 0.0
        ab[2, n - 2] = 0.0
    return ab


def _solve_separable(channel: np.ndarray, transpose: bool) -> np.ndarray:
    arr = np.asarray(channel, dtype=np.float64)
    h, w = arr.shape
    cx = solve_banded((1, 1), _interp_bands(w, transpose), arr.T).T
    return solve_banded((1, 1), _interp_bands(h, transpose), cx)


def bspline_prefilter(channel: np.ndarray) -> np.ndarray:
    """Coefficients whose cubic B-spline expansion interpolates ``channel``."""
    return _solve_separable(channel, transpose=False)


def bspline_prefilter_transpose(channel: np.ndarray) -> np.ndarray:
    """Transpose of :func:`bspline_prefilter` as a linear map."""
    return _solve_separable(channel, transpose=True)


def bspline_prefilter_stack(channels: np.ndarray) -> np.ndarray:
    """Prefilter a (c, h, w) stack in one pass per axis."""
    c, h, w = channels.shape
    flat = np.asarray(channels, dtype=np.float64).reshape(c * h, w)
    cx = solve_banded((1, 1), _interp_bands(w, False), flat.T).T.reshape(c, h, w)
    tmp = cx.transpose(1, 0, 2).reshape(h, c * w)
    cy = solve_banded((1, 1), _interp_bands(h, False), tmp)
    return cy.reshape(h, c, w).transpose(1, 0, 2)


def _stencil_1d(pos: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """4-tap cubic stencil: base index in [0, n-2] and kernel weights."""
    base = np.minimum(np.floor(pos), float(n - 2)).astype(np.int64)
    t = pos - base
    one_m_t = 1.0 - t
    w0 = one_m_t * one_m_t * one_m_t / 6.0
    w1 = 2.0 / 3.0 - t * t + 0.5 * t * t * t
    w2 = 2.0 / 3.0 - one_m_t * one_m_t + 0.5 * one_m_t * one_m_t * one_m_t
    w3 = t * t * t / 6.0
    return base, np.stack([w0, w1, w2, w3], axis=-1)


def _clamped_stencils(phi: np.ndarray, n_y: int, n_x: int):
    x = np.clip(phi[..., 0], 0.0, float(n_x - 1))
    y = np.clip(phi[..., 1], 0.0, float(n_y - 1))
    bx, wx = _stencil_1d(x, n_x)
    by, wy = _stencil_1d(y, n_y)
    return bx, wx, by, wy


def _extend_stack(coefs: np.ndarray) -> np.ndarray:
    """Pad one ghost coefficient per side by linear extrapolation."""
    c, h, w = coefs.shape
    out = np.empty((c, h + 2, w + 2), dtype=np.float64)
    out[:, 1:-1, 1:-1] = coefs
    out[:, 1:-1, 0] = 2.0 * coefs[:, :, 0] - coefs[:, :, 1]
    out[:, 1:-1, -1] = 2.0 * coefs[:, :, -1] - coefs[:, :, -2]
    out[:, 0, :] = 2.0 * out[:, 1, :] - out[:, 2, :]
    out[:, -1, :] = 2.0 * out[:, -2, :] - out[:, -3, :]
    return out


def _fold_extension(acc: np.ndarray) -> np.ndarray:
    """Transpose of :func:`_extend_stack` (ghost rows fold back inside)."""
    acc = acc.copy()
    acc[1, :] += 2.0 * acc[0, :]
    acc[2, :] -= acc[0, :]
    acc[-2, :] += 2.0 * acc[-1, :]
    acc[-3, :] -= acc[-1, :]
    acc = acc[1:-1, :]
    acc[:, 1] += 2.0 * acc[:, 0]
    acc[:, 2] -= acc[:, 0]
    acc[:, -2] += 2.0 * acc[:, -1]
    acc[:, -3] -= acc[:, -1]
    return acc[:, 1:-1]


def warp_stack(coefs: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Evaluate spline expansions of a (c, h, w) stack at deformed positions."""
    c, n_y, n_x = coefs.shape
    bx, wx, by, wy = _clamped_stencils(phi, n_y, n_x)
    padded = _extend_stack(coefs)
    flat = padded.reshape(c, (n_y + 2) * (n_x + 2))
    out = np.zeros((c,) + phi.shape[:2], dtype=np.float64)
    for b in range(4):
        row = (by + b) * (n_x + 2)  # ghost offset +1 and stencil offset -1 cancel
        wyb = wy[..., b]
        for a in range(4):
            out += (wyb * wx[..., a]) * flat[:, row + bx + a]
    return out


def warp(coef: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Pull a single coefficient channel back through a deformation."""
    return warp_stack(coef[None, ...], phi)[0]


def warp_channel(channel: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Prefilter then warp; the identity deformation reproduces the channel."""
    return warp(bspline_prefilter(channel), phi)


def warp_splat_adjoint(residual: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Exact transpose of ``coef -> warp(coef, phi)`` (splat onto coefficients)."""
    n_y, n_x = residual.shape
    bx, wx, by, wy = _clamped_stencils(phi, n_y, n_x)
    acc = np.zeros((n_y + 2) * (n_x + 2), dtype=np.float64)
    for b in range(4):
        row = (by + b) * (n_x + 2)
        wyb = wy[..., b]
        for a in range(4):
            np.add.at(acc, (row + bx + a).ravel(), ((wyb * wx[..., a]) * residual).ravel())
    return _fold_extension(acc.reshape(n_y + 2, n_x + 2))


def warp_adjoint(residual: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Gradient of ``channel -> warp_channel(channel, phi)`` pairings.

    Composes the splat transpose with the prefilter transpose, so that
    ``<warp_channel(c, phi), g> == <c, warp_adjoint(g, phi)>`` holds exactly.
    """
    return bspline_prefilter_transpose(warp_splat_adjoint(residual, phi))


def warp_adjoint_stack(residuals: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Channel-stack version of :func:`warp_adjoint`."""
    return np.stack([warp_adjoint(r, phi) for r in residuals], axis=0)
