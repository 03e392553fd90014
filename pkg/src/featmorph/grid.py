"""Raster containers, discrete differential operators, filtering, resampling.

Conventions used across the package:

* scalar fields are float64 arrays of shape ``(height, width)``, indexed as
  ``field[row, col]`` (row-major, address ``row * width + col``);
* vector fields carry a trailing component axis with the x component first;
* deformations store absolute positions in pixel units, i.e. the identity
  map holds ``(col, row)`` at every pixel.  Operators that approximate
  derivatives of the underlying unit-square model apply the required
  ``(width - 1)`` / ``(height - 1)`` scalings internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import DimensionMismatchError, ParameterError


@dataclass(frozen=True)
class GridDims:
    """Raster extent; width counts columns (x), height counts rows (y)."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise ParameterError(
                f"grid needs a nonempty interior, got {self.width}x{self.height}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def num_pixels(self) -> int:
        return self.width * self.height


def dims_of(field: np.ndarray) -> GridDims:
    """Grid dimensions from the leading (height, width) axes of any field."""
    return GridDims(width=field.shape[1], height=field.shape[0])


def identity_map(dims: GridDims) -> np.ndarray:
    """Deformation holding every pixel's own position, shape (h, w, 2)."""
    gx, gy = np.meshgrid(
        np.arange(dims.width, dtype=np.float64),
        np.arange(dims.height, dtype=np.float64),
    )
    return np.stack([gx, gy], axis=-1)


def pin_identity_boundary(phi: np.ndarray) -> np.ndarray:
    """Copy of ``phi`` with boundary pixels reset to their identity positions."""
    out = phi.copy()
    w = phi.shape[1]
    h = phi.shape[0]
    out[0, :, 0] = np.arange(w)
    out[0, :, 1] = 0.0
    out[-1, :, 0] = np.arange(w)
    out[-1, :, 1] = h - 1.0
    out[:, 0, 0] = 0.0
    out[:, 0, 1] = np.arange(h)
    out[:, -1, 0] = w - 1.0
    out[:, -1, 1] = np.arange(h)
    return out


def jacobian_forward(phi: np.ndarray) -> np.ndarray:
    """Forward-difference Jacobian of a deformation, shape (h, w, 2, 2).

    Column 1 holds the x-derivative, column 2 the y-derivative, both scaled
    so they approximate unit-square derivatives of the continuous map.  The
    difference acts on the displacement and contributes zero at the last
    row/column (Neumann convention), so the identity map has an exactly
    identity Jacobian everywhere, boundary included.
    """
    if phi.ndim != 3 or phi.shape[2] != 2:
        raise DimensionMismatchError(f"expected (h, w, 2) deformation, got {phi.shape}")
    h, w = phi.shape[:2]
    if h < 3 or w < 3:
        raise DimensionMismatchError(f"deformation grid too small: {w}x{h}")
    disp = phi - identity_map(GridDims(w, h))
    dx = np.zeros_like(disp)
    dx[:, :-1, :] = disp[:, 1:, :] - disp[:, :-1, :]
    dy = np.zeros_like(disp)
    dy[:-1, :, :] = disp[1:, :, :] - disp[:-1, :, :]
    sx = float(w - 1)
    sy = float(h - 1)
    jac = np.empty((h, w, 2, 2), dtype=np.float64)
    jac[..., 0, 0] = 1.0 + dx[..., 0]
    jac[..., 1, 0] = dx[..., 1] * (sx / sy)
    jac[..., 0, 1] = dy[..., 0] * (sy / sx)
    jac[..., 1, 1] = 1.0 + dy[..., 1]
    return jac


def jacobian_forward_adjoint(weights: np.ndarray, dims: GridDims) -> np.ndarray:
    """Adjoint of ``displacement -> jacobian_forward(id + displacement) - id``.

    ``weights`` has shape (h, w, 2, 2); the result (h, w, 2) satisfies
    ``sum(jac_linear(u) * weights) == sum(u * adjoint(weights))`` for any
    displacement ``u``, which is exactly what the regularizer gradient needs.
    """
    h, w = dims.height, dims.width
    sx = float(w - 1)
    sy = float(h - 1)

    def diff_x_adj(v):
        out = np.zeros_like(v)
        out[:, 1:] += v[:, :-1]
        out[:, :-1] -= v[:, :-1]
        return out

    def diff_y_adj(v):
        out = np.zeros_like(v)
        out[1:, :] += v[:-1, :]
        out[:-1, :] -= v[:-1, :]
        return out

    grad = np.zeros((h, w, 2), dtype=np.float64)
    grad[..., 0] = diff_x_adj(weights[..., 0, 0]) + diff_y_adj(
        weights[..., 0, 1] * (sy / sx)
    )
    grad[..., 1] = diff_x_adj(weights[..., 1, 0] * (sx / sy)) + diff_y_adj(
        weights[..., 1, 1]
    )
    return grad


def sobel_gradient(channel: np.ndarray, unit_scale: bool = True) -> np.ndarray:
    """3x3 Sobel gradient with replicate padding, shape (h, w, 2).

    With ``unit_scale`` the components are multiplied by (width - 1) and
    (height - 1) so they approximate the unit-square gradient; without it the
    result is the plain per-pixel difference quotient.
    """
    p = np.pad(np.asarray(channel, dtype=np.float64), 1, mode="edge")
    smooth_y = p[:-2, :] + 2.0 * p[1:-1, :] + p[2:, :]
    gx = (smooth_y[:, 2:] - smooth_y[:, :-2]) / 8.0
    smooth_x = p[:, :-2] + 2.0 * p[:, 1:-1] + p[:, 2:]
    gy = (smooth_x[2:, :] - smooth_x[:-2, :]) / 8.0
    h, w = channel.shape
    if unit_scale:
        gx = gx * (w - 1)
        gy = gy * (h - 1)
    return np.stack([gx, gy], axis=-1)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized discrete Gaussian with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return kern / kern.sum()


def gaussian_blur(channel: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with replicate boundary handling."""
    kern = gaussian_kernel(sigma)
    out = correlate1d(np.asarray(channel, dtype=np.float64), kern, axis=1, mode="nearest")
    return correlate1d(out, kern, axis=0, mode="nearest")


def resample_bilinear(field: np.ndarray, new_width: int, new_height: int) -> np.ndarray:
    """Bilinear resampling under the corner-fixing affine grid correspondence.

    Works on any array whose two leading axes are (height, width); trailing
    axes (vector components, or nothing) ride along unchanged.
    """
    h, w = field.shape[:2]
    if min(h, w) < 2 or min(new_height, new_width) < 2:
        raise ParameterError("resampling needs at least 2x2 source and target grids")
    field = np.asarray(field, dtype=np.float64)
    xs = np.arange(new_width) * ((w - 1) / (new_width - 1))
    ys = np.arange(new_height) * ((h - 1) / (new_height - 1))
    x0 = np.minimum(xs.astype(np.int64), w - 2)
    y0 = np.minimum(ys.astype(np.int64), h - 2)
    tx = (xs - x0).reshape((1, new_width) + (1,) * (field.ndim - 2))
    ty = (ys - y0).reshape((new_height, 1) + (1,) * (field.ndim - 2))
    rows = field[:, x0] * (1.0 - tx) + field[:, x0 + 1] * tx
    return rows[y0] * (1.0 - ty) + rows[y0 + 1] * ty
