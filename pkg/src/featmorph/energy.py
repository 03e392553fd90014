"""Energy terms of the fully discrete model and their analytic gradients.

The per-pixel elastic density combines a log-determinant barrier with a
squared strain deviation; an edge-indicator anisotropy field rescales it so
deformation gradients are cheap across image edges.  The mismatch term
measures warped feature residuals in the grid-averaged L2 norm, which keeps
parameter values transferable across resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid, warp
from .errors import DimensionMismatchError, ParameterError


@dataclass(frozen=True)
class ElasticParams:
    """Weights of the elastic density: mu scales strain, lam the barrier."""

    mu: float
    lam: float

    def __post_init__(self):
        if self.mu <= 0 or self.lam <= 0:
            raise ParameterError(f"mu and lam must be positive, got {self.mu}, {self.lam}")


@dataclass(frozen=True)
class AnisotropyParams:
    """Pixel-scale Gaussians (sigma inner, rho outer), contrast xi1, floor xi2."""

    sigma: float = 0.5
    rho: float = 2.0
    xi1: float = 1000.0
    xi2: float = 1e-6

    def __post_init__(self):
        for name in ("sigma", "rho", "xi1", "xi2"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")


def elastic_density(jac: np.ndarray, params: ElasticParams) -> np.ndarray:
    """Per-pixel elastic cost of 2x2 Jacobians; +inf where det <= 0.

    Zero exactly at the identity, grows like a barrier as the determinant
    approaches zero, and penalizes deviation of the symmetrized Jacobian
    from the identity.
    """
    jac = np.asarray(jac, dtype=np.float64)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    out = np.full(det.shape, np.inf, dtype=np.float64)
    ok = det > 0
    if not np.any(ok):
        return out
    logdet = np.log(det[ok])
    with np.errstate(over="ignore"):
        barrier = 0.5 * params.lam * (np.exp(logdet * logdet) - 1.0)
    sym_dev_sq = (
        (jac[..., 0, 0][ok] - 1.0) ** 2
        + (jac[..., 1, 1][ok] - 1.0) ** 2
        + 2.0 * (0.5 * (jac[..., 0, 1][ok] + jac[..., 1, 0][ok])) ** 2
    )
    out[ok] = barrier + params.mu * sym_dev_sq
    return out


def elastic_density_grad(jac: np.ndarray, params: ElasticParams) -> np.ndarray:
    """Derivative of :func:`elastic_density` with respect to the Jacobian."""
    jac = np.asarray(jac, dtype=np.float64)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(det <= 0):
        raise ParameterError("elastic density gradient undefined for det <= 0")
    logdet = np.log(det)
    with np.errstate(over="ignore"):
        barrier_scale = params.lam * np.exp(logdet * logdet) * logdet
    # d(det)/dF = det * F^{-T}; cofactor form avoids the explicit inverse.
    inv_t = np.empty_like(jac)
    inv_t[..., 0, 0] = jac[..., 1, 1]
    inv_t[..., 0, 1] = -jac[..., 1, 0]
    inv_t[..., 1, 0] = -jac[..., 0, 1]
    inv_t[..., 1, 1] = jac[..., 0, 0]
    inv_t = inv_t / det[..., None, None]
    sym = 0.5 * (jac + np.swapaxes(jac, -1, -2))
    sym[..., 0, 0] -= 1.0
    sym[..., 1, 1] -= 1.0
    return barrier_scale[..., None, None] * inv_t + 2.0 * params.mu * sym


def anisotropy_map(rgb: np.ndarray, params: AnisotropyParams) -> np.ndarray:
    """Edge indicator in (xi2, 1 + xi2]: near xi2 at edges, 1 + xi2 on flats.

    Consumes an unscaled RGB image (3, h, w): blur each channel, sum squared
    unit-square Sobel gradients over channels and components, blur that, and
    map through exp(-s / xi1) + xi2.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise DimensionMismatchError(f"expected (3, h, w) image, got {rgb.shape}")
    sq = np.zeros(rgb.shape[1:], dtype=np.float64)
    for c in range(3):
        g = grid.sobel_gradient(grid.gaussian_blur(rgb[c], params.sigma))
        sq += g[..., 0] ** 2 + g[..., 1] ** 2
    smoothed = grid.gaussian_blur(sq, params.rho)
    # Tiny negative lobes can appear from rounding; the model needs s >= 0.
    np.maximum(smoothed, 0.0, out=smoothed)
    return np.exp(-smoothed / params.xi1) + params.xi2


def _check_channels(f: np.ndarray, f_next: np.ndarray, phi: np.ndarray) -> None:
    if f.shape != f_next.shape:
        raise DimensionMismatchError(f"feature shapes differ: {f.shape} vs {f_next.shape}")
    if f.shape[1:] != phi.shape[:2]:
        raise DimensionMismatchError(
            f"feature grid {f.shape[1:]} does not match deformation grid {phi.shape[:2]}"
        )


def mismatch(f: np.ndarray, f_next: np.ndarray, phi: np.ndarray) -> float:
    """Warped-residual term between consecutive (c, h, w) feature stacks."""
    _check_channels(f, f_next, phi)
    warped = warp.warp_stack(warp.bspline_prefilter_stack(f_next), phi)
    return mismatch_from_warped(f, warped)


def mismatch_from_warped(f: np.ndarray, warped_next: np.ndarray) -> float:
    """Mismatch once the warped stack is already available."""
    # The 1/(2(3+C)) prefactor against the grid-averaged per-channel norms
    # collapses to half the mean over channels and pixels together.
    res = warped_next - f
    return float(0.5 * np.mean(res * res))


def mismatch_linearization(f: np.ndarray, f_next: np.ndarray, phi_tilde: np.ndarray) -> np.ndarray:
    """Per-channel averaged gradients used to linearize the warp, (c, h, w, 2).

    Averages the Sobel gradient of the warped next feature with the Sobel
    gradient of the current feature; both in unit-square scaling.
    """
    _check_channels(f, f_next, phi_tilde)
    warped = warp.warp_stack(warp.bspline_prefilter_stack(f_next), phi_tilde)
    return linearization_from_warped(f, warped)


def linearization_from_warped(f: np.ndarray, warped_next: np.ndarray) -> np.ndarray:
    out = np.empty(f.shape + (2,), dtype=np.float64)
    for c in range(f.shape[0]):
        out[c] = 0.5 * (grid.sobel_gradient(warped_next[c]) + grid.sobel_gradient(f[c]))
    return out


def regularizer(phi: np.ndarray, a: np.ndarray, params: ElasticParams) -> float:
    """Grid-averaged anisotropy-weighted elastic density; +inf if inadmissible."""
    dens = elastic_density(grid.jacobian_forward(phi), params)
    if not np.all(np.isfinite(dens)):
        return float("inf")
    return float(np.mean(a * dens))


def regularizer_grad(phi: np.ndarray, a: np.ndarray, params: ElasticParams) -> np.ndarray:
    """Gradient of :func:`regularizer` w.r.t. pixel positions, (h, w, 2).

    Matches central finite differences of the regularizer on interior
    pixels; boundary entries are zero because those positions are pinned.
    """
    dims = grid.dims_of(a)
    jac = grid.jacobian_forward(phi)
    weights = elastic_density_grad(jac, params) * a[..., None, None]
    g = grid.jacobian_forward_adjoint(weights, dims) / dims.num_pixels
    g[0, :, :] = 0.0
    g[-1, :, :] = 0.0
    g[:, 0, :] = 0.0
    g[:, -1, :] = 0.0
    return g


def path_energy(
    fs: list[np.ndarray],
    phis: list[np.ndarray],
    anis: list[np.ndarray],
    params: ElasticParams,
    delta: float,
) -> tuple[float, list[tuple[float, float]]]:
    """Total discrete path energy and the per-step (reg, mismatch) breakdown."""
    k_steps = len(phis)
    if k_steps < 1 or len(fs) != k_steps + 1 or len(anis) != k_steps:
        raise DimensionMismatchError(
            f"inconsistent path: {len(fs)} features, {k_steps} deformations, {len(anis)} anisotropies"
        )
    terms = []
    total = 0.0
    for k in range(1, k_steps + 1):
        r = regularizer(phis[k - 1], anis[k - 1], params)
        d = mismatch(fs[k - 1], fs[k], phis[k - 1])
        terms.append((r, d))
        total += k_steps * (r + d / delta)
    return total, terms


def path_energy_feature_grad(
    k: int,
    fs: list[np.ndarray],
    phis: list[np.ndarray],
    anis: list[np.ndarray],
    params: ElasticParams,
    delta: float,
) -> np.ndarray:
    """Gradient of the path energy w.r.t. the k-th feature stack (0 < k < K).

    Anisotropies are treated as fixed, matching the alternating scheme which
    refreshes them in a separate step.
    """
    k_steps = len(phis)
    if not 0 < k < k_steps:
        raise DimensionMismatchError(f"feature index {k} not interior to 0..{k_steps}")
    c, h, w = fs[k].shape
    res_here = warp.warp_stack(warp.bspline_prefilter_stack(fs[k]), phis[k - 1]) - fs[k - 1]
    pulled = warp.warp_adjoint_stack(res_here, phis[k - 1])
    res_next = warp.warp_stack(warp.bspline_prefilter_stack(fs[k + 1]), phis[k]) - fs[k]
    scale = k_steps / (delta * c * h * w)
    return scale * (pulled - res_next)
