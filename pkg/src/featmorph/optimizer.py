"""Inertial proximal alternating minimization on a single grid level.

Each sweep over the path refreshes the anisotropy of step k, takes a
backtracked proximal-gradient step in the deformation (explicit on the
elastic term, closed-form prox on the linearized mismatch), and a
backtracked gradient step in the interior features.  Both variable blocks
carry their own inertial history and Lipschitz estimates.

Inner products and norms below are grid-averaged (mean over pixels), the
same normalization the energy terms use, so accepted step sizes transfer
across resolutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import energy, grid, warp
from .errors import DimensionMismatchError, ParameterError


@dataclass(frozen=True)
class IpalmParams:
    """Iteration controls: inertia, sweep count, blending weight, backtracking."""

    beta: float = 1.0 / math.sqrt(2.0)
    iterations: int = 250
    delta: float = 1.0
    lipschitz_init: float = 1.0
    lipschitz_up: float = 2.0
    lipschitz_down: float = 0.9
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ParameterError(f"beta must be in [0, 1), got {self.beta}")
        if self.iterations < 0:
            raise ParameterError(f"iterations must be >= 0, got {self.iterations}")
        if self.delta <= 0:
            raise ParameterError(f"delta must be positive, got {self.delta}")
        if self.lipschitz_init <= 0 or self.lipschitz_up <= 1.0 or not 0.0 < self.lipschitz_down <= 1.0:
            raise ParameterError("invalid backtracking constants")


@dataclass
class IterationStats:
    """One record per outer sweep, consumable as a structured trace."""

    iteration: int
    energy: float
    reg_total: float
    mis_total: float
    reg_k: tuple[float, ...]
    mis_k: tuple[float, ...]
    phi_backtracks: int
    feat_backtracks: int
    skipped_steps: int
    min_det: float

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "energy": self.energy,
            "reg": self.reg_total,
            "mismatch": self.mis_total,
            "phi_backtracks": self.phi_backtracks,
            "feat_backtracks": self.feat_backtracks,
            "skipped_steps": self.skipped_steps,
            "min_det": self.min_det,
        }


@dataclass
class PathState:
    """All optimization variables of one level.

    ``fs`` holds K+1 channel stacks (c, h, w); the first and last are fixed
    boundary data.  ``phis`` holds K deformations with identity boundaries,
    ``anis`` the K anisotropy fields.  ``eta`` records the scale of the
    leading RGB channels so the anisotropy can consume the unscaled image.
    """

    fs: list[np.ndarray]
    phis: list[np.ndarray]
    anis: list[np.ndarray]
    eta: float = 1.0
    prev_fs: list[np.ndarray] = field(default_factory=list)
    prev_phis: list[np.ndarray] = field(default_factory=list)
    lips_phi: list[float] = field(default_factory=list)
    lips_f: list[float] = field(default_factory=list)

    def __post_init__(self):
        k_steps = len(self.phis)
        if k_steps < 1 or len(self.fs) != k_steps + 1 or len(self.anis) != k_steps:
            raise DimensionMismatchError(
                f"inconsistent path state: {len(self.fs)} features, "
                f"{k_steps} deformations, {len(self.anis)} anisotropies"
            )
        if not self.prev_fs:
            self.prev_fs = [f.copy() for f in self.fs]
        if not self.prev_phis:
            self.prev_phis = [p.copy() for p in self.phis]
        if not self.lips_phi:
            self.lips_phi = [1.0] * k_steps
        if not self.lips_f:
            self.lips_f = [1.0] * (k_steps + 1)

    @property
    def k_steps(self) -> int:
        return len(self.phis)

    @property
    def dims(self) -> grid.GridDims:
        return grid.dims_of(self.fs[0][0])

    @classmethod
    def blend_initial(cls, f_a: np.ndarray, f_b: np.ndarray, k_steps: int, eta: float = 1.0) -> "PathState":
        """Linear feature blend with identity deformations; always finite energy."""
        if f_a.shape != f_b.shape:
            raise DimensionMismatchError(f"endpoint shapes differ: {f_a.shape} vs {f_b.shape}")
        dims = grid.dims_of(f_a[0])
        fs = [
            ((1.0 - k / k_steps) * f_a + (k / k_steps) * f_b).astype(np.float64)
            for k in range(k_steps + 1)
        ]
        ident = grid.identity_map(dims)
        phis = [ident.copy() for _ in range(k_steps)]
        anis = [np.ones(dims.shape) for _ in range(k_steps)]
        return cls(fs=fs, phis=phis, anis=anis, eta=eta)


def extrapolate(current: np.ndarray, previous: np.ndarray, beta: float, is_deformation: bool = False) -> np.ndarray:
    """Inertial point current + beta (current - previous)."""
    out = current + beta * (current - previous)
    if is_deformation:
        out = grid.pin_identity_boundary(out)
    return out


def prox_deformation(
    phi_point: np.ndarray,
    tau: float,
    f: np.ndarray,
    f_next: np.ndarray,
    phi_tilde: np.ndarray,
    lambdas: np.ndarray,
    k_steps: int,
    delta: float,
) -> np.ndarray:
    """Closed-form minimizer of the proximal linearized-mismatch objective.

    Minimizes ``tau/2 * mean|phi - phi_point|^2`` plus ``K/delta`` times the
    linearized mismatch built from ``lambdas`` around ``phi_tilde``; the
    grid-average in both terms cancels, leaving an independent SPD 2x2 solve
    per pixel.  Boundary pixels are copied from ``phi_point`` unchanged.
    """
    warped = warp.warp_stack(warp.bspline_prefilter_stack(f_next), phi_tilde)
    return _prox_deformation_warped(phi_point, tau, f, warped, phi_tilde, lambdas, k_steps, delta)


def _prox_deformation_warped(
    phi_point: np.ndarray,
    tau: float,
    f: np.ndarray,
    warped_next: np.ndarray,
    phi_tilde: np.ndarray,
    lambdas: np.ndarray,
    k_steps: int,
    delta: float,
) -> np.ndarray:
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    n_ch = f.shape[0]
    h, w = phi_point.shape[:2]
    c_fac = k_steps / (tau * delta * n_ch)
    # lambdas carry unit-square scaling; positions are stored in pixel
    # units, so rescale the components before mixing them with phi.
    lam_x = lambdas[..., 0] / (w - 1)
    lam_y = lambdas[..., 1] / (h - 1)
    sxx = np.einsum("chw,chw->hw", lam_x, lam_x)
    sxy = np.einsum("chw,chw->hw", lam_x, lam_y)
    syy = np.einsum("chw,chw->hw", lam_y, lam_y)
    resid = warped_next - f  # T[f_next, phi_tilde] - f, per channel
    bx = np.einsum("chw,chw->hw", lam_x, resid)
    by = np.einsum("chw,chw->hw", lam_y, resid)
    # rhs = phi_point - c (Lambda (T - f) - Lambda Lambda^T phi_tilde)
    rhs_x = phi_point[..., 0] - c_fac * (bx - sxx * phi_tilde[..., 0] - sxy * phi_tilde[..., 1])
    rhs_y = phi_point[..., 1] - c_fac * (by - sxy * phi_tilde[..., 0] - syy * phi_tilde[..., 1])
    a11 = 1.0 + c_fac * sxx
    a12 = c_fac * sxy
    a22 = 1.0 + c_fac * syy
    det = a11 * a22 - a12 * a12
    out = np.empty_like(phi_point)
    out[..., 0] = (a22 * rhs_x - a12 * rhs_y) / det
    out[..., 1] = (a11 * rhs_y - a12 * rhs_x) / det
    out[0, :, :] = phi_point[0, :, :]
    out[-1, :, :] = phi_point[-1, :, :]
    out[:, 0, :] = phi_point[:, 0, :]
    out[:, -1, :] = phi_point[:, -1, :]
    return out


def _min_det(phi: np.ndarray) -> float:
    jac = grid.jacobian_forward(phi)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    return float(det.min())


class _StepCounters:
    def __init__(self):
        self.phi_backtracks = 0
        self.feat_backtracks = 0
        self.skipped = 0
        self.min_det = float("inf")


def _update_deformation(
    state: PathState,
    k: int,
    elastic: energy.ElasticParams,
    params: IpalmParams,
    counters: _StepCounters,
) -> None:
    """Backtracked proximal step on deformation k (1-based)."""
    idx = k - 1
    f_prev = state.fs[k - 1]
    f_here = state.fs[k]
    a_k = state.anis[idx]
    dims = state.dims
    n_px = dims.num_pixels

    phi_tilde = extrapolate(state.phis[idx], state.prev_phis[idx], params.beta, is_deformation=True)
    reg_tilde = energy.regularizer(phi_tilde, a_k, elastic)
    if not math.isfinite(reg_tilde):
        # Inertia overshot past the barrier; restart from the current iterate.
        phi_tilde = state.phis[idx].copy()
        reg_tilde = energy.regularizer(phi_tilde, a_k, elastic)
    grad_e = energy.regularizer_grad(phi_tilde, a_k, elastic)
    grad_mean = grad_e * n_px

    coefs = warp.bspline_prefilter_stack(f_here)
    warped = warp.warp_stack(coefs, phi_tilde)
    lambdas = energy.linearization_from_warped(f_prev, warped)

    # Acceptance is gated on the true per-step objective at the incumbent,
    # not at the extrapolated point: the barrier makes extrapolation
    # overshoots arbitrarily expensive, and measuring descent against them
    # would let the elastic term ratchet upward.
    k_steps = state.k_steps
    obj_cur = k_steps * (
        energy.regularizer(state.phis[idx], a_k, elastic)
        + energy.mismatch(f_prev, f_here, state.phis[idx]) / params.delta
    )
    lip = state.lips_phi[idx]
    for _ in range(params.max_backtracks):
        phi_point = phi_tilde - (k_steps / lip) * grad_mean
        phi_new = _prox_deformation_warped(
            phi_point, lip, f_prev, warped, phi_tilde, lambdas, k_steps, params.delta
        )
        det_min = _min_det(phi_new)
        if det_min > 0.0:
            reg_new = energy.regularizer(phi_new, a_k, elastic)
            diff = phi_new - phi_tilde
            descent_bound = (
                k_steps * reg_tilde
                + k_steps * float(np.sum(grad_e * diff))
                + 0.5 * lip * float(np.mean(np.sum(diff * diff, axis=-1)))
            )
            ok = k_steps * reg_new <= descent_bound + 1e-12 * (1.0 + abs(k_steps * reg_tilde))
            if ok:
                mis_new = energy.mismatch_from_warped(f_prev, warp.warp_stack(coefs, phi_new))
                obj_new = k_steps * (reg_new + mis_new / params.delta)
                ok = obj_new <= obj_cur + 1e-12 * (1.0 + abs(obj_cur))
            if ok:
                state.prev_phis[idx] = state.phis[idx]
                state.phis[idx] = phi_new
                state.lips_phi[idx] = max(lip * params.lipschitz_down, 1e-8)
                counters.min_det = min(counters.min_det, det_min)
                return
        lip *= params.lipschitz_up
        counters.phi_backtracks += 1
    # Exhausted: keep the variable, drop stale inertia, surface the skip.
    state.prev_phis[idx] = state.phis[idx]
    state.lips_phi[idx] = lip
    counters.skipped += 1


def _feature_coupling(
    f_k: np.ndarray,
    f_prev: np.ndarray,
    f_next: np.ndarray,
    phi_here: np.ndarray,
    phi_next: np.ndarray,
    k_steps: int,
    delta: float,
) -> float:
    """Smooth part of the energy seen by feature k (both mismatch terms)."""
    d1 = energy.mismatch(f_prev, f_k, phi_here)
    d2 = energy.mismatch(f_k, f_next, phi_next)
    return k_steps * (d1 + d2) / delta


def _update_feature(
    state: PathState,
    k: int,
    elastic: energy.ElasticParams,
    params: IpalmParams,
    counters: _StepCounters,
) -> None:
    """Backtracked gradient step on interior feature k."""
    f_tilde = extrapolate(state.fs[k], state.prev_fs[k], params.beta)
    fs_eval = list(state.fs)
    fs_eval[k] = f_tilde
    grad_e = energy.path_energy_feature_grad(
        k, fs_eval, state.phis, state.anis, elastic, params.delta
    )
    n_px = state.dims.num_pixels
    grad_mean = grad_e * n_px
    k_steps = state.k_steps
    h_tilde = _feature_coupling(
        f_tilde, state.fs[k - 1], state.fs[k + 1], state.phis[k - 1], state.phis[k], k_steps, params.delta
    )
    lip = state.lips_f[k]
    for _ in range(params.max_backtracks):
        f_new = f_tilde - grad_mean / lip
        h_new = _feature_coupling(
            f_new, state.fs[k - 1], state.fs[k + 1], state.phis[k - 1], state.phis[k], k_steps, params.delta
        )
        diff = f_new - f_tilde
        bound = (
            h_tilde
            + float(np.sum(grad_e * diff))
            + 0.5 * lip * float(np.sum(diff * diff)) / n_px
        )
        if h_new <= bound + 1e-12 * (1.0 + abs(h_tilde)):
            state.prev_fs[k] = state.fs[k]
            state.fs[k] = f_new
            state.lips_f[k] = max(lip * params.lipschitz_down, 1e-8)
            return
        lip *= params.lipschitz_up
        counters.feat_backtracks += 1
    state.prev_fs[k] = state.fs[k]
    state.lips_f[k] = lip
    counters.skipped += 1


def refresh_anisotropy(state: PathState, k: int, aniso: energy.AnisotropyParams) -> None:
    """Recompute the anisotropy of step k from the current k-th image part."""
    rgb = state.fs[k][:3] / state.eta
    state.anis[k - 1] = energy.anisotropy_map(rgb, aniso)


def ipalm_level(
    state: PathState,
    elastic: energy.ElasticParams,
    aniso: energy.AnisotropyParams,
    params: IpalmParams,
    update_deformations: bool = True,
    update_features: bool = True,
) -> list[IterationStats]:
    """Run the alternating scheme on one level, returning the energy trace.

    Sweep order per outer iteration: for k = 1..K refresh the anisotropy,
    update deformation k, then (for k < K) update feature k.  The boundary
    features fs[0] and fs[K] are never touched.
    """
    trace: list[IterationStats] = []
    k_steps = state.k_steps
    for j in range(1, params.iterations + 1):
        counters = _StepCounters()
        for k in range(1, k_steps + 1):
            refresh_anisotropy(state, k, aniso)
            if update_deformations:
                _update_deformation(state, k, elastic, params, counters)
            if update_features and k < k_steps:
                _update_feature(state, k, elastic, params, counters)
        total, terms = energy.path_energy(state.fs, state.phis, state.anis, elastic, params.delta)
        min_det = min(_min_det(p) for p in state.phis)
        trace.append(
            IterationStats(
                iteration=j,
                energy=total,
                reg_total=sum(t[0] for t in terms),
                mis_total=sum(t[1] for t in terms),
                reg_k=tuple(t[0] for t in terms),
                mis_k=tuple(t[1] for t in terms),
                phi_backtracks=counters.phi_backtracks,
                feat_backtracks=counters.feat_backtracks,
                skipped_steps=counters.skipped,
                min_det=min_det,
            )
        )
    return trace
