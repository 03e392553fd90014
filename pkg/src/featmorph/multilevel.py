"""Coarse-to-fine orchestration for the color and deep-feature models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import energy, grid, optimizer
from .errors import ConfigurationError, DimensionMismatchError


@dataclass(frozen=True)
class LevelSchedule:
    """Grid sizes coarse to fine (doubling each level) plus deep channel counts."""

    dims: tuple[grid.GridDims, ...]
    channels: tuple[int, ...]

    def __post_init__(self):
        if not self.dims:
            raise ConfigurationError("schedule needs at least one level")
        if len(self.channels) != len(self.dims):
            raise ConfigurationError(
                f"{len(self.channels)} channel counts for {len(self.dims)} levels"
            )
        coarse = self.dims[0]
        if coarse.width < 8 or coarse.height < 8:
            raise ConfigurationError(
                f"coarsest level {coarse.width}x{coarse.height} is below the 8x8 minimum"
            )
        for prev, cur in zip(self.dims, self.dims[1:]):
            if cur.width != 2 * prev.width or cur.height != 2 * prev.height:
                raise ConfigurationError(
                    f"levels must double: {prev.width}x{prev.height} -> {cur.width}x{cur.height}"
                )

    @property
    def level_count(self) -> int:
        return len(self.dims)

    @property
    def finest(self) -> grid.GridDims:
        return self.dims[-1]


def build_schedule(finest: grid.GridDims, level_count: int, channels=0) -> LevelSchedule:
    """Halve the finest dims (level_count - 1) times; channels may vary per level."""
    if level_count < 1:
        raise ConfigurationError(f"level count must be >= 1, got {level_count}")
    factor = 2 ** (level_count - 1)
    if finest.width % factor or finest.height % factor:
        raise ConfigurationError(
            f"dims {finest.width}x{finest.height} not divisible by 2^{level_count - 1}; "
            f"pad the input to a multiple of {factor}"
        )
    dims = tuple(
        grid.GridDims(finest.width // 2 ** (level_count - 1 - l), finest.height // 2 ** (level_count - 1 - l))
        for l in range(level_count)
    )
    if isinstance(channels, int):
        chan = (channels,) * level_count
    else:
        chan = tuple(channels)
    return LevelSchedule(dims=dims, channels=chan)


def prolongate_deformation(phi: np.ndarray, fine: grid.GridDims) -> np.ndarray:
    """Carry a deformation to the doubled grid: upsample the displacement
    bilinearly, scale it by 2 (pixel units), and re-pin the boundary."""
    coarse = grid.GridDims(phi.shape[1], phi.shape[0])
    if fine.width != 2 * coarse.width or fine.height != 2 * coarse.height:
        raise DimensionMismatchError(
            f"prolongation expects doubled dims, got {coarse.width}x{coarse.height} "
            f"-> {fine.width}x{fine.height}"
        )
    disp = phi - grid.identity_map(coarse)
    disp_fine = 2.0 * grid.resample_bilinear(disp, fine.width, fine.height)
    return grid.pin_identity_boundary(grid.identity_map(fine) + disp_fine)


def _damp_until_admissible(phi: np.ndarray, dims: grid.GridDims) -> np.ndarray:
    """Halve displacements until the Jacobian determinant is positive."""
    ident = grid.identity_map(dims)
    disp = phi - ident
    for _ in range(80):
        cand = grid.pin_identity_boundary(ident + disp)
        if optimizer._min_det(cand) > 0.0:
            return cand
        disp = 0.5 * disp
    return ident.copy()


def _downsample_image(image: np.ndarray, dims: grid.GridDims) -> np.ndarray:
    return np.stack(
        [grid.resample_bilinear(ch, dims.width, dims.height) for ch in image], axis=0
    )


@dataclass
class MorphResult:
    """Final state on the finest grid plus the per-level traces."""

    state: optimizer.PathState
    schedule: LevelSchedule
    level_traces: list[list[optimizer.IterationStats]]

    @property
    def displacement_max(self) -> float:
        dims = grid.dims_of(self.state.fs[0][0])
        ident = grid.identity_map(dims)
        return max(float(np.abs(p - ident).max()) for p in self.state.phis)


def _check_pyramid(pyramids, schedule: LevelSchedule, name: str) -> None:
    if len(pyramids) != schedule.level_count:
        raise ConfigurationError(
            f"{name}: {len(pyramids)} tensors for {schedule.level_count} levels"
        )
    for l, (tensor, dims, c) in enumerate(zip(pyramids, schedule.dims, schedule.channels)):
        if tensor.shape != (c, dims.height, dims.width):
            raise ConfigurationError(
                f"{name}: level {l} tensor has shape {tensor.shape}, "
                f"expected {(c, dims.height, dims.width)}"
            )


def _solve_multilevel(
    u_a: np.ndarray,
    u_b: np.ndarray,
    schedule: LevelSchedule,
    k_steps: int,
    elastic: energy.ElasticParams,
    aniso: energy.AnisotropyParams,
    params: optimizer.IpalmParams,
    eta: float,
    pyramid_a=None,
    pyramid_b=None,
    prolongate_images: bool = True,
    warm_iterations: int = 0,
) -> MorphResult:
    deep = pyramid_a is not None
    state = None
    traces: list[list[optimizer.IterationStats]] = []
    for l, dims in enumerate(schedule.dims):
        ua_l = _downsample_image(u_a, dims)
        ub_l = _downsample_image(u_b, dims)
        if deep:
            f_a = np.concatenate([eta * ua_l, pyramid_a[l]], axis=0)
            f_b = np.concatenate([eta * ub_l, pyramid_b[l]], axis=0)
        else:
            f_a = eta * ua_l
            f_b = eta * ub_l
        fresh = optimizer.PathState.blend_initial(f_a, f_b, k_steps, eta=eta)
        if state is not None:
            phis = [
                _damp_until_admissible(prolongate_deformation(p, dims), dims)
                for p in state.phis
            ]
            fresh.phis = phis
            fresh.prev_phis = [p.copy() for p in phis]
            if prolongate_images and not deep:
                for k in range(1, k_steps):
                    fresh.fs[k] = _downsample_prolong(state.fs[k], dims)
                fresh.prev_fs = [f.copy() for f in fresh.fs]
        state = fresh
        if deep and warm_iterations > 0 and l > 0:
            warm = optimizer.IpalmParams(
                beta=params.beta,
                iterations=warm_iterations,
                delta=params.delta,
                lipschitz_init=params.lipschitz_init,
                lipschitz_up=params.lipschitz_up,
                lipschitz_down=params.lipschitz_down,
                max_backtracks=params.max_backtracks,
            )
            traces.append(
                optimizer.ipalm_level(state, elastic, aniso, warm, update_deformations=False)
            )
        traces.append(optimizer.ipalm_level(state, elastic, aniso, params))
    return MorphResult(state=state, schedule=schedule, level_traces=traces)


def _downsample_prolong(channels: np.ndarray, dims: grid.GridDims) -> np.ndarray:
    return np.stack(
        [grid.resample_bilinear(ch, dims.width, dims.height) for ch in channels], axis=0
    )


def solve_rgb(
    u_a: np.ndarray,
    u_b: np.ndarray,
    k_steps: int,
    level_count: int,
    elastic: energy.ElasticParams,
    aniso: energy.AnisotropyParams,
    params: optimizer.IpalmParams,
    prolongate_images: bool = True,
) -> MorphResult:
    """Coarse-to-fine geodesic in plain color space (no deep channels).

    Deformations and intermediate images are both carried to the next level;
    boundary features are re-derived from freshly resized inputs per level.
    """
    if u_a.shape != u_b.shape:
        raise DimensionMismatchError(f"input shapes differ: {u_a.shape} vs {u_b.shape}")
    finest = grid.GridDims(u_a.shape[2], u_a.shape[1])
    schedule = build_schedule(finest, level_count, 0)
    return _solve_multilevel(
        u_a, u_b, schedule, k_steps, elastic, aniso, params,
        eta=1.0, prolongate_images=prolongate_images,
    )


def solve_deep(
    u_a: np.ndarray,
    u_b: np.ndarray,
    pyramid_a,
    pyramid_b,
    k_steps: int,
    level_count: int,
    elastic: energy.ElasticParams,
    aniso: energy.AnisotropyParams,
    params: optimizer.IpalmParams,
    eta: float = 1e-6,
    warm_iterations: int = 50,
) -> MorphResult:
    """Coarse-to-fine geodesic with per-level deep feature channels.

    Only deformations are prolongated; intermediate features restart from the
    linear blend of the level's boundary features, then a feature-only warm
    start runs against the carried deformations before the full scheme.
    """
    if u_a.shape != u_b.shape:
        raise DimensionMismatchError(f"input shapes differ: {u_a.shape} vs {u_b.shape}")
    finest = grid.GridDims(u_a.shape[2], u_a.shape[1])
    channels = [t.shape[0] for t in pyramid_a]
    schedule = build_schedule(finest, level_count, channels)
    _check_pyramid(pyramid_a, schedule, "pyramid A")
    _check_pyramid(pyramid_b, schedule, "pyramid B")
    return _solve_multilevel(
        u_a, u_b, schedule, k_steps, elastic, aniso, params,
        eta=eta, pyramid_a=pyramid_a, pyramid_b=pyramid_b,
        prolongate_images=False, warm_iterations=warm_iterations,
    )
