import numpy as np
import pytest
from helpers import synthetic_pyramid

from featmorph import energy, grid, multilevel, optimizer
from featmorph.errors import ConfigurationError

ELASTIC = energy.ElasticParams(mu=0.025, lam=0.1)
ANISO = energy.AnisotropyParams()


def tiny_params(iters=5, beta=0.0):
    return optimizer.IpalmParams(beta=beta, iterations=iters)


class TestSchedule:
    def test_build(self):
        sched = multilevel.build_schedule(grid.GridDims(64, 64), 3)
        assert [d.width for d in sched.dims] == [16, 32, 64]
        assert sched.channels == (0, 0, 0)

    def test_indivisible_dims_rejected(self):
        with pytest.raises(ConfigurationError, match="multiple of 4"):
            multilevel.build_schedule(grid.GridDims(66, 64), 3)

    def test_too_coarse_rejected(self):
        with pytest.raises(ConfigurationError):
            multilevel.build_schedule(grid.GridDims(16, 16), 3)

    def test_non_doubling_rejected(self):
        with pytest.raises(ConfigurationError):
            multilevel.LevelSchedule(
                dims=(grid.GridDims(8, 8), grid.GridDims(24, 24)), channels=(0, 0)
            )


class TestProlongation:
    def test_identity_maps_to_identity(self):
        coarse = grid.GridDims(8, 8)
        fine = grid.GridDims(16, 16)
        out = multilevel.prolongate_deformation(grid.identity_map(coarse), fine)
        np.testing.assert_allclose(out, grid.identity_map(fine), atol=1e-12)

    def test_constant_displacement_doubles(self):
        coarse = grid.GridDims(8, 8)
        fine = grid.GridDims(16, 16)
        phi = grid.identity_map(coarse)
        phi[1:-1, 1:-1, 0] += 0.5
        out = multilevel.prolongate_deformation(phi, fine)
        disp = out - grid.identity_map(fine)
        inner = disp[4:-4, 4:-4, 0]
        np.testing.assert_allclose(inner, 1.0, atol=1e-12)

    def test_linear_displacement_reproduced(self):
        coarse = grid.GridDims(8, 8)
        fine = grid.GridDims(16, 16)
        ident_c = grid.identity_map(coarse)
        disp = 0.02 * ident_c[..., :1] + 0.01 * ident_c[..., 1:]
        phi = ident_c + np.concatenate([disp, -0.5 * disp], axis=-1)
        out = multilevel.prolongate_deformation(phi, fine)
        # bilinear reproduces the affine displacement; scaling by 2 matches
        # the pixel-unit convention
        ident_f = grid.identity_map(fine)
        xs = ident_f[..., 0] * 7.0 / 15.0
        ys = ident_f[..., 1] * 7.0 / 15.0
        expected = 2.0 * (0.02 * xs + 0.01 * ys)
        got = (out - ident_f)[..., 0]
        np.testing.assert_allclose(got[1:-1, 1:-1], expected[1:-1, 1:-1], atol=1e-12)


class TestSolveRgb:
    def test_self_morph_single_level_exact(self):
        rng = np.random.default_rng(0)
        u = rng.uniform(0, 1, size=(3, 16, 16))
        result = multilevel.solve_rgb(u, u.copy(), 2, 1, ELASTIC, ANISO, tiny_params())
        assert result.displacement_max < 1e-9
        assert result.level_traces[-1][-1].energy < 1e-16

    def test_self_morph_two_levels_relaxes(self):
        # Re-derived endpoints are sharper than upsampled interior frames, so
        # the finer level starts with a small mismatch and relaxes it.
        x = np.linspace(0, 1, 16)
        gx, gy = np.meshgrid(x, x)
        u = np.stack([0.5 + 0.3 * np.sin(2 * gx + gy), 0.4 + 0.2 * gx, 0.6 - 0.2 * gy])
        result = multilevel.solve_rgb(u, u.copy(), 2, 2, ELASTIC, ANISO, tiny_params(iters=25))
        assert result.displacement_max < 0.5
        trace = result.level_traces[-1]
        assert trace[-1].energy < 0.05 * trace[0].energy

    def test_single_level_matches_direct_ipalm(self):
        rng = np.random.default_rng(1)
        u_a = rng.uniform(0, 1, size=(3, 8, 8))
        u_b = rng.uniform(0, 1, size=(3, 8, 8))
        params = tiny_params(iters=4)
        result = multilevel.solve_rgb(u_a, u_b, 2, 1, ELASTIC, ANISO, params)
        state = optimizer.PathState.blend_initial(u_a, u_b, 2, eta=1.0)
        trace = optimizer.ipalm_level(state, ELASTIC, ANISO, params)
        assert result.level_traces[-1][-1].energy == pytest.approx(trace[-1].energy, rel=1e-12)
        for got, want in zip(result.state.fs, state.fs):
            np.testing.assert_allclose(got, want, atol=1e-12)

    def test_energy_descends_across_levels(self):
        rng = np.random.default_rng(2)
        base = rng.uniform(0, 1, size=(3, 32, 32))
        u_a = base
        u_b = np.roll(base, 3, axis=2)
        result = multilevel.solve_rgb(u_a, u_b, 3, 2, ELASTIC, ANISO, tiny_params(iters=8))
        final = result.level_traces[-1][-1]
        assert final.min_det > 0
        assert np.isfinite(final.energy)


class TestSolveDeep:
    def test_rejects_mismatched_pyramid(self):
        u = np.zeros((3, 16, 16))
        sched = multilevel.build_schedule(grid.GridDims(16, 16), 2)
        pyr = synthetic_pyramid(u, sched, channels=4)
        bad = [pyr[0][:, :4, :], pyr[1]]
        with pytest.raises(ConfigurationError, match="level 0"):
            multilevel.solve_deep(u, u, bad, pyr, 2, 2, ELASTIC, ANISO, tiny_params())

    def test_self_morph_with_features(self):
        rng = np.random.default_rng(3)
        u = rng.uniform(0, 1, size=(3, 16, 16))
        sched = multilevel.build_schedule(grid.GridDims(16, 16), 2)
        pyr = synthetic_pyramid(u, sched, channels=4)
        result = multilevel.solve_deep(
            u, u.copy(), pyr, pyr, 2, 2, ELASTIC, ANISO,
            tiny_params(), eta=1e-6, warm_iterations=2,
        )
        assert result.displacement_max < 0.5
        assert result.level_traces[-1][-1].energy < 1e-16

    def test_zero_channel_pyramid_matches_rgb_without_image_prolongation(self):
        rng = np.random.default_rng(4)
        u_a = rng.uniform(0, 1, size=(3, 16, 16))
        u_b = rng.uniform(0, 1, size=(3, 16, 16))
        sched = multilevel.build_schedule(grid.GridDims(16, 16), 2)
        empty = [np.zeros((0, d.height, d.width)) for d in sched.dims]
        params = tiny_params(iters=4)
        via_deep = multilevel.solve_deep(
            u_a, u_b, empty, empty, 2, 2, ELASTIC, ANISO, params,
            eta=1.0, warm_iterations=0,
        )
        via_rgb = multilevel.solve_rgb(
            u_a, u_b, 2, 2, ELASTIC, ANISO, params, prolongate_images=False
        )
        for got, want in zip(via_deep.state.fs, via_rgb.state.fs):
            np.testing.assert_allclose(got, want, atol=1e-12)
        for got, want in zip(via_deep.state.phis, via_rgb.state.phis):
            np.testing.assert_allclose(got, want, atol=1e-12)
