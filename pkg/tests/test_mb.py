import numpy as np
import pytest

from ringpact import (
    Acquisition,
    ForwardOperator,
    HeatImage,
    ImageGrid,
    MbConfig,
    Medium,
    PhantomSpec,
    RingGeometry,
    Sinogram,
    mb_reconstruct,
    rasterize,
    subsample_projections,
    synthesize_sinogram,
    tv_gradient,
    tv_value,
)

MED = Medium(sos_mps=1500.0)


def tv_oracle(v, eps):
    """Direct per-pixel summation with explicit replicate boundary."""
    ny, nx = v.shape
    total = 0.0
    for iy in range(ny):
        for ix in range(nx):
            dx = v[iy, ix + 1] - v[iy, ix] if ix + 1 < nx else 0.0
            dy = v[iy + 1, ix] - v[iy, ix] if iy + 1 < ny else 0.0
            total += np.sqrt(dx * dx + dy * dy + eps * eps) - eps
    return total


class TestTvValue:
    def test_constant_is_zero(self):
        assert tv_value(np.full((8, 8), 3.2), eps=1e-6) == pytest.approx(0.0, abs=1e-12)

    def test_step_edge_length(self):
        # unit step along a column: L jumps of height 1 as eps -> 0
        v = np.zeros((12, 12))
        v[:, 6:] = 1.0
        assert tv_value(v, eps=1e-9) == pytest.approx(12.0, rel=1e-6)

    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = rng.uniform(0, 1, (8, 8))
            eps = 10 ** rng.uniform(-8, -2)
            assert tv_value(v, eps) == pytest.approx(tv_oracle(v, eps), abs=1e-10)

    def test_eps_required_positive(self):
        with pytest.raises(ValueError):
            tv_value(np.zeros((4, 4)), eps=0.0)


class TestTvGradient:
    def test_constant_has_zero_gradient(self):
        g = tv_gradient(np.full((6, 6), 1.7), eps=1e-6)
        assert np.allclose(g, 0.0, atol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        v = rng.uniform(0, 1, (8, 8))
        eps = 1e-3
        g = tv_gradient(v, eps)
        h = 1e-7
        for _ in range(60):
            iy, ix = rng.integers(0, 8, 2)
            vp = v.copy()
            vp[iy, ix] += h
            vm = v.copy()
            vm[iy, ix] -= h
            fd = (tv_value(vp, eps) - tv_value(vm, eps)) / (2 * h)
            assert fd == pytest.approx(g[iy, ix], rel=1e-4, abs=1e-8)

    def test_odd_under_negation(self):
        rng = np.random.default_rng(2)
        v = rng.standard_normal((8, 8))
        g = tv_gradient(v, eps=1e-4)
        gn = tv_gradient(-v, eps=1e-4)
        assert np.allclose(gn, -g, rtol=1e-12, atol=1e-15)


def small_problem(num_elements=16, n=32, phantom=None, seed=0):
    geom = RingGeometry(radius_m=0.04, num_elements=num_elements)
    acq = Acquisition(sample_rate_hz=10e6, num_samples=512)
    grid = ImageGrid(nx=n, ny=n, pixel_size_m=0.6e-3)
    if phantom is None:
        v = np.zeros((n, n))
        v[n // 2, int(0.7 * n)] = 1.0
        img = HeatImage(grid=grid, values=v)
    else:
        img = rasterize(phantom, grid)
    sino = synthesize_sinogram(img, geom, MED, acq)
    op = ForwardOperator(geom, MED, acq, grid).assemble()
    return img, sino, op


class TestMbReconstruct:
    def test_zero_sinogram_is_fixed_point(self):
        _, sino, op = small_problem()
        zero = Sinogram(
            geometry=sino.geometry, acquisition=sino.acquisition, data=np.zeros_like(sino.data)
        )
        result = mb_reconstruct(zero, op, MbConfig(lam=0.01, max_iters=5))
        assert np.all(result.image.values == 0.0)

    def test_point_source_residual_small(self):
        # lam=0, dense view, noiseless: residual under 10% after 50 iterations
        _, sino, op = small_problem(num_elements=32)
        result = mb_reconstruct(sino, op, MbConfig(lam=0.0, max_iters=50))
        pm = sino.data / np.abs(sino.data).max()
        residual = op.apply(result.image).data - pm
        assert np.linalg.norm(residual) < 0.1 * np.linalg.norm(pm)

    def test_iterates_nonnegative_and_monotone(self):
        _, sino, op = small_problem(phantom=PhantomSpec.vessel_phantom(seed=7), n=32)
        result = mb_reconstruct(sino, op, MbConfig(lam=0.01, max_iters=50))
        assert result.image.values.min() >= 0.0
        obj = result.objectives
        assert len(obj) == 51
        assert np.all(np.diff(obj) <= 1e-12)

    def test_residual_decreases_early(self):
        _, sino, op = small_problem(num_elements=32)
        result = mb_reconstruct(sino, op, MbConfig(lam=0.0, max_iters=10))
        data_terms = result.history[:, 1]
        assert np.all(np.diff(data_terms[:11]) < 0)

    def test_lambda_reduces_tv(self):
        # weak monotonicity of result TV in lambda, one violation allowed
        _, sino, op = small_problem(phantom=PhantomSpec.vessel_phantom(seed=7), n=32)
        tvs = []
        for lam in (0.0, 0.01, 0.05, 0.2):
            result = mb_reconstruct(sino, op, MbConfig(lam=lam, max_iters=50))
            tvs.append(tv_value(result.image.values, 1e-6))
        violations = sum(1 for a, b in zip(tvs, tvs[1:]) if b > a + 1e-12)
        assert violations <= 1, tvs

    def test_fixed_step_mode_runs(self):
        _, sino, op = small_problem()
        result = mb_reconstruct(sino, op, MbConfig(lam=0.0, max_iters=10, step_rule="fixed"))
        assert result.history.shape == (11, 3)

    def test_fista_mode_converges(self):
        _, sino, op = small_problem(num_elements=32)
        plain = mb_reconstruct(sino, op, MbConfig(lam=0.0, max_iters=30))
        fast = mb_reconstruct(sino, op, MbConfig(lam=0.0, max_iters=30, accelerate=True))
        assert fast.objectives[-1] <= plain.objectives[-1] * 1.05

    def test_mismatched_operator_rejected(self):
        _, sino, op = small_problem()
        wrong = subsample_projections(sino, 8)
        with pytest.raises(ValueError):
            mb_reconstruct(wrong, op, MbConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MbConfig(lam=-0.1)
        with pytest.raises(ValueError):
            MbConfig(max_iters=0)
        with pytest.raises(ValueError):
            MbConfig(step_rule="magic")
