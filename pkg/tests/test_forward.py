import math

import numpy as np
import pytest

from ringpact import (
    Acquisition,
    ArcSamplingConfig,
    ForwardOperator,
    HeatImage,
    ImageGrid,
    Medium,
    MemoryBudgetError,
    RingGeometry,
    Sinogram,
    arc_point_weights,
    arc_points,
    opening_angle,
    segment_lengths,
)

MED = Medium(sos_mps=1500.0)


def desk_op(num_elements=16, num_samples=512, n=64, dx=0.4e-3, arc=None):
    return ForwardOperator(
        RingGeometry(radius_m=0.04, num_elements=num_elements),
        MED,
        Acquisition(sample_rate_hz=10e6, num_samples=num_samples),
        ImageGrid(nx=n, ny=n, pixel_size_m=dx),
        arc=arc,
    )


class TestOpeningAngle:
    def test_half_ratio_gives_pi_over_three(self):
        assert opening_angle(0.020, 0.040) == pytest.approx(math.pi / 3, abs=1e-15)

    def test_small_roi_limit(self):
        assert opening_angle(1e-9, 0.040) == pytest.approx(0.0, abs=1e-6)

    def test_square_roi_half_diagonal(self):
        # 2.5 cm square ROI: half-diagonal 17.68 mm inside the 40 mm ring
        ri = 0.025 * math.sqrt(2) / 2
        expected = 2 * math.asin(ri / 0.040)
        got = opening_angle(ri, 0.040)
        assert got == pytest.approx(expected, abs=1e-15)
        assert got == pytest.approx(0.9157, abs=2e-4)

    def test_roi_outside_ring_rejected(self):
        with pytest.raises(ValueError):
            opening_angle(0.04, 0.04)
        with pytest.raises(ValueError):
            opening_angle(0.05, 0.04)


class TestSegments:
    def test_interior_segment_value(self):
        d = segment_lengths(math.pi / 3, 101, t=0.040 / 1500.0, sos=1500.0)
        assert d[1] == pytest.approx((math.pi / 3) * 0.040 / 100, rel=1e-12)
        assert d[1] == pytest.approx(0.4189e-3, abs=1e-7)
        assert d[0] == 0.0 and d[-1] == 0.0
        assert len(d) == 102

    def test_endpoint_weights_are_half(self):
        w = arc_point_weights(0.8, 51, t=2e-5, sos=1500.0)
        assert w[0] == pytest.approx(w[25] / 2)
        assert w[-1] == pytest.approx(w[25] / 2)

    def test_weights_sum_to_arc_length(self):
        alpha, t, c = 0.9, 2.5e-5, 1500.0
        w = arc_point_weights(alpha, 77, t, c)
        assert w.sum() == pytest.approx(alpha * c * t, rel=1e-12)


class TestArcPoints:
    def test_ray_through_center(self):
        pts = arc_points((0.040, 0.0), t=0.040 / 1500.0, alpha=0.9, num_points=31, sos=1500.0)
        mid = pts[15]
        assert np.allclose(mid, (0.0, 0.0), atol=1e-17)

    def test_half_radius_midpoint(self):
        pts = arc_points((0.040, 0.0), t=0.020 / 1500.0, alpha=0.9, num_points=31, sos=1500.0)
        assert np.allclose(pts[15], (0.020, 0.0), atol=1e-17)

    def test_endpoints_mirror_about_center_ray(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            ang = rng.uniform(0, 2 * np.pi)
            pos = np.array([0.04 * np.cos(ang), 0.04 * np.sin(ang)])
            t = rng.uniform(0.2, 1.5) * 0.04 / 1500.0
            pts = arc_points(pos, t, alpha=rng.uniform(0.3, 1.2), num_points=41, sos=1500.0)
            # reflect across the element->center axis and compare reversed order
            axis = -pos / np.linalg.norm(pos)
            rel = pts - pos
            proj = rel @ axis
            perp = rel - proj[:, None] * axis[None, :]
            mirrored = proj[:, None] * axis[None, :] - perp + pos
            assert np.allclose(mirrored, pts[::-1], atol=1e-12)

    def test_nonpositive_time_rejected(self):
        with pytest.raises(ValueError):
            arc_points((0.04, 0.0), t=0.0, alpha=0.9, num_points=5, sos=1500.0)


class TestShellIntegral:
    def test_constant_continuous_sampler_gives_alpha(self):
        op = desk_op()
        h = 0.7
        for t in (2e-5, 3e-5, 4e-5):
            val = op.shell_integral(lambda pts: np.full(len(pts), h), 2, t)
            assert val == pytest.approx(h * op.alpha, rel=1e-12)

    def test_zero_image(self):
        op = desk_op()
        img = HeatImage(grid=op.grid, values=np.zeros((64, 64)))
        assert op.shell_integral(img, 0, 2.5e-5) == 0.0

    def test_single_pixel_peak_near_time_of_flight(self):
        # bright pixel at the grid center: I(t) peaks where c*t = distance
        op = desk_op(arc=ArcSamplingConfig(721))
        v = np.zeros((64, 64))
        v[31:33, 31:33] = 1.0  # small blob straddling the center
        img = HeatImage(grid=op.grid, values=v)
        dist = 0.04  # element to center
        ts = np.linspace(0.7, 1.3, 121) * dist / 1500.0
        vals = [op.shell_integral(img, 0, t) for t in ts]
        assert abs(ts[int(np.argmax(vals))] - dist / 1500.0) < 0.02 * dist / 1500.0

    def test_nonpositive_time_rejected(self):
        op = desk_op()
        img = HeatImage(grid=op.grid, values=np.zeros((64, 64)))
        with pytest.raises(ValueError):
            op.shell_integral(img, 0, 0.0)


class TestApply:
    def test_linearity(self):
        op = desk_op(num_elements=4, num_samples=128, n=16)
        rng = np.random.default_rng(1)
        x = rng.standard_normal((16, 16))
        y = rng.standard_normal((16, 16))
        a, b = 2.3, -0.7
        combined = op.apply(HeatImage(grid=op.grid, values=a * x + b * y)).data
        separate = a * op.apply(HeatImage(grid=op.grid, values=x)).data + b * op.apply(
            HeatImage(grid=op.grid, values=y)
        ).data
        assert np.allclose(combined, separate, rtol=1e-12, atol=1e-18)

    def test_zero_image_zero_sinogram(self):
        op = desk_op()
        out = op.apply(HeatImage(grid=op.grid, values=np.zeros((64, 64))))
        assert np.all(out.data == 0.0)

    def test_boundary_samples_zero(self):
        op = desk_op()
        rng = np.random.default_rng(2)
        out = op.apply(HeatImage(grid=op.grid, values=rng.uniform(0, 1, (64, 64))))
        assert np.all(out.data[:, 0] == 0.0)
        assert np.all(out.data[:, -1] == 0.0)

    def test_point_source_time_of_flight(self):
        # source at the ring center: trace energy near sample R/(c dt)
        geom = RingGeometry(radius_m=0.04, num_elements=8)
        acq = Acquisition(sample_rate_hz=20e6, num_samples=640)
        grid = ImageGrid(nx=33, ny=33, pixel_size_m=0.4e-3)
        op = ForwardOperator(geom, MED, acq, grid, arc=ArcSamplingConfig(1601))
        v = np.zeros((33, 33))
        v[16, 16] = 1.0  # exactly at the origin
        out = op.apply(HeatImage(grid=grid, values=v)).data
        tof = 0.04 / (1500.0 / 20e6)  # = 533.3
        for e in range(8):
            nz = np.nonzero(np.abs(out[e]) > 1e-6 * np.abs(out[e]).max())[0]
            assert nz.min() >= tof - 12 and nz.max() <= tof + 12
        # a one-pixel delta is the worst case for bilinear anisotropy
        spread = np.abs(out - out.mean(axis=0)).max()
        assert spread < 0.15 * np.abs(out).max()

    def test_smooth_source_identical_across_elements(self):
        # a radially symmetric blob at the center removes the delta anisotropy
        geom = RingGeometry(radius_m=0.04, num_elements=8)
        acq = Acquisition(sample_rate_hz=20e6, num_samples=640)
        grid = ImageGrid(nx=33, ny=33, pixel_size_m=0.4e-3)
        op = ForwardOperator(geom, MED, acq, grid)
        xs, ys = grid.pixel_coords()
        blob = np.exp(-(xs**2 + ys**2) / (2 * (1.2e-3) ** 2))
        out = op.apply(HeatImage(grid=grid, values=blob)).data
        spread = np.abs(out - out.mean(axis=0)).max()
        assert spread < 0.08 * np.abs(out).max()

    def test_point_source_trace_antisymmetry(self):
        # discrete derivative of a compact peaked I(t): balanced +/- lobes
        geom = RingGeometry(radius_m=0.04, num_elements=4)
        acq = Acquisition(sample_rate_hz=20e6, num_samples=1200)
        grid = ImageGrid(nx=33, ny=33, pixel_size_m=0.4e-3)
        op = ForwardOperator(geom, MED, acq, grid, arc=ArcSamplingConfig(1601))
        v = np.zeros((33, 33))
        v[16, 16] = 1.0
        trace = op.apply(HeatImage(grid=grid, values=v)).data[0]
        assert abs(trace.max() + trace.min()) < 0.05 * trace.max()
        # the telescoping sum of a central difference over full support is ~0
        assert abs(trace.sum()) < 1e-9 * np.abs(trace).sum()


class TestAdjoint:
    def test_dot_product_identity(self):
        geom = RingGeometry(radius_m=0.04, num_elements=16)
        acq = Acquisition(sample_rate_hz=10e6, num_samples=256)
        grid = ImageGrid(nx=32, ny=32, pixel_size_m=0.6e-3)
        op = ForwardOperator(geom, MED, acq, grid)
        rng = np.random.default_rng(3)
        for _ in range(5):
            x = HeatImage(grid=grid, values=rng.standard_normal((32, 32)))
            y = Sinogram(geometry=geom, acquisition=acq, data=rng.standard_normal((16, 256)))
            ax = op.apply(x)
            aty = op.adjoint(y)
            lhs = float(np.sum(ax.data * y.data))
            rhs = float(np.sum(x.values * aty.values))
            denom = np.linalg.norm(ax.data) * np.linalg.norm(y.data)
            assert abs(lhs - rhs) / denom < 1e-12

    def test_zero_sinogram(self):
        op = desk_op()
        out = op.adjoint(
            Sinogram(geometry=op.geometry, acquisition=op.acquisition, data=np.zeros((16, 512)))
        )
        assert np.all(out.values == 0.0)

    def test_normal_operator_peaks_at_source(self):
        op = desk_op(num_elements=32)
        v = np.zeros((64, 64))
        v[20, 40] = 1.0
        back = op.adjoint(op.apply(HeatImage(grid=op.grid, values=v))).values
        iy, ix = np.unravel_index(np.argmax(np.abs(back)), back.shape)
        assert abs(ix - 40) <= 1 and abs(iy - 20) <= 1

    def test_shape_mismatch_rejected(self):
        op = desk_op()
        bad = Sinogram(
            geometry=RingGeometry(radius_m=0.04, num_elements=8),
            acquisition=op.acquisition,
            data=np.zeros((8, 512)),
        )
        with pytest.raises(ValueError):
            op.adjoint(bad)


class TestAssembled:
    def test_matches_matrix_free(self):
        op = desk_op(num_elements=8, num_samples=256, n=32, dx=0.6e-3)
        sp = op.assemble()
        rng = np.random.default_rng(4)
        for _ in range(5):
            img = HeatImage(grid=op.grid, values=rng.standard_normal((32, 32)))
            a = op.apply(img).data
            b = sp.apply(img).data
            assert np.linalg.norm(a - b) <= 1e-5 * np.linalg.norm(a)
        sino = Sinogram(
            geometry=op.geometry, acquisition=op.acquisition, data=rng.standard_normal((8, 256))
        )
        assert np.allclose(op.adjoint(sino).values, sp.adjoint(sino).values, rtol=1e-10, atol=1e-14)

    def test_out_of_band_rows_are_zero(self):
        op = desk_op(num_elements=4, num_samples=256, n=16).assemble()
        mat = op.matrix.tocsr()
        nt = 256
        # the arc at an early sample (radius well inside the ring) misses the grid
        row = mat[0 * nt + 10]
        assert row.nnz == 0

    def test_nnz_bounded_by_arc_points(self):
        op = desk_op(num_elements=4, num_samples=256, n=16)
        sp = op.assemble()
        mat = sp.matrix.tocsr()
        m = op.arc.num_arc_points
        nnz_per_row = np.diff(mat.indptr)
        # 4 pixels per arc point, two arcs per interior sample
        assert nnz_per_row.max() <= 4 * 2 * m

    def test_memory_budget_enforced(self):
        op = desk_op()
        with pytest.raises(MemoryBudgetError, match="bytes"):
            op.assemble(memory_budget_bytes=1024)


class TestInvariants:
    def test_rotation_by_element_spacing_permutes_traces(self):
        # 4-element ring: one spacing = 90 degrees, exact on a square grid
        op = desk_op(num_elements=4, num_samples=256, n=32, dx=0.6e-3)
        rng = np.random.default_rng(5)
        v = rng.uniform(0, 1, (32, 32))
        base = op.apply(HeatImage(grid=op.grid, values=v)).data
        rotated = op.apply(HeatImage(grid=op.grid, values=np.rot90(v, k=3))).data
        permuted = np.roll(base, 1, axis=0)
        assert np.linalg.norm(rotated - permuted) <= 1e-3 * np.linalg.norm(base)

    def test_arc_refinement_converges(self):
        op1 = desk_op(num_elements=8, num_samples=256, n=32, dx=0.6e-3)
        m = op1.arc.num_arc_points
        op2 = desk_op(num_elements=8, num_samples=256, n=32, dx=0.6e-3, arc=ArcSamplingConfig(2 * m + 1))
        xs, ys = op1.grid.pixel_coords()
        smooth = np.exp(-((xs - 2e-3) ** 2 + (ys + 1e-3) ** 2) / (2 * (3e-3) ** 2))
        a = op1.apply(HeatImage(grid=op1.grid, values=smooth)).data
        b = op2.apply(HeatImage(grid=op2.grid, values=smooth)).data
        assert np.linalg.norm(a - b) < 0.005 * np.linalg.norm(a)

    def test_grid_outside_ring_rejected(self):
        with pytest.raises(ValueError, match="outside the ring"):
            ForwardOperator(
                RingGeometry(radius_m=0.04, num_elements=8),
                MED,
                Acquisition(sample_rate_hz=10e6, num_samples=64),
                ImageGrid(nx=64, ny=64, pixel_size_m=1.0e-3),
            )

    def test_default_arc_spacing_subpixel(self):
        op = desk_op()
        t_max = op.acquisition.times[-1]
        spacing = op.alpha * 1500.0 * t_max / (op.arc.num_arc_points - 1)
        assert spacing <= op.grid.pixel_size_m
