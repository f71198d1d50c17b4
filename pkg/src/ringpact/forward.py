"""Discretized photoacoustic forward model for a ring array.

The pressure trace of one element is the time derivative of the shell
integral

    I(t) = integral over the arc at radius c*t of  H(r') / |r - r'| dL',

approximated by a trapezoid rule over M points spread uniformly across the
angular sector that covers the circular ROI as seen from the element, and
a temporal central difference:

    p(t_i) = G/(4*pi*c) * [I(t_i + dt) - I(t_i - dt)] / (2*dt).

Because every arc point is at distance exactly c*t from the element, the
1/|r - r'| factor cancels the arc length growth and the per-point
quadrature weights are time independent.

``ForwardOperator`` exposes the resulting linear map as matrix-free
apply/adjoint (exact transposes of each other) or as an assembled sparse
matrix; both representations agree to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Acquisition, HeatImage, ImageGrid, Medium, RingGeometry, Sinogram


class MemoryBudgetError(ValueError):
    """Assembling the sparse operator would exceed the configured budget."""


def opening_angle(roi_radius_m: float, ring_radius_m: float) -> float:
    """Angular sector covering the circular ROI as seen from the ring: 2*asin(Ri/Rt)."""
    if not (0 < roi_radius_m < ring_radius_m):
        raise ValueError(
            f"need 0 < roi_radius ({roi_radius_m}) < ring_radius ({ring_radius_m})"
        )
    return 2.0 * math.asin(roi_radius_m / ring_radius_m)


def segment_lengths(alpha: float, num_points: int, t: float, sos: float) -> np.ndarray:
    """Arc-segment lengths d[l] between points l and l+1, for l = 0 .. M.

    The two sentinel entries d[0] and d[M] are zero so that the per-point
    trapezoid weight is (d[l-1] + d[l]) / 2 for every point.
    """
    if num_points < 3:
        raise ValueError(f"need at least 3 arc points, got {num_points}")
    d = np.full(num_points + 1, alpha * sos * t / (num_points - 1))
    d[0] = 0.0
    d[-1] = 0.0
    return d


def arc_point_weights(alpha: float, num_points: int, t: float, sos: float) -> np.ndarray:
    """Trapezoid quadrature weight per arc point; sums to the arc length alpha*c*t."""
    d = segment_lengths(alpha, num_points, t, sos)
    return 0.5 * (d[:-1] + d[1:])


def arc_points(
    element_pos, t: float, alpha: float, num_points: int, sos: float
) -> np.ndarray:
    """Sample points of the arc at radius c*t around one element, shape (M, 2).

    The sector is centered on the ray from the element through the ring
    center, so for odd M the middle point lies on that ray.
    """
    if t <= 0:
        raise ValueError(f"arc radius requires t > 0, got {t}")
    x0, y0 = float(element_pos[0]), float(element_pos[1])
    phi_center = math.atan2(-y0, -x0)  # direction element -> ring center
    beta0 = phi_center - 0.5 * alpha
    ang = beta0 + np.arange(num_points) * (alpha / (num_points - 1))
    r = sos * t
    return np.stack([x0 + r * np.cos(ang), y0 + r * np.sin(ang)], axis=1)


@dataclass(frozen=True)
class ArcSamplingConfig:
    """Number of quadrature points per arc."""

    num_arc_points: int

    def __post_init__(self):
        if self.num_arc_points < 3:
            raise ValueError(f"num_arc_points must be >= 3, got {self.num_arc_points}")

    @staticmethod
    def for_spacing(alpha: float, max_radius_m: float, spacing_m: float) -> "ArcSamplingConfig":
        """Smallest odd M whose arc-point spacing at ``max_radius_m`` is <= ``spacing_m``."""
        m = int(math.ceil(alpha * max_radius_m / spacing_m)) + 1
        m = max(m, 3)
        if m % 2 == 0:
            m += 1
        return ArcSamplingConfig(num_arc_points=m)


def _bilinear_gather(values: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Sample ``values[(ny, nx)]`` at fractional pixel coords; 0 outside the grid."""
    ny, nx = values.shape
    i0 = np.floor(gx).astype(np.int64)
    j0 = np.floor(gy).astype(np.int64)
    fx = gx - i0
    fy = gy - j0
    out = np.zeros(gx.shape, dtype=values.dtype)
    for di, dj, w in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        i = i0 + di
        j = j0 + dj
        m = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        out += np.where(m, w * values[np.clip(j, 0, ny - 1), np.clip(i, 0, nx - 1)], 0.0)
    return out


def _bilinear_scatter(
    shape: tuple[int, int], gx: np.ndarray, gy: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    """Transpose of :func:`_bilinear_gather`: spread ``weights`` onto the grid."""
    ny, nx = shape
    i0 = np.floor(gx).astype(np.int64)
    j0 = np.floor(gy).astype(np.int64)
    fx = gx - i0
    fy = gy - j0
    flat = np.zeros(nx * ny)
    for di, dj, w in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        i = i0 + di
        j = j0 + dj
        m = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        if np.any(m):
            flat += np.bincount(
                (j[m] * nx + i[m]).ravel(),
                weights=(w[m] * weights[m]).ravel(),
                minlength=nx * ny,
            )
    return flat.reshape(ny, nx)


class ForwardOperator:
    """Linear map from a heat image to the stacked element traces.

    ``representation`` is either ``"matrix_free"`` (default) or
    ``"assembled_sparse"`` (see :meth:`assemble`).  The operator is
    read-only after construction.
    """

    def __init__(
        self,
        geometry: RingGeometry,
        medium: Medium,
        acquisition: Acquisition,
        grid: ImageGrid,
        arc: ArcSamplingConfig | None = None,
    ):
        if grid.roi_radius_m >= geometry.radius_m:
            raise ValueError(
                f"grid extends outside the ring: roi radius {grid.roi_radius_m:.4g} m "
                f">= ring radius {geometry.radius_m:.4g} m"
            )
        self.geometry = geometry
        self.medium = medium
        self.acquisition = acquisition
        self.grid = grid
        self.alpha = opening_angle(grid.roi_radius_m, geometry.radius_m)
        if arc is None:
            # default: sub-pixel arc sampling at the largest recorded radius
            t_max = acquisition.times[-1]
            arc = ArcSamplingConfig.for_spacing(
                self.alpha, medium.sos_mps * max(t_max, acquisition.dt), grid.pixel_size_m
            )
        self.arc = arc
        self.representation = "matrix_free"
        self._matrix = None
        self._matrix_t = None

        m = arc.num_arc_points
        # time-independent per-point weights: (segment length)/(c*t) trapezoid
        u = np.full(m, self.alpha / (m - 1))
        u[0] *= 0.5
        u[-1] *= 0.5
        self._point_weights = u
        rel = np.arange(m) * (self.alpha / (m - 1)) - 0.5 * self.alpha
        self._rel_angles = rel  # angular offsets about the element->center ray
        self.prefactor = medium.grueneisen / (4.0 * math.pi * medium.sos_mps)

    # ------------------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        """(rows, cols) of the underlying matrix: traces x pixels."""
        return (
            self.geometry.num_elements * self.acquisition.num_samples,
            self.grid.num_pixels,
        )

    def _band(self) -> np.ndarray:
        """Sample indices whose arc can overlap the grid (everything else is 0)."""
        t = self.acquisition.times
        r = self.medium.sos_mps * t
        margin = self.grid.roi_radius_m + 2.0 * self.grid.pixel_size_m
        ok = (t > 0) & (r >= self.geometry.radius_m - margin) & (r <= self.geometry.radius_m + margin)
        return np.nonzero(ok)[0]

    def _arc_grid_coords(self, element: int, times: np.ndarray):
        """Fractional pixel coordinates of all arc points at the given times.

        Returns (gx, gy) with shape (len(times), M).
        """
        x0, y0 = self.geometry.element_positions[element]
        phi_center = math.atan2(-y0, -x0)
        ang = phi_center + self._rel_angles
        radii = self.medium.sos_mps * times
        px = x0 + radii[:, None] * np.cos(ang)[None, :]
        py = y0 + radii[:, None] * np.sin(ang)[None, :]
        ox, oy = self.grid.origin
        return (px - ox) / self.grid.pixel_size_m, (py - oy) / self.grid.pixel_size_m

    def shell_integral(self, sampler, element: int, t: float) -> float:
        """I(t) for one element: quadrature of H/|r-r'| over the arc at radius c*t.

        ``sampler`` is either a :class:`HeatImage` (bilinear grid sampling)
        or a callable mapping an (M, 2) array of points to M values
        (continuous mode, used by the neural-field trainer).
        """
        if t <= 0:
            raise ValueError(f"shell integral requires t > 0, got {t}")
        pos = self.geometry.element_positions[element]
        pts = arc_points(pos, t, self.alpha, self.arc.num_arc_points, self.medium.sos_mps)
        if isinstance(sampler, HeatImage):
            ox, oy = self.grid.origin
            vals = _bilinear_gather(
                sampler.values,
                (pts[:, 0] - ox) / self.grid.pixel_size_m,
                (pts[:, 1] - oy) / self.grid.pixel_size_m,
            )
        else:
            vals = np.asarray(sampler(pts), dtype=np.float64)
        # weights already folded with 1/|r-r'| = 1/(c*t)
        return float(vals @ self._point_weights)

    # ------------------------------------------------------------------
    def apply(self, img: HeatImage) -> Sinogram:
        """p = A @ H.  First and last samples of every trace are zero."""
        if img.grid != self.grid:
            raise ValueError("image grid does not match the operator grid")
        if self.representation == "assembled_sparse":
            flat = self._matrix @ img.values.ravel()
            return Sinogram(
                geometry=self.geometry,
                acquisition=self.acquisition,
                data=flat.reshape(self.geometry.num_elements, self.acquisition.num_samples),
            )
        nt = self.acquisition.num_samples
        ne = self.geometry.num_elements
        band = self._band()
        tb = self.acquisition.times[band]
        scale = self.prefactor * self.acquisition.sample_rate_hz * 0.5
        out = np.zeros((ne, nt))
        for e in range(ne):
            gx, gy = self._arc_grid_coords(e, tb)
            shell = np.zeros(nt)
            shell[band] = _bilinear_gather(img.values, gx, gy) @ self._point_weights
            out[e, 1:-1] = scale * (shell[2:] - shell[:-2])
        return Sinogram(geometry=self.geometry, acquisition=self.acquisition, data=out)

    def adjoint(self, sino: Sinogram) -> HeatImage:
        """H = A^T @ p, the exact transpose of :meth:`apply`."""
        if (
            sino.num_elements != self.geometry.num_elements
            or sino.num_samples != self.acquisition.num_samples
        ):
            raise ValueError(
                f"sinogram shape {sino.data.shape} does not match operator "
                f"({self.geometry.num_elements}, {self.acquisition.num_samples})"
            )
        if self.representation == "assembled_sparse":
            flat = self._matrix_t @ sino.data.ravel()
            return HeatImage(grid=self.grid, values=flat.reshape(self.grid.shape))
        nt = self.acquisition.num_samples
        ne = self.geometry.num_elements
        band = self._band()
        tb = self.acquisition.times[band]
        scale = self.prefactor * self.acquisition.sample_rate_hz * 0.5
        acc = np.zeros(self.grid.shape)
        for e in range(ne):
            # transpose of the central difference: spread each interior
            # sample onto the two shell slots it reads from
            g = scale * sino.data[e, 1:-1]
            q = np.zeros(nt)
            q[2:] += g
            q[:-2] -= g
            qb = q[band]
            if not np.any(qb):
                continue
            gx, gy = self._arc_grid_coords(e, tb)
            acc += _bilinear_scatter(
                self.grid.shape, gx, gy, qb[:, None] * self._point_weights[None, :]
            )
        return HeatImage(grid=self.grid, values=acc)

    # ------------------------------------------------------------------
    def estimate_assembled_bytes(self) -> int:
        """Upper bound on the memory needed by :meth:`assemble`."""
        band = self._band()
        nnz = self.geometry.num_elements * len(band) * self.arc.num_arc_points * 4
        # COO triplets plus the CSR product held simultaneously
        return int(nnz * (8 + 2 * 4) * 2)

    def assemble(self, memory_budget_bytes: int = 4 << 30) -> "ForwardOperator":
        """Return a copy of this operator backed by an assembled sparse matrix."""
        from scipy import sparse

        est = self.estimate_assembled_bytes()
        if est > memory_budget_bytes:
            raise MemoryBudgetError(
                f"assembling requires about {est} bytes "
                f"(budget {memory_budget_bytes}); use the matrix-free form"
            )
        nt = self.acquisition.num_samples
        ne = self.geometry.num_elements
        nx, ny = self.grid.nx, self.grid.ny
        band = self._band()
        tb = self.acquisition.times[band]
        m = self.arc.num_arc_points

        rows, cols, vals = [], [], []
        for e in range(ne):
            gx, gy = self._arc_grid_coords(e, tb)
            i0 = np.floor(gx).astype(np.int64)
            j0 = np.floor(gy).astype(np.int64)
            fx = gx - i0
            fy = gy - j0
            w_pt = np.broadcast_to(self._point_weights[None, :], gx.shape)
            row_ids = np.broadcast_to((e * nt + band)[:, None], gx.shape)
            for di, dj, w in (
                (0, 0, (1 - fx) * (1 - fy)),
                (1, 0, fx * (1 - fy)),
                (0, 1, (1 - fx) * fy),
                (1, 1, fx * fy),
            ):
                i = i0 + di
                j = j0 + dj
                mask = (i >= 0) & (i < nx) & (j >= 0) & (j < ny) & (w != 0)
                rows.append(row_ids[mask])
                cols.append((j[mask] * nx + i[mask]))
                vals.append((w * w_pt)[mask])
        shell_mat = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(ne * nt, nx * ny),
        ).tocsr()

        # temporal central difference as a sparse band per element block
        scale = self.prefactor * self.acquisition.sample_rate_hz * 0.5
        interior = np.arange(1, nt - 1)
        r = np.concatenate([interior, interior])
        c = np.concatenate([interior + 1, interior - 1])
        v = np.concatenate([np.full(nt - 2, scale), np.full(nt - 2, -scale)])
        diff_block = sparse.coo_matrix((v, (r, c)), shape=(nt, nt)).tocsr()
        diff = sparse.block_diag([diff_block] * ne, format="csr")

        mat = (diff @ shell_mat).tocsr()
        mat.sum_duplicates()

        out = ForwardOperator.__new__(ForwardOperator)
        out.__dict__.update(self.__dict__)
        out.representation = "assembled_sparse"
        out._matrix = mat
        out._matrix_t = mat.T.tocsr()
        return out

    @property
    def matrix(self):
        """The assembled sparse matrix (only for ``assembled_sparse``)."""
        if self._matrix is None:
            raise ValueError("operator is matrix-free; call assemble() first")
        return self._matrix
