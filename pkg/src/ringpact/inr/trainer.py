"""Self-supervised training of the neural field against measured traces.

A "ray" is one (element, time-sample) amplitude.  Its model value uses the
same numerics as the grid forward operator - trapezoid quadrature over the
two arcs at ``t +- dt`` and a temporal central difference - but samples the
continuous field instead of a pixel grid.  All arc geometry is precomputed
once into a flat point list (:class:`RaySet`): per ray we store the unit
coordinates of its in-domain arc points together with a single signed
weight that folds the quadrature weight, the 1/(4 pi c) prefactor and the
finite-difference scale, so a predicted amplitude is just a weighted sum
of field values.

Training shuffles all interior rays into batches each epoch, follows Adam
with a step-decayed learning rate, and stops on a loss threshold or at
``max_epochs``.  Everything is deterministic given the seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Acquisition, HeatImage, ImageGrid, Medium, RingGeometry, Sinogram
from ..forward import opening_angle
from ..mb import tv_gradient, tv_value
from .field import FieldDomain, NeuralField
from .network import Adam


@dataclass(frozen=True)
class TrainConfig:
    initial_lr: float = 1e-3
    lr_decay_every: int = 20
    lr_decay_factor: float = 0.5
    loss_stop_threshold: float = 1e-4
    max_epochs: int = 100
    eta: float = 0.02
    rays_per_batch: int = 4096
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    tv_grid_size: int = 128
    tv_epsilon: float = 1e-6
    num_arc_points: int | None = None  # default: one finest-level cell per arc step
    target_amplitude: float = 0.5  # fitted field level for a unit-amplitude source
    divergence_factor: float = 10.0
    divergence_patience: int = 5

    def __post_init__(self):
        if self.initial_lr <= 0 or self.lr_decay_every < 1 or self.max_epochs < 1:
            raise ValueError("learning-rate schedule parameters must be positive")
        if not (0 < self.lr_decay_factor < 1):
            raise ValueError(f"lr_decay_factor must be in (0, 1), got {self.lr_decay_factor}")
        if self.loss_stop_threshold <= 0 or self.rays_per_batch < 1:
            raise ValueError("loss_stop_threshold and rays_per_batch must be positive")
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if self.tv_grid_size < 2 or self.tv_epsilon <= 0:
            raise ValueError("tv_grid_size must be >= 2 and tv_epsilon > 0")
        if not (0 < self.target_amplitude < 1):
            raise ValueError(f"target_amplitude must be in (0, 1), got {self.target_amplitude}")


class RaySet:
    """Precomputed arc geometry for every interior (element, sample) ray.

    ``pts01``/``weights`` hold the in-domain arc points of all rays back to
    back; ``ray_ptr`` delimits each ray's slice.  Rays whose arcs miss the
    domain entirely keep an empty slice (their model value is exactly 0).

    ``mask_outside=True`` (default) treats the field as zero outside its
    domain, matching the grid forward operator; ``mask_outside=False``
    keeps every arc point and lets the encoder clamp coordinates, which
    models a field extended constantly past the domain edge.
    """

    def __init__(
        self,
        geometry: RingGeometry,
        medium: Medium,
        acquisition: Acquisition,
        domain: FieldDomain,
        num_arc_points: int,
        dtype=np.float32,
        mask_outside: bool = True,
    ):
        if num_arc_points < 3:
            raise ValueError(f"num_arc_points must be >= 3, got {num_arc_points}")
        if domain.roi_radius_m >= geometry.radius_m:
            raise ValueError("field domain extends outside the transducer ring")
        self.geometry = geometry
        self.medium = medium
        self.acquisition = acquisition
        self.domain = domain
        self.num_arc_points = num_arc_points

        nt = acquisition.num_samples
        ne = geometry.num_elements
        m = num_arc_points
        alpha = opening_angle(domain.roi_radius_m, geometry.radius_m)
        self.alpha = alpha
        prefactor = medium.grueneisen / (4.0 * math.pi * medium.sos_mps)
        scale = prefactor * acquisition.sample_rate_hz * 0.5

        u = np.full(m, alpha / (m - 1))
        u[0] *= 0.5
        u[-1] *= 0.5
        rel = np.arange(m) * (alpha / (m - 1)) - 0.5 * alpha

        times = acquisition.times
        radii = medium.sos_mps * times
        interior = np.arange(1, nt - 1)
        self.elements = np.repeat(np.arange(ne), len(interior))
        self.samples = np.tile(interior, ne)
        n_rays = ne * len(interior)

        # restrict arc evaluation to samples whose arc can touch the domain
        if mask_outside:
            margin = domain.roi_radius_m + 1e-9
            row_live = (radii > 0) & (np.abs(radii - geometry.radius_m) <= margin)
        else:
            row_live = np.ones(nt, dtype=bool)

        pts_parts, w_parts, ray_parts = [], [], []
        positions = geometry.element_positions
        for e in range(ne):
            x0, y0 = positions[e]
            ang = math.atan2(-y0, -x0) + rel
            live = np.nonzero(row_live)[0]
            if len(live) == 0:
                continue
            px = x0 + radii[live, None] * np.cos(ang)[None, :]
            py = y0 + radii[live, None] * np.sin(ang)[None, :]
            unit = domain.to_unit(np.stack([px.ravel(), py.ravel()], axis=1))
            if mask_outside:
                inside = domain.contains_unit(unit).reshape(len(live), m)
            else:
                inside = np.ones((len(live), m), dtype=bool)

            # per live row: flattened in-domain points and their weights
            counts = np.zeros(nt, dtype=np.int64)
            counts[live] = inside.sum(axis=1)
            row_ptr = np.concatenate([[0], np.cumsum(counts)])
            row_pts = unit.reshape(len(live), m, 2)[inside].astype(dtype)
            row_w = np.broadcast_to(u, (len(live), m))[inside]

            # ray i reads row i+1 with +scale and row i-1 with -scale
            for rows, sign in ((interior + 1, 1.0), (interior - 1, -1.0)):
                lens = counts[rows]
                total = int(lens.sum())
                if total == 0:
                    continue
                starts = row_ptr[rows]
                offs = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
                pt_idx = np.repeat(starts, lens) + offs
                pts_parts.append(row_pts[pt_idx])
                w_parts.append((sign * scale) * row_w[pt_idx])
                ray_parts.append(e * len(interior) + np.repeat(np.arange(len(interior)), lens))

        if pts_parts:
            pts = np.concatenate(pts_parts)
            w = np.concatenate(w_parts).astype(dtype)
            ray_of_pt = np.concatenate(ray_parts)
            order = np.argsort(ray_of_pt, kind="stable")
            self.pts01 = np.ascontiguousarray(pts[order])
            self.weights = np.ascontiguousarray(w[order])
            counts_per_ray = np.bincount(ray_of_pt, minlength=n_rays)
        else:
            self.pts01 = np.zeros((0, 2), dtype=dtype)
            self.weights = np.zeros(0, dtype=dtype)
            counts_per_ray = np.zeros(n_rays, dtype=np.int64)
        self.ray_ptr = np.concatenate([[0], np.cumsum(counts_per_ray)]).astype(np.int64)

    @property
    def num_rays(self) -> int:
        return len(self.elements)

    def with_weight_scale(self, scale: float) -> "RaySet":
        """Shallow copy whose per-point weights are multiplied by ``scale``."""
        if scale == 1.0:
            return self
        clone = self.__class__.__new__(self.__class__)
        clone.__dict__.update(self.__dict__)
        clone.weights = (self.weights.astype(np.float64) * scale).astype(self.weights.dtype)
        return clone

    def measured_vector(self, sino: Sinogram) -> np.ndarray:
        """Per-ray measured amplitudes, in ray order."""
        return sino.data[self.elements, self.samples]

    def gather(self, ray_indices: np.ndarray):
        """Flat point indices and point->batch-row map for a batch of rays."""
        ray_indices = np.asarray(ray_indices, dtype=np.int64)
        lens = self.ray_ptr[ray_indices + 1] - self.ray_ptr[ray_indices]
        total = int(lens.sum())
        row_of_pt = np.repeat(np.arange(len(ray_indices)), lens)
        offs = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
        pt_idx = np.repeat(self.ray_ptr[ray_indices], lens) + offs
        return pt_idx, row_of_pt


def predict_signals(
    nf: NeuralField, rayset: RaySet, ray_indices: np.ndarray | None = None
) -> np.ndarray:
    """Model amplitudes for the given rays (all rays by default)."""
    if ray_indices is None:
        ray_indices = np.arange(rayset.num_rays)
    ray_indices = np.asarray(ray_indices, dtype=np.int64)
    if len(ray_indices) == 0:
        return np.zeros(0)
    pt_idx, row_of_pt = rayset.gather(ray_indices)
    if len(pt_idx) == 0:
        return np.zeros(len(ray_indices))
    vals = nf.eval_unit(rayset.pts01[pt_idx])
    contrib = vals.astype(np.float64) * rayset.weights[pt_idx]
    return np.bincount(row_of_pt, weights=contrib, minlength=len(ray_indices))


def _tv_unit_points(domain: FieldDomain, size: int, dtype) -> tuple[np.ndarray, tuple[int, int]]:
    # cell-centered sample lattice over the unit square
    g = (np.arange(size) + 0.5) / size
    gx, gy = np.meshgrid(g, g)
    return np.stack([gx.ravel(), gy.ravel()], axis=1).astype(dtype), (size, size)


def loss_and_gradients(
    nf: NeuralField,
    rayset: RaySet,
    ray_indices: np.ndarray,
    measured: np.ndarray,
    eta: float,
    tv_grid: ImageGrid | None = None,
    tv_grid_size: int = 128,
    tv_epsilon: float = 1e-6,
    want_grads: bool = True,
):
    """Batch loss and full parameter gradients.

    The loss is ``mean((pred - measured)^2)`` over the batch rays plus
    ``eta * TV(render)/num_pixels`` with the render taken on ``tv_grid``
    (or a ``tv_grid_size``-square lattice over the field domain).
    Returns ``(loss, grads, info)`` where ``info`` carries the data and TV
    terms separately; ``grads`` is None when ``want_grads`` is false.
    """
    ray_indices = np.asarray(ray_indices, dtype=np.int64)
    measured = np.asarray(measured, dtype=np.float64)
    if measured.shape != ray_indices.shape:
        raise ValueError("measured amplitudes must align with ray_indices")
    if tv_grid is not None:
        x, y = tv_grid.pixel_coords()
        tv_pts = nf.domain.to_unit(np.stack([x.ravel(), y.ravel()], axis=1)).astype(nf.dtype)
        tv_shape = tv_grid.shape
    else:
        tv_pts, tv_shape = _tv_unit_points(nf.domain, tv_grid_size, nf.dtype)

    batch = len(ray_indices)
    grads = None
    if batch > 0:
        pt_idx, row_of_pt = rayset.gather(ray_indices)
        w = rayset.weights[pt_idx]
        vals, cache = nf.eval_unit(rayset.pts01[pt_idx], with_cache=True)
        pred = np.bincount(row_of_pt, weights=vals.astype(np.float64) * w, minlength=batch)
        err = pred - measured
        data_term = float(np.mean(err * err))
        if want_grads:
            dpred = (2.0 / batch) * err
            dvals = (dpred[row_of_pt] * w).astype(nf.dtype)
            grads = nf.backward(cache, dvals)
    else:
        data_term = 0.0

    tvals, tcache = nf.eval_unit(tv_pts, with_cache=True)
    timg = tvals.reshape(tv_shape).astype(np.float64)
    n_pix = timg.size
    tv_term = tv_value(timg, tv_epsilon) / n_pix
    loss = data_term + eta * tv_term
    if not np.isfinite(loss):
        raise RuntimeError(
            f"non-finite training loss (data={data_term}, tv={tv_term}); aborting"
        )
    if want_grads:
        if eta > 0:
            dtimg = (eta / n_pix) * tv_gradient(timg, tv_epsilon)
            tv_grads = nf.backward(tcache, dtimg.ravel())
            if grads is None:
                grads = tv_grads
            else:
                for k, g in tv_grads.items():
                    grads[k] += g
        elif grads is None:
            grads = {k: np.zeros_like(v) for k, v in nf.parameters().items()}
    return loss, grads, {"data_term": data_term, "tv_term": tv_term}


@dataclass
class TrainResult:
    field: NeuralField
    history: np.ndarray  # rows: (epoch_mean_loss, learning_rate)
    stop_reason: str


def train(
    nf: NeuralField,
    sino: Sinogram,
    cfg: TrainConfig = TrainConfig(),
    rayset: RaySet | None = None,
    medium: Medium | None = None,
) -> TrainResult:
    """Fit the field to a sinogram; mutates ``nf`` in place and returns it.

    The sinogram is amplitude-normalized (divided by its max magnitude)
    before training.  Epochs iterate over all interior rays in shuffled
    batches; training stops when the epoch-mean loss falls below
    ``loss_stop_threshold`` or after ``max_epochs``.  Pass either a
    prepared :class:`RaySet` or the medium to build one from.
    """
    if rayset is None:
        if medium is None:
            raise ValueError("train() needs a RaySet or a Medium to build one")
        rayset = RaySet(
            sino.geometry,
            medium,
            sino.acquisition,
            nf.domain,
            _default_arc_points(nf, sino, medium, cfg),
            dtype=nf.dtype,
        )
    # normalize both sides by the measured peak: the data to unit amplitude,
    # and the model so a unit-amplitude heat source fits the field at
    # cfg.target_amplitude, comfortably inside the sigmoid range.  Any
    # constant factor in the forward physics cancels between the two.
    peak = float(np.max(np.abs(sino.data)))
    pm = sino.data / peak if peak > 0 else sino.data
    sino_n = Sinogram(geometry=sino.geometry, acquisition=sino.acquisition, data=pm)
    measured_all = rayset.measured_vector(sino_n)
    pred_scale = 1.0 / (cfg.target_amplitude * peak) if peak > 0 else 1.0
    scaled_rays = rayset.with_weight_scale(pred_scale)

    tv_pts, tv_shape = _tv_unit_points(nf.domain, cfg.tv_grid_size, nf.dtype)
    params = nf.parameters()
    adam = Adam(params, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)

    n_rays = rayset.num_rays
    history = []
    stop_reason = "max_epochs"
    diverged_streak = 0
    first_loss = None

    for epoch in range(cfg.max_epochs):
        lr = cfg.initial_lr * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)
        perm = rng.permutation(n_rays)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_rays, cfg.rays_per_batch):
            idx = perm[start : start + cfg.rays_per_batch]
            loss, grads, _ = _batched_loss(
                nf, scaled_rays, idx, measured_all[idx], cfg.eta, tv_pts, tv_shape, cfg.tv_epsilon
            )
            adam.step(params, grads, lr)
            epoch_loss += loss
            n_batches += 1
        mean_loss = epoch_loss / max(n_batches, 1)
        history.append((mean_loss, lr))
        if first_loss is None:
            first_loss = mean_loss
        if mean_loss < cfg.loss_stop_threshold:
            stop_reason = "loss_threshold"
            break
        if mean_loss > cfg.divergence_factor * first_loss:
            diverged_streak += 1
            if diverged_streak >= cfg.divergence_patience:
                raise RuntimeError(
                    f"training diverged: epoch-mean loss {mean_loss:.3e} stayed above "
                    f"{cfg.divergence_factor:g}x the initial loss {first_loss:.3e} "
                    f"for {diverged_streak} consecutive epochs"
                )
        else:
            diverged_streak = 0

    return TrainResult(field=nf, history=np.asarray(history), stop_reason=stop_reason)


def _batched_loss(nf, rayset, idx, measured, eta, tv_pts, tv_shape, tv_eps):
    # same as loss_and_gradients but with precomputed TV sample points
    pt_idx, row_of_pt = rayset.gather(idx)
    w = rayset.weights[pt_idx]
    vals, cache = nf.eval_unit(rayset.pts01[pt_idx], with_cache=True)
    pred = np.bincount(row_of_pt, weights=vals.astype(np.float64) * w, minlength=len(idx))
    err = pred - measured
    data_term = float(np.mean(err * err))
    dvals = ((2.0 / len(idx)) * err)[row_of_pt] * w
    grads = nf.backward(cache, dvals.astype(nf.dtype))

    tvals, tcache = nf.eval_unit(tv_pts, with_cache=True)
    timg = tvals.reshape(tv_shape).astype(np.float64)
    tv_term = tv_value(timg, tv_eps) / timg.size
    loss = data_term + eta * tv_term
    if not np.isfinite(loss):
        raise RuntimeError(f"non-finite training loss (data={data_term}, tv={tv_term}); aborting")
    if eta > 0:
        dtimg = (eta / timg.size) * tv_gradient(timg, tv_eps)
        for k, g in nf.backward(tcache, dtimg.ravel()).items():
            grads[k] += g
    return loss, grads, {"data_term": data_term, "tv_term": tv_term}


def _default_arc_points(nf: NeuralField, sino: Sinogram, medium: Medium, cfg: TrainConfig) -> int:
    """Arc sampling no coarser than one finest-encoding cell, unless overridden."""
    if cfg.num_arc_points is not None:
        return cfg.num_arc_points
    alpha = opening_angle(nf.domain.roi_radius_m, sino.geometry.radius_m)
    t_max = sino.acquisition.times[-1]
    cell = 2.0 * nf.domain.half_extent_m / nf.encoding.finest_resolution
    m = int(math.ceil(alpha * medium.sos_mps * max(t_max, sino.acquisition.dt) / cell)) + 1
    m = max(m, 3)
    if m % 2 == 0:
        m += 1
    return m


def fit(
    sino: Sinogram,
    medium: Medium,
    grid: ImageGrid,
    encoding=None,
    hidden: int = 128,
    cfg: TrainConfig = TrainConfig(),
    field_seed: int = 0,
) -> TrainResult:
    """Convenience wrapper: build the field and ray set for a grid, then train."""
    from .encoding import HashEncodingConfig

    if encoding is None:
        encoding = HashEncodingConfig(finest_resolution=max(grid.nx, grid.ny))
    domain = FieldDomain.from_grid(grid)
    nf = NeuralField(encoding, domain, hidden=hidden, seed=field_seed, dtype=np.float32)
    return train(nf, sino, cfg, medium=medium)
