"""Model-based inversion: non-negative least squares with TV regularization.

Minimizes ``||A H - p||^2 + lambda * TV_eps(H)`` over ``H >= 0`` by
projected gradient descent.  The default backtracking line search only
accepts non-increasing objective values, so the reported objective
history is monotone; a fixed-step mode and FISTA acceleration are
available for experimentation (neither guarantees monotonicity).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import HeatImage, Sinogram
from .forward import ForwardOperator


@dataclass(frozen=True)
class MbConfig:
    lam: float = 0.01
    max_iters: int = 50
    tv_epsilon: float = 1e-6
    step_rule: str = "backtracking"  # or "fixed"
    fixed_step: float | None = None  # default: 1/(2 sigma_max^2) from power iteration
    accelerate: bool = False  # FISTA momentum (not monotone)
    seed: int = 0  # for the power-iteration start vector

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tv_epsilon <= 0:
            raise ValueError(f"tv_epsilon must be > 0, got {self.tv_epsilon}")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step_rule {self.step_rule!r}")


def _image_values(img) -> np.ndarray:
    if isinstance(img, HeatImage):
        return img.values
    return np.asarray(img, dtype=np.float64)


def _forward_diffs(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # forward differences with replicate boundary: last row/col diffs are 0
    dx = np.zeros_like(v)
    dy = np.zeros_like(v)
    dx[:, :-1] = v[:, 1:] - v[:, :-1]
    dy[:-1, :] = v[1:, :] - v[:-1, :]
    return dx, dy


def tv_value(img, eps: float) -> float:
    """Smoothed isotropic total variation: sum of sqrt(dx^2+dy^2+eps^2)-eps."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    v = _image_values(img)
    dx, dy = _forward_diffs(v)
    return float(np.sum(np.sqrt(dx * dx + dy * dy + eps * eps) - eps))


def tv_gradient(img, eps: float) -> np.ndarray:
    """Analytic gradient of :func:`tv_value` with respect to the image."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    v = _image_values(img)
    dx, dy = _forward_diffs(v)
    r = np.sqrt(dx * dx + dy * dy + eps * eps)
    px = dx / r
    py = dy / r
    g = np.zeros_like(v)
    # d tv / d v[m,n]: -px[m,n] - py[m,n] + px[m,n-1] + py[m-1,n]
    g -= px
    g -= py
    g[:, 1:] += px[:, :-1]
    g[1:, :] += py[:-1, :]
    return g


@dataclass
class MbResult:
    image: HeatImage
    history: np.ndarray  # rows: (iteration, data_term, tv_term)
    step_sizes: np.ndarray

    @property
    def objectives(self) -> np.ndarray:
        return self.history[:, 1] + self.history[:, 2]


def _power_iteration_sq_norm(op: ForwardOperator, seed: int, iters: int = 12) -> float:
    """Estimate of sigma_max(A)^2 via power iteration on A^T A."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(op.grid.shape)
    x /= np.linalg.norm(x)
    from .core import HeatImage as _HI

    s = 1.0
    for _ in range(iters):
        y = op.apply(_HI(grid=op.grid, values=x))
        z = op.adjoint(y).values
        s = float(np.linalg.norm(z))
        if s == 0:
            return 1.0
        x = z / s
    return s  # ||A^T A x|| -> sigma_max^2


def mb_reconstruct(sino: Sinogram, op: ForwardOperator, cfg: MbConfig = MbConfig()) -> MbResult:
    """Projected-gradient TV-regularized NNLS reconstruction.

    The sinogram is amplitude-normalized (divided by its max magnitude)
    before inversion, so ``cfg.lam`` is scale free; the returned image is
    in those normalized units.  ``history[i]`` holds the data and TV terms
    of iterate ``i`` (row 0 is the all-zero start), so with backtracking
    the summed objective is non-increasing.
    """
    if (
        sino.num_elements != op.geometry.num_elements
        or sino.num_samples != op.acquisition.num_samples
    ):
        raise ValueError("sinogram does not match the operator layout")
    peak = float(np.max(np.abs(sino.data)))
    pm = sino.data / peak if peak > 0 else sino.data

    lam, eps = cfg.lam, cfg.tv_epsilon
    grid = op.grid

    def data_and_tv(h: np.ndarray) -> tuple[float, float, np.ndarray]:
        residual = op.apply(HeatImage(grid=grid, values=h)).data - pm
        return float(np.sum(residual * residual)), lam * tv_value(h, eps), residual

    sq_norm = _power_iteration_sq_norm(op, cfg.seed)
    tau = cfg.fixed_step if cfg.fixed_step is not None else 1.0 / (2.0 * sq_norm)

    h = np.zeros(grid.shape)
    data_term, tv_term, residual = data_and_tv(h)
    history = [(0, data_term, tv_term)]
    steps = []
    h_prev = h
    t_mom = 1.0

    for it in range(1, cfg.max_iters + 1):
        if cfg.accelerate:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            y = h + ((t_mom - 1.0) / t_next) * (h - h_prev)
            t_mom = t_next
            data_y, tv_y, residual_y = data_and_tv(y)
            grad = 2.0 * op.adjoint(
                Sinogram(geometry=op.geometry, acquisition=op.acquisition, data=residual_y)
            ).values + lam * tv_gradient(y, eps)
            h_prev = h
            h = np.maximum(0.0, y - tau * grad)
            data_term, tv_term, residual = data_and_tv(h)
        else:
            grad = 2.0 * op.adjoint(
                Sinogram(geometry=op.geometry, acquisition=op.acquisition, data=residual)
            ).values + lam * tv_gradient(h, eps)
            obj = data_term + tv_term
            if cfg.step_rule == "fixed":
                h_prev = h
                h = np.maximum(0.0, h - tau * grad)
                data_term, tv_term, residual = data_and_tv(h)
            else:
                trial_tau = tau * 2.0  # allow the step to grow back
                accepted = False
                for _ in range(40):
                    h_new = np.maximum(0.0, h - trial_tau * grad)
                    data_new, tv_new, residual_new = data_and_tv(h_new)
                    if data_new + tv_new <= obj:
                        accepted = True
                        break
                    trial_tau *= 0.5
                if accepted:
                    tau = trial_tau
                    h_prev = h
                    h = h_new
                    data_term, tv_term, residual = data_new, tv_new, residual_new
                # else: keep the iterate; objective stays constant
        if not np.isfinite(data_term + tv_term):
            raise RuntimeError(
                f"model-based solver produced a non-finite objective at iteration {it} "
                f"(data={data_term}, tv={tv_term})"
            )
        history.append((it, data_term, tv_term))
        steps.append(tau)

    return MbResult(
        image=HeatImage(grid=grid, values=h),
        history=np.asarray(history, dtype=np.float64),
        step_sizes=np.asarray(steps, dtype=np.float64),
    )
