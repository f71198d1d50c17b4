"""Experiment orchestration: simulate -> reconstruct -> compare.

Every stage reads and writes the binary containers from :mod:`ringpact.io`
so stages can run in separate processes or be mixed with external tools.
Per-reconstruction metadata (runtime, method settings) lands in a JSON
sidecar next to each image; ``run_compare`` collects everything into one
CSV plus per-projection-count PNG strips.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import io as rio
from .config import ExperimentConfig
from .core import HeatImage, Sinogram, subsample_projections
from .forward import ForwardOperator, MemoryBudgetError
from .inr import FieldDomain, HashEncodingConfig, NeuralField, train as nr_train
from .mb import mb_reconstruct
from .metrics import cnr, normalize01, psnr, snr, ssim
from .phantom import rasterize, synthesize_sinogram
from .ubp import ubp_reconstruct

log = logging.getLogger("ringpact")

CSV_COLUMNS = ("method", "k", "ssim", "psnr_db", "snr_db", "cnr_db", "runtime_s")


def run_simulate(cfg: ExperimentConfig) -> tuple[Path, Path]:
    """Rasterize the phantom and synthesize its sinogram; returns (sino, gt) paths."""
    from .config import ConfigError

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if cfg.raw_input is not None:
        sino = rio.read_raw_sinogram(cfg.raw_input, cfg.geometry, cfg.acquisition)
        rio.write_sinogram(cfg.sinogram_path(), sino, cfg.medium)
        log.info("imported raw sinogram %s -> %s", cfg.raw_input, cfg.sinogram_path())
        return cfg.sinogram_path(), cfg.ground_truth_path()
    if cfg.input_sinogram is not None:
        sino, _ = rio.read_sinogram(cfg.input_sinogram)
        rio.write_sinogram(cfg.sinogram_path(), sino, cfg.medium)
        return cfg.sinogram_path(), cfg.ground_truth_path()
    if cfg.phantom is None:
        raise ConfigError("simulate needs a [phantom] section (or an input sinogram)")
    gt = rasterize(cfg.phantom, cfg.grid)
    sino = synthesize_sinogram(
        gt,
        cfg.geometry,
        cfg.medium,
        cfg.acquisition,
        noise_snr_db=cfg.noise_snr_db,
        seed=cfg.seed,
    )
    rio.write_image(cfg.ground_truth_path(), gt)
    rio.write_sinogram(cfg.sinogram_path(), sino, cfg.medium)
    rio.write_png(cfg.output_dir / "ground_truth.png", gt)
    log.info(
        "simulated %d-element ring (radius %.1f mm), %d samples @ %.1f MHz, grid %dx%d",
        cfg.geometry.num_elements,
        cfg.geometry.radius_m * 1e3,
        cfg.acquisition.num_samples,
        cfg.acquisition.sample_rate_hz / 1e6,
        cfg.grid.nx,
        cfg.grid.ny,
    )
    return cfg.sinogram_path(), cfg.ground_truth_path()


def _nr_reconstruct(cfg: ExperimentConfig, sino: Sinogram, k: int) -> tuple[HeatImage, dict, np.ndarray]:
    encoding = cfg.nr.encoding or HashEncodingConfig(
        finest_resolution=max(cfg.grid.nx, cfg.grid.ny)
    )
    domain = FieldDomain.from_grid(cfg.grid)
    nf = NeuralField(
        encoding, domain, hidden=cfg.nr.hidden, seed=cfg.nr.field_seed, dtype=np.float32
    )
    result = nr_train(nf, sino, cfg.nr.train, medium=cfg.medium)
    nf.save(cfg.output_dir / f"field_k{k:04d}.ckpt")
    img = nf.render_grid(cfg.grid)
    meta = {"epochs": len(result.history), "stop_reason": result.stop_reason}
    return img, meta, result.history


def run_reconstruct(cfg: ExperimentConfig, method: str, k: int) -> Path:
    """Subsample to k projections, run one method, write image + history + sidecar."""
    from .config import ConfigError

    if method not in ("ubp", "mb", "nr"):
        raise ConfigError(f"unknown method {method!r}")
    sino_full, medium = rio.read_sinogram(cfg.sinogram_path())
    sino = subsample_projections(sino_full, k)

    t0 = time.perf_counter()
    extra: dict = {}
    if method == "ubp":
        img = ubp_reconstruct(sino, cfg.grid, medium, cfg.ubp)
    elif method == "mb":
        op = ForwardOperator(sino.geometry, medium, sino.acquisition, cfg.grid)
        try:
            op = op.assemble(memory_budget_bytes=1 << 30)
        except MemoryBudgetError:
            log.info("operator too large to assemble; running matrix-free")
        result = mb_reconstruct(sino, op, cfg.mb)
        img = result.image
        hist_path = cfg.output_dir / f"history_mb_k{k:04d}.csv"
        with open(hist_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("iter", "data_term", "tv_term"))
            for row in result.history:
                w.writerow((int(row[0]), f"{row[1]:.10g}", f"{row[2]:.10g}"))
        extra["history"] = hist_path.name
    else:
        img, meta, history = _nr_reconstruct(cfg, sino, k)
        hist_path = cfg.output_dir / f"history_nr_k{k:04d}.csv"
        with open(hist_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("epoch", "loss", "lr"))
            for i, (loss, lr) in enumerate(history):
                w.writerow((i, f"{loss:.10g}", f"{lr:.10g}"))
        extra.update(meta)
        extra["history"] = hist_path.name
    runtime = time.perf_counter() - t0

    out_path = cfg.recon_path(method, k)
    rio.write_image(out_path, img)
    rio.write_png(out_path.with_suffix(".png"), img)
    sidecar = {"method": method, "k": k, "runtime_s": runtime, **extra}
    with open(out_path.with_suffix(".json"), "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    log.info("reconstructed %s at k=%d in %.1f s -> %s", method, k, runtime, out_path.name)
    return out_path


def run_compare(cfg: ExperimentConfig) -> tuple[Path, list[tuple[str, int]]]:
    """Metrics CSV over all (method, k) pairs plus side-by-side PNG strips.

    Returns the CSV path and the list of missing reconstructions (skipped).
    """
    gt = None
    if cfg.ground_truth_path().exists():
        gt = normalize01(rio.read_image(cfg.ground_truth_path()))
    rows = []
    missing = []
    for method in cfg.methods:
        for k in cfg.projections:
            path = cfg.recon_path(method, k)
            if not path.exists():
                missing.append((method, k))
                log.warning("missing reconstruction %s k=%d (%s); skipped", method, k, path.name)
                continue
            img = rio.read_image(path)
            norm = normalize01(img)
            row = {"method": method, "k": k}
            row["ssim"] = ssim(norm, gt) if gt is not None else float("nan")
            row["psnr_db"] = psnr(norm, gt) if gt is not None else float("nan")
            if cfg.regions is not None:
                row["snr_db"] = snr(norm, cfg.regions)
                row["cnr_db"] = cnr(norm, cfg.regions)
            else:
                row["snr_db"] = float("nan")
                row["cnr_db"] = float("nan")
            sidecar = path.with_suffix(".json")
            runtime = float("nan")
            if sidecar.exists():
                runtime = json.loads(sidecar.read_text()).get("runtime_s", float("nan"))
            row["runtime_s"] = runtime
            rows.append(row)

    csv_path = cfg.output_dir / "metrics.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow(
                (
                    row["method"],
                    row["k"],
                    f"{row['ssim']:.10g}",
                    f"{row['psnr_db']:.10g}",
                    f"{row['snr_db']:.10g}",
                    f"{row['cnr_db']:.10g}",
                    f"{row['runtime_s']:.6g}",
                )
            )
    _write_strips(cfg)
    log.info("compared %d reconstructions -> %s (%d missing)", len(rows), csv_path, len(missing))
    return csv_path, missing


def _write_strips(cfg: ExperimentConfig) -> None:
    """One PNG per projection count: methods side by side (plus ground truth)."""
    for k in cfg.projections:
        panels = []
        if cfg.ground_truth_path().exists():
            panels.append(normalize01(rio.read_image(cfg.ground_truth_path())))
        for method in cfg.methods:
            path = cfg.recon_path(method, k)
            if path.exists():
                panels.append(normalize01(rio.read_image(path)))
        if len(panels) < 2:
            continue
        gap = np.ones((panels[0].shape[0], 2))
        strip = panels[0]
        for p in panels[1:]:
            strip = np.concatenate([strip, gap, p], axis=1)
        rio.write_png(cfg.output_dir / f"strip_k{k:04d}.png", strip)


def run_all(cfg: ExperimentConfig) -> Path:
    """simulate + reconstruct every (method, k) + compare."""
    run_simulate(cfg)
    for method in cfg.methods:
        for k in cfg.projections:
            run_reconstruct(cfg, method, k)
    csv_path, _ = run_compare(cfg)
    return csv_path
