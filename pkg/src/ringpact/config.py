"""Experiment configuration: TOML loading, validation, and presets.

A config file describes one experiment end to end - geometry, medium,
acquisition, grid, a phantom (or a pre-recorded sinogram), the projection
counts and methods to compare, and per-method settings.  Command-line
flags override file values.  See ``desk_preset`` / ``insilico_preset``
for the two built-in parameter sets.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .core import Acquisition, ImageGrid, Medium, RingGeometry
from .inr import HashEncodingConfig, TrainConfig
from .mb import MbConfig
from .metrics import Rect, RegionSpec
from .phantom import PhantomSpec
from .ubp import UbpConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

METHODS = ("ubp", "mb", "nr")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class NrConfig:
    """Neural-representation settings: training plus field architecture."""

    train: TrainConfig = TrainConfig()
    encoding: HashEncodingConfig | None = None  # default: finest level = grid size
    hidden: int = 128
    field_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: RingGeometry
    medium: Medium
    acquisition: Acquisition
    grid: ImageGrid
    output_dir: Path
    phantom: PhantomSpec | None = None
    input_sinogram: Path | None = None  # PARF file, used instead of simulating
    raw_input: Path | None = None  # headerless float32 dump (geometry from this config)
    projections: tuple[int, ...] = (32, 64, 128, 256)
    methods: tuple[str, ...] = ("ubp", "mb", "nr")
    seed: int = 0
    noise_snr_db: float | None = None
    sim_oversample: int = 1  # synthesize data on a finer grid (avoids the inverse crime)
    ubp: UbpConfig = UbpConfig()
    mb: MbConfig = MbConfig()
    nr: NrConfig = NrConfig()
    regions: RegionSpec | None = None

    def __post_init__(self):
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected a subset of {METHODS}")
        for k in self.projections:
            if not (1 <= k <= self.geometry.num_elements):
                raise ConfigError(
                    f"projection count {k} outside [1, {self.geometry.num_elements}]"
                )
            if self.geometry.num_elements % k != 0:
                raise ConfigError(
                    f"projection count {k} does not divide {self.geometry.num_elements} elements"
                )
        if self.grid.roi_radius_m >= self.geometry.radius_m:
            raise ConfigError(
                f"grid (roi radius {self.grid.roi_radius_m:.4g} m) must lie strictly "
                f"inside the ring (radius {self.geometry.radius_m:.4g} m)"
            )
        object.__setattr__(self, "output_dir", Path(self.output_dir))

    def sinogram_path(self) -> Path:
        return self.output_dir / "sinogram.parf"

    def ground_truth_path(self) -> Path:
        return self.output_dir / "ground_truth.paim"

    def recon_path(self, method: str, k: int) -> Path:
        return self.output_dir / f"recon_{method}_k{k:04d}.paim"


# ----------------------------------------------------------------------
# presets


def insilico_preset(output_dir="runs/insilico", seed: int = 0) -> ExperimentConfig:
    """Full-scale in-silico setup: 40 mm ring, 256 elements, 512x512 @ 0.05 mm.

    Matches the published simulation scale; reconstruction of all methods
    at this size is expensive on a laptop-class CPU.
    """
    return ExperimentConfig(
        geometry=RingGeometry(radius_m=0.040, num_elements=256),
        medium=Medium(sos_mps=1500.0),
        acquisition=Acquisition(sample_rate_hz=20e6, num_samples=1024),
        grid=ImageGrid(nx=512, ny=512, pixel_size_m=0.05e-3),
        output_dir=Path(output_dir),
        phantom=PhantomSpec.vessel_phantom(seed=7),
        projections=(32, 64, 128, 256),
        methods=("ubp", "mb", "nr"),
        seed=seed,
        mb=MbConfig(lam=0.01, max_iters=50),
        nr=NrConfig(train=TrainConfig(eta=0.02)),
        regions=RegionSpec(
            signal_rect=Rect(236, 236, 276, 276),
            background_rect=Rect(24, 24, 88, 88),
        ),
    )


def desk_preset(output_dir="runs/desk", seed: int = 0) -> ExperimentConfig:
    """Desk-scale setup: 64x64 @ 0.4 mm, 64 elements, 512 samples.

    The sample rate is lowered to 10 MHz so the recorded window covers the
    whole ring-plus-ROI time of flight (ring radius / (c dt) = 267 < 512).
    """
    return ExperimentConfig(
        geometry=RingGeometry(radius_m=0.040, num_elements=64),
        medium=Medium(sos_mps=1500.0),
        acquisition=Acquisition(sample_rate_hz=10e6, num_samples=512),
        grid=ImageGrid(nx=64, ny=64, pixel_size_m=0.4e-3),
        output_dir=Path(output_dir),
        phantom=PhantomSpec.vessel_phantom(seed=7),
        projections=(8, 16, 32, 64),
        methods=("ubp", "mb", "nr"),
        seed=seed,
        mb=MbConfig(lam=0.01, max_iters=50),
        nr=NrConfig(
            train=TrainConfig(eta=0.02, tv_grid_size=64, max_epochs=100),
            encoding=HashEncodingConfig(base_resolution=8, finest_resolution=64),
            hidden=64,
        ),
        regions=RegionSpec(
            signal_rect=Rect(28, 28, 36, 36),
            background_rect=Rect(3, 3, 14, 14),
        ),
    )


PRESETS = {"insilico": insilico_preset, "desk": desk_preset}


# ----------------------------------------------------------------------
# TOML loading


def _require(table: dict, key: str, section: str):
    if key not in table:
        raise ConfigError(f"missing required key {key!r} in [{section}]")
    return table[key]


def _phantom_from_table(t: dict) -> PhantomSpec:
    kind = _require(t, "kind", "phantom")
    if kind == "vessel_branches":
        return PhantomSpec.vessel_phantom(
            seed=int(t.get("seed", 7)),
            depth=int(t.get("depth", 4)),
            trunk_width_frac=float(t.get("trunk_width_frac", 0.035)),
        )
    if kind == "spheres":
        spheres = [
            (tuple(s["center"]), float(s["radius"]), float(s.get("amplitude", 1.0)))
            for s in t.get("spheres", [])
        ]
        if not spheres:
            raise ConfigError("phantom kind 'spheres' needs a [[phantom.spheres]] list")
        return PhantomSpec.sphere_phantom(spheres)
    if kind == "wire_polyline":
        wires = [
            (
                [tuple(p) for p in w["points"]],
                float(w["width"]),
                float(w.get("amplitude", 1.0)),
            )
            for w in t.get("wires", [])
        ]
        if not wires:
            raise ConfigError("phantom kind 'wire_polyline' needs a [[phantom.wires]] list")
        return PhantomSpec.wire_phantom(wires)
    raise ConfigError(f"unknown phantom kind {kind!r}")


def _rect(values, name: str) -> Rect:
    if len(values) != 4:
        raise ConfigError(f"{name} must be [ix0, iy0, ix1, iy1], got {values}")
    return Rect(*[int(v) for v in values])


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a TOML experiment file; ``overrides`` maps dotted keys to values."""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}")
    if overrides:
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            node = raw
            for p in parts[:-1]:
                node = node.setdefault(p, {})
            node[parts[-1]] = value
    return _config_from_tables(raw, path.parent)


def _config_from_tables(raw: dict, base_dir: Path) -> ExperimentConfig:
    try:
        g = raw.get("geometry", {})
        geometry = RingGeometry(
            radius_m=float(_require(g, "radius_m", "geometry")),
            num_elements=int(_require(g, "num_elements", "geometry")),
        )
        m = raw.get("medium", {})
        medium = Medium(
            sos_mps=float(_require(m, "sos_mps", "medium")),
            grueneisen=float(m.get("grueneisen", 1.0)),
        )
        a = raw.get("acquisition", {})
        acquisition = Acquisition(
            sample_rate_hz=float(_require(a, "sample_rate_hz", "acquisition")),
            num_samples=int(_require(a, "num_samples", "acquisition")),
            t_start_s=float(a.get("t_start_s", 0.0)),
        )
        gr = raw.get("grid", {})
        grid = ImageGrid(
            nx=int(_require(gr, "nx", "grid")),
            ny=int(_require(gr, "ny", "grid")),
            pixel_size_m=float(_require(gr, "pixel_size_m", "grid")),
            center=tuple(gr.get("center", (0.0, 0.0))),
        )
        ex = raw.get("experiment", {})
        phantom = None
        if "phantom" in raw:
            phantom = _phantom_from_table(raw["phantom"])

        mb_t = raw.get("mb", {})
        mb_cfg = MbConfig(
            lam=float(mb_t.get("lambda", 0.01)),
            max_iters=int(mb_t.get("max_iters", 50)),
            tv_epsilon=float(mb_t.get("tv_epsilon", 1e-6)),
            step_rule=mb_t.get("step_rule", "backtracking"),
            accelerate=bool(mb_t.get("accelerate", False)),
        )
        ubp_t = raw.get("ubp", {})
        ubp_cfg = UbpConfig(
            clamp_negatives=bool(ubp_t.get("clamp_negatives", True)),
            solid_angle=float(ubp_t.get("solid_angle", UbpConfig().solid_angle)),
        )
        nr_t = raw.get("nr", {})
        train_kwargs = {}
        for key in (
            "initial_lr",
            "lr_decay_every",
            "lr_decay_factor",
            "loss_stop_threshold",
            "max_epochs",
            "eta",
            "rays_per_batch",
            "seed",
            "tv_grid_size",
            "tv_epsilon",
            "num_arc_points",
        ):
            if key in nr_t:
                train_kwargs[key] = nr_t[key]
        encoding = None
        if "encoding" in nr_t:
            encoding = HashEncodingConfig(**nr_t["encoding"])
        nr_cfg = NrConfig(
            train=TrainConfig(**train_kwargs),
            encoding=encoding,
            hidden=int(nr_t.get("hidden", 128)),
            field_seed=int(nr_t.get("field_seed", 0)),
        )
        regions = None
        met = raw.get("metrics", {})
        if "signal_rect" in met or "background_rect" in met:
            regions = RegionSpec(
                signal_rect=_rect(_require(met, "signal_rect", "metrics"), "signal_rect"),
                background_rect=_rect(
                    _require(met, "background_rect", "metrics"), "background_rect"
                ),
            )

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base_dir / p

        return ExperimentConfig(
            geometry=geometry,
            medium=medium,
            acquisition=acquisition,
            grid=grid,
            output_dir=resolve(ex.get("output_dir", "runs/experiment")),
            phantom=phantom,
            input_sinogram=resolve(ex["input_sinogram"]) if "input_sinogram" in ex else None,
            raw_input=resolve(ex["raw_input"]) if "raw_input" in ex else None,
            projections=tuple(int(k) for k in ex.get("projections", (32, 64, 128, 256))),
            methods=tuple(ex.get("methods", ("ubp", "mb", "nr"))),
            seed=int(ex.get("seed", 0)),
            noise_snr_db=float(ex["noise_snr_db"]) if "noise_snr_db" in ex else None,
            ubp=ubp_cfg,
            mb=mb_cfg,
            nr=nr_cfg,
            regions=regions,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(str(e))


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    """Dataclass-style replace that funnels through validation."""
    return replace(cfg, **kwargs)
