"""End-to-end decomposition: palette, superpixels, manifold, solve, project.

Shared by the CLI and the HTTP service.  The report mirrors the pipeline
stages with per-stage timings plus reconstruction quality and suppression
statistics, and is JSON-serializable as-is.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import layerops, manifold, palette as palette_mod, solver, superpixel
from .layerops import LayerSet
from .palette import Palette
from .pixelcore import PixelVolume

DEFAULT_LAYERS = 5
DEFAULT_SUPERPIXELS_STILL = 2000
DEFAULT_SUPERPIXELS_VIDEO = 4000


@dataclass
class PipelineConfig:
    num_layers: int = DEFAULT_LAYERS
    superpixels: int | None = None  # None: 2000 for stills, 4000 for video
    seed: int = 0
    k_s: int = manifold.DEFAULT_KS
    k_p: int = manifold.DEFAULT_KP
    tau: float = solver.DEFAULT_TAU
    auto_constraints: bool = True
    params: solver.SolverParams = field(default_factory=solver.SolverParams)

    def resolved_superpixels(self, volume: PixelVolume) -> int:
        if self.superpixels is not None:
            return self.superpixels
        return (DEFAULT_SUPERPIXELS_STILL if volume.frames == 1
                else DEFAULT_SUPERPIXELS_VIDEO)


@dataclass
class DecomposeOutput:
    layers: LayerSet
    report: dict
    segmentation: superpixel.Segmentation
    solve_result: solver.SolveResult


def rmse(a: PixelVolume, b: PixelVolume) -> float:
    diff = a.pixels().astype(np.float64) - b.pixels().astype(np.float64)
    return float(np.sqrt((diff ** 2).mean()))


def decompose(volume: PixelVolume, config: PipelineConfig | None = None,
              palette: Palette | None = None,
              constraint_strokes: list | None = None) -> DecomposeOutput:
    """Decompose a volume into additive colored layers.

    Deterministic for a fixed (volume, config, palette, strokes): byte-stable
    layer weights across runs.
    """
    config = config or PipelineConfig()
    if config.num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    s = config.resolved_superpixels(volume)
    timings: dict[str, float] = {}
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    if palette is None:
        palette = palette_mod.extract_palette(volume, config.num_layers, seed=config.seed)
    elif len(palette) != config.num_layers:
        config = replace(config, num_layers=len(palette))
    timings["palette"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    seg = superpixel.segment(volume, s, seed=config.seed)
    timings["superpixels"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    w = manifold.build_w(seg, k_s=config.k_s)
    timings["manifold"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    constraints = solver.ConstraintSet()
    if config.auto_constraints:
        constraints.extend(solver.auto_constraints(seg, palette, tau=config.tau))
    if constraint_strokes:
        constraints.extend(solver.constraints_from_strokes(
            constraint_strokes, seg, num_layers=config.num_layers))
    result = solver.solve_layers_detailed(volume, seg, w, palette, constraints,
                                          config.params)
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    q = manifold.build_q(volume, seg, k_p=min(config.k_p, seg.count))
    weights = layerops.project(q, result.layers)
    layers = LayerSet(width=volume.width, height=volume.height,
                      frames=volume.frames, palette=palette, weights=weights)
    timings["project"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    recon = layerops.compose(layers, layers.palette)
    recon_rmse = rmse(recon, volume)
    timings["evaluate"] = time.perf_counter() - t0

    total = time.perf_counter() - t_start
    sn = seg.count * config.num_layers
    report = {
        "stages_ms": {k: v * 1000.0 for k, v in timings.items()},
        "total_ms": total * 1000.0,
        "rmse": recon_rmse,
        "negative_fraction_per_iteration": [it.negatives / sn for it in result.iterations],
        "negatives_below_threshold_per_iteration": [it.below_threshold
                                                    for it in result.iterations],
        "cg_converged": result.converged,
        "cg_residuals": [it.residual for it in result.iterations],
        "superpixels": seg.count,
        "num_layers": config.num_layers,
        "seed": config.seed,
        "width": volume.width,
        "height": volume.height,
        "frames": volume.frames,
    }
    return DecomposeOutput(layers=layers, report=report, segmentation=seg,
                           solve_result=result)
