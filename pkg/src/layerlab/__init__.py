"""Additive color-layer decomposition of images and video.

Decomposes an input into N single-color layers whose weighted sum
reconstructs it, enabling interactive recoloring, per-layer filtering, and
constraint-guided re-decomposition.
"""

from .layerops import (LayerSet, compose, compose_frame, filter_layer, load_layers,
                       project, save_layers)
from .manifold import NeighborList, SparseRowMatrix, build_q, build_w, knn, lle_weights
from .palette import Palette, extract_palette, hull_distance, parse_palette
from .pipeline import DecomposeOutput, PipelineConfig, decompose
from .pixelcore import PixelCoord, PixelVolume, load_volume, save_volume
from .solver import (ConstraintSet, SolverParams, SuperpixelLayers,
                     assemble_normal_system, auto_constraints, parse_constraints,
                     solve_layers)
from .superpixel import Segmentation, SuperpixelStat, features, segment

__version__ = "0.1.0"

__all__ = [
    "LayerSet", "compose", "compose_frame", "filter_layer", "load_layers",
    "project", "save_layers",
    "NeighborList", "SparseRowMatrix", "build_q", "build_w", "knn", "lle_weights",
    "Palette", "extract_palette", "hull_distance", "parse_palette",
    "DecomposeOutput", "PipelineConfig", "decompose",
    "PixelCoord", "PixelVolume", "load_volume", "save_volume",
    "ConstraintSet", "SolverParams", "SuperpixelLayers", "assemble_normal_system",
    "auto_constraints", "parse_constraints", "solve_layers",
    "Segmentation", "SuperpixelStat", "features", "segment",
    "__version__",
]
