"""Quadratic layer energy and its iterative sparse solve.

The unknown L stacks the per-superpixel contributions of each layer
(layer-major: flat index = layer * S + superpixel).  The energy combines
manifold consistency, image reconstruction, per-superpixel unity, and
explicit constraints; it is minimized via conjugate gradient on the normal
system.  Negative entries are driven to zero by repeated solves that add
soft zero-value constraints ("iterative negative suppression").
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .manifold import SparseRowMatrix
from .palette import Palette
from .superpixel import Segmentation

DEFAULT_TAU = 0.05
SOURCES = ("user", "auto", "suppression")


class SolverError(ValueError):
    """Inconsistent solver inputs or malformed constraint files."""


@dataclass
class SolverParams:
    lambda_m: float = 1.0
    lambda_r: float = 0.5
    lambda_u: float = 0.1
    lambda_e: float = 0.1
    lambda_n: float = 1.0
    suppression_iters: int = 4
    cg_tolerance: float = 1e-8
    cg_max_iters: int | None = None  # defaults to 10*S*N at solve time

    def __post_init__(self):
        for name in ("lambda_m", "lambda_r", "lambda_u", "lambda_e", "lambda_n"):
            if getattr(self, name) < 0:
                raise SolverError(f"{name} must be >= 0")
        if self.suppression_iters < 1:
            raise SolverError("suppression_iters must be >= 1")


@dataclass(frozen=True)
class Constraint:
    superpixel: int
    layer: int
    value: float
    source: str


class ConstraintSet:
    """Target values for (superpixel, layer) pairs, deduplicated per source."""

    def __init__(self, entries=()):
        self._by_key: dict[tuple[str, int, int], Constraint] = {}
        for e in entries:
            self.add(e.superpixel, e.layer, e.value, e.source)

    def add(self, superpixel: int, layer: int, value: float, source: str) -> None:
        if source not in SOURCES:
            raise SolverError(f"unknown constraint source {source!r}")
        if not 0.0 <= value <= 1.0:
            raise SolverError(f"constraint value {value} outside [0,1]")
        key = (source, int(superpixel), int(layer))
        self._by_key[key] = Constraint(int(superpixel), int(layer), float(value), source)

    def extend(self, other: "ConstraintSet") -> None:
        for e in other:
            self.add(e.superpixel, e.layer, e.value, e.source)

    @property
    def entries(self) -> list[Constraint]:
        return list(self._by_key.values())

    def __iter__(self):
        return iter(self._by_key.values())

    def __len__(self) -> int:
        return len(self._by_key)


def auto_constraints(segmentation: Segmentation, palette: Palette,
                     tau: float = DEFAULT_TAU) -> ConstraintSet:
    """Pin superpixels whose mean color is within tau of exactly one palette
    color to that layer (value 1) and away from all others (value 0)."""
    if tau <= 0:
        raise SolverError("tau must be > 0")
    colors = palette.colors
    diff = segmentation.mean_colors[:, None, :] - colors[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    close = dist < tau
    out = ConstraintSet()
    n = colors.shape[0]
    for i in np.where(close.sum(axis=1) == 1)[0]:
        target_layer = int(np.argmax(close[i]))
        for j in range(n):
            out.add(int(i), j, 1.0 if j == target_layer else 0.0, "auto")
    return out


def parse_constraints(path: str | os.PathLike, segmentation: Segmentation,
                      num_layers: int | None = None) -> ConstraintSet:
    """Read pixel-space scribbles and map them to the superpixels containing
    them; duplicate (superpixel, layer) pairs collapse to the last value."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SolverError(f"cannot parse constraints file {path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("strokes"), list):
        raise SolverError('constraints JSON must be {"strokes": [...]}')
    return constraints_from_strokes(doc["strokes"], segmentation, num_layers)


def constraints_from_strokes(strokes, segmentation: Segmentation,
                             num_layers: int | None = None) -> ConstraintSet:
    w, h, f = segmentation.shape
    out = ConstraintSet()
    for i, stroke in enumerate(strokes):
        try:
            x, y = int(stroke["x"]), int(stroke["y"])
            t = int(stroke.get("t", 0))
            layer = int(stroke["layer"])
            value = float(stroke["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SolverError(f"malformed stroke #{i}: {stroke!r}") from exc
        if not (0 <= x < w and 0 <= y < h and 0 <= t < f):
            raise SolverError(f"stroke #{i} at ({x},{y},{t}) out of bounds")
        if layer < 0 or (num_layers is not None and layer >= num_layers):
            raise SolverError(f"stroke #{i} layer {layer} out of range")
        if not 0.0 <= value <= 1.0:
            raise SolverError(f"stroke #{i} value {value} outside [0,1]")
        out.add(int(segmentation.labels[t, y, x]), layer, value, "user")
    return out


@dataclass
class SuperpixelLayers:
    """Per-superpixel layer contributions, shape (S, N)."""

    values: np.ndarray

    @property
    def num_superpixels(self) -> int:
        return self.values.shape[0]

    @property
    def num_layers(self) -> int:
        return self.values.shape[1]

    def to_vector(self) -> np.ndarray:
        return self.values.ravel(order="F")

    @classmethod
    def from_vector(cls, vec: np.ndarray, s: int, n: int) -> "SuperpixelLayers":
        return cls(values=np.asarray(vec, dtype=np.float64).reshape(s, n, order="F").copy())


def _effective_entries(constraints: ConstraintSet, s: int, n: int,
                       params: SolverParams):
    """Flatten constraints to (index, weight, target) with user entries
    shadowing auto entries on the same (superpixel, layer) pair."""
    chosen: dict[tuple[int, int], Constraint] = {}
    suppression: list[Constraint] = []
    for e in constraints:
        if not 0 <= e.superpixel < s:
            raise SolverError(f"constraint superpixel {e.superpixel} out of range")
        if not 0 <= e.layer < n:
            raise SolverError(f"constraint layer {e.layer} out of range")
        if e.source == "suppression":
            suppression.append(e)
        elif e.source == "user":
            chosen[(e.superpixel, e.layer)] = e
        else:  # auto never displaces user
            chosen.setdefault((e.superpixel, e.layer), e)
    idx, wgt, tgt = [], [], []
    for e in chosen.values():
        idx.append(e.layer * s + e.superpixel)
        wgt.append(params.lambda_e)
        tgt.append(e.value)
    for e in suppression:
        idx.append(e.layer * s + e.superpixel)
        wgt.append(params.lambda_n)
        tgt.append(e.value)
    return (np.asarray(idx, dtype=np.int64),
            np.asarray(wgt, dtype=np.float64),
            np.asarray(tgt, dtype=np.float64))


def _constraint_diag(constraints, s, n, params):
    idx, wgt, tgt = _effective_entries(constraints, s, n, params)
    diag = np.zeros(s * n)
    rhs = np.zeros(s * n)
    np.add.at(diag, idx, wgt)
    np.add.at(rhs, idx, wgt * tgt)
    return diag, rhs


def assemble_normal_system(w: SparseRowMatrix, palette: Palette,
                           superpixel_colors: np.ndarray,
                           constraints: ConstraintSet,
                           params: SolverParams) -> tuple[sp.csr_matrix, np.ndarray]:
    """Explicit normal system (A, b) whose solution minimizes the energy."""
    s = w.rows
    n = len(palette)
    superpixel_colors = np.asarray(superpixel_colors, dtype=np.float64)
    if w.cols != s or superpixel_colors.shape != (s, 3):
        raise SolverError("manifold matrix / superpixel colors dimension mismatch")

    imw = sp.identity(s, format="csr") - w.to_csr()
    mblock = (imw.T @ imw).tocsr()
    colors = palette.colors
    gram = colors @ colors.T

    a = params.lambda_m * sp.kron(sp.identity(n), mblock, format="csr")
    a = a + params.lambda_r * sp.kron(gram, sp.identity(s), format="csr")
    a = a + params.lambda_u * sp.kron(np.ones((n, n)), sp.identity(s), format="csr")
    diag, rhs_e = _constraint_diag(constraints, s, n, params)
    a = a + sp.diags(diag)

    b = params.lambda_r * (superpixel_colors @ colors.T).ravel(order="F")
    b = b + params.lambda_u * np.ones(s * n)
    b = b + rhs_e
    return a.tocsr(), b


class _NormalOperator(spla.LinearOperator):
    """Matrix-free application of the normal system (same math as assemble)."""

    def __init__(self, imw: sp.csr_matrix, gram: np.ndarray, diag_e: np.ndarray,
                 params: SolverParams, s: int, n: int):
        self.imw = imw
        self.imw_t = imw.T.tocsr()
        self.block = params.lambda_r * gram + params.lambda_u * np.ones_like(gram)
        self.diag_e = diag_e
        self.lambda_m = params.lambda_m
        self.s = s
        self.n = n
        super().__init__(dtype=np.float64, shape=(s * n, s * n))

    def _matvec(self, x):
        x = np.asarray(x, dtype=np.float64).ravel()
        xm = x.reshape(self.s, self.n, order="F")
        out = self.lambda_m * (self.imw_t @ (self.imw @ xm))
        out += xm @ self.block
        out = out.ravel(order="F") + self.diag_e * x
        return out

    def diagonal(self) -> np.ndarray:
        colsq = np.asarray(self.imw.multiply(self.imw).sum(axis=0)).ravel()
        d = self.lambda_m * np.tile(colsq, self.n)
        d += np.repeat(np.diag(self.block), self.s)
        return d + self.diag_e


@dataclass
class IterationStats:
    negatives: int
    below_threshold: int      # entries < -0.05
    residual: float
    converged: bool
    cg_info: int


@dataclass
class SolveResult:
    layers: SuperpixelLayers
    iterations: list[IterationStats] = field(default_factory=list)
    constraints: ConstraintSet | None = None  # includes suppression entries
    # (superpixel, layer) pairs newly suppressed after each solve
    suppression_history: list[list[tuple[int, int]]] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return all(it.converged for it in self.iterations)


def solve_layers_detailed(volume, segmentation: Segmentation, w: SparseRowMatrix,
                          palette: Palette, constraints: ConstraintSet,
                          params: SolverParams) -> SolveResult:
    """Run the full suppression schedule and report per-iteration statistics."""
    s = w.rows
    n = len(palette)
    if segmentation.count != s:
        raise SolverError("segmentation / manifold size mismatch")
    if volume is not None and segmentation.labels.size != volume.pixel_count:
        raise SolverError("segmentation does not match volume")

    work = ConstraintSet(constraints.entries)
    imw = (sp.identity(s, format="csr") - w.to_csr()).tocsr()
    gram = palette.colors @ palette.colors.T
    sn = s * n
    maxiter = params.cg_max_iters if params.cg_max_iters is not None else 10 * sn

    x = np.full(sn, 1.0 / n)
    suppressed = np.zeros(sn, dtype=bool)
    stats: list[IterationStats] = []
    history: list[list[tuple[int, int]]] = []

    b_base = params.lambda_r * (segmentation.mean_colors @ palette.colors.T).ravel(order="F")
    b_base = b_base + params.lambda_u * np.ones(sn)

    for _ in range(params.suppression_iters):
        diag_e, rhs_e = _constraint_diag(work, s, n, params)
        op = _NormalOperator(imw, gram, diag_e, params, s, n)
        b = b_base + rhs_e
        diag = op.diagonal()
        diag[diag <= 0] = 1.0
        precond = spla.LinearOperator((sn, sn), matvec=lambda v, d=diag: v / d)
        x, info = spla.cg(op, b, x0=x, rtol=params.cg_tolerance, atol=0.0,
                          maxiter=maxiter, M=precond)
        bnorm = float(np.linalg.norm(b))
        residual = float(np.linalg.norm(op @ x - b)) / bnorm if bnorm > 0 else 0.0
        neg = x < 0.0
        stats.append(IterationStats(
            negatives=int(neg.sum()),
            below_threshold=int((x < -0.05).sum()),
            residual=residual,
            converged=(info == 0),
            cg_info=int(info)))
        new_idx = np.where(neg & ~suppressed)[0]
        history.append([(int(flat % s), int(flat // s)) for flat in new_idx])
        for sp_i, layer_j in history[-1]:
            work.add(sp_i, layer_j, 0.0, "suppression")
        suppressed |= neg

    return SolveResult(layers=SuperpixelLayers.from_vector(x, s, n),
                       iterations=stats, constraints=work,
                       suppression_history=history)


def solve_layers(volume, segmentation: Segmentation, w: SparseRowMatrix,
                 palette: Palette, constraints: ConstraintSet,
                 params: SolverParams) -> SuperpixelLayers:
    """Minimize the layer energy with iterative negative suppression."""
    return solve_layers_detailed(volume, segmentation, w, palette,
                                 constraints, params).layers


def energy(layers: SuperpixelLayers, w: SparseRowMatrix, palette: Palette,
           superpixel_colors: np.ndarray, constraints: ConstraintSet,
           params: SolverParams, include_suppression: bool = False) -> float:
    """Evaluate the four-term energy at the given layer values."""
    x = layers.values
    s, n = x.shape
    imw = sp.identity(s, format="csr") - w.to_csr()
    m_term = float(((imw @ x) ** 2).sum())
    r_term = float(((x @ palette.colors - superpixel_colors) ** 2).sum())
    u_term = float(((x.sum(axis=1) - 1.0) ** 2).sum())
    total = (params.lambda_m * m_term + params.lambda_r * r_term
             + params.lambda_u * u_term)
    chosen: dict[tuple[int, int], Constraint] = {}
    for e in constraints:
        if e.source == "user":
            chosen[(e.superpixel, e.layer)] = e
        elif e.source == "auto":
            chosen.setdefault((e.superpixel, e.layer), e)
        elif include_suppression:
            total += params.lambda_n * float(x[e.superpixel, e.layer] - e.value) ** 2
    for e in chosen.values():
        total += params.lambda_e * float(x[e.superpixel, e.layer] - e.value) ** 2
    return total
