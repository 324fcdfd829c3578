"""Layer color palettes: extraction, validation, and convex-hull distance.

A palette is an ordered list of N RGB colors in [0,1].  Automatic
extraction clusters a uniform pixel sample with k-means and scores
candidate palettes by how well they cover the image colors minus a
penalty for colors falling outside the palette's convex hull, so the
chosen colors can linearly reconstruct the image.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .pixelcore import PixelVolume

HULL_PENALTY_WEIGHT = 5.0
SCORE_SAMPLE_SIZE = 10_000
KMEANS_RESTARTS = 8
KMEANS_MAX_ITERS = 50
KMEANS_TOL = 1e-6
MIN_COLOR_SEPARATION = 1e-6


class PaletteError(ValueError):
    """Malformed, empty, or out-of-range palette input."""


@dataclass(frozen=True)
class Palette:
    colors: np.ndarray  # (N, 3) float64 in [0,1]

    def __post_init__(self):
        colors = np.asarray(self.colors, dtype=np.float64)
        if colors.ndim != 2 or colors.shape[1] != 3:
            raise PaletteError(f"palette must be (N,3), got {colors.shape}")
        if colors.shape[0] < 1:
            raise PaletteError("empty palette")
        if np.any(colors < 0.0) or np.any(colors > 1.0):
            raise PaletteError("channel out of range [0,1]")
        diffs = colors[:, None, :] - colors[None, :, :]
        dist = np.sqrt((diffs ** 2).sum(axis=2))
        np.fill_diagonal(dist, np.inf)
        if dist.min() <= MIN_COLOR_SEPARATION:
            raise PaletteError("palette contains duplicate colors")
        object.__setattr__(self, "colors", colors)

    def __len__(self) -> int:
        return self.colors.shape[0]

    def __iter__(self):
        return iter(self.colors)

    def to_json(self) -> str:
        return json.dumps({"colors": self.colors.tolist()})


def _project_simplex(w: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of w onto the probability simplex."""
    n = w.shape[1]
    u = np.sort(w, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1) - 1.0
    ks = np.arange(1, n + 1)
    cond = u - css / ks > 0
    # index of the last true entry per row
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(w.shape[0]), rho] / (rho + 1)
    return np.maximum(w - theta[:, None], 0.0)


def _polish_face(b: np.ndarray, gram: np.ndarray, w0: np.ndarray,
                 rounds: int = 50) -> np.ndarray:
    """Refine a simplex-constrained least-squares solution on its active face.

    Solves the equality-constrained system exactly on the face suggested by
    w0, then repairs the face via a standard active-set exchange until the
    KKT conditions hold.  b = palette_colors @ color.
    """
    n = w0.shape[0]
    active = w0 > 1e-9
    if not active.any():
        active[int(np.argmax(w0))] = True
    w = w0
    for _ in range(rounds):
        face = np.where(active)[0]
        m = face.shape[0]
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = 2.0 * gram[np.ix_(face, face)]
        kkt[:m, m] = 1.0
        kkt[m, :m] = 1.0
        rhs = np.concatenate([2.0 * b[face], [1.0]])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        w_face, nu = sol[:m], sol[m]
        if np.any(w_face < -1e-12):
            if m == 1:
                break
            active[face[int(np.argmin(w_face))]] = False
            continue
        w = np.zeros(n)
        w[face] = np.maximum(w_face, 0.0)
        # multipliers of inactive coordinates must be nonnegative at optimum
        lam = 2.0 * (gram @ w - b) + nu
        candidates = np.where(~active & (lam < -1e-10))[0]
        if candidates.size == 0:
            return w
        active[candidates[int(np.argmin(lam[candidates]))]] = True
    return w


def _hull_distance_batch(colors: np.ndarray, palette_colors: np.ndarray,
                         tol: float = 1e-9, max_iters: int = 2000,
                         polish: bool = True) -> np.ndarray:
    """Distance of each color to the convex hull of the palette colors.

    Accelerated projected gradient on the simplex of combination weights
    localizes the active face; an exact face solve then polishes the result.
    Degenerate (collinear/coplanar) palettes go through the same formulation.
    """
    colors = np.atleast_2d(np.asarray(colors, dtype=np.float64))
    c = np.asarray(palette_colors, dtype=np.float64)
    n = c.shape[0]
    if n == 1:
        return np.linalg.norm(colors - c[0], axis=1)
    if n == 2:
        # exact segment projection
        d = c[1] - c[0]
        denom = float(d @ d)
        t = np.clip((colors - c[0]) @ d / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(colors))
        proj = c[0] + t[:, None] * d
        return np.linalg.norm(colors - proj, axis=1)

    gram = c @ c.T
    lip = 2.0 * max(float(np.linalg.eigvalsh(gram).max()), 1e-12)
    step = 1.0 / lip
    target = colors @ c.T
    w = np.full((colors.shape[0], n), 1.0 / n)
    z = w.copy()
    momentum = 1.0
    for _ in range(max_iters):
        grad = 2.0 * (z @ gram - target)
        w_new = _project_simplex(z - step * grad)
        momentum_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum * momentum))
        z = w_new + ((momentum - 1.0) / momentum_new) * (w_new - w)
        converged = np.abs(w_new - w).max() <= tol
        w = w_new
        momentum = momentum_new
        if converged:
            break
    if polish:
        w = np.stack([_polish_face(target[i], gram, w[i])
                      for i in range(w.shape[0])])
    return np.linalg.norm(colors - w @ c, axis=1)


def hull_distance(color, palette: Palette) -> float:
    """Euclidean RGB distance from a color to the convex hull of the palette."""
    return float(_hull_distance_batch(np.asarray(color, dtype=np.float64), palette.colors)[0])


def _kmeans_once(samples: np.ndarray, k: int, rng: np.random.Generator):
    """One seeded k-means run; returns (centroids, populations)."""
    n = samples.shape[0]
    centroids = samples[rng.choice(n, size=k, replace=False)].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITERS):
        d2 = ((samples[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        new_centroids = centroids.copy()
        counts = np.bincount(assign, minlength=k)
        dead = np.where(counts == 0)[0]
        if dead.size:
            # reseed dead clusters at successive worst-represented samples
            own_dist = d2[np.arange(n), assign]
            worst_order = np.argsort(-own_dist, kind="stable")
            for slot, j in enumerate(dead):
                new_centroids[j] = samples[worst_order[slot]]
        for j in range(k):
            if counts[j] > 0:
                new_centroids[j] = samples[assign == j].mean(axis=0)
        motion = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        if motion < KMEANS_TOL:
            break
    d2 = ((samples[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    return centroids, np.bincount(assign, minlength=k)


def extract_palette(volume: PixelVolume, n: int, seed: int = 0) -> Palette:
    """Pick n layer colors from the volume; deterministic for a fixed seed.

    Candidates come from k-means restarts over a uniform pixel sample; the
    winning candidate maximizes
    ``-(mean distance to nearest color) - 5.0 * (mean hull distance)``.
    Colors are ordered by descending cluster population.
    """
    if n < 1:
        raise PaletteError("palette size must be >= 1")
    rng = np.random.default_rng(seed)
    pix = volume.pixels().astype(np.float64)
    if pix.shape[0] > SCORE_SAMPLE_SIZE:
        idx = rng.choice(pix.shape[0], size=SCORE_SAMPLE_SIZE, replace=False)
        samples = pix[np.sort(idx)]
    else:
        samples = pix.copy()

    distinct = np.unique(samples, axis=0)
    if n > distinct.shape[0]:
        raise PaletteError(
            f"requested {n} colors but sample has only {distinct.shape[0]} distinct colors")

    best_score = -np.inf
    best: tuple[np.ndarray, np.ndarray] | None = None
    for _ in range(KMEANS_RESTARTS):
        centroids, pops = _kmeans_once(samples, n, rng)
        # degenerate candidates (coincident centroids) are not valid palettes
        if n > 1:
            diffs = centroids[:, None, :] - centroids[None, :, :]
            sep = np.sqrt((diffs ** 2).sum(axis=2))
            np.fill_diagonal(sep, np.inf)
            if sep.min() <= MIN_COLOR_SEPARATION:
                continue
        d2 = ((samples[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        coverage = -float(np.sqrt(d2.min(axis=1)).mean())
        # scoring only ranks candidates; the cheap non-polished distance suffices
        hull_pen = float(_hull_distance_batch(samples, centroids, max_iters=200,
                                              polish=False).mean())
        score = coverage - HULL_PENALTY_WEIGHT * hull_pen
        if score > best_score:  # ties keep the earlier restart
            best_score = score
            best = (centroids, pops)

    if best is None:
        raise PaletteError("k-means failed to produce distinct palette colors")
    centroids, pops = best
    order = np.argsort(-pops, kind="stable")
    return Palette(colors=np.clip(centroids[order], 0.0, 1.0))


def parse_palette(path: str | os.PathLike) -> Palette:
    """Read a palette from JSON: {"colors": [[r,g,b], ...]} with floats in [0,1]."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise PaletteError(f"cannot parse palette file {path}: {exc}") from exc
    if not isinstance(doc, dict) or "colors" not in doc:
        raise PaletteError('palette JSON must be {"colors": [[r,g,b], ...]}')
    colors = doc["colors"]
    if not isinstance(colors, list) or len(colors) == 0:
        raise PaletteError("empty palette")
    arr = np.asarray(colors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise PaletteError("each palette entry must be an [r,g,b] triplet")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise PaletteError("channel out of range [0,1]")
    return Palette(colors=arr)
