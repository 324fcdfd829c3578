"""Superpixel (supervoxel) segmentation by seeded region growing.

Regions grow from random seed pixels through a global priority queue keyed
on the RGB distance between a candidate pixel and the growing region's seed
color; five growing passes re-center the seeds k-means style (snapped
centroid + mean color).  Connectivity is the 4-neighborhood for stills plus
two temporal neighbors for video.  Each superpixel carries a 6-D feature
(r, g, b, 0.5*x_hat, 0.5*y_hat, t_hat) used by the manifold stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .pixelcore import PixelVolume

SRG_PASSES = 5
SPATIAL_FEATURE_WEIGHT = 0.5


class SegmentationError(ValueError):
    """Invalid superpixel count or inconsistent inputs."""


@dataclass(frozen=True)
class SuperpixelStat:
    mean_color: np.ndarray        # (3,) float64
    centroid: tuple[float, float, float]  # (x, y, t) in pixel units
    feature: np.ndarray           # (6,) float64
    pixel_count: int


@dataclass
class Segmentation:
    labels: np.ndarray            # (frames, height, width) int32
    superpixels: list[SuperpixelStat]
    mean_colors: np.ndarray       # (S, 3) float64
    centroids: np.ndarray         # (S, 3) float64, columns x, y, t
    features: np.ndarray          # (S, 6) float64
    counts: np.ndarray            # (S,) int64

    @property
    def count(self) -> int:
        return self.mean_colors.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        f, h, w = self.labels.shape
        return w, h, f


# heap entries interleave (distance, key) pairs in one array so a 4-ary node's
# children share a cache line; key packs (label << 32) | pixel, so comparing
# keys reproduces the (label id, pixel index) tie-break exactly
HEAP_ENTRY = np.dtype([("d", np.float64), ("k", np.int64)])


@njit(cache=True, inline="always")
def _entry_less(heap, a, b):
    if heap[a].d != heap[b].d:
        return heap[a].d < heap[b].d
    return heap[a].k < heap[b].k


@njit(cache=True, inline="always")
def _entry_swap(heap, a, b):
    td = heap[a].d
    tk = heap[a].k
    heap[a].d = heap[b].d
    heap[a].k = heap[b].k
    heap[b].d = td
    heap[b].k = tk


@njit(cache=True)
def _heap_push(heap, size, d, key):
    cap = heap.shape[0]
    if size >= cap:
        grown = np.empty(cap * 2, dtype=HEAP_ENTRY)
        grown[:cap] = heap
        heap = grown
    heap[size].d = d
    heap[size].k = key
    i = size
    size += 1
    while i > 0:
        par = (i - 1) >> 2
        if _entry_less(heap, i, par):
            _entry_swap(heap, i, par)
            i = par
        else:
            break
    return size, heap


@njit(cache=True)
def _heap_pop(heap, size):
    d = heap[0].d
    key = heap[0].k
    size -= 1
    heap[0].d = heap[size].d
    heap[0].k = heap[size].k
    i = 0
    while True:
        child = 4 * i + 1
        if child >= size:
            break
        end = child + 4
        if end > size:
            end = size
        smallest = child
        for c in range(child + 1, end):
            if _entry_less(heap, c, smallest):
                smallest = c
        if _entry_less(heap, smallest, i):
            _entry_swap(heap, smallest, i)
            i = smallest
        else:
            break
    return d, key, size


# all per-pixel growth state lives in one 32-byte record (color, label, and
# the best queued entry) so each neighbor check touches a single cache line
PIXEL_ENTRY = np.dtype([("r", np.float32), ("g", np.float32), ("b", np.float32),
                        ("lab", np.int32), ("bd", np.float64), ("bk", np.int64)])


@njit(cache=True, inline="always")
def _seed_dist(pix, q, seed_col, lab):
    dr = pix[q].r - seed_col[lab, 0]
    dg = pix[q].g - seed_col[lab, 1]
    db = pix[q].b - seed_col[lab, 2]
    return dr * dr + dg * dg + db * db


@njit(cache=True, inline="always")
def _push_neighbor(pix, seed_col, heap, size, q, lab):
    """Push q for region lab unless an equal-or-better entry already exists."""
    d = _seed_dist(pix, q, seed_col, lab)
    key = (np.int64(lab) << 32) | np.int64(q)
    if d > pix[q].bd or (d == pix[q].bd and key >= pix[q].bk):
        return size, heap
    pix[q].bd = d
    pix[q].bk = key
    return _heap_push(heap, size, d, key)


@njit(cache=True, inline="always")
def _push_frontier(pix, seed_col, heap, size, p, lab, mask, width, wh):
    m = mask[p]
    if m & 1 and pix[p - 1].lab == -1:
        size, heap = _push_neighbor(pix, seed_col, heap, size, p - 1, lab)
    if m & 2 and pix[p + 1].lab == -1:
        size, heap = _push_neighbor(pix, seed_col, heap, size, p + 1, lab)
    if m & 4 and pix[p - width].lab == -1:
        size, heap = _push_neighbor(pix, seed_col, heap, size, p - width, lab)
    if m & 8 and pix[p + width].lab == -1:
        size, heap = _push_neighbor(pix, seed_col, heap, size, p + width, lab)
    if m & 16 and pix[p - wh].lab == -1:
        size, heap = _push_neighbor(pix, seed_col, heap, size, p - wh, lab)
    if m & 32 and pix[p + wh].lab == -1:
        size, heap = _push_neighbor(pix, seed_col, heap, size, p + wh, lab)
    return size, heap


def _neighbor_mask(width: int, height: int, frames: int) -> np.ndarray:
    """Per-pixel bitmask of available grid neighbors (6-connectivity bits)."""
    m = np.zeros((frames, height, width), dtype=np.uint8)
    m[:, :, 1:] |= 1    # left
    m[:, :, :-1] |= 2   # right
    m[:, 1:, :] |= 4    # up
    m[:, :-1, :] |= 8   # down
    if frames > 1:
        m[1:, :, :] |= 16   # previous frame
        m[:-1, :, :] |= 32  # next frame
    return m.reshape(-1)


@njit(cache=True)
def _grow_pass(pix, width, wh, seed_pix, seed_col, mask):
    """One seeded-region-growing pass; fills the pixel records' labels."""
    P = pix.shape[0]
    S = seed_pix.shape[0]
    for p in range(P):
        pix[p].lab = -1
        pix[p].bd = np.inf
        pix[p].bk = np.int64(2 ** 62)
    for r in range(S):
        pix[seed_pix[r]].lab = r

    heap = np.empty(P // 2 + 1024, dtype=HEAP_ENTRY)
    size = 0

    # seed frontiers first, then grow from the global queue
    for r in range(S):
        size, heap = _push_frontier(pix, seed_col, heap, size,
                                    seed_pix[r], r, mask, width, wh)

    while size > 0:
        d, key, size = _heap_pop(heap, size)
        p = np.int64(key & 0xFFFFFFFF)
        if pix[p].lab != -1:
            continue
        lab = np.int32(key >> 32)
        pix[p].lab = lab
        size, heap = _push_frontier(pix, seed_col, heap, size,
                                    p, lab, mask, width, wh)


@njit(cache=True)
def _region_stats(pix, width, height, frames, s):
    counts = np.zeros(s, np.int64)
    csum = np.zeros((s, 3), np.float64)
    xsum = np.zeros(s, np.float64)
    ysum = np.zeros(s, np.float64)
    tsum = np.zeros(s, np.float64)
    p = 0
    for t in range(frames):
        for y in range(height):
            for x in range(width):
                lab = pix[p].lab
                counts[lab] += 1
                csum[lab, 0] += pix[p].r
                csum[lab, 1] += pix[p].g
                csum[lab, 2] += pix[p].b
                xsum[lab] += x
                ysum[lab] += y
                tsum[lab] += t
                p += 1
    return counts, csum, xsum, ysum, tsum


@njit(cache=True)
def _snap_to_owned(pix, width, height, frames, cx, cy, ct, s):
    """Nearest owned pixel to each region centroid (ties: lowest pixel index)."""
    best_d = np.full(s, np.inf, np.float64)
    best_p = np.full(s, -1, np.int64)
    p = 0
    for t in range(frames):
        for y in range(height):
            for x in range(width):
                lab = pix[p].lab
                dx = x - cx[lab]
                dy = y - cy[lab]
                dt = t - ct[lab]
                d = dx * dx + dy * dy + dt * dt
                if d < best_d[lab]:
                    best_d[lab] = d
                    best_p[lab] = p
                p += 1
    return best_p


@njit(cache=True)
def _seed_color_residual(pix, seed_col):
    out = np.empty(pix.shape[0], np.float64)
    for p in range(pix.shape[0]):
        out[p] = _seed_dist(pix, p, seed_col, pix[p].lab)
    return out


@njit(cache=True)
def _extract_labels(pix):
    out = np.empty(pix.shape[0], np.int32)
    for p in range(pix.shape[0]):
        out[p] = pix[p].lab
    return out


def _resolve_seed_collisions(seed_pix: np.ndarray, pix: np.ndarray,
                             prev_seed_col: np.ndarray) -> np.ndarray:
    """Keep seed pixels distinct so every region survives the next pass.

    Displaced regions are reseeded at the pixels worst represented by the
    previous pass (largest color distance to their region's seed color).
    """
    taken: dict[int, int] = {}
    displaced = []
    for r, p in enumerate(seed_pix):
        if int(p) in taken:
            displaced.append(r)
        else:
            taken[int(p)] = r
    if not displaced:
        return seed_pix
    residual = _seed_color_residual(pix, prev_seed_col)
    order = np.argsort(-residual, kind="stable")
    out = seed_pix.copy()
    cursor = 0
    for r in displaced:
        while cursor < order.shape[0] and int(order[cursor]) in taken:
            cursor += 1
        if cursor >= order.shape[0]:
            raise SegmentationError("cannot find distinct seed pixels")
        out[r] = order[cursor]
        taken[int(order[cursor])] = r
    return out


def feature_scales(width: int, height: int, frames: int) -> tuple[float, float, float]:
    """Per-axis multipliers mapping pixel coordinates to feature components."""
    sx = SPATIAL_FEATURE_WEIGHT / (width - 1) if width > 1 else 0.0
    sy = SPATIAL_FEATURE_WEIGHT / (height - 1) if height > 1 else 0.0
    st = 1.0 / (frames - 1) if frames > 1 else 0.0
    return sx, sy, st


def features(segmentation: Segmentation, volume: PixelVolume) -> np.ndarray:
    """(S,6) feature matrix: mean color plus weighted normalized centroid."""
    w, h, f = segmentation.shape
    if (w, h, f) != (volume.width, volume.height, volume.frames):
        raise SegmentationError("segmentation does not match volume dimensions")
    sx, sy, st = feature_scales(w, h, f)
    cen = segmentation.centroids
    feats = np.empty((segmentation.count, 6), dtype=np.float64)
    feats[:, :3] = segmentation.mean_colors
    feats[:, 3] = cen[:, 0] * sx
    feats[:, 4] = cen[:, 1] * sy
    feats[:, 5] = cen[:, 2] * st
    return feats


def segment(volume: PixelVolume, s: int, seed: int = 0) -> Segmentation:
    """Partition the volume into exactly ``s`` connected superpixels.

    Five growing passes: the first from random seed pixels, each later pass
    from the previous pass's snapped centroids and mean colors.  Output is
    deterministic for a fixed seed.
    """
    P = volume.pixel_count
    if s < 1:
        raise SegmentationError("superpixel count must be >= 1")
    if s > P:
        raise SegmentationError(f"superpixel count {s} exceeds pixel count {P}")

    w, h, f = volume.width, volume.height, volume.frames
    colors = volume.pixels()
    rng = np.random.default_rng(seed)
    seed_pix = np.sort(rng.choice(P, size=s, replace=False)).astype(np.int64)
    seed_col = colors[seed_pix].astype(np.float64)
    pix = np.empty(P, dtype=PIXEL_ENTRY)
    pix["r"] = colors[:, 0]
    pix["g"] = colors[:, 1]
    pix["b"] = colors[:, 2]
    mask = _neighbor_mask(w, h, f)

    for pass_i in range(SRG_PASSES):
        _grow_pass(pix, w, w * h, seed_pix, seed_col, mask)
        counts, csum, xsum, ysum, tsum = _region_stats(pix, w, h, f, s)
        if pass_i == SRG_PASSES - 1:
            break
        mean_col = csum / counts[:, None]
        cx, cy, ct = xsum / counts, ysum / counts, tsum / counts
        new_seed_pix = _snap_to_owned(pix, w, h, f, cx, cy, ct, s)
        seed_pix = _resolve_seed_collisions(new_seed_pix, pix, seed_col)
        seed_col = mean_col

    labels = _extract_labels(pix)

    mean_colors = csum / counts[:, None]
    centroids = np.stack([xsum / counts, ysum / counts, tsum / counts], axis=1)
    sx, sy, st = feature_scales(w, h, f)
    feats = np.empty((s, 6), dtype=np.float64)
    feats[:, :3] = mean_colors
    feats[:, 3] = centroids[:, 0] * sx
    feats[:, 4] = centroids[:, 1] * sy
    feats[:, 5] = centroids[:, 2] * st

    stats = [SuperpixelStat(mean_color=mean_colors[i],
                            centroid=(centroids[i, 0], centroids[i, 1], centroids[i, 2]),
                            feature=feats[i],
                            pixel_count=int(counts[i]))
             for i in range(s)]
    return Segmentation(labels=labels.reshape(f, h, w), superpixels=stats,
                        mean_colors=mean_colors, centroids=centroids,
                        features=feats, counts=counts)


def boundary_overlay(segmentation: Segmentation, volume: PixelVolume) -> PixelVolume:
    """Copy of the volume with superpixel boundaries painted black (debugging)."""
    out = volume.data.copy()
    lab = segmentation.labels
    edge = np.zeros(lab.shape, dtype=bool)
    edge[:, :, 1:] |= lab[:, :, 1:] != lab[:, :, :-1]
    edge[:, 1:, :] |= lab[:, 1:, :] != lab[:, :-1, :]
    out[edge] = 0.0
    return PixelVolume.from_array(out)
