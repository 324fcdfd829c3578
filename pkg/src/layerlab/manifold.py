"""Locally linear embedding machinery over superpixels and pixels.

Each superpixel's color is expressed as an affine (sum-to-one) combination
of its nearest superpixels' colors, giving the S x S manifold matrix W;
each pixel's color likewise over its nearest superpixels, giving the
P x S projection matrix Q.  Neighbors are found in 6-D feature space;
reconstruction weights are solved in 3-D color space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numba import njit, prange
from scipy.spatial import cKDTree

from .pixelcore import PixelVolume
from .superpixel import Segmentation, feature_scales

DEFAULT_KS = 30
DEFAULT_KP = 10
GRAM_EPS = 1e-3          # scaled by trace(G)
GRAM_EPS_DEGENERATE = 1e-6  # absolute, when trace(G) == 0
_QUERY_CHUNK = 262_144


class ManifoldError(ValueError):
    """Neighbor count out of range or dimension mismatch."""


@dataclass
class NeighborList:
    indices: np.ndarray    # (m, k) int64
    distances: np.ndarray  # (m, k) float64, non-decreasing per row


@dataclass
class SparseRowMatrix:
    """CSR-style row matrix; rows of W and Q sum to one."""

    rows: int
    cols: int
    indptr: np.ndarray   # (rows+1,)
    indices: np.ndarray  # strictly increasing within each row
    data: np.ndarray     # float64

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def row_sums(self) -> np.ndarray:
        out = np.zeros(self.rows, dtype=np.float64)
        np.add.at(out, np.repeat(np.arange(self.rows), np.diff(self.indptr)), self.data)
        return out

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr),
                             shape=(self.rows, self.cols))

    @classmethod
    def from_rows(cls, rows: int, cols: int,
                  row_entries: list[list[tuple[int, float]]]) -> "SparseRowMatrix":
        indptr = np.zeros(rows + 1, dtype=np.int64)
        idx: list[int] = []
        dat: list[float] = []
        for i, entries in enumerate(row_entries):
            entries = sorted(entries)
            idx.extend(e[0] for e in entries)
            dat.extend(e[1] for e in entries)
            indptr[i + 1] = len(idx)
        return cls(rows=rows, cols=cols, indptr=indptr,
                   indices=np.asarray(idx, dtype=np.int32),
                   data=np.asarray(dat, dtype=np.float64))


def knn(queries, corpus, k: int, exclude_self: bool = False) -> NeighborList:
    """Exact Euclidean k-nearest neighbors; ties broken by lower corpus index.

    With ``exclude_self`` every zero-distance corpus entry (the query itself
    when it belongs to the corpus) is excluded from the candidates.
    """
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    c = np.atleast_2d(np.asarray(corpus, dtype=np.float64))
    if q.shape[1] != c.shape[1]:
        raise ManifoldError("query/corpus dimension mismatch")
    m, n = q.shape[0], c.shape[0]
    if k < 1:
        raise ManifoldError("k must be >= 1")
    if k > n:
        raise ManifoldError(f"k={k} exceeds corpus size {n}")

    out_idx = np.empty((m, k), dtype=np.int64)
    out_dist = np.empty((m, k), dtype=np.float64)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, m, chunk):
        end = min(m, start + chunk)
        diff = q[start:end, None, :] - c[None, :, :]
        d2 = np.einsum("ijd,ijd->ij", diff, diff)
        if exclude_self:
            zero = d2 == 0.0
            if np.any(zero.sum(axis=1) > n - k):
                raise ManifoldError("k out of range after self-exclusion")
            d2[zero] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out_idx[start:end] = order
        out_dist[start:end] = np.sqrt(np.take_along_axis(d2, order, axis=1))
    return NeighborList(indices=out_idx, distances=out_dist)


def lle_weights(target, neighbors) -> np.ndarray:
    """Affine reconstruction weights of target from its neighbors.

    Minimizes ||target - sum w_j n_j||^2 subject to sum w_j = 1 via the
    regularized local Gram system G w = 1 followed by normalization.
    """
    nb = np.atleast_2d(np.asarray(neighbors, dtype=np.float64))
    t = np.asarray(target, dtype=np.float64).ravel()
    if nb.shape[0] < 1:
        raise ManifoldError("at least one neighbor required")
    if nb.shape[1] != t.shape[0]:
        raise ManifoldError("target/neighbor dimension mismatch")
    diffs = t[None, :] - nb
    G = diffs @ diffs.T
    tr = float(np.trace(G))
    k = nb.shape[0]
    eps = GRAM_EPS * tr if tr > 0.0 else GRAM_EPS_DEGENERATE
    w = np.linalg.solve(G + eps * np.eye(k), np.ones(k))
    return w / w.sum()


@njit(cache=True, parallel=True)
def _lle_rows(targets, nb_colors, out):
    """Batched Gram solves: row i reconstructs targets[i] from nb_colors[i]."""
    n, k = out.shape
    d = targets.shape[1]
    nblocks = 128
    bs = (n + nblocks - 1) // nblocks
    for b in prange(nblocks):
        start = b * bs
        end = min(n, start + bs)
        if start >= end:
            continue
        diff = np.empty((k, d))
        G = np.empty((k, k))
        y = np.empty(k)
        w = np.empty(k)
        for i in range(start, end):
            for j in range(k):
                for c in range(d):
                    diff[j, c] = targets[i, c] - nb_colors[i, j, c]
            tr = 0.0
            for j in range(k):
                for l in range(j, k):
                    acc = 0.0
                    for c in range(d):
                        acc += diff[j, c] * diff[l, c]
                    G[j, l] = acc
                    G[l, j] = acc
                tr += G[j, j]
            eps = GRAM_EPS * tr if tr > 0.0 else GRAM_EPS_DEGENERATE
            for j in range(k):
                G[j, j] += eps
            # in-place lower Cholesky
            for j in range(k):
                for l in range(j):
                    acc = G[j, l]
                    for mm in range(l):
                        acc -= G[j, mm] * G[l, mm]
                    G[j, l] = acc / G[l, l]
                acc = G[j, j]
                for mm in range(j):
                    acc -= G[j, mm] * G[j, mm]
                G[j, j] = np.sqrt(acc) if acc > 0.0 else 1e-150
            for j in range(k):
                acc = 1.0
                for mm in range(j):
                    acc -= G[j, mm] * y[mm]
                y[j] = acc / G[j, j]
            for j in range(k - 1, -1, -1):
                acc = y[j]
                for mm in range(j + 1, k):
                    acc -= G[mm, j] * w[mm]
                w[j] = acc / G[j, j]
            ssum = 0.0
            for j in range(k):
                ssum += w[j]
            if ssum != 0.0:
                inv = 1.0 / ssum
                for j in range(k):
                    out[i, j] = w[j] * inv
            else:
                for j in range(k):
                    out[i, j] = 1.0 / k


@njit(cache=True, parallel=True)
def _pixel_features_block(colors32, start, end, width, wh, sx, sy, st, out):
    """Fill out[i] with the 6-D feature of flat pixel start+i."""
    n = end - start
    for i in prange(n):
        p = start + i
        t = p // wh
        rem = p - t * wh
        y = rem // width
        x = rem - y * width
        out[i, 0] = colors32[p, 0]
        out[i, 1] = colors32[p, 1]
        out[i, 2] = colors32[p, 2]
        out[i, 3] = x * sx
        out[i, 4] = y * sy
        out[i, 5] = t * st


@njit(cache=True, parallel=True)
def _lle_rows_gather(colors32, start, nb_idx, corpus_colors, out):
    """Gram solves with in-kernel gathering: row i reconstructs pixel start+i
    from corpus_colors[nb_idx[i]].  Same math as _lle_rows."""
    n, k = out.shape
    nblocks = 128
    bs = (n + nblocks - 1) // nblocks
    for b in prange(nblocks):
        lo = b * bs
        hi = min(n, lo + bs)
        if lo >= hi:
            continue
        diff = np.empty((k, 3))
        G = np.empty((k, k))
        y = np.empty(k)
        w = np.empty(k)
        for i in range(lo, hi):
            p = start + i
            for j in range(k):
                col = nb_idx[i, j]
                diff[j, 0] = colors32[p, 0] - corpus_colors[col, 0]
                diff[j, 1] = colors32[p, 1] - corpus_colors[col, 1]
                diff[j, 2] = colors32[p, 2] - corpus_colors[col, 2]
            tr = 0.0
            for j in range(k):
                for l in range(j, k):
                    acc = 0.0
                    for c in range(3):
                        acc += diff[j, c] * diff[l, c]
                    G[j, l] = acc
                    G[l, j] = acc
                tr += G[j, j]
            eps = GRAM_EPS * tr if tr > 0.0 else GRAM_EPS_DEGENERATE
            for j in range(k):
                G[j, j] += eps
            for j in range(k):
                for l in range(j):
                    acc = G[j, l]
                    for mm in range(l):
                        acc -= G[j, mm] * G[l, mm]
                    G[j, l] = acc / G[l, l]
                acc = G[j, j]
                for mm in range(j):
                    acc -= G[j, mm] * G[j, mm]
                G[j, j] = np.sqrt(acc) if acc > 0.0 else 1e-150
            for j in range(k):
                acc = 1.0
                for mm in range(j):
                    acc -= G[j, mm] * y[mm]
                y[j] = acc / G[j, j]
            for j in range(k - 1, -1, -1):
                acc = y[j]
                for mm in range(j + 1, k):
                    acc -= G[mm, j] * w[mm]
                w[j] = acc / G[j, j]
            ssum = 0.0
            for j in range(k):
                ssum += w[j]
            if ssum != 0.0:
                inv = 1.0 / ssum
                for j in range(k):
                    out[i, j] = w[j] * inv
            else:
                for j in range(k):
                    out[i, j] = 1.0 / k


def build_w(segmentation: Segmentation, k_s: int = DEFAULT_KS) -> SparseRowMatrix:
    """S x S manifold matrix: LLE weights of each superpixel's mean color
    over its k_s feature-space neighbors' mean colors."""
    s = segmentation.count
    if k_s < 1:
        raise ManifoldError("k_s must be >= 1")
    if s <= k_s:
        warnings.warn(f"k_s={k_s} >= superpixel count {s}; reducing to {s - 1}")
        k_s = s - 1
    if k_s < 1:
        raise ManifoldError("need at least 2 superpixels to build the manifold")

    nl = knn(segmentation.features, segmentation.features, k_s, exclude_self=True)
    idx = np.sort(nl.indices, axis=1)
    weights = np.empty((s, k_s), dtype=np.float64)
    _lle_rows(segmentation.mean_colors, segmentation.mean_colors[idx], weights)

    indptr = (np.arange(s + 1, dtype=np.int64) * k_s)
    return SparseRowMatrix(rows=s, cols=s, indptr=indptr,
                           indices=idx.astype(np.int32).ravel(),
                           data=weights.ravel())


def build_q(volume: PixelVolume, segmentation: Segmentation,
            k_p: int = DEFAULT_KP) -> SparseRowMatrix:
    """P x S projection matrix: LLE weights of each pixel's color over the
    mean colors of its k_p nearest superpixels (by 6-D feature distance)."""
    s = segmentation.count
    if k_p < 1:
        raise ManifoldError("k_p must be >= 1")
    if k_p > s:
        raise ManifoldError(f"k_p={k_p} exceeds superpixel count {s}")

    P = volume.pixel_count
    colors32 = np.ascontiguousarray(volume.pixels())
    sx, sy, st = feature_scales(volume.width, volume.height, volume.frames)
    wh = volume.width * volume.height
    sp_colors = segmentation.mean_colors
    tree = cKDTree(segmentation.features)
    k_query = min(k_p + 1, s)

    all_idx = np.empty((P, k_p), dtype=np.int32)
    all_w = np.empty((P, k_p), dtype=np.float64)
    feats = np.empty((min(_QUERY_CHUNK, P), 6), dtype=np.float64)

    for start in range(0, P, _QUERY_CHUNK):
        end = min(P, start + _QUERY_CHUNK)
        chunk = feats[:end - start]
        _pixel_features_block(colors32, start, end, volume.width, wh,
                              sx, sy, st, chunk)
        dist, idx = tree.query(chunk, k=k_query, workers=-1)
        if k_query == 1:
            dist = dist[:, None]
            idx = idx[:, None]
        if k_query > k_p:
            # a discarded candidate tying the kept k-th is ambiguous:
            # re-rank those rows by the brute-force (distance, index) order
            boundary = dist[:, k_p] <= dist[:, k_p - 1] * (1.0 + 1e-12) + 1e-300
            if np.any(boundary):
                rows = np.where(boundary)[0]
                exact = knn(chunk[rows], segmentation.features, k_p)
                idx[rows, :k_p] = exact.indices
        chunk_idx = np.sort(idx[:, :k_p], axis=1).astype(np.int32)
        all_idx[start:end] = chunk_idx
        _lle_rows_gather(colors32, start, chunk_idx, sp_colors, all_w[start:end])

    indptr = np.arange(P + 1, dtype=np.int64) * k_p
    return SparseRowMatrix(rows=P, cols=s, indptr=indptr,
                           indices=all_idx.ravel(), data=all_w.ravel())
