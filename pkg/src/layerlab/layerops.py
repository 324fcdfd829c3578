"""Pixel-level layer weights: projection, composition, filtering, storage.

A LayerSet is the recolorable artifact: one weight plane per palette color.
Weights are stored unclamped (float32); clamping happens only when planes
are composed into an output volume, so dramatic recolorings keep working.

Layer files (".lbld") are little-endian: magic LBLD, u32 version, u32
width/height/frames/N, N*3 float32 palette, N planes of P float32, and a
trailing CRC32 over everything before it.
"""

from __future__ import annotations

import math
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi

from .manifold import SparseRowMatrix
from .palette import Palette, PaletteError
from .pixelcore import PixelVolume
from .solver import SuperpixelLayers

MAGIC = b"LBLD"
VERSION = 1
EMBOSS_KERNEL = np.array([[-2.0, -1.0, 0.0],
                          [-1.0, 1.0, 1.0],
                          [0.0, 1.0, 2.0]])
EMBOSS_BIAS = 0.5


class LayerFileError(ValueError):
    """Base error for malformed .lbld files."""


class BadMagicError(LayerFileError):
    pass


class VersionMismatchError(LayerFileError):
    pass


class TruncatedPayloadError(LayerFileError):
    pass


class ChecksumError(LayerFileError):
    pass


@dataclass
class LayerSet:
    width: int
    height: int
    frames: int
    palette: Palette
    weights: np.ndarray  # (N, P) float32, unclamped

    def __post_init__(self):
        # palette is kept at float32 resolution so memory and disk agree
        rounded = self.palette.colors.astype(np.float32).astype(np.float64)
        if not np.array_equal(rounded, self.palette.colors):
            self.palette = Palette(colors=rounded)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        n = len(self.palette)
        p = self.width * self.height * self.frames
        if self.weights.shape != (n, p):
            raise ValueError(f"weights shape {self.weights.shape} != ({n}, {p})")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("layer weights must be finite")

    @property
    def num_layers(self) -> int:
        return len(self.palette)

    @property
    def pixel_count(self) -> int:
        return self.width * self.height * self.frames

    def plane(self, j: int) -> np.ndarray:
        """Weight plane j as a (frames, height, width) view."""
        return self.weights[j].reshape(self.frames, self.height, self.width)


def project(q: SparseRowMatrix, superpixel_layers: SuperpixelLayers) -> np.ndarray:
    """Per-pixel weights X_j = Q L_j for every layer; returns (N, P) float32."""
    if q.cols != superpixel_layers.num_superpixels:
        raise ValueError(f"Q has {q.cols} columns but layers have "
                         f"{superpixel_layers.num_superpixels} superpixels")
    x = q.to_csr() @ superpixel_layers.values  # (P, N) float64
    return np.ascontiguousarray(x.T, dtype=np.float32)


def compose(layers: LayerSet, palette: Palette, clip: bool = True) -> PixelVolume:
    """Recolor: per-pixel linear combination of weight planes and palette
    colors, clamped to [0,1] unless ``clip`` is disabled (then negative and
    overshooting values survive into the returned volume's buffer)."""
    if len(palette) != layers.num_layers:
        raise ValueError(f"palette has {len(palette)} colors but layer set has "
                         f"{layers.num_layers} layers")
    colors = palette.colors.astype(np.float32)
    out = layers.weights.T @ colors  # (P, 3) float32
    if clip:
        np.clip(out, 0.0, 1.0, out=out)
    return PixelVolume(width=layers.width, height=layers.height, frames=layers.frames,
                       data=out.reshape(layers.frames, layers.height, layers.width, 3))


def compose_frame(layers: LayerSet, palette: Palette, t: int) -> np.ndarray:
    """Recolor a single frame; returns a clamped (H, W, 3) float32 array."""
    if len(palette) != layers.num_layers:
        raise ValueError(f"palette has {len(palette)} colors but layer set has "
                         f"{layers.num_layers} layers")
    if not 0 <= t < layers.frames:
        raise ValueError(f"frame {t} out of range [0, {layers.frames})")
    hw = layers.width * layers.height
    colors = palette.colors.astype(np.float32)
    out = layers.weights[:, t * hw:(t + 1) * hw].T @ colors
    np.clip(out, 0.0, 1.0, out=out)
    return out.reshape(layers.height, layers.width, 3)


def _motion_blur_offsets(length: int, angle_deg: float) -> list[tuple[int, int, float]]:
    """(dx, dy, weight) taps anchored at the source pixel, extending toward
    +angle (degrees from +x toward +y); duplicate taps accumulate."""
    rad = math.radians(angle_deg)
    taps: dict[tuple[int, int], float] = {}
    for i in range(length):
        dx = int(round(i * math.cos(rad)))
        dy = int(round(i * math.sin(rad)))
        taps[(dx, dy)] = taps.get((dx, dy), 0.0) + 1.0 / length
    return [(dx, dy, w) for (dx, dy), w in taps.items()]


def _apply_motion_blur(frame: np.ndarray, length: int, angle_deg: float) -> np.ndarray:
    h, w = frame.shape
    out = np.zeros_like(frame)
    ys = np.arange(h)
    xs = np.arange(w)
    for dx, dy, wgt in _motion_blur_offsets(length, angle_deg):
        src_y = np.clip(ys - dy, 0, h - 1)
        src_x = np.clip(xs - dx, 0, w - 1)
        out += wgt * frame[np.ix_(src_y, src_x)]
    return out


def filter_layer(layers: LayerSet, layer: int, kernel: str, *,
                 sigma: float | None = None, length: int | None = None,
                 angle: float | None = None) -> LayerSet:
    """Convolve one weight plane (per frame, edges clamped); others untouched."""
    if not 0 <= layer < layers.num_layers:
        raise ValueError(f"layer {layer} out of range [0, {layers.num_layers})")
    new_weights = layers.weights.copy()
    plane = layers.plane(layer).astype(np.float64)

    if kernel == "gaussian":
        if sigma is None or sigma <= 0:
            raise ValueError("gaussian kernel requires sigma > 0")
        filtered = np.stack([ndi.gaussian_filter(plane[t], sigma=sigma, mode="nearest")
                             for t in range(layers.frames)])
    elif kernel == "emboss":
        filtered = np.stack([ndi.correlate(plane[t], EMBOSS_KERNEL, mode="nearest")
                             + EMBOSS_BIAS for t in range(layers.frames)])
    elif kernel == "motion_blur":
        if length is None or length < 1:
            raise ValueError("motion_blur kernel requires length >= 1")
        filtered = np.stack([_apply_motion_blur(plane[t], int(length), float(angle or 0.0))
                             for t in range(layers.frames)])
    else:
        raise ValueError(f"unknown kernel {kernel!r}")

    new_weights[layer] = filtered.reshape(-1).astype(np.float32)
    return LayerSet(width=layers.width, height=layers.height, frames=layers.frames,
                    palette=layers.palette, weights=new_weights)


def save_layers(layers: LayerSet, path: str | os.PathLike) -> None:
    """Write the .lbld binary; bit-exact round trip with load_layers."""
    header = MAGIC + struct.pack("<I", VERSION)
    header += struct.pack("<4I", layers.width, layers.height, layers.frames,
                          layers.num_layers)
    palette_bytes = layers.palette.colors.astype("<f4").tobytes()
    crc = zlib.crc32(header)
    crc = zlib.crc32(palette_bytes, crc)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(palette_bytes)
        for j in range(layers.num_layers):
            chunk = layers.weights[j].astype("<f4", copy=False).tobytes()
            crc = zlib.crc32(chunk, crc)
            fh.write(chunk)
        fh.write(struct.pack("<I", crc & 0xFFFFFFFF))


def load_layers(path: str | os.PathLike) -> LayerSet:
    data = open(path, "rb").read()
    if len(data) < 24:
        raise TruncatedPayloadError("file too short for header")
    if data[:4] != MAGIC:
        raise BadMagicError("bad magic")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported version {version}")
    width, height, frames, n = struct.unpack_from("<4I", data, 8)
    if min(width, height, frames, n) < 1:
        raise TruncatedPayloadError("invalid zero dimension in header")
    p = width * height * frames
    expected = 24 + n * 12 + n * p * 4 + 4
    if len(data) < expected:
        raise TruncatedPayloadError(
            f"truncated payload: expected {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise TruncatedPayloadError(
            f"trailing data: expected {expected} bytes, got {len(data)}")
    (stored_crc,) = struct.unpack_from("<I", data, expected - 4)
    if zlib.crc32(data[:expected - 4]) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError("checksum failure")

    palette_arr = np.frombuffer(data, dtype="<f4", count=n * 3, offset=24)
    try:
        palette = Palette(colors=palette_arr.reshape(n, 3).astype(np.float64))
    except PaletteError as exc:
        raise LayerFileError(f"invalid palette in file: {exc}") from exc
    weights = np.frombuffer(data, dtype="<f4", count=n * p,
                            offset=24 + n * 12).reshape(n, p).copy()
    return LayerSet(width=width, height=height, frames=frames,
                    palette=palette, weights=weights)
