"""Pixel storage and image/video file I/O.

Every volume is an RGB float32 array with channels in [0,1], laid out
frame-major then row-major, so the flat index of a pixel is
``(t * height + y) * width + x``.  Still images are single-frame volumes.
Video comes in as directories of PNG frames (lexicographic order) or as
raw ``.npy`` dumps; codec decoding is left to external tools.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

FRAME_NAME = "frame_{:03d}.png"
_IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class VolumeError(ValueError):
    """Unreadable, empty, or dimensionally inconsistent pixel source."""


@dataclass(frozen=True)
class PixelCoord:
    """Integer pixel location (column, row, frame)."""

    x: int
    y: int
    t: int = 0


@dataclass
class PixelVolume:
    width: int
    height: int
    frames: int
    data: np.ndarray  # (frames, height, width, 3) float32 in [0,1]

    def __post_init__(self):
        expected = (self.frames, self.height, self.width, 3)
        if self.data.shape != expected:
            raise VolumeError(f"data shape {self.data.shape} != {expected}")
        if self.data.dtype != np.float32:
            raise VolumeError(f"data must be float32, got {self.data.dtype}")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "PixelVolume":
        """Build a volume from an (H,W,3) or (F,H,W,3) array, clamping to [0,1]."""
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[-1] != 3:
            raise VolumeError(f"expected (H,W,3) or (F,H,W,3) array, got {arr.shape}")
        arr = np.clip(arr, 0.0, 1.0)
        f, h, w, _ = arr.shape
        return cls(width=w, height=h, frames=f, data=np.ascontiguousarray(arr))

    @property
    def pixel_count(self) -> int:
        return self.width * self.height * self.frames

    def pixels(self) -> np.ndarray:
        """Flat (P,3) view in frame-major, row-major order."""
        return self.data.reshape(-1, 3)

    def frame(self, t: int) -> np.ndarray:
        return self.data[t]

    def contains(self, coord: PixelCoord) -> bool:
        return (0 <= coord.x < self.width and 0 <= coord.y < self.height
                and 0 <= coord.t < self.frames)

    def pixel_index(self, coord: PixelCoord) -> int:
        if not self.contains(coord):
            raise VolumeError(f"coordinate {coord} outside {self.width}x{self.height}x{self.frames}")
        return (coord.t * self.height + coord.y) * self.width + coord.x


def decode_image_bytes(data: bytes) -> np.ndarray:
    """Decode 8/16-bit image bytes to an (H,W,3) float32 frame in [0,1]."""
    raw = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise VolumeError("undecodable image data")
    if raw.ndim == 2:
        raw = raw[:, :, None].repeat(3, axis=2)
    if raw.shape[2] == 4:  # alpha discarded
        raw = raw[:, :, :3]
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise VolumeError(f"unsupported bit depth {raw.dtype}")
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return np.clip(rgb.astype(np.float32) / scale, 0.0, 1.0)


def _decode_frame(path: Path) -> np.ndarray:
    try:
        return decode_image_bytes(path.read_bytes())
    except (OSError, VolumeError) as exc:
        raise VolumeError(f"unreadable image file {path}: {exc}") from exc


def _infer_kind(path: Path) -> str:
    if path.is_dir():
        return "image-sequence"
    if path.suffix.lower() == ".npy":
        return "raw-video"
    return "image"


def load_volume(path: str | os.PathLike, kind: str | None = None) -> PixelVolume:
    """Load a still image, a directory of frames, or a raw .npy volume.

    Channels are scaled to [0,1] (8-bit: /255, 16-bit: /65535) and clamped.
    Frame directories load in lexicographic filename order.
    """
    path = Path(path)
    if not path.exists():
        raise VolumeError(f"no such file or directory: {path}")
    if kind is None:
        kind = _infer_kind(path)

    if kind == "image":
        frame = _decode_frame(path)
        return PixelVolume.from_array(frame)

    if kind == "image-sequence":
        if not path.is_dir():
            raise VolumeError(f"image-sequence path must be a directory: {path}")
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in _IMAGE_EXTENSIONS)
        if not files:
            raise VolumeError(f"no frames found in {path}")
        frames = [_decode_frame(p) for p in files]
        shape = frames[0].shape
        for p, f in zip(files, frames):
            if f.shape != shape:
                raise VolumeError(f"frame {p.name} has shape {f.shape[:2]}, expected {shape[:2]}")
        return PixelVolume.from_array(np.stack(frames))

    if kind == "raw-video":
        arr = np.load(path)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[-1] != 3:
            raise VolumeError(f"raw volume must be (F,H,W,3), got {arr.shape}")
        if arr.shape[0] == 0:
            raise VolumeError("raw volume has zero frames")
        if arr.dtype == np.uint8:
            arr = arr.astype(np.float32) / 255.0
        elif arr.dtype == np.uint16:
            arr = arr.astype(np.float32) / 65535.0
        return PixelVolume.from_array(arr)

    raise VolumeError(f"unknown volume kind: {kind!r}")


def encode_png(frame: np.ndarray) -> bytes:
    """Encode an (H,W,3) float frame as 8-bit PNG (round-to-nearest)."""
    u8 = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    ok, buf = cv2.imencode(".png", cv2.cvtColor(u8, cv2.COLOR_RGB2BGR))
    if not ok:
        raise VolumeError("PNG encoding failed")
    return buf.tobytes()


def save_volume(volume: PixelVolume, path: str | os.PathLike) -> None:
    """Save as 8-bit PNG; multi-frame volumes become a frame_%03d.png sequence."""
    path = Path(path)
    if not path.parent.exists():
        raise VolumeError(f"parent directory does not exist: {path.parent}")
    try:
        if volume.frames == 1:
            path.write_bytes(encode_png(volume.frame(0)))
        else:
            path.mkdir(exist_ok=True)
            for t in range(volume.frames):
                (path / FRAME_NAME.format(t)).write_bytes(encode_png(volume.frame(t)))
    except OSError as exc:
        raise VolumeError(f"cannot write {path}: {exc}") from exc
