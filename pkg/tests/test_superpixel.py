from collections import deque

import numpy as np
import pytest

from layerlab import PixelVolume, features, segment
from layerlab.superpixel import Segmentation, SegmentationError

from corpus import halves_image


def flood_reachable(labels3, start, connectivity6):
    """BFS oracle: pixels reachable from start without leaving its label."""
    f, h, w = labels3.shape
    lab = labels3[start]
    seen = {start}
    q = deque([start])
    while q:
        t, y, x = q.popleft()
        steps = [(t, y, x - 1), (t, y, x + 1), (t, y - 1, x), (t, y + 1, x)]
        if connectivity6:
            steps += [(t - 1, y, x), (t + 1, y, x)]
        for nt, ny, nx in steps:
            if 0 <= nt < f and 0 <= ny < h and 0 <= nx < w:
                if (nt, ny, nx) not in seen and labels3[nt, ny, nx] == lab:
                    seen.add((nt, ny, nx))
                    q.append((nt, ny, nx))
    return seen


def assert_connected(seg, frames_gt_1):
    labels3 = seg.labels
    for sp in range(seg.count):
        members = list(zip(*np.nonzero(labels3 == sp)))
        assert members, f"superpixel {sp} owns no pixels"
        reached = flood_reachable(labels3, members[0], frames_gt_1)
        assert len(reached) == len(members), f"superpixel {sp} is disconnected"


class TestSegment:
    def test_constant_image_tiles(self):
        vol = PixelVolume.from_array(np.full((8, 8, 3), 0.6, np.float32))
        seg = segment(vol, 4, seed=0)
        assert seg.count == 4
        assert seg.counts.sum() == 64
        assert np.all(seg.counts >= 1)
        for sp in seg.superpixels:
            assert np.allclose(sp.mean_color, 0.6, atol=1e-6)
        assert_connected(seg, frames_gt_1=False)

    def test_two_halves_boundary_exact(self):
        vol, _ = halves_image(dim=16)
        seg = segment(vol, 2, seed=3)
        labels = seg.labels[0]
        # brute-force check: no pixel's label disagrees with its half
        left_label = labels[0, 0]
        right_label = labels[0, -1]
        assert left_label != right_label
        assert np.all(labels[:, :8] == left_label)
        assert np.all(labels[:, 8:] == right_label)
        by_label = {int(left_label): (1.0, 0.0, 0.0), int(right_label): (0.0, 0.0, 1.0)}
        for lab, color in by_label.items():
            assert np.allclose(seg.superpixels[lab].mean_color, color, atol=1e-6)

    def test_degenerate_every_pixel_own_superpixel(self):
        rng = np.random.default_rng(1)
        vol = PixelVolume.from_array(rng.random((6, 6, 3)).astype(np.float32))
        seg = segment(vol, 36, seed=0)
        assert seg.count == 36
        assert np.all(np.sort(seg.labels.ravel()) == np.arange(36))
        assert np.all(seg.counts == 1)

    def test_partition_and_mean_color(self, rng):
        vol = PixelVolume.from_array(rng.random((20, 24, 3)).astype(np.float32))
        seg = segment(vol, 12, seed=7)
        assert seg.counts.sum() == vol.pixel_count
        labels = seg.labels.reshape(-1)
        pix = vol.pixels().astype(np.float64)
        for sp in range(12):
            members = pix[labels == sp]
            assert np.abs(members.mean(axis=0) - seg.mean_colors[sp]).max() <= 1e-6
        assert_connected(seg, frames_gt_1=False)

    def test_deterministic(self, rng):
        vol = PixelVolume.from_array(rng.random((16, 16, 3)).astype(np.float32))
        a = segment(vol, 9, seed=11)
        b = segment(vol, 9, seed=11)
        assert np.array_equal(a.labels, b.labels)

    def test_different_seeds_generally_differ(self, rng):
        vol = PixelVolume.from_array(rng.random((16, 16, 3)).astype(np.float32))
        a = segment(vol, 9, seed=1)
        b = segment(vol, 9, seed=2)
        assert not np.array_equal(a.labels, b.labels)

    def test_video_supervoxels_connected(self, rng):
        vol = PixelVolume.from_array(rng.random((3, 10, 10, 3)).astype(np.float32))
        seg = segment(vol, 10, seed=5)
        assert seg.counts.sum() == 300
        assert_connected(seg, frames_gt_1=True)

    def test_video_temporal_axis_used(self):
        # constant video: supervoxels should span frames via temporal links
        vol = PixelVolume.from_array(np.full((4, 6, 6, 3), 0.5, np.float32))
        seg = segment(vol, 3, seed=2)
        spans = [len(np.unique(np.nonzero(seg.labels == sp)[0])) for sp in range(3)]
        assert max(spans) > 1

    def test_invalid_counts(self):
        vol = PixelVolume.from_array(np.zeros((4, 4, 3), np.float32))
        with pytest.raises(SegmentationError):
            segment(vol, 0, seed=0)
        with pytest.raises(SegmentationError):
            segment(vol, 17, seed=0)


class TestFeatures:
    def _seg_with_centroid(self, centroid, mean_color, dim=10):
        return Segmentation(
            labels=np.zeros((1, dim, dim), np.int32), superpixels=[],
            mean_colors=np.asarray([mean_color], dtype=np.float64),
            centroids=np.asarray([centroid], dtype=np.float64),
            features=np.zeros((1, 6)), counts=np.array([dim * dim]))

    def test_origin_centroid(self):
        vol = PixelVolume.from_array(np.zeros((10, 10, 3), np.float32))
        seg = self._seg_with_centroid((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
        feats = features(seg, vol)
        assert np.allclose(feats[0], [1, 1, 1, 0, 0, 0])

    def test_far_corner_is_half(self):
        vol = PixelVolume.from_array(np.zeros((10, 10, 3), np.float32))
        seg = self._seg_with_centroid((9.0, 9.0, 0.0), (0.0, 0.0, 0.0))
        feats = features(seg, vol)
        assert np.allclose(feats[0, 3:5], [0.5, 0.5])
        assert feats[0, 5] == 0.0  # single frame: temporal component is 0

    def test_midpoint_is_quarter(self):
        vol = PixelVolume.from_array(np.zeros((10, 10, 3), np.float32))
        seg = self._seg_with_centroid((4.5, 4.5, 0.0), (0.0, 0.0, 0.0))
        feats = features(seg, vol)
        assert np.allclose(feats[0, 3:5], [0.25, 0.25])

    def test_segment_features_match_op(self, rng):
        vol = PixelVolume.from_array(rng.random((2, 8, 8, 3)).astype(np.float32))
        seg = segment(vol, 6, seed=0)
        assert np.allclose(features(seg, vol), seg.features)
        assert np.all(seg.features[:, 3:5] >= 0) and np.all(seg.features[:, 3:5] <= 0.5)
        assert np.all(seg.features[:, 5] >= 0) and np.all(seg.features[:, 5] <= 1.0)

    def test_dimension_mismatch(self, rng):
        vol = PixelVolume.from_array(rng.random((8, 8, 3)).astype(np.float32))
        seg = segment(vol, 4, seed=0)
        other = PixelVolume.from_array(rng.random((9, 9, 3)).astype(np.float32))
        with pytest.raises(SegmentationError):
            features(seg, other)
