import numpy as np
import pytest

from spockmip.labelprep import (
    MorphologyParams,
    area_closing,
    area_opening,
    connected_components,
)
from spockmip.volumes import BinaryMask


def brute_force_components(data, connectivity):
    """Flood-fill oracle over the adjacency implied by connectivity."""
    offsets = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                steps = abs(dz) + abs(dy) + abs(dx)
                if 1 <= steps <= connectivity:
                    offsets.append((dz, dy, dx))
    labels = np.zeros(data.shape, dtype=int)
    current = 0
    for start in np.argwhere(data):
        start = tuple(start)
        if labels[start]:
            continue
        current += 1
        stack = [start]
        labels[start] = current
        while stack:
            z, y, x = stack.pop()
            for dz, dy, dx in offsets:
                n = (z + dz, y + dy, x + dx)
                if all(0 <= c < s for c, s in zip(n, data.shape)):
                    if data[n] and not labels[n]:
                        labels[n] = current
                        stack.append(n)
    return labels, current


def mask_of(data):
    return BinaryMask(data=np.asarray(data, dtype=np.uint8))


class TestConnectedComponents:
    def test_empty(self):
        labels, sizes = connected_components(mask_of(np.zeros((4, 4, 4))), 1)
        assert sizes.size == 0

    def test_face_adjacent(self):
        data = np.zeros((2, 2, 2))
        data[0, 0, 0] = data[0, 0, 1] = 1
        for conn in (1, 2, 3):
            _, sizes = connected_components(mask_of(data), conn)
            assert sizes.tolist() == [2]

    def test_corner_adjacent(self):
        data = np.zeros((2, 2, 2))
        data[0, 0, 0] = data[1, 1, 1] = 1
        assert connected_components(mask_of(data), 1)[1].size == 2
        assert connected_components(mask_of(data), 3)[1].size == 1

    @pytest.mark.parametrize("connectivity", [1, 2, 3])
    def test_matches_flood_fill(self, connectivity):
        rng = np.random.default_rng(13)
        for _ in range(10):
            data = (rng.random((6, 6, 6)) > 0.7).astype(np.uint8)
            labels, sizes = connected_components(mask_of(data), connectivity)
            oracle_labels, n = brute_force_components(data.astype(bool), connectivity)
            assert sizes.size == n
            # same partition regardless of label numbering
            for lab in range(1, n + 1):
                voxels = oracle_labels == lab
                ours = np.unique(labels[voxels])
                assert ours.size == 1 and ours[0] != 0


class TestAreaOpening:
    def test_isolated_voxel_removed(self):
        data = np.zeros((8, 8, 8))
        data[4, 4, 4] = 1
        out = area_opening(mask_of(data), MorphologyParams())
        assert out.data.sum() == 0

    def test_tube_preserved(self):
        data = np.zeros((12, 4, 4))
        data[1:11, 2, 2] = 1
        out = area_opening(mask_of(data), MorphologyParams())
        assert np.array_equal(out.data, data)

    def test_size_filter(self):
        data = np.zeros((20, 8, 8))
        data[0, 0, 0:3] = 1  # size 3
        data[5, 2, 0:7] = 1  # size 7
        data[10:15, 4, 0:4] = 1  # size 20
        out = area_opening(mask_of(data), MorphologyParams(open_area=7))
        _, sizes = connected_components(out, 2)
        assert sorted(sizes.tolist()) == [7, 20]

    def test_subset_and_idempotent(self):
        rng = np.random.default_rng(23)
        params = MorphologyParams()
        for _ in range(5):
            m = mask_of((rng.random((8, 8, 8)) > 0.6).astype(np.uint8))
            once = area_opening(m, params)
            assert np.all(once.data <= m.data)
            assert np.array_equal(area_opening(once, params).data, once.data)

    def test_threshold_one_is_identity(self):
        rng = np.random.default_rng(29)
        m = mask_of((rng.random((6, 6, 6)) > 0.5).astype(np.uint8))
        out = area_opening(m, MorphologyParams(open_area=1))
        assert np.array_equal(out.data, m.data)

    def test_oracle_parity(self):
        rng = np.random.default_rng(31)
        params = MorphologyParams(open_area=7, open_connectivity=2)
        for _ in range(20):
            data = (rng.random((8, 8, 8)) > 0.65).astype(np.uint8)
            out = area_opening(mask_of(data), params)
            labels, n = brute_force_components(data.astype(bool), 2)
            expected = np.zeros_like(data)
            for lab in range(1, n + 1):
                voxels = labels == lab
                if voxels.sum() >= 7:
                    expected[voxels] = 1
            assert np.array_equal(out.data, expected)


class TestAreaClosing:
    def test_fill_single_hole(self):
        data = np.ones((5, 5, 5))
        data[2, 2, 2] = 0
        out = area_closing(mask_of(data), MorphologyParams())
        assert out.data.all()

    def test_large_background_untouched(self):
        data = np.zeros((8, 8, 8))
        data[2:6, 2:6, 2:6] = 1
        out = area_closing(mask_of(data), MorphologyParams(close_area=60))
        assert np.array_equal(out.data, data)

    def test_cavity_size_filter(self):
        data = np.ones((12, 12, 12))
        data[2, 2, 2:12:2] = 0  # 5 isolated 1-voxel holes (under 26-adjacency: one comp of 5)
        data[6:10, 6:10, 4:11] = 0  # cavity of 112 > 60, but open to border? no: check
        # make the big region an interior cavity by keeping a shell
        data[:, :, 11] = 1
        m = mask_of(data)
        out = area_closing(m, MorphologyParams(close_area=60, close_connectivity=3))
        holes_before = (~data.astype(bool)).sum()
        filled = out.data.sum() - m.data.sum()
        assert 0 < filled < holes_before
        # superset property
        assert np.all(out.data >= m.data)

    def test_idempotent(self):
        rng = np.random.default_rng(37)
        params = MorphologyParams(close_area=10, close_connectivity=3)
        for _ in range(5):
            m = mask_of((rng.random((8, 8, 8)) > 0.4).astype(np.uint8))
            once = area_closing(m, params)
            assert np.array_equal(area_closing(once, params).data, once.data)

    def test_connectivity_clamp_warns(self):
        data = np.ones((5, 5, 5))
        data[2, 2, 2] = 0
        with pytest.warns(UserWarning, match="clamping"):
            area_closing(mask_of(data), MorphologyParams(close_connectivity=4))

    def test_oracle_parity(self):
        # default parameters: open 7/conn 2, close 60/conn clamped to 3
        rng = np.random.default_rng(41)
        params = MorphologyParams()
        for _ in range(20):
            data = (rng.random((8, 8, 8)) > 0.35).astype(np.uint8)
            with pytest.warns(UserWarning):
                out = area_closing(mask_of(data), params)
            bg = ~data.astype(bool)
            labels, n = brute_force_components(bg, 3)
            expected = data.copy()
            for lab in range(1, n + 1):
                voxels = labels == lab
                touches_border = (
                    voxels[0].any() or voxels[-1].any()
                    or voxels[:, 0].any() or voxels[:, -1].any()
                    or voxels[:, :, 0].any() or voxels[:, :, -1].any()
                )
                if voxels.sum() < 60 and not touches_border:
                    expected[voxels] = 1
            assert np.array_equal(out.data, expected)
