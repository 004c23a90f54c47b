import math

import numpy as np
import pytest

from orbitqa.errors import FeatureFileError, ValidationError
from orbitqa.features import (FusionWeights, fuse, gap, import_features,
                              spatial_extract_ref, temporal_extract_ref,
                              write_feature_file)


def luma(rgb):
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def spatial_oracle(patch_u8):
    """Straightforward per-pixel reimplementation of the spatial extractor."""
    img = patch_u8.astype(np.float64) / 255.0
    out = []
    for level in range(3):
        if level > 0:
            h, w = img.shape[0] // 2, img.shape[1] // 2
            down = np.zeros((h, w, 3))
            for i in range(h):
                for j in range(w):
                    down[i, j] = (img[2 * i, 2 * j] + img[2 * i, 2 * j + 1]
                                  + img[2 * i + 1, 2 * j] + img[2 * i + 1, 2 * j + 1]) / 4.0
            img = down
        y = luma(img)
        light = y.mean()
        contrast = math.sqrt(((y - y.mean()) ** 2).mean())
        rg = img[..., 0] - img[..., 1]
        yb = 0.5 * (img[..., 0] + img[..., 1]) - img[..., 2]
        color = (math.hypot(rg.std(), yb.std())
                 + 0.3 * math.hypot(rg.mean(), yb.mean()))
        h, w = y.shape
        lap = np.zeros((h - 2, w - 2))
        gx = np.zeros((h - 2, w - 2))
        gy = np.zeros((h - 2, w - 2))
        for i in range(1, h - 1):
            for j in range(1, w - 1):
                lap[i - 1, j - 1] = (y[i - 1, j] + y[i + 1, j] + y[i, j - 1]
                                     + y[i, j + 1] - 4.0 * y[i, j])
                gx[i - 1, j - 1] = (-y[i - 1, j - 1] + y[i - 1, j + 1]
                                    - 2 * y[i, j - 1] + 2 * y[i, j + 1]
                                    - y[i + 1, j - 1] + y[i + 1, j + 1])
                gy[i - 1, j - 1] = (-y[i - 1, j - 1] - 2 * y[i - 1, j] - y[i - 1, j + 1]
                                    + y[i + 1, j - 1] + 2 * y[i + 1, j] + y[i + 1, j + 1])
        sharp = lap.var()
        si = np.sqrt(gx ** 2 + gy ** 2).std()
        out.extend([light, contrast, color, sharp, si])
    return np.array(out)


def temporal_oracle(frames_u8):
    y = luma(frames_u8.astype(np.float64) / 255.0)
    out = []
    for s in (1, 2, 4):
        diffs = np.abs(y[s:] - y[:-s])
        flat = np.sort(diffs.ravel())
        rank = math.ceil(0.9 * flat.size) - 1
        per_frame = diffs.reshape(diffs.shape[0], -1).mean(axis=1)
        out.extend([diffs.mean(), diffs.std(), flat[rank], per_frame.std()])
    return np.array(out)


class TestGap:
    def test_constant_map(self):
        m = np.full((6, 4, 5), 3.5)
        assert np.array_equal(gap(m), np.full(6, 3.5))

    def test_hand_value(self):
        assert gap(np.array([[[1.0, 2.0], [3.0, 4.0]]]))[0] == 2.5

    def test_matches_summation_oracle(self):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(4, 3, 5))
        want = np.array([sum(m[c].ravel()) / 15 for c in range(4)])
        assert np.abs(gap(m) - want).max() < 1e-12

    def test_rank4_and_rank1(self):
        rng = np.random.default_rng(1)
        m4 = rng.normal(size=(3, 2, 4, 4))
        assert np.allclose(gap(m4), m4.reshape(3, -1).mean(axis=1))
        v = rng.normal(size=7)
        assert np.array_equal(gap(v), v)

    def test_spatial_permutation_invariance(self):
        rng = np.random.default_rng(2)
        m = rng.normal(size=(2, 5, 5))
        perm = rng.permutation(25)
        m2 = m.reshape(2, -1)[:, perm].reshape(2, 5, 5)
        assert np.allclose(gap(m), gap(m2))


class TestSpatialExtract:
    def test_constant_midgray(self):
        patch = np.full((224, 224, 3), 128, dtype=np.uint8)
        f = spatial_extract_ref(patch)
        for scale in range(3):
            light, contrast, color, sharp, si = f[5 * scale:5 * scale + 5]
            assert abs(light - 128 / 255) < 1e-12
            assert contrast == 0.0
            assert color == 0.0
            assert sharp == 0.0
            assert si == 0.0

    def test_red_blue_halves_have_color_and_edges(self):
        patch = np.zeros((224, 224, 3), dtype=np.uint8)
        patch[:, :112, 0] = 255
        patch[:, 112:, 2] = 255
        f = spatial_extract_ref(patch)
        assert f[2] > 0.0   # colorfulness at full scale
        assert f[4] > 0.0   # spatial information at full scale

    def test_matches_per_pixel_oracle(self):
        rng = np.random.default_rng(3)
        patch = rng.integers(0, 256, size=(224, 224, 3), dtype=np.uint8)
        got = spatial_extract_ref(patch)
        want = spatial_oracle(patch)
        assert np.abs(got - want).max() < 1e-9

    def test_wrong_size_rejected(self):
        with pytest.raises(ValidationError):
            spatial_extract_ref(np.zeros((224, 223, 3), dtype=np.uint8))

    def test_rotation_180_invariance(self):
        rng = np.random.default_rng(4)
        patch = rng.integers(0, 256, size=(224, 224, 3), dtype=np.uint8)
        a = spatial_extract_ref(patch)
        b = spatial_extract_ref(patch[::-1, ::-1].copy())
        for scale in range(3):
            base = 5 * scale
            for offset in (0, 1, 2, 4):   # light, contrast, colorfulness, SI
                assert abs(a[base + offset] - b[base + offset]) < 1e-9


class TestTemporalExtract:
    def test_static_clip_is_zero(self):
        frames = np.repeat(np.random.default_rng(5).integers(
            0, 256, size=(1, 224, 224, 3), dtype=np.uint8), 30, axis=0)
        assert np.array_equal(temporal_extract_ref(frames), np.zeros(12))

    def test_alternating_black_white_stride1(self):
        frames = np.zeros((30, 224, 224, 3), dtype=np.uint8)
        frames[1::2] = 255
        f = temporal_extract_ref(frames)
        assert abs(f[0] - 1.0) < 1e-12   # stride-1 mean |dY|
        assert f[1] == 0.0               # constant difference stack

    def test_matches_direct_oracle(self):
        rng = np.random.default_rng(6)
        frames = rng.integers(0, 256, size=(30, 224, 224, 3), dtype=np.uint8)
        got = temporal_extract_ref(frames)
        want = temporal_oracle(frames)
        assert np.abs(got - want).max() < 1e-9

    def test_luminance_shift_invariance(self):
        rng = np.random.default_rng(7)
        frames = rng.uniform(0.0, 0.5, size=(8, 224, 224, 3))
        shifted = frames + 0.25
        a = temporal_extract_ref(frames)
        b = temporal_extract_ref(shifted)
        assert np.abs(a - b).max() < 1e-9

    def test_short_clips_allowed_down_to_five_frames(self):
        frames = np.zeros((5, 224, 224, 3), dtype=np.uint8)
        assert temporal_extract_ref(frames).shape == (12,)
        with pytest.raises(ValidationError):
            temporal_extract_ref(frames[:4])


class TestFeatureFiles:
    def test_header_contract(self, tmp_path):
        arr = np.arange(2048, dtype=np.float32).reshape(2048, 1, 1)
        path = tmp_path / "f.oqaf"
        write_feature_file(path, arr)
        data = path.read_bytes()
        assert data[:4] == b"OQAF"
        assert int.from_bytes(data[4:6], "little") == 1
        assert data[6] == 3
        got = import_features(path)
        assert got.shape == (2048, 1, 1)
        assert np.array_equal(got, arr)

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        arr = rng.normal(size=(7, 3, 2)).astype(np.float32)
        path = tmp_path / "r.oqaf"
        write_feature_file(path, arr)
        assert np.array_equal(import_features(path), arr)

    def test_rank1_vector(self, tmp_path):
        path = tmp_path / "v.oqaf"
        write_feature_file(path, np.arange(15.0))
        assert import_features(path).shape == (15,)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.oqaf"
        write_feature_file(path, np.arange(10.0))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FeatureFileError, match="truncated"):
            import_features(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "b.oqaf"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(FeatureFileError, match="OQAF"):
            import_features(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "x.oqaf"
        write_feature_file(path, np.arange(4.0))
        path.write_bytes(path.read_bytes() + b"zz")
        with pytest.raises(FeatureFileError, match="trailing"):
            import_features(path)


class TestFuse:
    def test_identity_projection_concatenates(self):
        w = FusionWeights(ws=np.eye(3), wp=np.eye(3))
        s = np.array([1.0, 2.0, 3.0])
        t = np.array([4.0, 5.0, 6.0])
        assert np.array_equal(fuse(s, t, w), [1, 2, 3, 4, 5, 6])

    def test_zero_temporal_zeroes_second_half(self):
        rng = np.random.default_rng(9)
        w = FusionWeights(ws=rng.normal(size=(4, 5)), wp=rng.normal(size=(4, 6)))
        out = fuse(rng.normal(size=5), np.zeros(6), w)
        assert np.array_equal(out[4:], np.zeros(4))

    def test_matches_matvec_oracle(self):
        rng = np.random.default_rng(10)
        w = FusionWeights(ws=rng.normal(size=(8, 15)), wp=rng.normal(size=(8, 12)))
        s = rng.normal(size=15)
        t = rng.normal(size=12)
        got = fuse(s, t, w)
        want = np.array([sum(w.ws[i, j] * s[j] for j in range(15)) for i in range(8)]
                        + [sum(w.wp[i, j] * t[j] for j in range(12)) for i in range(8)])
        assert np.abs(got - want).max() < 1e-12

    def test_linear_in_spatial_argument(self):
        rng = np.random.default_rng(11)
        w = FusionWeights(ws=rng.normal(size=(6, 4)), wp=rng.normal(size=(6, 3)))
        s1, s2 = rng.normal(size=4), rng.normal(size=4)
        t = rng.normal(size=3)
        a, b = 1.7, -0.3
        left = fuse(a * s1 + b * s2, t, w)[:6]
        right = a * fuse(s1, t, w)[:6] + b * fuse(s2, t, w)[:6]
        assert np.abs(left - right).max() < 1e-9

    def test_dimension_mismatch_rejected(self):
        w = FusionWeights(ws=np.eye(3), wp=np.eye(3))
        with pytest.raises(ValidationError):
            fuse(np.zeros(4), np.zeros(3), w)
