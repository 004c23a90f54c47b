"""Quality-aware feature extraction and fusion.

Two extraction routes feed the same fusion stage:

* reference extractors: handcrafted spatial statistics (light, contrast,
  colorfulness, sharpness, spatial information at three dyadic scales) and
  frame-difference temporal statistics, defined entirely in this module;
* imported feature maps produced by an external deep backbone, read from
  OQAF files and reduced with global average pooling.

Fusion projects both vectors to a common width with learnable matrices and
concatenates them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FeatureFileError, ValidationError

PATCH_SIZE = 224
SPATIAL_DIM = 15          # 3 scales x 5 attributes
TEMPORAL_DIM = 12         # 3 strides x 4 statistics
DEFAULT_ALIGNED_DIM = 32

SPATIAL_SCALES = (1, 2, 4)          # dyadic box-downsampling factors: 224, 112, 56
TEMPORAL_STRIDES = (1, 2, 4)

_LUMA = np.array([0.299, 0.587, 0.114])

_LAPLACIAN = np.array([[0.0, 1.0, 0.0],
                       [1.0, -4.0, 1.0],
                       [0.0, 1.0, 0.0]])
_SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                     [-2.0, 0.0, 2.0],
                     [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T

OQAF_MAGIC = b"OQAF"
OQAF_VERSION = 1


@dataclass(frozen=True)
class FusionWeights:
    """Learnable projections aligning spatial and temporal channel counts."""

    ws: np.ndarray   # (aligned, spatial_dim)
    wp: np.ndarray   # (aligned, temporal_dim)

    def __post_init__(self):
        ws = np.asarray(self.ws, dtype=np.float64)
        wp = np.asarray(self.wp, dtype=np.float64)
        if ws.ndim != 2 or wp.ndim != 2 or ws.shape[0] != wp.shape[0]:
            raise ValidationError(
                f"projections must be 2-D with equal output width, got {ws.shape} and {wp.shape}")
        if not (np.all(np.isfinite(ws)) and np.all(np.isfinite(wp))):
            raise ValidationError("fusion weights must be finite")
        object.__setattr__(self, "ws", ws)
        object.__setattr__(self, "wp", wp)

    @property
    def aligned_dim(self) -> int:
        return self.ws.shape[0]


def gap(feature_map: np.ndarray) -> np.ndarray:
    """Global average pooling: per-channel mean over all non-channel axes.

    The channel axis comes first; rank-1 input is returned as-is.
    """
    fmap = np.asarray(feature_map, dtype=np.float64)
    if fmap.ndim == 0 or fmap.size == 0:
        raise ValidationError("feature map must be a non-empty array")
    if not np.all(np.isfinite(fmap)):
        raise ValidationError("feature map contains non-finite values")
    return fmap.reshape(fmap.shape[0], -1).mean(axis=1)


def _box_downsample_2x(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    return img.reshape(h // 2, 2, w // 2, 2, -1).mean(axis=(1, 3))


def _valid_correlate3(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 correlation on the interior (no padding)."""
    out = np.zeros((img.shape[0] - 2, img.shape[1] - 2))
    for di in range(3):
        for dj in range(3):
            out += kernel[di, dj] * img[di:di + out.shape[0], dj:dj + out.shape[1]]
    return out


def _scale_attributes(rgb: np.ndarray) -> list:
    y = rgb @ _LUMA
    light = y.mean()
    contrast = y.std()
    rg = rgb[..., 0] - rgb[..., 1]
    yb = 0.5 * (rgb[..., 0] + rgb[..., 1]) - rgb[..., 2]
    colorfulness = (np.hypot(rg.std(), yb.std())
                    + 0.3 * np.hypot(rg.mean(), yb.mean()))
    sharpness = _valid_correlate3(y, _LAPLACIAN).var()
    gmag = np.hypot(_valid_correlate3(y, _SOBEL_X), _valid_correlate3(y, _SOBEL_Y))
    si = gmag.std()
    return [light, contrast, colorfulness, sharpness, si]


def spatial_extract_ref(patch: np.ndarray) -> np.ndarray:
    """Handcrafted spatial features of a 224x224 RGB patch.

    Five attributes per scale (light, RMS contrast, colorfulness, sharpness,
    SI), at scales 224/112/56 produced by 2x box downsampling; scale-major
    order, 15 values. Luminance is 0.299R+0.587G+0.114B on [0, 1] channels.
    """
    patch = np.asarray(patch)
    if patch.shape != (PATCH_SIZE, PATCH_SIZE, 3):
        raise ValidationError(f"patch must be {PATCH_SIZE}x{PATCH_SIZE}x3, got {patch.shape}")
    rgb = patch.astype(np.float64) / 255.0 if patch.dtype == np.uint8 else patch.astype(np.float64)
    values = []
    img = rgb
    for level, factor in enumerate(SPATIAL_SCALES):
        if level > 0:
            img = _box_downsample_2x(img)
        values.extend(_scale_attributes(img))
    return np.array(values)


def _nearest_rank_percentile(flat: np.ndarray, pct: float) -> float:
    k = int(np.ceil(pct / 100.0 * flat.size)) - 1
    k = max(k, 0)
    return float(np.partition(flat, k)[k])


def temporal_extract_ref(frames: np.ndarray) -> np.ndarray:
    """Frame-difference temporal features of a resized clip.

    For strides 1, 2, 4 over the luminance stack: mean, standard deviation,
    and nearest-rank 90th percentile of the absolute difference stack, plus
    the standard deviation across frames of the per-frame mean difference.
    Stride-major order, 12 values. Needs at least 5 frames.
    """
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[3] != 3:
        raise ValidationError(f"clip must be (n, H, W, 3), got {frames.shape}")
    n = frames.shape[0]
    if n < TEMPORAL_STRIDES[-1] + 1:
        raise ValidationError(f"clip needs at least {TEMPORAL_STRIDES[-1] + 1} frames, got {n}")
    rgb = frames.astype(np.float64) / 255.0 if frames.dtype == np.uint8 else frames.astype(np.float64)
    y = rgb @ _LUMA
    values = []
    for s in TEMPORAL_STRIDES:
        d = np.abs(y[s:] - y[:-s])
        per_frame_mean = d.mean(axis=(1, 2))
        values.extend([
            d.mean(),
            d.std(),
            _nearest_rank_percentile(d.ravel(), 90.0),
            per_frame_mean.std(),
        ])
    return np.array(values)


def fuse(spatial: np.ndarray, temporal: np.ndarray, weights: FusionWeights) -> np.ndarray:
    """Project both feature vectors to the aligned width and concatenate."""
    s = np.asarray(spatial, dtype=np.float64)
    t = np.asarray(temporal, dtype=np.float64)
    if s.shape != (weights.ws.shape[1],):
        raise ValidationError(f"spatial features must be ({weights.ws.shape[1]},), got {s.shape}")
    if t.shape != (weights.wp.shape[1],):
        raise ValidationError(f"temporal features must be ({weights.wp.shape[1]},), got {t.shape}")
    return np.concatenate([weights.ws @ s, weights.wp @ t])


def write_feature_file(path, array: np.ndarray) -> None:
    """Write an OQAF file: magic, version u16 LE, rank u8, dims u32 LE each,
    float32 LE payload in C order."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim < 1 or arr.ndim > 255:
        raise ValidationError(f"feature array rank {arr.ndim} out of range")
    with open(path, "wb") as f:
        f.write(OQAF_MAGIC)
        f.write(struct.pack("<H", OQAF_VERSION))
        f.write(struct.pack("<B", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def import_features(path) -> np.ndarray:
    """Read an OQAF feature file back into a float32 array."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 7 or data[:4] != OQAF_MAGIC:
        raise FeatureFileError(f"{path}: not an OQAF feature file")
    version, = struct.unpack_from("<H", data, 4)
    if version != OQAF_VERSION:
        raise FeatureFileError(f"{path}: unsupported OQAF version {version}")
    rank = data[6]
    if rank < 1:
        raise FeatureFileError(f"{path}: invalid rank {rank}")
    head = 7 + 4 * rank
    if len(data) < head:
        raise FeatureFileError(f"{path}: truncated dimension list")
    dims = struct.unpack_from(f"<{rank}I", data, 7)
    if any(d == 0 for d in dims):
        raise FeatureFileError(f"{path}: zero-sized dimension in {dims}")
    count = int(np.prod(dims))
    expected = head + 4 * count
    if len(data) < expected:
        raise FeatureFileError(f"{path}: truncated payload "
                               f"({len(data) - head} bytes, expected {4 * count})")
    if len(data) > expected:
        raise FeatureFileError(f"{path}: {len(data) - expected} trailing bytes after payload")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=head)
    if not np.all(np.isfinite(arr)):
        raise FeatureFileError(f"{path}: payload contains non-finite values")
    return arr.reshape(dims).copy()
