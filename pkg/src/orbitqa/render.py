"""Software point rasterizer and clip assembly.

Frames are (H, W, 3) uint8 arrays. Each point is drawn as a square splat of
side 2*splat_radius+1 centered on its projected pixel; per-pixel depth is
resolved by a z-buffer keeping the nearest point, ties broken by lowest
point index, so output is deterministic and independent of point order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image

from .errors import ValidationError
from .pointcloud import PointCloud, bounding_radius
from .trajectory import CameraPose

DEFAULT_WIDTH = 1920
DEFAULT_HEIGHT = 1080
PATCH_SIZE = 224

_RAW_HEADER = struct.Struct("<II")


@dataclass(frozen=True)
class RenderConfig:
    """Rasterizer settings.

    near/far of None are derived per capture from the viewing distance d and
    the cloud's bounding radius b about the look-at target as
    max(1e-4*d, d-2b) and d+2b+1e-3*d, which brackets the whole cloud.
    """

    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    vertical_fov: float = 60.0
    splat_radius: int = 1
    background: tuple = (255, 255, 255)
    near: float = None
    far: float = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"viewport must be positive, got {self.width}x{self.height}")
        if not (0.0 < self.vertical_fov < 180.0):
            raise ValidationError(f"vertical_fov must be in (0, 180), got {self.vertical_fov!r}")
        if self.splat_radius < 0:
            raise ValidationError(f"splat_radius must be >= 0, got {self.splat_radius!r}")
        bg = tuple(int(c) for c in self.background)
        if len(bg) != 3 or any(c < 0 or c > 255 for c in bg):
            raise ValidationError(f"background must be an RGB triple of 0..255, got {self.background!r}")
        object.__setattr__(self, "background", bg)
        if (self.near is None) != (self.far is None):
            raise ValidationError("near and far must be set together or both left None")
        if self.near is not None and not (0.0 < self.near < self.far):
            raise ValidationError(f"need 0 < near < far, got near={self.near!r} far={self.far!r}")


@dataclass(frozen=True)
class Clip:
    """All frames captured along one pathway, as one (n, H, W, 3) uint8 array."""

    pathway: str
    frames: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 4 or f.shape[3] != 3 or f.dtype != np.uint8:
            raise ValidationError(f"frames must be (n, H, W, 3) uint8, got {f.shape} {f.dtype}")
        object.__setattr__(self, "frames", f)

    def __len__(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class VideoSequence:
    clips: tuple

    def __post_init__(self):
        object.__setattr__(self, "clips", tuple(self.clips))

    @property
    def n_frames(self) -> int:
        return sum(len(c) for c in self.clips)


def _derived_planes(pc: PointCloud, pose: CameraPose):
    d = float(np.linalg.norm(np.asarray(pose.position, float) - np.asarray(pose.target, float)))
    b = bounding_radius(pc, pose.target)
    near = max(1e-4 * d, d - 2.0 * b)
    far = d + 2.0 * b + 1e-3 * d
    return near, far


def scene_config(cfg: RenderConfig, pc: PointCloud, pose: CameraPose) -> RenderConfig:
    """Materialize derived near/far once so repeated renders skip the scan."""
    if cfg.near is not None:
        return cfg
    near, far = _derived_planes(pc, pose)
    return replace(cfg, near=near, far=far)


def render_frame(pc: PointCloud, pose: CameraPose, cfg: RenderConfig) -> np.ndarray:
    """Rasterize one frame: perspective look-at projection, square splats,
    nearest-depth z-buffer with lowest-index tie-break."""
    p = np.asarray(pose.position, dtype=np.float64)
    t = np.asarray(pose.target, dtype=np.float64)
    up = np.asarray(pose.up, dtype=np.float64)
    view = t - p
    dist = np.linalg.norm(view)
    if dist == 0.0:
        raise ValidationError("degenerate pose: position equals target")
    forward = view / dist
    right = np.cross(forward, up)
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise ValidationError("degenerate pose: up vector parallel to view direction")
    right /= rn
    true_up = np.cross(right, forward)

    if cfg.near is None:
        near, far = _derived_planes(pc, pose)
    else:
        near, far = cfg.near, cfg.far

    w, h = cfg.width, cfg.height
    frame = np.empty((h, w, 3), dtype=np.uint8)
    frame[:, :] = cfg.background

    rel = pc.positions - p
    depth = rel @ forward
    keep = (depth >= near) & (depth <= far)
    if not np.any(keep):
        return frame
    idx = np.nonzero(keep)[0]
    rel = rel[idx]
    depth = depth[idx]

    half_h = math.tan(math.radians(cfg.vertical_fov) / 2.0)
    half_w = half_h * (w / h)
    x_ndc = (rel @ right) / (depth * half_w)
    y_ndc = (rel @ true_up) / (depth * half_h)
    px = (x_ndc + 1.0) * 0.5 * w
    py = (1.0 - y_ndc) * 0.5 * h
    ix = np.floor(px).astype(np.int64)
    iy = np.floor(py).astype(np.int64)
    inside = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    if not np.any(inside):
        return frame
    ix, iy = ix[inside], iy[inside]
    depth = depth[inside]
    idx = idx[inside]

    sr = cfg.splat_radius
    offsets = np.arange(-sr, sr + 1)
    dx, dy = np.meshgrid(offsets, offsets, indexing="xy")
    dx, dy = dx.ravel(), dy.ravel()
    sx = (ix[:, None] + dx[None, :]).ravel()
    sy = (iy[:, None] + dy[None, :]).ravel()
    sdepth = np.repeat(depth, dx.size)
    sidx = np.repeat(idx, dx.size)
    ok = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    sx, sy, sdepth, sidx = sx[ok], sy[ok], sdepth[ok], sidx[ok]
    if sx.size == 0:
        return frame

    pix = sy * w + sx
    order = np.lexsort((sidx, sdepth, pix))
    pix_sorted = pix[order]
    _, first = np.unique(pix_sorted, return_index=True)
    winners = order[first]

    colors8 = np.rint(pc.colors[sidx[winners]] * 255.0).astype(np.uint8)
    flat = frame.reshape(-1, 3)
    flat[pix_sorted[first]] = colors8
    return frame


def iter_capture(pc: PointCloud, trajectories, cfg: RenderConfig):
    """Yield (pathway, frame_index, frame) over the whole capture sequence."""
    if not trajectories:
        raise ValidationError("no trajectories to capture")
    cfg = scene_config(cfg, pc, trajectories[0].poses[0])
    for traj in trajectories:
        for k, pose in enumerate(traj.poses):
            yield traj.pathway, k, render_frame(pc, pose, cfg)


def render_clip(pc: PointCloud, trajectory, cfg: RenderConfig) -> Clip:
    cfg = scene_config(cfg, pc, trajectory.poses[0])
    frames = np.stack([render_frame(pc, pose, cfg) for pose in trajectory.poses])
    return Clip(pathway=trajectory.pathway, frames=frames)


def capture_video(pc: PointCloud, trajectories, cfg: RenderConfig) -> VideoSequence:
    """Render the full sequence, one clip per trajectory, in order."""
    if not trajectories:
        raise ValidationError("no trajectories to capture")
    cfg = scene_config(cfg, pc, trajectories[0].poses[0])
    return VideoSequence(clips=tuple(render_clip(pc, traj, cfg) for traj in trajectories))


def _bilinear_axis(n_in: int, n_out: int):
    # Half-pixel centers: src = (dst + 0.5) * (n_in / n_out) - 0.5.
    # For n_out <= n_in this stays within [0, n_in - 1], so no clamping.
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    lo = np.floor(src).astype(np.int64)
    frac = src - lo
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, frac


def resize_frame(frame: np.ndarray, width: int = PATCH_SIZE, height: int = PATCH_SIZE) -> np.ndarray:
    """Full-frame bilinear resample (no crop, no antialias prefilter)."""
    h, w = frame.shape[:2]
    if width > w or height > h:
        raise ValidationError(f"upscaling not supported: {w}x{h} -> {width}x{height}")
    return _resize_stack(frame[None], width, height)[0]


def _resize_stack(frames: np.ndarray, width: int, height: int) -> np.ndarray:
    h, w = frames.shape[1:3]
    ylo, yhi, fy = _bilinear_axis(h, height)
    xlo, xhi, fx = _bilinear_axis(w, width)
    f = frames.astype(np.float64)
    top = f[:, ylo]
    bot = f[:, yhi]
    rows = top + (bot - top) * fy[None, :, None, None]
    left = rows[:, :, xlo]
    right = rows[:, :, xhi]
    out = left + (right - left) * fx[None, None, :, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def resize_clip(clip: Clip, width: int = PATCH_SIZE, height: int = PATCH_SIZE) -> Clip:
    """Bilinear full-frame resize of every frame in the clip."""
    h, w = clip.frames.shape[1:3]
    if width > w or height > h:
        raise ValidationError(f"upscaling not supported: {w}x{h} -> {width}x{height}")
    return Clip(pathway=clip.pathway, frames=_resize_stack(clip.frames, width, height))


def crop_patch(frame: np.ndarray, size: int = PATCH_SIZE, mode: str = "center",
               seed: int = None) -> np.ndarray:
    """Cut a size x size patch.

    center: floor-centered window. random: top-left drawn uniformly from the
    valid offsets (x first, then y) with the supplied seed.
    """
    h, w = frame.shape[:2]
    if w < size or h < size:
        raise ValidationError(f"frame {w}x{h} is smaller than the {size}x{size} patch")
    if mode == "center":
        x0 = (w - size) // 2
        y0 = (h - size) // 2
    elif mode == "random":
        if seed is None:
            raise ValidationError("random crop requires a seed")
        rng = np.random.default_rng(seed)
        x0 = int(rng.integers(0, w - size + 1))
        y0 = int(rng.integers(0, h - size + 1))
    else:
        raise ValidationError(f"mode must be 'center' or 'random', got {mode!r}")
    return frame[y0:y0 + size, x0:x0 + size].copy()


def save_png(frame: np.ndarray, path) -> None:
    Image.fromarray(frame, mode="RGB").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_raw(frame: np.ndarray, path) -> None:
    """Raw export: width u32 LE, height u32 LE, then row-major RGB8."""
    h, w = frame.shape[:2]
    with open(path, "wb") as f:
        f.write(_RAW_HEADER.pack(w, h))
        f.write(np.ascontiguousarray(frame).tobytes())


def load_raw(path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(_RAW_HEADER.size)
        if len(head) != _RAW_HEADER.size:
            raise ValidationError("raw frame file too short for header")
        w, h = _RAW_HEADER.unpack(head)
        data = f.read()
    if len(data) != w * h * 3:
        raise ValidationError(f"raw frame payload has {len(data)} bytes, expected {w * h * 3}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


def save_clip_dir(clip: Clip, directory) -> list:
    """Write numbered PNG frames; return the manifest lines (one per frame)."""
    import os

    os.makedirs(directory, exist_ok=True)
    lines = []
    for k in range(len(clip)):
        name = f"frame_{k:03d}.png"
        save_png(clip.frames[k], os.path.join(directory, name))
        lines.append(f"{clip.pathway} {k} {name}")
    return lines
