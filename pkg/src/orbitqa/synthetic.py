"""Procedural point clouds and distortions for self-contained studies.

Six colored surface shapes plus additive geometric Gaussian noise graded as
a fraction of the bounding radius, with a pseudo-MOS of 5 - level. This is
the stand-in corpus for experiments that would otherwise need a licensed
subjective database.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .errors import ValidationError
from .pointcloud import PointCloud, bounding_radius, mean_center, save_ply
from .seeding import rng_for

SHAPES = ("sphere", "cube", "torus", "cone", "cylinder", "blob")
NOISE_LEVELS = (0.0, 0.005, 0.01, 0.02, 0.04)


def _hsv_to_rgb(h, s, v):
    h = np.mod(h, 1.0) * 6.0
    i = np.floor(h).astype(int)
    f = h - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    table = np.stack([
        np.stack([v, t, p], axis=-1),
        np.stack([q, v, p], axis=-1),
        np.stack([p, v, t], axis=-1),
        np.stack([p, q, v], axis=-1),
        np.stack([t, p, v], axis=-1),
        np.stack([v, p, q], axis=-1),
    ])
    return table[i % 6, np.arange(h.size)]


def _paint(points: np.ndarray) -> np.ndarray:
    # Smooth angular hue ramp with mild height-driven value variation.
    x, y, z = points.T
    hue = (np.arctan2(y, x) / (2.0 * np.pi)) + 0.15 * np.sin(3.0 * z)
    span = z.max() - z.min()
    value = 0.65 + 0.3 * (z - z.min()) / (span if span > 0 else 1.0)
    sat = np.full_like(hue, 0.8)
    rgb = _hsv_to_rgb(hue, sat, value)
    return np.clip(rgb, 0.0, 1.0)


def make_shape(name: str, n_points: int = 20000, seed: int = 0) -> PointCloud:
    """Sample one of the reference surfaces with procedural colors."""
    if name not in SHAPES:
        raise ValidationError(f"shape must be one of {SHAPES}, got {name!r}")
    if n_points < 1:
        raise ValidationError("n_points must be positive")
    rng = rng_for(seed, "shape", name)
    n = n_points
    if name == "sphere":
        v = rng.normal(size=(n, 3))
        pts = v / np.linalg.norm(v, axis=1, keepdims=True)
    elif name == "cube":
        face = rng.integers(0, 6, size=n)
        uv = rng.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.empty((n, 3))
        axis = face % 3
        side = np.where(face < 3, 1.0, -1.0)
        for a in range(3):
            sel = axis == a
            others = [o for o in range(3) if o != a]
            pts[sel, a] = side[sel]
            pts[sel, others[0]] = uv[sel, 0]
            pts[sel, others[1]] = uv[sel, 1]
    elif name == "torus":
        u = rng.uniform(0.0, 2.0 * np.pi, size=n)
        w = rng.uniform(0.0, 2.0 * np.pi, size=n)
        r_major, r_minor = 1.0, 0.35
        pts = np.stack([(r_major + r_minor * np.cos(w)) * np.cos(u),
                        (r_major + r_minor * np.cos(w)) * np.sin(u),
                        r_minor * np.sin(w)], axis=1)
    elif name == "cone":
        h = np.sqrt(rng.uniform(0.0, 1.0, size=n))
        ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
        pts = np.stack([h * np.cos(ang), h * np.sin(ang), 1.0 - h], axis=1)
    elif name == "cylinder":
        ang = rng.uniform(0.0, 2.0 * np.pi, size=n)
        z = rng.uniform(-1.0, 1.0, size=n)
        pts = np.stack([np.cos(ang), np.sin(ang), z], axis=1)
    else:  # blob: a lumpy star-shaped surface (randomly bumped sphere)
        u = rng.normal(size=(n, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        bump_dirs = rng.normal(size=(6, 3))
        bump_dirs /= np.linalg.norm(bump_dirs, axis=1, keepdims=True)
        amps = rng.uniform(0.1, 0.3, size=6)
        sharp = rng.uniform(2.0, 6.0, size=6)
        r = 1.0 + (amps * np.exp(sharp * (u @ bump_dirs.T - 1.0))).sum(axis=1)
        pts = r[:, None] * u
    return PointCloud(positions=pts, colors=_paint(pts))


def add_geometric_noise(pc: PointCloud, sigma_fraction: float, seed: int = 0) -> PointCloud:
    """Additive Gaussian position noise with sigma given as a fraction of the
    cloud's bounding radius. Colors are untouched."""
    if sigma_fraction < 0:
        raise ValidationError("sigma_fraction must be >= 0")
    if sigma_fraction == 0.0:
        return PointCloud(pc.positions.copy(), pc.colors.copy(),
                          has_native_color=pc.has_native_color)
    rng = rng_for(seed, "geom-noise")
    b = bounding_radius(pc, mean_center(pc))
    noisy = pc.positions + rng.normal(scale=sigma_fraction * b, size=pc.positions.shape)
    return PointCloud(noisy, pc.colors.copy(), has_native_color=pc.has_native_color)


def build_toy_dataset(directory, n_points: int = 20000, seed: int = 0,
                      shapes=SHAPES, levels=NOISE_LEVELS) -> str:
    """Write the toy corpus (shapes x noise levels) and its manifest.

    Pseudo-MOS is 5 - level_index; the content group is the shape name.
    Returns the manifest path.
    """
    os.makedirs(directory, exist_ok=True)
    rows = []
    for shape in shapes:
        base = make_shape(shape, n_points=n_points, seed=seed)
        for level, frac in enumerate(levels):
            distorted = add_geometric_noise(base, frac, seed=seed + 1000 * level)
            name = f"{shape}_l{level}.ply"
            save_ply(distorted, os.path.join(directory, name))
            rows.append((name, 5.0 - level, shape))
    manifest_path = os.path.join(directory, "manifest.csv")
    with open(manifest_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["path", "mos", "group"])
        for name, mos, group in rows:
            writer.writerow([name, f"{mos:g}", group])
    return manifest_path
