"""Orbital camera pathways.

Four symmetric circular orbits around the cloud center at radius R:

    A: X^2 + Y^2 = R^2, Z = 0
    B: Y^2 + Z^2 = R^2, X = 0
    C: X^2 + Y^2 + Z^2 = R^2, X + Z = 0
    D: X^2 + Y^2 + Z^2 = R^2, X - Z = 0

All four are great circles, so stepping the parameter angle by a fixed
amount steps the subtended angle by exactly the same amount. Orbits start
at t=0 and run counter-clockwise in t; the up vector of each orbit is the
constant normal of its plane, which avoids roll discontinuities between
consecutive frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

PATHWAYS = ("A", "B", "C", "D")

DEFAULT_STEP_DEG = 12.0
DEFAULT_KAPPA = 2.5
DEFAULT_VERTICAL_FOV = 60.0

_SQ2 = math.sqrt(0.5)

# Center-relative unit-circle parameterizations, t in radians.
_PARAM = {
    "A": lambda c, s: (c, s, 0.0),
    "B": lambda c, s: (0.0, c, s),
    "C": lambda c, s: (c * _SQ2, s, -c * _SQ2),
    "D": lambda c, s: (c * _SQ2, s, c * _SQ2),
}

_UP = {
    "A": np.array([0.0, 0.0, 1.0]),
    "B": np.array([1.0, 0.0, 0.0]),
    "C": np.array([_SQ2, 0.0, _SQ2]),
    "D": np.array([_SQ2, 0.0, -_SQ2]),
}


@dataclass(frozen=True)
class CameraPose:
    """Camera position looking at a fixed target with a given up vector."""

    position: np.ndarray
    target: np.ndarray
    up: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    pathway: str
    radius: float
    poses: tuple

    def positions(self) -> np.ndarray:
        """(n, 3) array of camera positions in orbit order."""
        return np.stack([p.position for p in self.poses])

    def __len__(self) -> int:
        return len(self.poses)


def generate_pathway(pathway: str, center, radius: float,
                     step_deg: float = DEFAULT_STEP_DEG) -> Trajectory:
    """Poses at angles k*step_deg, k = 0..(360/step_deg - 1), on one orbit."""
    if pathway not in PATHWAYS:
        raise ValidationError(f"pathway must be one of {PATHWAYS}, got {pathway!r}")
    if not (radius > 0.0 and math.isfinite(radius)):
        raise ValidationError(f"radius must be positive and finite, got {radius!r}")
    if not (step_deg > 0.0 and math.isfinite(step_deg)):
        raise ValidationError(f"step_deg must be positive, got {step_deg!r}")
    n, rem = divmod(360.0, step_deg)
    if rem != 0.0:
        raise ValidationError(f"step_deg must divide 360 evenly, got {step_deg!r}")
    center = np.asarray(center, dtype=np.float64)
    if center.shape != (3,) or not np.all(np.isfinite(center)):
        raise ValidationError("center must be a finite 3-vector")

    param = _PARAM[pathway]
    up = _UP[pathway]
    poses = []
    for k in range(int(n)):
        t = math.radians(k * step_deg)
        unit = np.array(param(math.cos(t), math.sin(t)))
        poses.append(CameraPose(position=center + radius * unit, target=center, up=up))
    return Trajectory(pathway=pathway, radius=float(radius), poses=tuple(poses))


def build_sequence(center, radius: float, step_deg: float = DEFAULT_STEP_DEG,
                   pathways=PATHWAYS) -> list:
    """The ordered capture sequence: one trajectory per pathway (A, B, C, D)."""
    if not pathways:
        raise ValidationError("pathway subset must be non-empty")
    seen = set()
    for p in pathways:
        if p not in PATHWAYS:
            raise ValidationError(f"unknown pathway {p!r}")
        if p in seen:
            raise ValidationError(f"duplicate pathway {p!r}")
        seen.add(p)
    return [generate_pathway(p, center, radius, step_deg) for p in pathways]


def choose_radius(bounding_radius: float, kappa: float = DEFAULT_KAPPA,
                  vertical_fov_deg: float = DEFAULT_VERTICAL_FOV) -> float:
    """Viewing distance R = kappa * bounding_radius (kappa alone when the
    cloud is a single point).

    kappa must exceed 1/sin(half-FOV); smaller values put the bounding
    sphere outside the frustum so parts of the cloud could be clipped.
    """
    if bounding_radius < 0.0 or not math.isfinite(bounding_radius):
        raise ValidationError(f"bounding_radius must be >= 0, got {bounding_radius!r}")
    if not (0.0 < vertical_fov_deg < 180.0):
        raise ValidationError(f"vertical_fov_deg must be in (0, 180), got {vertical_fov_deg!r}")
    kappa_min = 1.0 / math.sin(math.radians(vertical_fov_deg) / 2.0)
    if kappa <= kappa_min:
        raise ValidationError(
            f"kappa={kappa!r} is <= {kappa_min:.6g}, the containment bound for a "
            f"{vertical_fov_deg:g} degree vertical FOV; the cloud may clip the frustum")
    if bounding_radius == 0.0:
        return float(kappa)
    return float(kappa * bounding_radius)


def trajectory_table(trajectories) -> str:
    """Plain-text audit table: pathway, frame index, position, up vector."""
    lines = ["# pathway k x y z ux uy uz"]
    for traj in trajectories:
        for k, pose in enumerate(traj.poses):
            x, y, z = pose.position
            ux, uy, uz = pose.up
            lines.append(f"{traj.pathway} {k} {x:.17g} {y:.17g} {z:.17g} "
                         f"{ux:.17g} {uy:.17g} {uz:.17g}")
    return "\n".join(lines) + "\n"


def parse_trajectory_table(text: str) -> dict:
    """Inverse of trajectory_table, as {pathway: (positions, ups)} arrays."""
    per_path = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValidationError(f"malformed trajectory line: {line!r}")
        pathway, k = parts[0], int(parts[1])
        vals = [float(v) for v in parts[2:]]
        per_path.setdefault(pathway, []).append((k, vals[:3], vals[3:]))
    out = {}
    for pathway, rows in per_path.items():
        rows.sort(key=lambda r: r[0])
        if [r[0] for r in rows] != list(range(len(rows))):
            raise ValidationError(f"trajectory table has gaps for pathway {pathway!r}")
        out[pathway] = (np.array([r[1] for r in rows]), np.array([r[2] for r in rows]))
    return out
