"""Key-frame selection: fixed index or viewpoint-max-distance.

The viewpoint-max-distance strategy picks one frame per clip so the chosen
camera positions are maximally spread. The default objective maximizes the
minimum pairwise distance among the selected viewpoints; maximizing the sum
of pairwise distances is available as an alternative. Ties resolve to the
lexicographically smallest index tuple.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_INDEX = 7

OBJECTIVES = ("max_min", "max_sum")


@dataclass(frozen=True)
class KeyframeSelection:
    """One frame index per clip plus the corresponding camera positions."""

    indices: tuple
    viewpoints: np.ndarray

    def __post_init__(self):
        vp = np.asarray(self.viewpoints, dtype=np.float64)
        if vp.shape != (len(self.indices), 3):
            raise ValidationError(
                f"viewpoints must be ({len(self.indices)}, 3), got {vp.shape}")
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(self, "viewpoints", vp)

    def manifest_line(self) -> str:
        return " ".join(str(i) for i in self.indices)


def select_fixed(index: int = DEFAULT_INDEX, n_clips: int = 4, n_frames: int = 30) -> tuple:
    """Use the same frame index in every clip."""
    if not 0 <= index < n_frames:
        raise ValidationError(f"keyframe index {index} out of range [0, {n_frames})")
    return (int(index),) * n_clips


def select_vmd(viewpoints, objective: str = "max_min") -> tuple:
    """One index per clip maximizing viewpoint spread.

    viewpoints: a sequence of (n_i, 3) position arrays, one per clip.
    Fully vectorized joint search over all index combinations; ties go to
    the lexicographically smallest tuple (the first maximizer in row-major
    order).
    """
    if objective not in OBJECTIVES:
        raise ValidationError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    vps = [np.asarray(v, dtype=np.float64) for v in viewpoints]
    if len(vps) < 2:
        raise ValidationError("need at least two clips to spread viewpoints")
    for v in vps:
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] == 0:
            raise ValidationError(f"each viewpoint list must be a non-empty (n, 3) array, got {v.shape}")
    m = len(vps)
    shape = tuple(v.shape[0] for v in vps)

    combined = None
    for a in range(m):
        for b in range(a + 1, m):
            d = np.linalg.norm(vps[a][:, None, :] - vps[b][None, :, :], axis=2)
            expand = [None] * m
            expand[a] = slice(None)
            expand[b] = slice(None)
            d = d[tuple(expand)]
            d = np.broadcast_to(d, shape)
            if combined is None:
                combined = d.astype(np.float64).copy()
            elif objective == "max_min":
                np.minimum(combined, d, out=combined)
            else:
                combined += d
    best = np.argmax(combined)
    return tuple(int(i) for i in np.unravel_index(best, shape))


def select_keyframes(trajectories, mode: str = "fixed", index: int = DEFAULT_INDEX,
                     objective: str = "max_min") -> KeyframeSelection:
    """Resolve a selection against concrete trajectories."""
    positions = [t.positions() for t in trajectories]
    if mode == "fixed":
        n_frames = min(len(p) for p in positions)
        indices = select_fixed(index, n_clips=len(positions), n_frames=n_frames)
    elif mode == "vmd":
        if len(positions) == 1:
            indices = (0,)
        else:
            indices = select_vmd(positions, objective=objective)
    else:
        raise ValidationError(f"mode must be 'fixed' or 'vmd', got {mode!r}")
    vps = np.stack([positions[i][indices[i]] for i in range(len(positions))])
    return KeyframeSelection(indices=indices, viewpoints=vps)
