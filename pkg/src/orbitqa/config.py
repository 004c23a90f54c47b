"""Flat key=value pipeline configuration.

Every key has a default; a config file only lists overrides. Lines are
"key = value" with '#' comments. The canonical serialization of the
effective values is hashed into run manifests so reruns are verifiable.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields

from .errors import ValidationError
from .model import TrainConfig
from .render import RenderConfig
from .trajectory import PATHWAYS


@dataclass
class PipelineConfig:
    # rendering
    width: int = 1920
    height: int = 1080
    vertical_fov: float = 60.0
    splat_radius: int = 1
    background: tuple = (255, 255, 255)
    near: float = None
    far: float = None
    # capture geometry
    step_deg: float = 12.0
    kappa: float = 2.5
    pathways: str = "ABCD"
    # key frames
    keyframe_mode: str = "fixed"
    keyframe_index: int = 7
    vmd_objective: str = "max_min"
    # features
    extractor: str = "reference"
    import_dir: str = ""
    crop_mode: str = "center"
    aligned_dim: int = 32
    # training
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 5e-5
    lr_decay: float = 0.9
    lr_decay_every: int = 10
    # evaluation / run
    k: int = 5
    seed: int = 0
    out: str = "orbitqa_out"

    def validate(self) -> "PipelineConfig":
        if not self.pathways or any(p not in PATHWAYS for p in self.pathways):
            raise ValidationError(f"pathways must be a non-empty subset of ABCD, got {self.pathways!r}")
        if len(set(self.pathways)) != len(self.pathways):
            raise ValidationError(f"pathways contains duplicates: {self.pathways!r}")
        if self.keyframe_mode not in ("fixed", "vmd"):
            raise ValidationError(f"keyframe_mode must be fixed|vmd, got {self.keyframe_mode!r}")
        if self.extractor not in ("reference", "import"):
            raise ValidationError(f"extractor must be reference|import, got {self.extractor!r}")
        if self.extractor == "import" and not self.import_dir:
            raise ValidationError("extractor=import requires import_dir")
        if self.crop_mode not in ("center", "random"):
            raise ValidationError(f"crop_mode must be center|random, got {self.crop_mode!r}")
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.aligned_dim < 1:
            raise ValidationError(f"aligned_dim must be >= 1, got {self.aligned_dim}")
        n_frames = 360.0 / self.step_deg if self.step_deg else 0
        if self.keyframe_mode == "fixed" and not 0 <= self.keyframe_index < n_frames:
            raise ValidationError(
                f"keyframe_index {self.keyframe_index} out of range for {self.step_deg} degree steps")
        self.render_config()
        self.train_config()
        return self

    def render_config(self) -> RenderConfig:
        return RenderConfig(width=self.width, height=self.height,
                            vertical_fov=self.vertical_fov, splat_radius=self.splat_radius,
                            background=self.background, near=self.near, far=self.far)

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs,
                           learning_rate=self.learning_rate, lr_decay=self.lr_decay,
                           lr_decay_every=self.lr_decay_every, seed=self.seed)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "background":
                v = ",".join(str(c) for c in v)
            elif v is None:
                v = "auto"
            elif isinstance(v, float):
                v = f"{v:.17g}"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def feature_hash(self) -> str:
        """Hash of only the keys that change extracted features, so feature
        caches survive changes to training/evaluation settings."""
        keep = ("width", "height", "vertical_fov", "splat_radius", "background",
                "near", "far", "step_deg", "kappa", "pathways", "keyframe_mode",
                "keyframe_index", "vmd_objective", "extractor", "import_dir",
                "crop_mode", "seed")
        text = "\n".join(line for line in self.to_text().splitlines()
                         if line.split(" = ")[0] in keep)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


_INT_KEYS = {"width", "height", "splat_radius", "keyframe_index", "aligned_dim",
             "batch_size", "epochs", "lr_decay_every", "k", "seed"}
_FLOAT_KEYS = {"vertical_fov", "step_deg", "kappa", "learning_rate", "lr_decay"}
_OPT_FLOAT_KEYS = {"near", "far"}
_STR_KEYS = {"pathways", "keyframe_mode", "vmd_objective", "extractor",
             "import_dir", "crop_mode", "out"}


def parse_config(text: str) -> PipelineConfig:
    cfg = PipelineConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                setattr(cfg, key, int(value))
            elif key in _FLOAT_KEYS:
                setattr(cfg, key, float(value))
            elif key in _OPT_FLOAT_KEYS:
                setattr(cfg, key, None if value in ("auto", "none", "") else float(value))
            elif key in _STR_KEYS:
                setattr(cfg, key, value)
            elif key == "background":
                parts = [int(c) for c in value.replace(",", " ").split()]
                if len(parts) != 3:
                    raise ValueError("need 3 channels")
                cfg.background = tuple(parts)
            else:
                raise ValidationError(f"config line {lineno}: unknown key {key!r}")
        except ValidationError:
            raise
        except ValueError as exc:
            raise ValidationError(f"config line {lineno}: bad value for {key!r}: {exc}") from None
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())
