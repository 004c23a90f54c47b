"""Quality regression: fusion projections plus a two-layer head.

Per clip the fused feature vector passes through a 128-unit rectified layer
and a single output neuron; the point cloud score is the mean of its clip
scores. Training minimizes MSE on the point-cloud score with Adam, updating
the head and both fusion projections (the extracted features themselves are
fixed inputs). Everything is plain float64 numpy with hand-written
gradients, deterministic for a given seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import FeatureFileError, TrainingDivergedError, ValidationError
from .features import (DEFAULT_ALIGNED_DIM, SPATIAL_DIM, TEMPORAL_DIM,
                       FusionWeights)
from .seeding import rng_for

HIDDEN_UNITS = 128
DIVERGENCE_FACTOR = 1e6

OQAM_MAGIC = b"OQAM"
OQAM_VERSION = 1


@dataclass(frozen=True)
class RegressionHead:
    """Two fully-connected layers of 128 and 1 units with a rectifier between."""

    w1: np.ndarray   # (128, 2 * aligned)
    b1: np.ndarray   # (128,)
    w2: np.ndarray   # (1, 128)
    b2: np.ndarray   # (1,)

    def __post_init__(self):
        w1 = np.asarray(self.w1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        w2 = np.asarray(self.w2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if w1.ndim != 2 or w1.shape[0] != HIDDEN_UNITS:
            raise ValidationError(f"layer1 must be ({HIDDEN_UNITS}, 2*aligned), got {w1.shape}")
        if b1.shape != (HIDDEN_UNITS,) or w2.shape != (1, HIDDEN_UNITS) or b2.shape != (1,):
            raise ValidationError("head layer shapes are inconsistent")
        for arr in (w1, b1, w2, b2):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("head parameters must be finite")
        for name, arr in (("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)):
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class QualityScore:
    """Per-clip scores and their arithmetic mean."""

    per_clip: tuple
    overall: float


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 5e-5
    lr_decay: float = 0.9
    lr_decay_every: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.lr_decay_every < 1:
            raise ValidationError("batch_size, epochs and lr_decay_every must be positive")
        for name in ("learning_rate", "lr_decay", "beta1", "beta2", "epsilon"):
            v = getattr(self, name)
            if not (v > 0.0 and np.isfinite(v)):
                raise ValidationError(f"{name} must be positive and finite, got {v!r}")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_every)


@dataclass
class TrainResult:
    weights: FusionWeights
    head: RegressionHead
    epoch_losses: list
    epoch_lrs: list

    def loss_curve_csv(self) -> str:
        lines = ["epoch,lr,loss"]
        for e, (lr, loss) in enumerate(zip(self.epoch_lrs, self.epoch_losses)):
            lines.append(f"{e},{lr:.6g},{loss:.6g}")
        return "\n".join(lines) + "\n"


def predict_clip(fused: np.ndarray, head: RegressionHead) -> float:
    """Score one clip from its fused feature vector."""
    f = np.asarray(fused, dtype=np.float64)
    if f.shape != (head.w1.shape[1],):
        raise ValidationError(f"fused features must be ({head.w1.shape[1]},), got {f.shape}")
    h = np.maximum(head.w1 @ f + head.b1, 0.0)
    return float((head.w2 @ h)[0] + head.b2[0])


def predict_pointcloud(clip_scores) -> QualityScore:
    """Average the clip scores into the overall point-cloud score."""
    scores = tuple(float(s) for s in clip_scores)
    if not scores:
        raise ValidationError("need at least one clip score")
    return QualityScore(per_clip=scores, overall=float(np.mean(scores)))


def mse_loss(predicted, labels) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    l = np.asarray(labels, dtype=np.float64)
    if p.shape != l.shape or p.ndim != 1 or p.size < 1:
        raise ValidationError(f"predicted and labels must be equal-length vectors, "
                              f"got {p.shape} and {l.shape}")
    return float(np.mean((l - p) ** 2))


def _glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_params(spatial_dim: int = SPATIAL_DIM, temporal_dim: int = TEMPORAL_DIM,
                aligned_dim: int = DEFAULT_ALIGNED_DIM, seed: int = 0):
    """Seeded symmetric-uniform initialization; biases zero."""
    rng = rng_for(seed, "init")
    ws = _glorot_uniform(rng, aligned_dim, spatial_dim)
    wp = _glorot_uniform(rng, aligned_dim, temporal_dim)
    w1 = _glorot_uniform(rng, HIDDEN_UNITS, 2 * aligned_dim)
    w2 = _glorot_uniform(rng, 1, HIDDEN_UNITS)
    weights = FusionWeights(ws=ws, wp=wp)
    head = RegressionHead(w1=w1, b1=np.zeros(HIDDEN_UNITS), w2=w2, b2=np.zeros(1))
    return weights, head


class Adam:
    """Adaptive-moment optimizer over a list of parameter arrays."""

    def __init__(self, params, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.params = params
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1 ** self.t)
            v_hat = v / (1.0 - b2 ** self.t)
            p -= lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def _forward(spatial, temporal, ws, wp, w1, b1, w2, b2):
    """Batch forward pass. spatial: (n, m, Cs), temporal: (n, m, Ct)."""
    fused = np.concatenate([spatial @ ws.T, temporal @ wp.T], axis=-1)
    pre = fused @ w1.T + b1
    hidden = np.maximum(pre, 0.0)
    clip_scores = (hidden @ w2.T)[..., 0] + b2[0]
    overall = clip_scores.mean(axis=-1)
    return fused, pre, hidden, clip_scores, overall


def _check_training_arrays(spatial, temporal, labels):
    s = np.asarray(spatial, dtype=np.float64)
    t = np.asarray(temporal, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.ndim != 3 or t.ndim != 3:
        raise ValidationError(f"features must be (n, clips, dim) arrays, got {s.shape} and {t.shape}")
    if s.shape[:2] != t.shape[:2]:
        raise ValidationError(f"spatial and temporal disagree on (n, clips): {s.shape} vs {t.shape}")
    if y.shape != (s.shape[0],) or s.shape[0] < 1:
        raise ValidationError(f"labels must be ({s.shape[0]},), got {y.shape}")
    for name, arr in (("spatial", s), ("temporal", t), ("labels", y)):
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{name} contains non-finite values")
    return s, t, y


def _feature_moments(x: np.ndarray):
    flat = x.reshape(-1, x.shape[2])
    mu = flat.mean(axis=0)
    sd = flat.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return mu, sd


def train(spatial, temporal, labels, cfg: TrainConfig = TrainConfig(),
          init=None, standardize_inputs: bool = True,
          aligned_dim: int = DEFAULT_ALIGNED_DIM) -> TrainResult:
    """Fit fusion projections and regression head with minibatch Adam.

    spatial: (n, clips, Cs); temporal: (n, clips, Ct); labels: (n,).
    init: optional (FusionWeights, RegressionHead) warm start; otherwise a
    seeded fresh initialization. The loss curve records the full-dataset MSE
    after each epoch.

    With standardize_inputs the optimizer runs in per-coordinate whitened
    feature space, which conditions the adaptive steps evenly across the
    heterogeneous feature scales. Whitening is a pure reparameterization of
    the same architecture (a diagonal rescaling of each projection plus an
    offset folded into the first-layer bias), so the returned parameters are
    always expressed in raw-feature space and exactly reproduce the trained
    function on unstandardized inputs.
    """
    s, t, y = _check_training_arrays(spatial, temporal, labels)
    n = s.shape[0]
    m = s.shape[1]
    if standardize_inputs:
        mu_s, sd_s = _feature_moments(s)
        mu_t, sd_t = _feature_moments(t)
        s = (s - mu_s) / sd_s
        t = (t - mu_t) / sd_t
    if init is None:
        # Fresh initialization is drawn in the training (possibly whitened)
        # coordinates, where the symmetric-uniform scheme is calibrated.
        weights, head = init_params(s.shape[2], t.shape[2], aligned_dim, seed=cfg.seed)
        ws = weights.ws.copy()
        wp = weights.wp.copy()
        w1, b1 = head.w1.copy(), head.b1.copy()
        w2, b2 = head.w2.copy(), head.b2.copy()
    else:
        weights, head = init
        ws = weights.ws.copy()
        wp = weights.wp.copy()
        w1, b1 = head.w1.copy(), head.b1.copy()
        w2, b2 = head.w2.copy(), head.b2.copy()
        if standardize_inputs:
            # raw-space warm start -> whitened coordinates
            b1 = b1 + w1 @ np.concatenate([ws @ mu_s, wp @ mu_t])
            ws = ws * sd_s
            wp = wp * sd_t
    if ws.shape[1] != s.shape[2] or wp.shape[1] != t.shape[2]:
        raise ValidationError("initial weights disagree with feature dimensions")
    if w1.shape[1] != 2 * ws.shape[0]:
        raise ValidationError("head width disagrees with fusion output width")

    params = [ws, wp, w1, b1, w2, b2]
    opt = Adam(params, cfg.beta1, cfg.beta2, cfg.epsilon)
    shuffle_rng = rng_for(cfg.seed, "epoch-shuffle")

    initial_loss = mse_loss(_forward(s, t, *params)[4], y)
    guard = max(DIVERGENCE_FACTOR * initial_loss, DIVERGENCE_FACTOR)

    epoch_losses = []
    epoch_lrs = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            sb, tb, yb = s[idx], t[idx], y[idx]
            fused, pre, hidden, _, overall = _forward(sb, tb, *params)

            d_overall = 2.0 * (overall - yb) / idx.size
            d_clip = np.repeat(d_overall[:, None], m, axis=1) / m
            g_w2 = np.einsum("nm,nmh->h", d_clip, hidden)[None, :]
            g_b2 = np.array([d_clip.sum()])
            d_hidden = d_clip[:, :, None] * w2[0]
            d_pre = np.where(pre > 0.0, d_hidden, 0.0)
            g_w1 = np.einsum("nmh,nmf->hf", d_pre, fused)
            g_b1 = d_pre.sum(axis=(0, 1))
            d_fused = d_pre @ w1
            aligned = ws.shape[0]
            g_ws = np.einsum("nmc,nms->cs", d_fused[..., :aligned], sb)
            g_wp = np.einsum("nmc,nms->cs", d_fused[..., aligned:], tb)

            opt.step([g_ws, g_wp, g_w1, g_b1, g_w2, g_b2], lr)

        loss = mse_loss(_forward(s, t, *params)[4], y)
        if not np.isfinite(loss) or loss > guard:
            raise TrainingDivergedError(epoch=epoch, loss=loss)
        epoch_losses.append(loss)
        epoch_lrs.append(lr)

    if standardize_inputs:
        # whitened coordinates -> raw-space parameters
        ws = ws / sd_s
        wp = wp / sd_t
        b1 = b1 - w1 @ np.concatenate([ws @ mu_s, wp @ mu_t])
    return TrainResult(weights=FusionWeights(ws=ws, wp=wp),
                       head=RegressionHead(w1=w1, b1=b1, w2=w2, b2=b2),
                       epoch_losses=epoch_losses, epoch_lrs=epoch_lrs)


def loss_gradients(spatial, temporal, labels, weights: FusionWeights, head: RegressionHead):
    """Analytic gradients of the full-dataset MSE with respect to every
    parameter, as (g_ws, g_wp, g_w1, g_b1, g_w2, g_b2)."""
    s, t, y = _check_training_arrays(spatial, temporal, labels)
    m = s.shape[1]
    params = [weights.ws, weights.wp, head.w1, head.b1, head.w2, head.b2]
    fused, pre, hidden, _, overall = _forward(s, t, *params)
    d_overall = 2.0 * (overall - y) / y.size
    d_clip = np.repeat(d_overall[:, None], m, axis=1) / m
    g_w2 = np.einsum("nm,nmh->h", d_clip, hidden)[None, :]
    g_b2 = np.array([d_clip.sum()])
    d_hidden = d_clip[:, :, None] * head.w2[0]
    d_pre = np.where(pre > 0.0, d_hidden, 0.0)
    g_w1 = np.einsum("nmh,nmf->hf", d_pre, fused)
    g_b1 = d_pre.sum(axis=(0, 1))
    d_fused = d_pre @ head.w1
    aligned = weights.ws.shape[0]
    g_ws = np.einsum("nmc,nms->cs", d_fused[..., :aligned], s)
    g_wp = np.einsum("nmc,nms->cs", d_fused[..., aligned:], t)
    return g_ws, g_wp, g_w1, g_b1, g_w2, g_b2


def batch_predict(spatial, temporal, weights: FusionWeights, head: RegressionHead) -> np.ndarray:
    """Overall scores for (n, clips, dim) feature arrays."""
    s = np.asarray(spatial, dtype=np.float64)
    t = np.asarray(temporal, dtype=np.float64)
    params = [weights.ws, weights.wp, head.w1, head.b1, head.w2, head.b2]
    return _forward(s, t, *params)[4]


class VideoQualityRegressor(BaseEstimator, RegressorMixin):
    """Estimator mapping per-clip feature blocks to quality scores.

    X has shape (n_samples, n_clips, spatial_dim + temporal_dim): each row
    concatenates the spatial and temporal feature vectors of one clip.
    fit learns the fusion projections and the regression head; predict
    returns the per-cloud scores.
    """

    def __init__(self, spatial_dim: int = SPATIAL_DIM, temporal_dim: int = TEMPORAL_DIM,
                 aligned_dim: int = DEFAULT_ALIGNED_DIM, batch_size: int = 32,
                 epochs: int = 50, learning_rate: float = 5e-5, lr_decay: float = 0.9,
                 lr_decay_every: int = 10, seed: int = 0, standardize: bool = True):
        self.spatial_dim = spatial_dim
        self.temporal_dim = temporal_dim
        self.aligned_dim = aligned_dim
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.lr_decay_every = lr_decay_every
        self.seed = seed
        self.standardize = standardize

    def _split(self, X):
        X = np.asarray(X, dtype=np.float64)
        want = self.spatial_dim + self.temporal_dim
        if X.ndim != 3 or X.shape[2] != want:
            raise ValidationError(
                f"X must be (n_samples, n_clips, {want}), got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("X contains non-finite values")
        return X[:, :, :self.spatial_dim], X[:, :, self.spatial_dim:]

    def _train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs,
                           learning_rate=self.learning_rate, lr_decay=self.lr_decay,
                           lr_decay_every=self.lr_decay_every, seed=self.seed)

    def fit(self, X, y):
        s, t = self._split(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        result = train(s, t, y, self._train_config(),
                       standardize_inputs=self.standardize,
                       aligned_dim=self.aligned_dim)
        self.fusion_weights_ = result.weights
        self.head_ = result.head
        self.loss_curve_ = list(result.epoch_losses)
        self.n_features_in_ = X.shape[2] if hasattr(X, "shape") else None
        return self

    def predict(self, X):
        if not hasattr(self, "head_"):
            raise NotFittedError("fit must be called before predict")
        s, t = self._split(X)
        return batch_predict(s, t, self.fusion_weights_, self.head_)


def _pack_f32(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def save_checkpoint(path, weights: FusionWeights, head: RegressionHead) -> None:
    """OQAM checkpoint: magic, version u16 LE, Cs/Ct/aligned u32 LE, then
    ws, wp, w1, b1, w2, b2 as float32 LE arrays."""
    cs = weights.ws.shape[1]
    ct = weights.wp.shape[1]
    cp = weights.aligned_dim
    with open(path, "wb") as f:
        f.write(OQAM_MAGIC)
        f.write(struct.pack("<HIII", OQAM_VERSION, cs, ct, cp))
        for arr in (weights.ws, weights.wp, head.w1, head.b1, head.w2, head.b2):
            f.write(_pack_f32(arr))


def load_checkpoint(path):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 18 or data[:4] != OQAM_MAGIC:
        raise FeatureFileError(f"{path}: not an OQAM checkpoint")
    version, cs, ct, cp = struct.unpack_from("<HIII", data, 4)
    if version != OQAM_VERSION:
        raise FeatureFileError(f"{path}: unsupported OQAM version {version}")
    shapes = [(cp, cs), (cp, ct), (HIDDEN_UNITS, 2 * cp), (HIDDEN_UNITS,),
              (1, HIDDEN_UNITS), (1,)]
    offset = 18
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        if len(data) < offset + 4 * count:
            raise FeatureFileError(f"{path}: truncated checkpoint payload")
        arrays.append(np.frombuffer(data, dtype="<f4", count=count,
                                    offset=offset).astype(np.float64).reshape(shape))
        offset += 4 * count
    if len(data) != offset:
        raise FeatureFileError(f"{path}: {len(data) - offset} trailing bytes")
    weights = FusionWeights(ws=arrays[0], wp=arrays[1])
    head = RegressionHead(w1=arrays[2], b1=arrays[3], w2=arrays[4], b2=arrays[5])
    return weights, head
