"""Siamese representation learning on feature vectors.

Two augmented views of each row are pushed through a shared encoder; a
predictor head on one side chases the other side's embedding, which is held
constant during differentiation (stop-gradient). The symmetric objective is
the mean negative cosine similarity, bounded in [-1, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .data import BadMagicError, FeatureDataset, FeatureFileError, TruncatedFileError
from .mlp import (
    DenseLayer,
    backward,
    embed,
    forward_cached,
    init_layers,
    sgd_update,
    zero_velocity,
)
from .util import seeded_rng

NET_MAGIC = b"PSN1"


class DegenerateEmbeddingError(ValueError):
    """An embedding or prediction collapsed to the zero vector."""


@dataclass(frozen=True)
class NetConfig:
    """Encoder / predictor widths.

    encoder: input -> *encoder_hidden -> embed_dim (tanh between layers,
    linear output). predictor: embed_dim -> *predictor_hidden -> embed_dim.
    An embed_dim of None means "no encoder": the supervised trainer then
    degenerates to a bare linear classifier on raw features.
    """

    encoder_hidden: tuple = (64,)
    embed_dim: int | None = 32
    predictor_hidden: tuple = (16,)

    def encoder_dims(self, input_dim: int) -> list[int]:
        if self.embed_dim is None:
            return []
        return [input_dim, *self.encoder_hidden, self.embed_dim]

    def predictor_dims(self) -> list[int]:
        if self.embed_dim is None:
            raise ValueError("predictor requires an embed_dim")
        return [self.embed_dim, *self.predictor_hidden, self.embed_dim]


@dataclass(frozen=True)
class AugmentConfig:
    """Vector-view augmentation: global scale jitter, additive Gaussian
    noise, and random coordinate dropout."""

    noise_sigma: float = 0.4
    scale_range: tuple = (0.8, 1.2)
    drop_prob: float = 0.1

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValueError("scale_range must satisfy 0 < lo <= hi")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if not (0 <= self.drop_prob < 1):
            raise ValueError("drop_prob must lie in [0, 1)")


@dataclass(frozen=True)
class SiamTrainConfig:
    epochs: int = 400
    batch_size: int = 64
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        # lr = 0 is allowed so the zero-step contract stays testable
        if self.base_lr < 0:
            raise ValueError("base_lr must be nonnegative")
        if not (0 <= self.momentum < 1):
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


@dataclass(eq=False)
class SiamNet:
    """Shared encoder plus predictor head; parameters are 64-bit."""

    encoder: list[DenseLayer]
    predictor: list[DenseLayer]
    epoch_losses: tuple = field(default_factory=tuple)

    @property
    def input_dim(self) -> int:
        return self.encoder[0].weights.shape[1]

    @property
    def embed_dim(self) -> int:
        return self.encoder[-1].weights.shape[0]


@dataclass(eq=False)
class ViewPair:
    """Both augmented views with their embeddings and predictions."""

    x1: np.ndarray
    x2: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    p1: np.ndarray
    p2: np.ndarray


def init_siamnet(input_dim: int, config: NetConfig, seed: int = 0) -> SiamNet:
    rng = seeded_rng(seed, "siam-init")
    encoder = init_layers(config.encoder_dims(input_dim), rng)
    predictor = init_layers(config.predictor_dims(), rng)
    return SiamNet(encoder=encoder, predictor=predictor)


def augment_batch(x, config: AugmentConfig, rng) -> np.ndarray:
    """Augment each row: y = mask * (s*x + noise).

    Per row, s ~ U[lo, hi]; noise ~ N(0, sigma^2 I); mask keeps each
    coordinate with probability 1 - drop_prob. Draw order is fixed
    (scale, noise, mask) so results are reproducible from the rng state.
    """
    x = np.asarray(x, dtype=np.float64)
    batch = np.atleast_2d(x)
    lo, hi = config.scale_range
    scale = rng.uniform(lo, hi, size=(batch.shape[0], 1))
    out = scale * batch
    if config.noise_sigma > 0:
        out = out + config.noise_sigma * rng.standard_normal(batch.shape)
    else:
        out = out.copy()
    if config.drop_prob > 0:
        mask = rng.random(batch.shape) >= config.drop_prob
        out *= mask
    return out if x.ndim == 2 else out[0]


def augment_vector(x, config: AugmentConfig, rng) -> np.ndarray:
    """Single-vector form of `augment_batch`."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("augment_vector expects a 1-D vector")
    if not np.isfinite(x).all():
        raise ValueError("input vector must be finite")
    return augment_batch(x, config, rng)


def siam_forward(net: SiamNet, x1, x2) -> ViewPair:
    """Run both views through the shared encoder and the predictor."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    squeeze = x1.ndim == 1
    b1, b2 = np.atleast_2d(x1), np.atleast_2d(x2)
    if b1.shape != b2.shape or b1.shape[1] != net.input_dim:
        raise ValueError("view shapes must match the encoder input dimension")
    z1, z2 = embed(net.encoder, b1), embed(net.encoder, b2)
    p1, p2 = embed(net.predictor, z1), embed(net.predictor, z2)
    if squeeze:
        return ViewPair(x1, x2, z1[0], z2[0], p1[0], p2[0])
    return ViewPair(b1, b2, z1, z2, p1, p2)


def _norms(v, name):
    n = np.linalg.norm(v, axis=1, keepdims=True)
    if (n == 0).any():
        raise DegenerateEmbeddingError(f"zero-norm {name}; embeddings collapsed to 0")
    return n


def siam_loss(pair: ViewPair) -> float:
    """Symmetric negative cosine loss, averaged over the batch.

    The z vectors enter as constants: gradient flows through p1/p2 only.
    """
    p1, p2 = np.atleast_2d(pair.p1), np.atleast_2d(pair.p2)
    z1, z2 = np.atleast_2d(pair.z1), np.atleast_2d(pair.z2)
    p1n, p2n = _norms(p1, "prediction"), _norms(p2, "prediction")
    z1n, z2n = _norms(z1, "embedding"), _norms(z2, "embedding")
    cos12 = ((p1 / p1n) * (z2 / z2n)).sum(axis=1)
    cos21 = ((p2 / p2n) * (z1 / z1n)).sum(axis=1)
    return float((-0.5 * cos12 - 0.5 * cos21).mean())


def _cosine_grad(p, z_const):
    """Row-wise d/dp of cos(p, z) with z held constant."""
    pn = _norms(p, "prediction")
    zn = _norms(z_const, "embedding")
    ph, zh = p / pn, z_const / zn
    cos = (ph * zh).sum(axis=1, keepdims=True)
    return (zh - cos * ph) / pn


def _loss_and_grads(net: SiamNet, x1, x2):
    x1, x2 = np.atleast_2d(x1), np.atleast_2d(x2)
    z1, enc_cache1 = forward_cached(net.encoder, x1)
    z2, enc_cache2 = forward_cached(net.encoder, x2)
    p1, pred_cache1 = forward_cached(net.predictor, z1)
    p2, pred_cache2 = forward_cached(net.predictor, z2)
    pair = ViewPair(x1, x2, z1, z2, p1, p2)
    loss = siam_loss(pair)
    b = x1.shape[0]
    # stop-gradient: targets z2/z1 are constants, so each branch backprops
    # only through its own prediction path
    dp1 = (-0.5 / b) * _cosine_grad(p1, z2)
    dp2 = (-0.5 / b) * _cosine_grad(p2, z1)
    pred_g1, dz1 = backward(net.predictor, pred_cache1, dp1)
    pred_g2, dz2 = backward(net.predictor, pred_cache2, dp2)
    enc_g1, _ = backward(net.encoder, enc_cache1, dz1)
    enc_g2, _ = backward(net.encoder, enc_cache2, dz2)
    enc_grads = [(a[0] + b2[0], a[1] + b2[1]) for a, b2 in zip(enc_g1, enc_g2)]
    pred_grads = [(a[0] + b2[0], a[1] + b2[1]) for a, b2 in zip(pred_g1, pred_g2)]
    return loss, {"encoder": enc_grads, "predictor": pred_grads}


def siam_gradients(net: SiamNet, x1, x2) -> dict:
    """Analytic parameter gradients of the stop-gradient loss.

    Returns {"encoder": [(dW, db), ...], "predictor": [(dW, db), ...]}.
    """
    _, grads = _loss_and_grads(net, x1, x2)
    return grads


def train_simsiam(
    dataset: FeatureDataset,
    net_config: NetConfig = NetConfig(),
    aug_config: AugmentConfig = AugmentConfig(),
    train_config: SiamTrainConfig = SiamTrainConfig(),
) -> SiamNet:
    """SGD-with-momentum training of the siamese objective; labels unused.

    Per epoch the rows are reshuffled and every minibatch contributes two
    freshly augmented views. Deterministic in the config seed; the returned
    net records its mean loss per epoch.
    """
    x = dataset.features.astype(np.float64)
    n = x.shape[0]
    cfg = train_config
    net = init_siamnet(x.shape[1], net_config, seed=cfg.seed)
    vel_enc = zero_velocity(net.encoder)
    vel_pred = zero_velocity(net.predictor)
    batch = min(cfg.batch_size, n)
    epoch_losses = []
    for epoch in range(cfg.epochs):
        rng = seeded_rng(cfg.seed, "siam-epoch", epoch)
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, batch):
            rows = x[perm[start : start + batch]]
            v1 = augment_batch(rows, aug_config, rng)
            v2 = augment_batch(rows, aug_config, rng)
            loss, grads = _loss_and_grads(net, v1, v2)
            sgd_update(net.encoder, grads["encoder"], vel_enc,
                       cfg.base_lr, cfg.momentum, cfg.weight_decay)
            sgd_update(net.predictor, grads["predictor"], vel_pred,
                       cfg.base_lr, cfg.momentum, cfg.weight_decay)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
    net.epoch_losses = tuple(epoch_losses)
    return net


def encode(net: SiamNet, features) -> np.ndarray:
    """Frozen-encoder embeddings (the predictor never runs at inference)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError("features must be 2-D with the encoder input dimension")
    return embed(net.encoder, x)


def embedding_spread(embeddings) -> float:
    """Mean per-dimension std of L2-normalized embeddings.

    Collapse diagnostic: healthy embeddings score well above 0.1/sqrt(e),
    a collapsed net drives this toward 0.
    """
    z = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if (norms == 0).any():
        raise DegenerateEmbeddingError("zero-norm embedding in spread check")
    return float((z / norms).std(axis=0).mean())


def save_net(layers, path) -> None:
    """Persist a dense stack: "PSN1" | u32 L | per layer u32 rows, u32 cols,
    float64 weights row-major, float64 biases."""
    with open(path, "wb") as fh:
        fh.write(NET_MAGIC)
        fh.write(struct.pack("<I", len(layers)))
        for layer in layers:
            rows, cols = layer.weights.shape
            fh.write(struct.pack("<II", rows, cols))
            fh.write(layer.weights.astype("<f8", copy=False).tobytes())
            fh.write(layer.bias.astype("<f8", copy=False).tobytes())


def load_net(path) -> list[DenseLayer]:
    """Inverse of `save_net`; bit-exact round trip."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise TruncatedFileError(f"{path}: shorter than the 8-byte header")
    if blob[:4] != NET_MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}, expected {NET_MAGIC!r}")
    (count,) = struct.unpack_from("<I", blob, 4)
    offset = 8
    layers = []
    for _ in range(count):
        if offset + 8 > len(blob):
            raise TruncatedFileError(f"{path}: truncated layer header")
        rows, cols = struct.unpack_from("<II", blob, offset)
        offset += 8
        need = 8 * rows * cols + 8 * rows
        if offset + need > len(blob):
            raise TruncatedFileError(f"{path}: truncated layer payload")
        weights = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=offset)
        offset += 8 * rows * cols
        bias = np.frombuffer(blob, dtype="<f8", count=rows, offset=offset)
        offset += 8 * rows
        layers.append(DenseLayer(weights.reshape(rows, cols).copy(), bias.copy()))
    if offset != len(blob):
        raise FeatureFileError(f"{path}: {len(blob) - offset} trailing bytes")
    return layers
