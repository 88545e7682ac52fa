"""Linear classifiers over frozen features.

The softmax probe is a single dense layer trained by minibatch SGD with
momentum; the one-vs-rest linear SVM is solved in the dual by coordinate
descent. Both are deterministic given their seeds, and trained models are
immutable for scoring purposes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mlp import (
    DenseLayer,
    backward,
    cosine_lr,
    embed,
    forward_cached,
    init_layers,
    sgd_update,
    zero_velocity,
)
from .siamese import NetConfig
from .util import seeded_rng


@dataclass(frozen=True)
class ProbeTrainConfig:
    epochs: int = 100
    batch_size: int | None = None  # None -> min(256, n)
    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    lr_schedule: str = "cosine"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.base_lr < 0:
            raise ValueError("base_lr must be nonnegative")
        if not (0 <= self.momentum < 1):
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError("lr_schedule must be 'cosine' or 'constant'")


@dataclass(eq=False)
class SoftmaxProbe:
    """Linear softmax classifier: logits = features @ weights.T + bias."""

    weights: np.ndarray  # (C, d)
    bias: np.ndarray     # (C,)
    num_classes: int
    dim: int
    epoch_losses: tuple = field(default_factory=tuple)

    def predict(self, features) -> np.ndarray:
        """Argmax class ids; ties resolve to the lower class id."""
        logits = _logits(self, features)
        return np.argmax(logits, axis=1)


@dataclass(eq=False)
class SvmOvrModel:
    """One binary soft-margin SVM per class (class k vs the rest)."""

    weights: np.ndarray   # (C, d)
    biases: np.ndarray    # (C,)
    reg_c: float
    present: np.ndarray   # (C,) bool; classes absent from training data


def _validate_features(x, what="features"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{what} must be a 2-D matrix")
    if not np.isfinite(x).all():
        raise ValueError(f"{what} must be finite")
    return x


def _resolve_classes(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValueError("labels must be 1-D")
    if labels.min(initial=0) < 0:
        raise ValueError("labels must be nonnegative")
    inferred = int(labels.max()) + 1 if labels.size else 0
    c = inferred if num_classes is None else int(num_classes)
    if inferred > c:
        raise ValueError("label exceeds num_classes")
    return labels, max(c, 2)


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _xent_and_dlogits(logits, labels):
    """Mean cross-entropy and its logit gradient, via log-sum-exp."""
    n = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = float((lse - logits[np.arange(n), labels]).mean())
    dlogits = _softmax(logits)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def _fit_softmax_stack(x, y, num_classes, encoder_dims, config):
    """Joint SGD on (optional encoder stack) + linear softmax head.

    With no encoder this is exactly the linear probe; with one it is the
    supervised-from-scratch baseline. Returns (encoder, head, epoch_losses).
    """
    n, d = x.shape
    if y.shape != (n,):
        raise ValueError("labels length must match feature rows")
    init_rng = seeded_rng(config.seed, "clf-init")
    encoder = init_layers(encoder_dims, init_rng) if encoder_dims else []
    head_in = encoder_dims[-1] if encoder_dims else d
    head = init_layers([head_in, num_classes], init_rng)[0]
    stack = encoder + [head]
    velocity = zero_velocity(stack)
    batch = config.batch_size if config.batch_size is not None else min(256, n)
    batch = min(batch, n)
    batch_rng = seeded_rng(config.seed, "clf-batches")
    epoch_losses = []
    for epoch in range(config.epochs):
        if config.lr_schedule == "cosine":
            lr = cosine_lr(config.base_lr, epoch, config.epochs)
        else:
            lr = config.base_lr
        perm = batch_rng.permutation(n)
        losses = []
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            xb, yb = x[idx], y[idx]
            if encoder:
                z, caches = forward_cached(encoder, xb)
            else:
                z, caches = xb, None
            logits = z @ head.weights.T + head.bias
            loss, dlogits = _xent_and_dlogits(logits, yb)
            head_grad = (dlogits.T @ z, dlogits.sum(axis=0))
            if encoder:
                enc_grads, _ = backward(encoder, caches, dlogits @ head.weights)
                grads = enc_grads + [head_grad]
            else:
                grads = [head_grad]
            sgd_update(stack, grads, velocity, lr, config.momentum,
                       config.weight_decay)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
    return encoder, head, tuple(epoch_losses)


def train_probe(features, labels, config: ProbeTrainConfig = ProbeTrainConfig(),
                num_classes: int | None = None) -> SoftmaxProbe:
    """Fit a linear softmax probe on (frozen) features.

    `num_classes` forces the output width when some classes are missing from
    the labeled data; by default it is inferred as max(label) + 1.
    """
    x = _validate_features(features)
    y, c = _resolve_classes(labels, num_classes)
    if x.shape[0] < 1:
        raise ValueError("need at least one sample")
    _, head, losses = _fit_softmax_stack(x, y, c, [], config)
    return SoftmaxProbe(weights=head.weights, bias=head.bias,
                        num_classes=c, dim=x.shape[1], epoch_losses=losses)


def train_encoder_supervised(
    features, labels,
    net_config: NetConfig = NetConfig(),
    train_config: ProbeTrainConfig = ProbeTrainConfig(),
    num_classes: int | None = None,
):
    """Train the encoder architecture end-to-end with a softmax head.

    This is the from-scratch baseline: only labeled rows are seen, nothing
    is pretrained. Returns (encoder_layers, head_probe); the encoder output
    doubles as the embedding space for acquisition. With an empty encoder
    configuration this reduces exactly to `train_probe`.
    """
    x = _validate_features(features)
    y, c = _resolve_classes(labels, num_classes)
    dims = net_config.encoder_dims(x.shape[1])
    encoder, head, losses = _fit_softmax_stack(x, y, c, dims, train_config)
    embed_dim = dims[-1] if dims else x.shape[1]
    probe = SoftmaxProbe(weights=head.weights, bias=head.bias,
                         num_classes=c, dim=embed_dim, epoch_losses=losses)
    return encoder, probe


def _logits(probe: SoftmaxProbe, features) -> np.ndarray:
    x = _validate_features(features)
    if x.shape[1] != probe.dim:
        raise ValueError(f"feature dim {x.shape[1]} != probe dim {probe.dim}")
    return x @ probe.weights.T + probe.bias


def predict_proba(probe: SoftmaxProbe, features) -> np.ndarray:
    """Row-wise softmax probabilities, computed with max subtraction."""
    return _softmax(_logits(probe, features))


def _binary_svm_dual_cd(x_aug, y, reg_c, rng, tol=1e-6, max_sweeps=10_000):
    """L1-loss linear SVM in the dual, one coordinate at a time.

    x_aug carries the bias as a trailing all-ones column (the bias is
    regularized, as usual for augmented formulations). Sweeps visit samples
    in a fresh random permutation; convergence is declared when the duality
    gap drops to `tol`. Returns (w_aug, info).
    """
    n = x_aug.shape[0]
    q_diag = (x_aug * x_aug).sum(axis=1)
    alpha = np.zeros(n)
    w = np.zeros(x_aug.shape[1])
    dual_history = []
    gap = np.inf
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        for i in rng.permutation(n):
            g = y[i] * (w @ x_aug[i]) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= reg_c:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                step = np.clip(alpha[i] - g / q_diag[i], 0.0, reg_c)
                w += (step - alpha[i]) * y[i] * x_aug[i]
                alpha[i] = step
        wsq = 0.5 * float(w @ w)
        dual = float(alpha.sum()) - wsq
        primal = wsq + reg_c * float(np.maximum(0.0, 1.0 - y * (x_aug @ w)).sum())
        dual_history.append(dual)
        gap = primal - dual
        if gap <= tol:
            break
    return w, {"dual": dual_history, "gap": gap, "sweeps": sweeps}


def train_svm_ovr(features, labels, reg_c: float = 5.0,
                  num_classes: int | None = None) -> SvmOvrModel:
    """One-vs-rest linear SVM by dual coordinate descent.

    Classes absent from the labels are skipped and later scored as -inf by
    `svm_decision_values`, which keeps them out of prediction and margin
    ranking in the early low-budget cycles.
    """
    x = _validate_features(features)
    y, c = _resolve_classes(labels, num_classes)
    if x.shape[0] < 2 or len(np.unique(y)) < 2:
        raise ValueError("SVM training needs at least two distinct labels")
    if reg_c <= 0:
        raise ValueError("reg_c must be positive")
    x_aug = np.hstack([x, np.ones((x.shape[0], 1))])
    weights = np.zeros((c, x.shape[1]))
    biases = np.zeros(c)
    present = np.zeros(c, dtype=bool)
    for klass in np.unique(y):
        target = np.where(y == klass, 1.0, -1.0)
        rng = seeded_rng(0, "svm-sweeps", int(klass))
        w_aug, _ = _binary_svm_dual_cd(x_aug, target, reg_c, rng)
        weights[klass] = w_aug[:-1]
        biases[klass] = w_aug[-1]
        present[klass] = True
    return SvmOvrModel(weights=weights, biases=biases, reg_c=float(reg_c),
                       present=present)


def svm_decision_values(model: SvmOvrModel, features) -> np.ndarray:
    """Signed margins (i, k) = w_k . x_i + b_k; absent classes give -inf."""
    x = _validate_features(features)
    if x.shape[1] != model.weights.shape[1]:
        raise ValueError("feature dim does not match the SVM model")
    values = x @ model.weights.T + model.biases
    values[:, ~model.present] = -np.inf
    return values
