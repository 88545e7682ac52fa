"""Feature datasets, labeled/unlabeled pool bookkeeping, and the .pfv codec.

Feature file layout (little-endian):

    magic "PFV1" | u32 n | u32 d | u32 C | n*d float32 row-major | n*u32 labels

so a file is exactly ``16 + 4*n*d + 4*n`` bytes. The test split lives in a
second file with the same layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .util import seeded_rng

FEATURE_MAGIC = b"PFV1"
_HEADER = struct.Struct("<4sIII")


class FeatureFileError(Exception):
    """A binary artifact file cannot be decoded."""


class BadMagicError(FeatureFileError):
    pass


class TruncatedFileError(FeatureFileError):
    pass


class LabelRangeError(FeatureFileError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """An n x d float32 feature matrix with ground-truth class labels.

    Instances are immutable after construction (arrays are locked read-only)
    and therefore safe for concurrent reads. Features are stored in 32-bit
    precision; numerical routines upcast to 64-bit internally.
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float32)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n, d = feats.shape
        if n < 1 or d < 1:
            raise ValueError("need at least one sample and one feature dimension")
        if int(self.num_classes) < 2:
            raise ValueError("num_classes must be at least 2")
        if labels.shape != (n,):
            raise ValueError("labels length must match the number of rows")
        if not np.isfinite(feats).all():
            raise ValueError("features must be finite")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValueError("labels must lie in [0, num_classes)")
        if self.split not in ("train", "test"):
            raise ValueError("split must be 'train' or 'test'")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", int(self.num_classes))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def same_data(self, other: "FeatureDataset") -> bool:
        """Bit-exact equality of payload (features, labels, class count)."""
        return (
            self.num_classes == other.num_classes
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


def save_dataset(dataset: FeatureDataset, path) -> None:
    """Write a dataset in the PFV1 format; `load_dataset` inverts it exactly."""
    header = _HEADER.pack(
        FEATURE_MAGIC, dataset.n, dataset.dim, dataset.num_classes
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dataset.features.astype("<f4", copy=False).tobytes())
        fh.write(dataset.labels.astype("<u4").tobytes())


def load_dataset(path, split: str = "train") -> FeatureDataset:
    """Read a PFV1 feature file.

    Raises FileNotFoundError for a missing path, BadMagicError for a foreign
    file, TruncatedFileError when the payload is shorter than the header
    declares, and LabelRangeError when a stored label is >= C.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise TruncatedFileError(f"{path}: shorter than the 16-byte header")
    magic, n, d, num_classes = _HEADER.unpack_from(blob, 0)
    if magic != FEATURE_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if n < 1 or d < 1 or num_classes < 2:
        raise FeatureFileError(f"{path}: invalid header counts n={n} d={d} C={num_classes}")
    expected = _HEADER.size + 4 * n * d + 4 * n
    if len(blob) < expected:
        raise TruncatedFileError(
            f"{path}: payload truncated ({len(blob)} bytes, expected {expected})"
        )
    if len(blob) > expected:
        raise FeatureFileError(f"{path}: {len(blob) - expected} trailing bytes")
    feats = np.frombuffer(blob, dtype="<f4", count=n * d, offset=_HEADER.size)
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=_HEADER.size + 4 * n * d)
    if labels.size and labels.max() >= num_classes:
        raise LabelRangeError(
            f"{path}: label {int(labels.max())} out of range for C={num_classes}"
        )
    return FeatureDataset(
        features=feats.reshape(n, d).copy(),
        labels=labels.astype(np.int64),
        num_classes=num_classes,
        split=split,
    )


@dataclass(frozen=True, eq=False)
class PoolState:
    """Disjoint labeled/unlabeled index sets, plus the cycle counter.

    Transitions are pure: every operation returns a new PoolState. Index
    arrays are kept sorted ascending so tie-breaking on "lower pool index"
    is well defined everywhere.
    """

    labeled: np.ndarray
    unlabeled: np.ndarray
    cycle: int = 0

    def __post_init__(self):
        lab = np.asarray(self.labeled, dtype=np.int64)
        unl = np.asarray(self.unlabeled, dtype=np.int64)
        lab = np.sort(lab)
        unl = np.sort(unl)
        if len(np.unique(lab)) != len(lab) or len(np.unique(unl)) != len(unl):
            raise ValueError("pool indices must be unique")
        if np.intersect1d(lab, unl).size:
            raise ValueError("labeled and unlabeled sets must be disjoint")
        lab.flags.writeable = False
        unl.flags.writeable = False
        object.__setattr__(self, "labeled", lab)
        object.__setattr__(self, "unlabeled", unl)

    @property
    def n(self) -> int:
        return len(self.labeled) + len(self.unlabeled)


@dataclass(frozen=True)
class BudgetSchedule:
    """Initial pool size, per-cycle budget b, and cycle count c.

    The per-cycle budget always equals the initial pool size; unequal
    schedules are out of scope.
    """

    initial: int
    per_cycle: int
    cycles: int

    def __post_init__(self):
        if self.initial < 1:
            raise ValueError("initial labeled count must be positive")
        if self.cycles < 0:
            raise ValueError("cycle count must be nonnegative")
        if self.per_cycle != self.initial:
            raise ValueError("per-cycle budget must equal the initial pool size")

    @property
    def total(self) -> int:
        return self.initial + self.cycles * self.per_cycle


@dataclass(frozen=True)
class SplitSpec:
    """Seeded recipe for the initial labeled split."""

    seed: int
    balanced: bool = True


@dataclass(frozen=True)
class BlobSpec:
    """Generator parameters for synthetic Gaussian-cluster datasets."""

    num_classes: int
    per_class: int
    dim: int
    noise_dim: int = 0
    sigma: float = 0.3
    seed: int = 0

    def generate(self):
        return generate_blobs(
            self.num_classes, self.per_class, self.dim,
            noise_dim=self.noise_dim, sigma=self.sigma, seed=self.seed,
        )


def _simplex_means(num_classes: int, dim: int) -> np.ndarray:
    """C cluster means in `dim` dims with all pairwise distances exactly 1."""
    if dim < num_classes - 1:
        raise ValueError("dim must be at least num_classes - 1 to separate the means")
    c = num_classes
    verts = np.zeros((c, c - 1))
    verts[: c - 1] = np.eye(c - 1)
    verts[c - 1] = (1.0 - np.sqrt(c)) / (c - 1)
    verts /= np.sqrt(2.0)  # edge length sqrt(2) -> 1
    verts -= verts.mean(axis=0)
    means = np.zeros((c, dim))
    means[:, : c - 1] = verts
    return means


def generate_blobs(
    num_classes: int,
    per_class: int,
    dim: int,
    noise_dim: int = 0,
    sigma: float = 0.3,
    seed: int = 0,
):
    """Synthesize C Gaussian clusters and split them 80/20 into train/test.

    Cluster means sit at the vertices of a unit-edge simplex in `dim` dims;
    each sample adds isotropic N(0, sigma^2) noise. `noise_dim` extra pure
    noise coordinates (same sigma) are appended, and the whole space is mixed
    by a fixed seeded rotation. Deterministic in `seed`.

    Returns:
        (train, test) FeatureDataset pair.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be at least 2")
    if per_class < 2:
        raise ValueError("per_class must be at least 2")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if noise_dim < 0:
        raise ValueError("noise_dim must be nonnegative")
    rng = seeded_rng(seed, "blobs")
    c, m = num_classes, per_class
    means = _simplex_means(c, dim)
    signal = np.repeat(means, m, axis=0) + sigma * rng.standard_normal((c * m, dim))
    full_dim = dim + noise_dim
    points = np.empty((c * m, full_dim))
    points[:, :dim] = signal
    if noise_dim:
        points[:, dim:] = sigma * rng.standard_normal((c * m, noise_dim))
    gauss = rng.standard_normal((full_dim, full_dim))
    q, r = np.linalg.qr(gauss)
    q *= np.sign(np.diag(r))  # canonical Haar rotation
    points = points @ q.T
    labels = np.repeat(np.arange(c), m)

    n_train_per = max(1, int(np.floor(0.8 * m)))
    train_idx, test_idx = [], []
    for k in range(c):
        order = rng.permutation(m) + k * m
        train_idx.append(order[:n_train_per])
        test_idx.append(order[n_train_per:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    train_idx = train_idx[rng.permutation(len(train_idx))]
    test_idx = test_idx[rng.permutation(len(test_idx))]

    train = FeatureDataset(points[train_idx], labels[train_idx], c, split="train")
    test = FeatureDataset(points[test_idx], labels[test_idx], c, split="test")
    return train, test


def initial_split(
    dataset: FeatureDataset, schedule: BudgetSchedule, spec: SplitSpec
) -> PoolState:
    """Draw the initial labeled pool; the rest of the train split is unlabeled.

    Balanced mode spreads the budget over classes so per-class counts differ
    by at most one; when the budget is not divisible by C the extra samples
    go to the first classes of a seeded shuffle of class order.
    """
    n, c = dataset.n, dataset.num_classes
    k = schedule.initial
    if k > n:
        raise ValueError(f"initial labeled count {k} exceeds dataset size {n}")
    rng = seeded_rng(spec.seed, "initial-split")
    if spec.balanced:
        if k < c:
            raise ValueError(f"balanced split needs initial >= num_classes ({c})")
        counts = np.full(c, k // c, dtype=np.int64)
        counts[rng.permutation(c)[: k % c]] += 1
        picks = []
        for klass in range(c):
            members = np.flatnonzero(dataset.labels == klass)
            if len(members) < counts[klass]:
                raise ValueError(
                    f"class {klass} has only {len(members)} samples, "
                    f"needs {counts[klass]} for a balanced split"
                )
            picks.append(rng.choice(members, size=counts[klass], replace=False))
        labeled = np.concatenate(picks)
    else:
        labeled = rng.choice(n, size=k, replace=False)
    unlabeled = np.setdiff1d(np.arange(n), labeled)
    return PoolState(labeled=labeled, unlabeled=unlabeled, cycle=0)


def query_oracle(pool: PoolState, dataset: FeatureDataset, indices) -> PoolState:
    """Move `indices` from the unlabeled to the labeled set; bump the cycle.

    The indices must be distinct members of the unlabeled set.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if len(np.unique(idx)) != len(idx):
        raise ValueError("duplicate indices in oracle query")
    if idx.size and (idx.min() < 0 or idx.max() >= dataset.n):
        raise ValueError("oracle query index out of range")
    if np.isin(idx, pool.labeled).any():
        raise ValueError("oracle query contains an already-labeled index")
    if not np.isin(idx, pool.unlabeled).all():
        raise ValueError("oracle query index not in the unlabeled pool")
    return PoolState(
        labeled=np.union1d(pool.labeled, idx),
        unlabeled=np.setdiff1d(pool.unlabeled, idx),
        cycle=pool.cycle + 1,
    )


class LabelOracle:
    """Simulated annotator: the only sanctioned reader of train labels.

    Tracks which indices were ever revealed so a harness can audit that
    training consumed exactly the labels the budget paid for.
    """

    def __init__(self, dataset: FeatureDataset):
        self._dataset = dataset
        self.revealed: set[int] = set()

    def reveal(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self._dataset.n):
            raise ValueError("oracle reveal index out of range")
        self.revealed.update(int(i) for i in idx)
        return self._dataset.labels[idx]

    @property
    def num_revealed(self) -> int:
        return len(self.revealed)
