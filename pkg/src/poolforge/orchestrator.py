"""The budget-cycled experiment loop.

One run: (optionally) pretrain the siamese encoder on all unlabeled rows,
then for each evaluation point train a classifier on the currently labeled
rows, score it on the held-out test split, and spend the next slice of
budget through the acquisition function. Evaluation happens before
acquisition, so the record at budget `initial + t*b` reflects a model
trained on exactly that many labels.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .acquisition import (
    METHODS,
    AcquisitionRequest,
    acquire_entropy,
    acquire_kcenter_greedy,
    acquire_random,
    acquire_svm_min_margin,
)
from .advisor import LearningCurve
from .data import (
    BlobSpec,
    BudgetSchedule,
    FeatureDataset,
    LabelOracle,
    SplitSpec,
    initial_split,
    load_dataset,
    query_oracle,
)
from .linear import (
    ProbeTrainConfig,
    SoftmaxProbe,
    predict_proba,
    train_encoder_supervised,
    train_probe,
    train_svm_ovr,
    svm_decision_values,
)
from .mlp import embed
from .siamese import (
    AugmentConfig,
    NetConfig,
    SiamNet,
    SiamTrainConfig,
    encode,
    load_net,
    train_simsiam,
)
from .util import config_fingerprint, derive_seed

MODES = ("self_train", "scratch")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully-resolved recipe for one run (one method, one seed)."""

    schedule: BudgetSchedule
    mode: str = "self_train"
    method: str = "random"
    seed: int = 0
    train_path: str | None = None
    test_path: str | None = None
    generator: BlobSpec | None = None
    pretrained_net: str | None = None
    balanced: bool = True
    probe: ProbeTrainConfig = ProbeTrainConfig()
    siam: SiamTrainConfig = SiamTrainConfig()
    augment: AugmentConfig = AugmentConfig()
    net: NetConfig = NetConfig()
    svm_reg_c: float = 5.0
    record_timing: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unsupported mode: {self.mode}")
        if self.method not in METHODS:
            raise ValueError(f"unsupported method: {self.method}")
        has_paths = self.train_path is not None and self.test_path is not None
        if has_paths == (self.generator is not None):
            raise ValueError("provide either dataset paths or a generator spec")
        if self.svm_reg_c <= 0:
            raise ValueError("svm_reg_c must be positive")


@dataclass(frozen=True)
class CycleRecord:
    cycle: int
    labeled_count: int
    test_accuracy: float
    method: str
    mode: str
    wall_time: float = 0.0


@dataclass(frozen=True)
class RunResult:
    records: tuple
    fingerprint: str


class PipelineClassifier:
    """Frozen feature map (possibly identity) followed by a softmax head."""

    def __init__(self, encoder, probe: SoftmaxProbe):
        self.encoder = encoder or []
        self.probe = probe

    def transform(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        return embed(self.encoder, x) if self.encoder else x

    def predict(self, features) -> np.ndarray:
        return self.probe.predict(self.transform(features))

    def predict_proba(self, features) -> np.ndarray:
        return predict_proba(self.probe, self.transform(features))


def evaluate_accuracy(classifier, test: FeatureDataset) -> float:
    """Fraction of correct argmax predictions on the test split."""
    preds = np.asarray(classifier.predict(test.features))
    if preds.shape != test.labels.shape:
        raise ValueError("prediction shape does not match test labels")
    return float((preds == test.labels).mean())


def _resolve_data(config: ExperimentConfig):
    if config.generator is not None:
        return config.generator.generate()
    train = load_dataset(config.train_path, split="train")
    test = load_dataset(config.test_path, split="test")
    if train.dim != test.dim or train.num_classes != test.num_classes:
        raise ValueError("train and test files disagree on d or C")
    return train, test


def run_experiment(config: ExperimentConfig) -> RunResult:
    """Execute the full loop and return one CycleRecord per evaluation point.

    Deterministic in config + seed: per-cycle streams are derived from the
    master seed by cycle index, and the pretrained encoder (self_train mode)
    is trained exactly once, before the first cycle.
    """
    train, test = _resolve_data(config)
    schedule = config.schedule
    if schedule.total > train.n:
        raise ValueError("total budget exceeds the training pool size")
    oracle = LabelOracle(train)
    pool = initial_split(train, schedule,
                         SplitSpec(seed=config.seed, balanced=config.balanced))
    known = np.full(train.n, -1, dtype=np.int64)
    known[pool.labeled] = oracle.reveal(pool.labeled)

    siamnet: SiamNet | None = None
    z_train = z_test = None
    if config.mode == "self_train":
        if config.pretrained_net is not None:
            siamnet = SiamNet(encoder=load_net(config.pretrained_net), predictor=[])
        else:
            siam_cfg = replace(config.siam, seed=derive_seed(config.seed, "siam"))
            siamnet = train_simsiam(train, config.net, config.augment, siam_cfg)
        z_train = encode(siamnet, train.features)
        z_test = encode(siamnet, test.features)

    records = []
    for cycle in range(schedule.cycles + 1):
        tic = time.perf_counter()
        probe_cfg = replace(config.probe, seed=derive_seed(config.seed, "probe", cycle))
        labeled, unlabeled = pool.labeled, pool.unlabeled
        if config.mode == "self_train":
            probe = train_probe(z_train[labeled], known[labeled], probe_cfg,
                                num_classes=train.num_classes)
            classifier = PipelineClassifier(siamnet.encoder, probe)
            emb_train = z_train
        else:
            encoder, probe = train_encoder_supervised(
                train.features[labeled], known[labeled],
                net_config=config.net, train_config=probe_cfg,
                num_classes=train.num_classes)
            classifier = PipelineClassifier(encoder, probe)
            emb_train = classifier.transform(train.features)
        accuracy = evaluate_accuracy(classifier, test)
        if not np.isfinite(accuracy):
            raise FloatingPointError(f"non-finite accuracy at cycle {cycle}")
        wall = time.perf_counter() - tic if config.record_timing else 0.0
        records.append(CycleRecord(
            cycle=cycle, labeled_count=len(labeled), test_accuracy=accuracy,
            method=config.method, mode=config.mode, wall_time=wall))

        if cycle == schedule.cycles:
            break
        request = AcquisitionRequest(
            pool=pool, budget_b=schedule.per_cycle, method=config.method,
            seed=derive_seed(config.seed, "acquire", cycle))
        try:
            if config.method == "random":
                selection = acquire_random(request)
            elif config.method == "entropy":
                proba = predict_proba(probe, emb_train[unlabeled])
                selection = acquire_entropy(proba, request)
            elif config.method == "kcenter":
                selection = acquire_kcenter_greedy(emb_train, request)
            else:
                svm = train_svm_ovr(emb_train[labeled], known[labeled],
                                    reg_c=config.svm_reg_c,
                                    num_classes=train.num_classes)
                values = svm_decision_values(svm, emb_train[unlabeled])
                selection = acquire_svm_min_margin(values, request)
        except Exception as exc:
            raise RuntimeError(f"acquisition failed at cycle {cycle}: {exc}") from exc
        pool = query_oracle(pool, train, selection.chosen)
        known[selection.chosen] = oracle.reveal(selection.chosen)

    return RunResult(records=tuple(records),
                     fingerprint=config_fingerprint(config))


def emit_curve(result: RunResult) -> LearningCurve:
    """Collapse a run into (budget, accuracy) pairs for the advisor."""
    if not result.records:
        raise ValueError("empty run result")
    return LearningCurve(
        budgets=[r.labeled_count for r in result.records],
        accuracies=[r.test_accuracy for r in result.records],
        method=result.records[0].method,
        mode=result.records[0].mode,
    )
