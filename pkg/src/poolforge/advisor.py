"""Budget analysis: where does an AL method start beating random sampling?

The crossover is defined by persistent dominance, not first touch: the
smallest budget from which the AL curve stays at or above the random curve
on every later grid point. Crossovers divided by the class count give
samples-per-class thresholds; across datasets these fall on a line in the
class count, which is what `advise_budget` extrapolates from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class LearningCurve:
    """Accuracy as a function of labeling budget for one method/mode."""

    budgets: np.ndarray
    accuracies: np.ndarray
    method: str = ""
    mode: str = ""
    seeds: int = 1

    def __post_init__(self):
        budgets = np.asarray(self.budgets, dtype=np.int64)
        accs = np.asarray(self.accuracies, dtype=np.float64)
        if budgets.ndim != 1 or budgets.shape != accs.shape:
            raise ValueError("budgets and accuracies must be 1-D and equal length")
        if budgets.size == 0:
            raise ValueError("a learning curve needs at least one point")
        if (np.diff(budgets) <= 0).any():
            raise ValueError("budgets must be strictly increasing")
        if (accs < 0).any() or (accs > 1).any():
            raise ValueError("accuracies must lie in [0, 1]")
        budgets.flags.writeable = False
        accs.flags.writeable = False
        object.__setattr__(self, "budgets", budgets)
        object.__setattr__(self, "accuracies", accs)


@dataclass(frozen=True)
class ThresholdPoint:
    num_classes: int
    samples_per_class: float

    def __post_init__(self):
        if self.num_classes <= 0 or self.samples_per_class <= 0:
            raise ValueError("threshold points must be positive")


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    pearson_r: float


def average_curves(curves) -> LearningCurve:
    """Pointwise mean of same-grid curves (one per seed)."""
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to average")
    base = curves[0]
    for c in curves[1:]:
        if not np.array_equal(c.budgets, base.budgets):
            raise ValueError("curves must share the same budget grid")
    mean = np.mean([c.accuracies for c in curves], axis=0)
    return LearningCurve(budgets=base.budgets, accuracies=mean,
                         method=base.method, mode=base.mode, seeds=len(curves))


def find_crossover(al: LearningCurve, random: LearningCurve):
    """Smallest budget from which `al` dominates `random` through the end.

    Returns None when the AL curve is still behind at the last grid point.
    """
    if not np.array_equal(al.budgets, random.budgets):
        raise ValueError("curves must share the same budget grid")
    ahead = al.accuracies >= random.accuracies
    persistent = np.logical_and.accumulate(ahead[::-1])[::-1]
    hits = np.flatnonzero(persistent)
    if hits.size == 0:
        return None
    return int(al.budgets[hits[0]])


def pearson_corr(xs, ys) -> float:
    """Pearson product-moment correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ValueError("inputs must be 1-D and equal length")
    if x.size < 2:
        raise ValueError("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt((dx * dx).sum())
    sy = np.sqrt((dy * dy).sum())
    if sx == 0 or sy == 0:
        raise ValueError("zero variance input")
    r = float((dx * dy).sum() / (sx * sy))
    return min(1.0, max(-1.0, r))


def fit_threshold_line(points) -> LineFit:
    """Least-squares line samples_per_class = slope * num_classes + intercept."""
    points = list(points)
    if len(points) < 2:
        raise ValueError("need at least two threshold points")
    x = np.array([p.num_classes for p in points], dtype=np.float64)
    y = np.array([p.samples_per_class for p in points], dtype=np.float64)
    if np.unique(x).size < 2:
        raise ValueError("threshold points must span at least two class counts")
    dx = x - x.mean()
    slope = float((dx * (y - y.mean())).sum() / (dx * dx).sum())
    intercept = float(y.mean() - slope * x.mean())
    return LineFit(slope=slope, intercept=intercept, pearson_r=pearson_corr(x, y))


def advise_budget(fit: LineFit, num_classes: int):
    """Predicted minimum useful AL budget for a C-class dataset.

    Returns (samples_per_class, total_budget); the per-class figure is
    floored at 1 so the advice never degenerates.
    """
    if num_classes < 2:
        raise ValueError("num_classes must be at least 2")
    spc = max(fit.slope * num_classes + fit.intercept, 1.0)
    return spc, int(math.ceil(num_classes * spc))
