"""HardF1 / SoftF1 scoring and Welch's t-test for comparing experiment runs."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import betainc

from .dialogue import as_bits
from .errors import EmptyInput, EmptyReferenceSet, InsufficientSamples, WidthMismatch
from .graph import ConvGraph

SIGNIFICANCE_LEVEL = 0.05


def f1(y, y_hat) -> float:
    """Set F1 over the set bits of two equal-width binary vectors.

    Two empty vectors score 1; exactly one empty vector scores 0.
    """
    y = as_bits(y).astype(bool)
    y_hat = as_bits(y_hat).astype(bool)
    if y.shape != y_hat.shape:
        raise WidthMismatch(f"widths differ: {y.shape} vs {y_hat.shape}")
    n_gold, n_pred = int(y.sum()), int(y_hat.sum())
    if n_gold == 0 and n_pred == 0:
        return 1.0
    tp = int(np.count_nonzero(y & y_hat))
    # 2PR/(P+R) == 2tp/(|y|+|y_hat|)
    return 2.0 * tp / (n_gold + n_pred)


def soft_f1(y_hat, references: Sequence) -> float:
    """Best F1 of ``y_hat`` against any valid reference."""
    if len(references) == 0:
        raise EmptyReferenceSet("soft_f1 needs at least one reference")
    return max(f1(y, y_hat) for y in references)


class PredictionRecord(NamedTuple):
    node: str
    y_hat: str
    y_gold: str


@dataclass(frozen=True)
class ScoreReport:
    hard_f1: float
    soft_f1: float
    n_records: int
    unresolved: int = 0

    def to_dict(self) -> dict:
        return {
            "hard_f1": self.hard_f1,
            "soft_f1": self.soft_f1,
            "n_records": self.n_records,
            "unresolved": self.unresolved,
        }


def reference_set(g: ConvGraph, node: str, y_gold: str) -> tuple[list[str], bool]:
    """Valid actions at ``node`` plus the gold target; flag is False if unresolved."""
    if node not in g:
        return [y_gold], False
    refs = [act for act, _ in g.valid_actions(node)]
    if y_gold not in refs:
        refs.append(y_gold)
    return refs, True


def evaluate(preds: Iterable[PredictionRecord], eval_graph: ConvGraph) -> ScoreReport:
    """Samples-averaged HardF1 and SoftF1.

    Records whose node is missing from the graph are scored against the gold
    target alone and counted in ``unresolved``.
    """
    hard, soft = [], []
    unresolved = 0
    for rec in preds:
        refs, ok = reference_set(eval_graph, rec.node, rec.y_gold)
        unresolved += not ok
        hard.append(f1(rec.y_gold, rec.y_hat))
        soft.append(soft_f1(rec.y_hat, refs))
    if not hard:
        raise EmptyInput("no predictions to evaluate")
    n = len(hard)
    return ScoreReport(math.fsum(hard) / n, math.fsum(soft) / n, n, unresolved)


class TTestResult(NamedTuple):
    t: float
    p: float
    significant: bool
    df: float


def welch_ttest(a: Sequence[float], b: Sequence[float], alpha: float = SIGNIFICANCE_LEVEL) -> TTestResult:
    """Two-tailed t-test for samples with unequal variance.

    Degrees of freedom follow Welch-Satterthwaite; the tail probability is
    ``I_{df/(df+t^2)}(df/2, 1/2)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise InsufficientSamples("each sample needs at least two values")
    mean_a, mean_b = math.fsum(a) / a.size, math.fsum(b) / b.size
    va = math.fsum((a - mean_a) ** 2) / (a.size - 1) / a.size
    vb = math.fsum((b - mean_b) ** 2) / (b.size - 1) / b.size
    se2 = va + vb
    if se2 == 0.0:
        if mean_a == mean_b:
            return TTestResult(0.0, 1.0, False, math.nan)
        warnings.warn("both samples have zero variance; reporting p = 0", RuntimeWarning)
        return TTestResult(math.copysign(math.inf, mean_a - mean_b), 0.0, True, math.nan)
    t = (mean_a - mean_b) / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t, p, p < alpha, df)
