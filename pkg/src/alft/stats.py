"""Evaluation metrics and significance testing.

Macro-F1 for multi-class predictions and Student's paired t-test. The
two-sided p-value comes from the regularized incomplete beta function
I_x(df/2, 1/2) at x = df / (df + t^2), evaluated with Lentz's continued
fraction to well below 1e-8 absolute error.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import UndefinedResultError

log = logging.getLogger(__name__)


def macro_f1(predictions: np.ndarray, golds: np.ndarray, num_classes: int) -> float:
    """Unweighted mean of per-class F1 = 2PR / (P + R).

    A class with no support on either side contributes 0 (logged); any
    zero denominator counts as 0 precision/recall/F1.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    golds = np.asarray(golds, dtype=np.int64)
    if predictions.shape != golds.shape:
        raise ValueError(
            f"length mismatch: {predictions.shape} predictions, {golds.shape} golds"
        )
    if predictions.size == 0:
        raise ValueError("cannot score zero predictions")
    scores = np.zeros(num_classes)
    for cls in range(num_classes):
        pred_pos = predictions == cls
        gold_pos = golds == cls
        tp = np.sum(pred_pos & gold_pos)
        if not pred_pos.any() and not gold_pos.any():
            log.warning("class %d absent from predictions and golds; F1 := 0", cls)
            continue
        precision = tp / pred_pos.sum() if pred_pos.any() else 0.0
        recall = tp / gold_pos.sum() if gold_pos.any() else 0.0
        if precision + recall > 0:
            scores[cls] = 2.0 * precision * recall / (precision + recall)
    return float(scores.mean())


def _beta_cont_frac(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (Lentz's method)."""
    max_iter, eps, tiny = 300, 1e-15, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        coeff = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        coeff = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + coeff * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + coeff / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta failed to converge for a={a} b={b} x={x}")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast only on one side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_frac(a, b, x) / a
    return 1.0 - front * _beta_cont_frac(b, a, 1.0 - x) / b


def t_cdf(t: float, df: float) -> float:
    """Student's t cumulative distribution with df degrees of freedom."""
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if t == 0.0:
        return 0.5
    tail = 0.5 * reg_inc_beta(0.5 * df, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def paired_t_test(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Two-sided paired t-test on per-run score pairs.

    Returns (t, p) with t = mean(d) / (sd(d) / sqrt(n)), sample standard
    deviation (n - 1 denominator), and p from the t distribution with
    n - 1 degrees of freedom. Identical inputs have zero-variance
    differences and no defined statistic.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"need equal-length vectors, got {a.shape} and {b.shape}")
    n = len(a)
    if n < 2:
        raise UndefinedResultError(f"paired t-test needs n >= 2, got {n}")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise UndefinedResultError("zero-variance differences; t is undefined")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    df = n - 1
    p = reg_inc_beta(0.5 * df, 0.5, df / (df + t * t)) if t != 0.0 else 1.0
    return t, p
