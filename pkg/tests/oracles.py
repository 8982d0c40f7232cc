"""Naive reference implementations used as independent test oracles.

Everything here enumerates records one by one with exact fractions and
shares no code with the package's count-cube implementation.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def naive_metric(records, kind, g, y):
    """Conditional probability by direct enumeration; None when the condition is empty."""
    recs = [r for r in records if r.predicted_class is not None]
    if kind == "GP":
        cond = [r for r in recs if r.group == g]
        event = [r for r in cond if r.predicted_class == y]
    elif kind == "TPR":
        cond = [r for r in recs if r.group == g and r.true_class == y]
        event = [r for r in cond if r.predicted_class == y]
    elif kind == "PP":
        cond = [r for r in recs if r.group == g and r.predicted_class == y]
        event = [r for r in cond if r.true_class == y]
    else:
        raise ValueError(kind)
    if not cond:
        return None
    return len(event) / len(cond)


def naive_counts(records, kind, g, y):
    recs = [r for r in records if r.predicted_class is not None]
    if kind == "GP":
        return (sum(r.group == g and r.predicted_class == y for r in recs),
                sum(r.group == g for r in recs))
    if kind == "TPR":
        return (sum(r.group == g and r.true_class == y and r.predicted_class == y for r in recs),
                sum(r.group == g and r.true_class == y for r in recs))
    return (sum(r.group == g and r.true_class == y and r.predicted_class == y for r in recs),
            sum(r.group == g and r.predicted_class == y for r in recs))


def brute_force_allocation(quotas, total, caps):
    """Integer vector summing to ``total`` closest to ``quotas`` in squared error.

    Ties prefer giving units to earlier cells. Exponential; toy sizes only.
    """
    quotas = [Fraction(q) for q in quotas]
    best = None
    for v in itertools.product(*[range(c + 1) for c in caps]):
        if sum(v) != total:
            continue
        key = (sum((x - q) ** 2 for x, q in zip(v, quotas)), tuple(-x for x in v))
        if best is None or key < best[0]:
            best = (key, v)
    return list(best[1])


def two_pass_moments(values):
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / (n - 1) if n > 1 else None
    return mean, var


def enumerate_law(weights, priors, confusion):
    """Exact metrics from the joint law by summing every (g, y, yhat) atom."""
    G, C = priors.shape
    joint = np.zeros((G, C, C))
    for g, y, z in itertools.product(range(G), range(C), range(C)):
        joint[g, y, z] = weights[g] * priors[g, y] * confusion[g, y, z]
    out = {"GP": np.full((G, C), np.nan), "TPR": np.full((G, C), np.nan), "PP": np.full((G, C), np.nan)}
    for g, y in itertools.product(range(G), range(C)):
        pg = sum(joint[g, a, b] for a in range(C) for b in range(C))
        pred_y = sum(joint[g, a, y] for a in range(C))
        true_y = sum(joint[g, y, b] for b in range(C))
        if pg > 0:
            out["GP"][g, y] = pred_y / pg
        if true_y > 0:
            out["TPR"][g, y] = joint[g, y, y] / true_y
        if pred_y > 0:
            out["PP"][g, y] = joint[g, y, y] / pred_y
    return out
