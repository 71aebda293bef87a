#!/usr/bin/env python3
"""Scalar brute-force oracles for the fixed numeric examples used by the C++ tests.

Every value pinned in tests/unit/test_oracle_values.cpp is recomputed here from
first principles with plain Python floats and compared against the pinned number.
"""

import itertools
import math
import sys

TOL = 1e-6

# Pinned values, mirrored in tests/unit/test_oracle_values.cpp.
PINNED = {
    "bce_two_pixels": 0.105361,
    "bce_uniform": 0.693147,
    "dice_half_overlap": 0.5,
    "combined_uniform_half": 1.026480,
    "sce_ce": 0.313262,
    "sce_rce": 1.075766,
    "sce_total": 1.389028,
    "auc_interleaved": 0.75,
    "window_140": 0.75,
    "window_40": 0.5,
    "split_train_888": 622,
    "split_test_888": 266,
    "cosine_06": 0.6,
    "sigmoid_zero": 0.5,
    "confusion_half": 0.5,
    "mean_subtlety": 2.5,
}

EPS = 1e-7
DELTA = 1e-6
LOG_ZERO = -4.0


def bce(s, g):
    total = 0.0
    for si, gi in zip(s, g):
        si = min(max(si, EPS), 1.0 - EPS)
        total += gi * math.log(si) + (1.0 - gi) * math.log(1.0 - si)
    return -total / len(s)


def dice(s, g):
    inter = sum(si * gi for si, gi in zip(s, g))
    denom = sum(gi * gi for gi in g) + sum(si * si for si in s)
    return 1.0 - (2.0 * inter + DELTA) / (denom + DELTA)


def sce_direction(rows, tau, alpha, beta):
    n = len(rows)
    ce = rce = 0.0
    for i, row in enumerate(rows):
        exps = [math.exp(v / tau) for v in row]
        z = sum(exps)
        p = [e / z for e in exps]
        ce += -math.log(p[i])
        rce += -sum(p[j] * (0.0 if j == i else LOG_ZERO) for j in range(n))
    return alpha * ce / n, beta * rce / n


def sce(sim, tau=1.0, alpha=1.0, beta=1.0):
    cols = [list(c) for c in zip(*sim)]
    ce_r, rce_r = sce_direction(sim, tau, alpha, beta)
    ce_c, rce_c = sce_direction(cols, tau, alpha, beta)
    ce = 0.5 * (ce_r + ce_c)
    rce = 0.5 * (rce_r + rce_c)
    return ce, rce, ce + rce


def auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = 0.0
    for p, q in itertools.product(pos, neg):
        wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def window(hu, level=40.0, width=400.0):
    return min(max((hu - (level - width / 2.0)) / width, 0.0), 1.0)


def confusion(pred, labels):
    tp = sum(1 for p, y in zip(pred, labels) if p and y)
    fp = sum(1 for p, y in zip(pred, labels) if p and not y)
    fn = sum(1 for p, y in zip(pred, labels) if not p and y)
    tn = sum(1 for p, y in zip(pred, labels) if not p and not y)
    n_pos, n_neg = tp + fn, tn + fp
    return {
        "accuracy": (tp + tn) / len(labels),
        "sensitivity": tp / n_pos,
        "specificity": tn / n_neg,
        "f1": 2 * tp / (2 * tp + fp + fn),
    }


def computed():
    e = math.e
    ce, rce, total = sce([[1.0, 0.0], [0.0, 1.0]])
    # Closed forms for the 2x2 fixture.
    assert abs(ce - -math.log(e / (e + 1))) < 1e-12
    assert abs(rce - 4.0 / (e + 1)) < 1e-12
    conf = confusion([1, 1, 0, 0], [1, 0, 1, 0])
    assert len(set(conf.values())) == 1
    train = round(0.7 * 888)
    return {
        "bce_two_pixels": bce([0.9, 0.1], [1.0, 0.0]),
        "bce_uniform": bce([0.5] * 4, [1.0, 0.0, 1.0, 1.0]),
        "dice_half_overlap": dice([1, 1, 0, 0], [1, 0, 1, 0]),
        "combined_uniform_half": bce([0.5] * 4, [1, 1, 0, 0]) + dice([0.5] * 4, [1, 1, 0, 0]),
        "sce_ce": ce,
        "sce_rce": rce,
        "sce_total": total,
        "auc_interleaved": auc_pairs([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0]),
        "window_140": window(140.0),
        "window_40": window(40.0),
        "split_train_888": train,
        "split_test_888": 888 - train,
        "cosine_06": 0.6 * 1.0 + 0.8 * 0.0,
        "sigmoid_zero": 1.0 / (1.0 + math.exp(-(1.0 * 3.0 - 3.0))),
        "confusion_half": conf["accuracy"],
        "mean_subtlety": sum([1, 2, 3, 4]) / 4,
    }


def main():
    failures = 0
    values = computed()
    for key, pinned in PINNED.items():
        value = values[key]
        ok = abs(value - pinned) <= TOL
        failures += 0 if ok else 1
        print(f"{'PASS' if ok else 'FAIL'} {key}: oracle={value:.9f} pinned={pinned}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
