"""Regenerates metrics_oracle.json with exact rational arithmetic."""
import json
import math
from fractions import Fraction

MATRICES = [
    [[30, 10], [10, 30]],
    [[36, 14], [29, 20]],
    [[5, 0, 3], [1, 7, 2]],
    [[12, 4, 9, 1], [3, 15, 2, 8], [6, 6, 6, 6]],
    [[1, 2, 3, 4, 5], [5, 4, 3, 2, 1]],
    [[40, 0], [0, 40]],
    [[9, 1, 0], [0, 2, 11], [3, 0, 4]],
]

CONFUSION = [
    {"tp": 36, "fn": 14, "fp": 9, "tn": 41},
    {"tp": 20, "fn": 29, "fp": 0, "tn": 59},
    {"tp": 0, "fn": 0, "fp": 3, "tn": 7},
    {"tp": 4, "fn": 1, "fp": 0, "tn": 0},
]


def info(m):
    n = sum(map(sum, m))
    rows = [Fraction(sum(r), n) for r in m]
    cols = [Fraction(sum(r[j] for r in m), n) for j in range(len(m[0]))]
    mi = 0.0
    for i, r in enumerate(m):
        for j, c in enumerate(r):
            if c:
                p = Fraction(c, n)
                mi += float(p) * math.log(p / (rows[i] * cols[j]))
    h = lambda ps: -sum(float(p) * math.log(p) for p in ps if p)
    ha, hc = h(rows), h(cols)
    return {"counts": m, "mi": mi, "h_a": ha, "h_c": hc, "nmi": mi / math.sqrt(ha * hc)}


def rate(num, den):
    return None if den == 0 else num / den


def rates(c):
    return dict(
        c,
        fnr=rate(c["fn"], c["tp"] + c["fn"]),
        fpr=rate(c["fp"], c["fp"] + c["tn"]),
        ppv=rate(c["tp"], c["tp"] + c["fp"]),
        npv=rate(c["tn"], c["tn"] + c["fn"]),
    )


print(json.dumps({"joint": [info(m) for m in MATRICES], "confusion": [rates(c) for c in CONFUSION]}, indent=2))
