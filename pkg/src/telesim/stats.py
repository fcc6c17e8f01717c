"""Paired-sample statistics for sweep tables: Wilcoxon signed-rank test.

The two-sided p-value is exact for small samples: the full null
distribution of the positive-rank sum over all 2^n sign assignments is
computed by subset-sum convolution over the (mid)ranks, which is identical
to explicit enumeration but stays cheap at n=25. Larger samples use the
normal approximation with the standard tie correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class DegenerateSample(ValueError):
    """Every paired difference is zero; the test is undefined."""


@dataclass(frozen=True)
class WilcoxonResult:
    w: float              # min(W+, W-)
    p_two_sided: float
    n: int                # pairs used after dropping zero differences
    method: str           # "exact" or "approx"


def _midranks(values: list[float]) -> list[float]:
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _exact_two_sided(doubled_ranks: list[int], w2: int, total2: int) -> float:
    # Distribution of 2*W+ over all sign assignments, by convolution.
    dist = [0] * (total2 + 1)
    dist[0] = 1
    for dr in doubled_ranks:
        for s in range(total2, dr - 1, -1):
            if dist[s - dr]:
                dist[s] += dist[s - dr]
    denom = 2 ** len(doubled_ranks)
    low = sum(dist[: w2 + 1])
    high = sum(dist[total2 - w2:])
    return min(1.0, (low + high) / denom)


def wilcoxon_signed_rank(x: list[float], y: list[float],
                         exact_limit: int = 25) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped per the standard convention. Raises
    DegenerateSample when nothing remains and ValueError on length
    mismatch or empty input.
    """
    if len(x) != len(y):
        raise ValueError("paired samples must have equal length")
    if not x:
        raise ValueError("need at least one pair")
    diffs = [float(a) - float(b) for a, b in zip(x, y)]
    diffs = [d for d in diffs if d != 0.0]
    if not diffs:
        raise DegenerateSample("all paired differences are zero")

    n = len(diffs)
    ranks = _midranks([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranks, diffs) if d < 0)
    w = min(w_plus, w_minus)

    if n <= exact_limit:
        doubled = [int(round(2 * r)) for r in ranks]
        total2 = sum(doubled)
        w2 = int(round(2 * w))
        p = _exact_two_sided(doubled, w2, total2)
        return WilcoxonResult(w=w, p_two_sided=p, n=n, method="exact")

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    # Tie correction: subtract sum(t^3 - t)/48 over tie groups.
    counts: dict[float, int] = {}
    for d in diffs:
        counts[abs(d)] = counts.get(abs(d), 0) + 1
    var -= sum(t**3 - t for t in counts.values()) / 48.0
    if var <= 0:
        raise DegenerateSample("zero variance after tie correction")
    z = (w - mu) / math.sqrt(var)
    p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return WilcoxonResult(w=w, p_two_sided=p, n=n, method="approx")


def spearman_rho(x: list[float], y: list[float]) -> float:
    """Spearman rank correlation (midranks for ties)."""
    if len(x) != len(y) or len(x) < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    rx, ry = _midranks(list(x)), _midranks(list(y))
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))
    if den == 0:
        raise ValueError("constant ranks: correlation undefined")
    return num / den
