"""Brute-force reference computations, independent of the package's formulas.

Everything here works by enumerating the users' value vectors directly
instead of using the closed-form outcome probabilities.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache


def outcome_probs(probs, n, q):
    """``{(k, i): prob}`` by enumerating all ``len(probs)**n`` value vectors.

    ``probs`` is the conditional PMF on the current interval (index 0 is the
    lowest value); ``k`` is the 1-based winning bin, ``i`` its occupancy.
    """
    edges = list(itertools.accumulate(q))
    bin_of = [next(k for k, e in enumerate(edges) if v < e) for v in range(len(probs))]
    out = {}
    for vec in itertools.product(range(len(probs)), repeat=n):
        w = math.prod(probs[v] for v in vec)
        if w == 0:
            continue
        bins = [bin_of[v] for v in vec]
        top = max(bins)
        key = (top + 1, bins.count(top))
        out[key] = out.get(key, 0) + w
    return out


def entropy(ps):
    return -sum(p * math.log2(p) for p in ps if p > 0)


def compositions(L):
    if L == 0:
        yield ()
        return
    for first in range(1, L + 1):
        for rest in compositions(L - first):
            yield (first,) + rest


def optimal_cost(probs, N, target, lam, actions=compositions):
    """Optimal Bellman cost by exhaustive recursion over (n, lo, hi)."""
    probs = list(probs)
    argmax = target == "argmax"

    @lru_cache(maxsize=None)
    def cost(n, lo, hi):
        m = hi - lo + 1
        if m == 1 or (argmax and n == 1):
            return 0.0
        part = probs[lo : hi + 1]
        total = sum(part)
        cond = [p / total for p in part]
        best = math.inf
        for q in actions(m):
            if len(q) < 2:
                continue
            edges = [0] + list(itertools.accumulate(q))
            pq = [sum(cond[edges[k] : edges[k + 1]]) for k in range(len(q))]
            value = (1 - lam) * n * entropy(pq) + lam
            for (k, i), w in outcome_probs(cond, n, q).items():
                value += w * cost(i, lo + edges[k - 1], lo + edges[k] - 1)
            best = min(best, value)
        return best

    return cost(N, 0, len(probs) - 1)


def unique_argmax_prob(probs, N):
    """P(exactly one user attains the maximum), summed over all value vectors."""
    total = 0.0
    for vec in itertools.product(range(len(probs)), repeat=N):
        top = max(vec)
        if vec.count(top) == 1:
            total += math.prod(probs[v] for v in vec)
    return total


def unique_argmax_prob_exact(weights, N):
    """Same as :func:`unique_argmax_prob` with rational weights."""
    total_w = sum(weights)
    probs = [Fraction(w, total_w) for w in weights]
    total = Fraction(0)
    for vec in itertools.product(range(len(probs)), repeat=N):
        top = max(vec)
        if vec.count(top) == 1:
            total += math.prod((probs[v] for v in vec), start=Fraction(1))
    return total
