"""Rate and delay of the binary-search and max-search policies on uniform sources.

Each quantity has two routes, the recurrence and the closed form, kept side
by side so that each can check the other.  Binary search halves the
support every round and is only defined here for power-of-two ``L``.
"""

from __future__ import annotations

import math
from functools import lru_cache

from iqdp.errors import DomainError
from iqdp.model import Pmf, binary_entropy

RECURSION = "recursion"
CLOSED = "closed"
BOUND = "bound"


def _check(N: int, L: int) -> None:
    if N < 1 or L < 1:
        raise DomainError(f"need N >= 1 and L >= 1, got N={N}, L={L}")


def _check_power_of_two(L: int) -> None:
    if L & (L - 1):
        raise DomainError(f"binary search needs L to be a power of two, got {L}")


@lru_cache(maxsize=None)
def _rb_rec(N: int, L: int) -> float:
    if N == 1 or L == 1:
        return 0.0
    half = L // 2
    upper = sum(math.comb(N, i) * _rb_rec(i, half) for i in range(2, N + 1))
    return N + (_rb_rec(N, half) + upper) / 2**N


@lru_cache(maxsize=None)
def _tb_rec(N: int, L: int) -> float:
    if N == 1 or L == 1:
        return 0.0
    half = L // 2
    upper = sum(math.comb(N, i) * _tb_rec(i, half) for i in range(2, N + 1))
    return 1.0 + (_tb_rec(N, half) + upper) / 2**N


def binary_search_rate(N: int, L: int, mode: str = CLOSED) -> float:
    """Expected bits to find the argmax by halving the support.

    The closed form ``2N(1 - 1/L)`` holds for ``N, L >= 2``; with a single
    user or a single value nothing needs to be sent.
    """
    _check(N, L)
    _check_power_of_two(L)
    if mode == RECURSION:
        return _rb_rec(N, L)
    if mode != CLOSED:
        raise DomainError(f"unknown mode {mode!r}")
    if N == 1 or L == 1:
        return 0.0
    return 2.0 * N * (1.0 - 1.0 / L)


def binary_search_delay(N: int, L: int, mode: str = RECURSION) -> float:
    """Expected rounds of binary search (``recursion``) or its upper bound (``bound``)."""
    _check(N, L)
    _check_power_of_two(L)
    if mode == RECURSION:
        return _tb_rec(N, L)
    if mode != BOUND:
        raise DomainError(f"unknown mode {mode!r}")
    return min(math.log2(N) + 1.0, math.log2(L))


@lru_cache(maxsize=None)
def _rm_rec(N: int, L: int) -> float:
    # the recurrence unrolled upward from R_m(N, 1) = 0, so large L needs no stack
    value = 0.0
    for size in range(2, L + 1):
        p = 1.0 / size
        value = N * binary_entropy(p) + (1.0 - p) ** N * value
    return value


@lru_cache(maxsize=None)
def _tm_rec(N: int, L: int) -> float:
    value = 0.0
    for size in range(2, L + 1):
        value = 1.0 + (1.0 - 1.0 / size) ** N * value
    return value


def max_search_rate(N: int, L: int, mode: str = CLOSED) -> float:
    """Expected bits when every round asks "do you hold the top remaining value?"."""
    _check(N, L)
    if mode == RECURSION:
        return _rm_rec(N, L)
    if mode != CLOSED:
        raise DomainError(f"unknown mode {mode!r}")
    return N * math.fsum((i / L) ** N * binary_entropy(1.0 / i) for i in range(2, L + 1))


def max_search_delay(N: int, L: int, mode: str = CLOSED) -> float:
    _check(N, L)
    if mode == RECURSION:
        return _tm_rec(N, L)
    if mode != CLOSED:
        raise DomainError(f"unknown mode {mode!r}")
    return math.fsum((i / L) ** N for i in range(2, L + 1))


def prob_unique_argmax(p: Pmf, N: int) -> float:
    """Probability that exactly one of ``N`` i.i.d. users holds the maximum.

    ``sum_k N F(k-1)^(N-1) p(k)``; it upper-bounds the chance that an
    argmax-optimal policy stops with a single user whose value is unknown.
    """
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    below = p.prefix[:-1]
    total = math.fsum(N * float(f) ** (N - 1) * float(m) for f, m in zip(below, p.probs))
    return min(1.0, max(0.0, total))


def single_user_cost(p: Pmf, lam: float) -> float:
    """Optimal cost for one remaining user whose value is still wanted."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    return (1.0 - lam) * p.entropy() + lam
