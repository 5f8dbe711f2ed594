"""Value types and single-round semantics of the interactive quantization protocol.

A source is a :class:`Pmf` over the ordered alphabet ``{1, ..., L}``.  A
quantizer is an ordered tuple of positive bin sizes summing to the size of
the current support; bin ``k`` covers the next ``bins[k]`` values in
increasing order.  After every round the CEO keeps only the users that
reported the highest non-empty bin, so the surviving support is always a
contiguous sub-interval ``[lo, hi]`` of the original alphabet.  A
:class:`State` is therefore ``(N, lo, hi)`` plus a handle to the original
PMF.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from iqdp.errors import DomainError, InvalidQuantizerError

Quantizer = tuple[int, ...]

SUM_TOL = 1e-12


class Target(enum.Enum):
    """Function of the users' values the CEO wants to compute."""

    ARGMAX = "argmax"
    MAX = "max"
    BOTH = "both"

    @classmethod
    def parse(cls, value: str | Target) -> Target:
        if isinstance(value, Target):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise DomainError(f"unknown target {value!r}") from None


def entropy(probs: Sequence[float] | np.ndarray) -> float:
    """Shannon entropy in bits, with ``0 log 0 = 0``."""
    p = np.asarray(probs, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass function over the contiguous support ``support_lo, ...``.

    ``probs[j]`` is the mass of value ``support_lo + j``.  The array is made
    read-only on construction.
    """

    probs: np.ndarray
    support_lo: int = 1
    _prefix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise DomainError("a Pmf needs at least one support value")
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise DomainError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise DomainError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        prefix = np.concatenate(([0.0], np.cumsum(probs)))
        prefix[-1] = 1.0
        prefix.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_prefix", prefix)

    @classmethod
    def from_weights(cls, weights: Sequence[float], support_lo: int = 1) -> Pmf:
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not total > 0:
            raise DomainError("weights must have positive total mass")
        return cls(w / total, support_lo)

    @property
    def size(self) -> int:
        return int(self.probs.size)

    @property
    def support_hi(self) -> int:
        return self.support_lo + self.size - 1

    @property
    def prefix(self) -> np.ndarray:
        """Prefix sums, ``prefix[j] = P(X < support_lo + j)``."""
        return self._prefix

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.probs == self.probs[0]))

    def cdf(self, x: int) -> float:
        """``F_X(x) = P(X <= x)``; 0 below the support and 1 above it."""
        j = x - self.support_lo + 1
        if j <= 0:
            return 0.0
        if j >= self.size:
            return 1.0
        return float(self._prefix[j])

    def mass(self, lo: int, hi: int) -> float:
        """Mass on the inclusive interval ``[lo, hi]``."""
        a = lo - self.support_lo
        b = hi - self.support_lo + 1
        return float(self._prefix[b] - self._prefix[a])

    def restrict(self, lo: int, hi: int) -> Pmf:
        """Conditional PMF given ``lo <= X <= hi``."""
        if not (self.support_lo <= lo <= hi <= self.support_hi):
            raise DomainError(f"[{lo}, {hi}] is not inside the support")
        part = self.probs[lo - self.support_lo : hi - self.support_lo + 1]
        total = part.sum()
        if not total > 0:
            raise DomainError(f"no probability mass on [{lo}, {hi}]")
        return Pmf(part / total, lo)

    def entropy(self) -> float:
        return entropy(self.probs)

    def __repr__(self) -> str:
        return f"Pmf(support_lo={self.support_lo}, probs={self.probs.tolist()!r})"


def make_uniform(L: int) -> Pmf:
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    return Pmf(np.full(L, 1.0 / L))


def _check_shape(L: int, p: float) -> None:
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")


def make_truncated_geometric(L: int, p: float) -> Pmf:
    """``g(x) = (1-p)^(L-x-1) p / (1 - (1-p)^L)`` on ``x = 0..L-1``, shifted to ``1..L``.

    The mass grows geometrically towards the top of the alphabet; smaller
    ``p`` flattens it towards uniform.
    """
    _check_shape(L, p)
    x = np.arange(L)
    w = (1.0 - p) ** (L - x - 1) * p / (1.0 - (1.0 - p) ** L)
    return Pmf.from_weights(w)


def make_binomial(L: int, p: float) -> Pmf:
    """Binomial(L, p) terms for ``x = 0..L-1``, renormalized and shifted to ``1..L``.

    The ``x = L`` term is dropped so that the alphabet has exactly ``L``
    values; the remaining terms are rescaled to sum to one.
    """
    _check_shape(L, p)
    w = [math.comb(L, x) * p**x * (1.0 - p) ** (L - x) for x in range(L)]
    return Pmf.from_weights(w)


def check_quantizer(q: Sequence[int], L: int) -> Quantizer:
    """Return ``q`` as a tuple, raising if it is not a valid quantizer for size ``L``."""
    q = tuple(int(b) for b in q)
    if not q or any(b < 1 for b in q):
        raise InvalidQuantizerError(f"bins must be positive integers, got {q}")
    if sum(q) != L:
        raise InvalidQuantizerError(f"bins {q} sum to {sum(q)}, expected {L}")
    return q


def induced_pmf(q: Sequence[int], p: Pmf) -> Pmf:
    """Mass of each quantizer bin, as a Pmf over bin indices ``1..K``."""
    q = check_quantizer(q, p.size)
    edges = np.concatenate(([0], np.cumsum(q)))
    masses = p.prefix[edges[1:]] - p.prefix[edges[:-1]]
    masses = np.clip(masses, 0.0, None)
    return Pmf(masses / masses.sum())


@dataclass(frozen=True)
class State:
    """CEO state: ``n_users`` active users whose values lie in ``[lo, hi]``.

    ``pmf`` is the *original* source PMF; the current conditional PMF is
    its restriction to ``[lo, hi]``.
    """

    n_users: int
    lo: int
    hi: int
    pmf: Pmf = field(compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.n_users < 1:
            raise DomainError(f"n_users must be >= 1, got {self.n_users}")
        if not (self.pmf.support_lo <= self.lo <= self.hi <= self.pmf.support_hi):
            raise DomainError(f"interval [{self.lo}, {self.hi}] outside the support")
        if not self.pmf.mass(self.lo, self.hi) > 0:
            raise DomainError(f"no probability mass on [{self.lo}, {self.hi}]")

    @classmethod
    def root(cls, pmf: Pmf, n_users: int) -> State:
        return cls(n_users, pmf.support_lo, pmf.support_hi, pmf)

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.n_users, self.lo, self.hi)

    def conditional(self) -> Pmf:
        return self.pmf.restrict(self.lo, self.hi)


@dataclass(frozen=True)
class TransitionOutcome:
    bin_index: int  # 1-based index of the highest reported bin
    survivors: int
    prob: float
    next: State


def terminal(s: State, f: Target) -> bool:
    if s.size == 1:
        return True
    return f is Target.ARGMAX and s.n_users == 1


def bin_intervals(q: Sequence[int], lo: int) -> list[tuple[int, int]]:
    out = []
    start = lo
    for b in q:
        out.append((start, start + b - 1))
        start += b
    return out


def transitions(s: State, q: Sequence[int]) -> list[TransitionOutcome]:
    """All positive-probability outcomes of applying ``q`` in state ``s``.

    The outcome ``(k, i)`` means bin ``k`` is the highest non-empty bin and
    ``i`` users reported it; its probability is
    ``C(N, i) p_Q(k)^i F_Q(k-1)^(N-i)``.
    """
    q = check_quantizer(q, s.size)
    if len(q) < 2:
        raise InvalidQuantizerError("a quantizer needs at least two bins to make progress")
    pq = induced_pmf(q, s.conditional()).probs
    below = np.concatenate(([0.0], np.cumsum(pq)[:-1]))
    n = s.n_users
    out = []
    for k, ((a, b), mass) in enumerate(zip(bin_intervals(q, s.lo), pq), start=1):
        if mass <= 0.0:
            continue
        for i in range(1, n + 1):
            prob = math.comb(n, i) * mass**i * below[k - 1] ** (n - i)
            if prob > 0.0:
                out.append(TransitionOutcome(k, i, prob, State(i, a, b, s.pmf)))
    return out


def stage_cost(s: State, q: Sequence[int], f: Target) -> tuple[float, int]:
    """(rate in bits, delay in rounds) of one round; zero at terminal states."""
    if terminal(s, f):
        return 0.0, 0
    pq = induced_pmf(q, s.conditional())
    return s.n_users * pq.entropy(), 1
