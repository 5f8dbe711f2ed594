"""Candidate quantizer sets: compositions, partitions and the max-search families."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

from iqdp.errors import CapacityError, ConfigurationError, DomainError
from iqdp.model import Quantizer, check_quantizer

COMPOSITION_CAP = 24
PARTITION_CAP = 80


def iter_compositions(L: int) -> Iterator[Quantizer]:
    """Yield the ``2**(L-1)`` compositions of ``L``.

    Bit ``j`` of the counter set means "cut after position ``j + 1``".
    """
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    for mask in range(1 << (L - 1)):
        bins = []
        run = 1
        for j in range(L - 1):
            if mask >> j & 1:
                bins.append(run)
                run = 1
            else:
                run += 1
        bins.append(run)
        yield tuple(bins)


def enumerate_compositions(L: int, cap: int = COMPOSITION_CAP) -> list[Quantizer]:
    if L > cap:
        raise CapacityError(f"compositions of L={L} exceed the cap L <= {cap}")
    return list(_compositions(L))


@lru_cache(maxsize=None)
def _compositions(L: int) -> tuple[Quantizer, ...]:
    return tuple(iter_compositions(L))


def iter_partitions(L: int, largest: int | None = None) -> Iterator[Quantizer]:
    """Yield the partitions of ``L`` with parts in non-increasing order."""
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    yield from _partitions_bounded(L, L if largest is None else largest)


def _partitions_bounded(L: int, largest: int) -> Iterator[Quantizer]:
    if L == 0:
        yield ()
        return
    for first in range(min(L, largest), 0, -1):
        for rest in _partitions_bounded(L - first, first):
            yield (first,) + rest


def enumerate_partitions(L: int, cap: int = PARTITION_CAP) -> list[Quantizer]:
    if L > cap:
        raise CapacityError(f"partitions of L={L} exceed the cap L <= {cap}")
    return list(_partitions(L))


@lru_cache(maxsize=None)
def _partitions(L: int) -> tuple[Quantizer, ...]:
    return tuple(iter_partitions(L))


@lru_cache(maxsize=None)
def partition_count(L: int) -> int:
    """Exact number of integer partitions of ``L``."""
    if L < 0:
        raise DomainError(f"L must be >= 0, got {L}")
    ways = [1] + [0] * L
    for part in range(1, L + 1):
        for total in range(part, L + 1):
            ways[total] += ways[total - part]
    return ways[L]


def hardy_ramanujan_estimate(L: int) -> float:
    """Leading-order asymptotic ``exp(pi sqrt(2L/3)) / (4 L sqrt 3)``."""
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    return math.exp(math.pi * math.sqrt(2.0 * L / 3.0)) / (4.0 * L * math.sqrt(3.0))


def extended_max_search_family(L: int) -> list[Quantizer]:
    """One large low bin followed by ``k - 1`` unit bins, for ``k = 2..L``."""
    if L < 2:
        raise DomainError(f"the extended max-search family needs L >= 2, got {L}")
    return [(L - k + 1,) + (1,) * (k - 1) for k in range(2, L + 1)]


def binary_split_quantizer(L: int) -> Quantizer:
    """Halve the support, larger half at the low end when ``L`` is odd."""
    if L < 2:
        raise DomainError(f"binary split needs L >= 2, got {L}")
    return ((L + 1) // 2, L // 2)


def max_search_quantizer(L: int) -> Quantizer:
    if L < 2:
        raise DomainError(f"max search needs L >= 2, got {L}")
    return (L - 1, 1)


@dataclass(frozen=True)
class SearchSpace:
    """A rule producing the admissible quantizers for each support size.

    ``kind`` is one of ``compositions``, ``partitions``, ``extended``
    (the extended max-search family), ``binary+extended`` or ``explicit``.
    An explicit space offers, at support size ``L``, those of its
    quantizers that sum to ``L``.
    """

    kind: str
    quantizers: tuple[Quantizer, ...] = ()
    composition_cap: int = COMPOSITION_CAP
    partition_cap: int = PARTITION_CAP

    KINDS = ("compositions", "partitions", "extended", "binary+extended", "explicit")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown search space {self.kind!r}; choose from {self.KINDS}")
        if self.kind == "explicit":
            qs = tuple(check_quantizer(q, sum(q)) for q in self.quantizers)
            if len(set(qs)) != len(qs):
                raise ConfigurationError("explicit search space contains duplicates")
            object.__setattr__(self, "quantizers", qs)

    @classmethod
    def explicit(cls, quantizers: Sequence[Sequence[int]]) -> SearchSpace:
        return cls("explicit", tuple(tuple(q) for q in quantizers))

    @property
    def name(self) -> str:
        return self.kind

    def candidates(self, L: int) -> list[Quantizer]:
        """All quantizers of the space for support size ``L``, single bin included."""
        if self.kind == "compositions":
            return enumerate_compositions(L, self.composition_cap)
        if self.kind == "partitions":
            return enumerate_partitions(L, self.partition_cap)
        if self.kind == "explicit":
            return [q for q in self.quantizers if sum(q) == L]
        if L < 2:
            return [(1,)]
        family = extended_max_search_family(L)
        if self.kind == "binary+extended":
            split = binary_split_quantizer(L)
            if split not in family:
                family.append(split)
        return family


COMPOSITIONS = SearchSpace("compositions")
PARTITIONS = SearchSpace("partitions")
EXTENDED = SearchSpace("extended")
BINARY_EXTENDED = SearchSpace("binary+extended")
