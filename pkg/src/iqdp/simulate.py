"""Seeded Monte Carlo execution of the round-by-round protocol.

Each trial draws ``N`` i.i.d. values from the root PMF and plays the
protocol literally: every active user reports the index of its bin, the
CEO keeps the users in the highest reported bin and narrows the support to
that bin.  Each round is charged ``N_t * H(p_Q)`` bits (ideal entropy
coding of the bin indices) and one unit of delay.  At the end the CEO's
answer is compared against the brute-force extremum of the drawn values.

Trials are generated in fixed-size blocks; block ``b`` uses the stream
``default_rng([seed, b])``, so the report does not depend on the order or
the number of workers that process the blocks.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from iqdp.errors import DomainError, PolicyIncompleteError
from iqdp.model import Pmf, Quantizer, State, Target, bin_intervals, check_quantizer, induced_pmf
from iqdp.spaces import binary_split_quantizer, max_search_quantizer

BLOCK_SIZE = 4096


class Policy(Protocol):
    def quantizer_for(self, s: State) -> Quantizer: ...


class BinarySearchPolicy:
    def quantizer_for(self, s: State) -> Quantizer:
        return binary_split_quantizer(s.size)


class MaxSearchPolicy:
    def quantizer_for(self, s: State) -> Quantizer:
        return max_search_quantizer(s.size)


class FixedPolicy:
    """Chooses the quantizer from the current support size alone."""

    def __init__(self, by_size: Callable[[int], Sequence[int]]) -> None:
        self.by_size = by_size

    def quantizer_for(self, s: State) -> Quantizer:
        return tuple(self.by_size(s.size))


class MappingPolicy:
    """Explicit ``(N, lo, hi) -> quantizer`` table, e.g. a policy read from JSON."""

    def __init__(self, table: Mapping[tuple[int, int, int], Sequence[int]]) -> None:
        self.table = {tuple(k): tuple(v) for k, v in table.items()}

    def quantizer_for(self, s: State) -> Quantizer:
        try:
            return self.table[s.key]
        except KeyError:
            raise PolicyIncompleteError(s.key) from None


@dataclass(frozen=True)
class SimConfig:
    trials: int
    seed: int = 0
    policy: Policy = BinarySearchPolicy()
    workers: int = 1
    block_size: int = BLOCK_SIZE

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.block_size < 1:
            raise DomainError("block_size must be >= 1")


@dataclass(frozen=True)
class SimReport:
    mean_rate: float
    mean_delay: float
    std_err_rate: float
    std_err_delay: float
    correctness: float
    trials: int
    seed: int
    max_rounds: int

    def to_dict(self) -> dict:
        return {
            "mean_rate": self.mean_rate,
            "mean_delay": self.mean_delay,
            "std_err_rate": self.std_err_rate,
            "std_err_delay": self.std_err_delay,
            "correctness": self.correctness,
            "trials": self.trials,
            "seed": self.seed,
            "max_rounds": self.max_rounds,
        }


def draw_values(p: Pmf, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size x n`` i.i.d. draws from ``p`` by inverse CDF."""
    u = rng.random((size, n))
    idx = np.searchsorted(p.prefix, u, side="right") - 1
    return p.support_lo + np.clip(idx, 0, p.size - 1)


def _blocks(trials: int, block_size: int) -> list[tuple[int, int]]:
    return [(b, min(block_size, trials - b * block_size)) for b in range((trials + block_size - 1) // block_size)]


class _Round:
    """Cached per-state data: bin upper edges, bin intervals and bits charged."""

    __slots__ = ("uppers", "intervals", "bits")

    def __init__(self, s: State, q: Quantizer) -> None:
        q = check_quantizer(q, s.size)
        if len(q) < 2:
            raise DomainError(f"policy chose single-bin quantizer {q} at state {s.key}")
        self.intervals = bin_intervals(q, s.lo)
        self.uppers = [hi for _, hi in self.intervals]
        self.bits = s.n_users * induced_pmf(q, s.conditional()).entropy()


class _Protocol:
    def __init__(self, root: State, target: Target, policy: Policy) -> None:
        self.root = root
        self.target = target
        self.policy = policy
        self.rounds: dict[tuple[int, int, int], _Round] = {}

    def _round(self, n: int, lo: int, hi: int) -> _Round:
        key = (n, lo, hi)
        r = self.rounds.get(key)
        if r is None:
            s = State(n, lo, hi, self.root.pmf)
            r = self.rounds[key] = _Round(s, self.policy.quantizer_for(s))
        return r

    def play(self, values: Sequence[int]) -> tuple[float, int, bool]:
        """One trial: returns (bits, rounds, answer is correct)."""
        argmax = self.target is Target.ARGMAX
        active = list(range(len(values)))
        lo, hi = self.root.lo, self.root.hi
        bits, rounds = 0.0, 0
        while hi > lo and not (argmax and len(active) == 1):
            rnd = self._round(len(active), lo, hi)
            reports = [bisect_left(rnd.uppers, values[u]) for u in active]
            top = max(reports)
            active = [u for u, k in zip(active, reports) if k == top]
            new_lo, new_hi = rnd.intervals[top]
            if new_hi - new_lo >= hi - lo:
                raise AssertionError("support did not shrink")
            lo, hi = new_lo, new_hi
            bits += rnd.bits
            rounds += 1
        return bits, rounds, self._correct(values, active, lo, hi)

    def _correct(self, values, active, lo, hi) -> bool:
        best = max(values)
        ok = True
        if self.target in (Target.ARGMAX, Target.BOTH):
            ok &= set(active) == {u for u, v in enumerate(values) if v == best}
        if self.target in (Target.MAX, Target.BOTH):
            ok &= lo == hi == best
        return ok


def run(root: State, target: Target | str, cfg: SimConfig) -> SimReport:
    target = Target.parse(target)
    proto = _Protocol(root, target, cfg.policy)

    def block(spec: tuple[int, int]) -> np.ndarray:
        b, size = spec
        rng = np.random.default_rng([cfg.seed, b])
        draws = draw_values(root.pmf, root.n_users, size, rng).tolist()
        return np.array([proto.play(v) for v in draws], dtype=float)

    specs = _blocks(cfg.trials, cfg.block_size)
    if cfg.workers > 1:
        # the policy cache is filled lazily; prime it so threads only read
        block(specs[0])
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(block, specs))
    else:
        results = [block(s) for s in specs]
    out = np.concatenate(results)
    bits, rounds, ok = out[:, 0], out[:, 1], out[:, 2]
    n = cfg.trials
    se = (lambda x: float(x.std(ddof=1) / math.sqrt(n))) if n > 1 else (lambda x: 0.0)
    return SimReport(
        mean_rate=float(bits.mean()),
        mean_delay=float(rounds.mean()),
        std_err_rate=se(bits),
        std_err_delay=se(rounds),
        correctness=float(ok.mean()),
        trials=n,
        seed=cfg.seed,
        max_rounds=int(rounds.max()),
    )


def empirical_max_distribution(p: Pmf, N: int, trials: int, seed: int = 0) -> Pmf:
    """Histogram of ``max`` over ``N`` draws, normalized to a Pmf on ``p``'s support."""
    if N < 1 or trials < 1:
        raise DomainError("N and trials must be >= 1")
    counts = np.zeros(p.size)
    for b, size in _blocks(trials, BLOCK_SIZE):
        rng = np.random.default_rng([seed, b])
        top = draw_values(p, N, size, rng).max(axis=1)
        counts += np.bincount(top - p.support_lo, minlength=p.size)
    return Pmf(counts / trials, p.support_lo)


def max_distribution(p: Pmf, N: int) -> Pmf:
    """Exact law of the maximum: ``P(max = k) = F(k)^N - F(k-1)^N``."""
    F = p.prefix
    return Pmf.from_weights(F[1:] ** N - F[:-1] ** N, p.support_lo)
