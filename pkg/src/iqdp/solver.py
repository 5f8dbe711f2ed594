"""Minimum-cost dynamic program over quantizer policies.

The cost of a state ``s`` under weight ``lam`` is

    C(s) = 0                                             if s is terminal
    C(s) = min_q (1 - lam) N H(p_Q) + lam + sum_o P(o) C(next(o))   otherwise

where the outcomes ``o = (k, i)`` of quantizer ``q`` are "bin ``k`` is the
highest non-empty bin and ``i`` users reported it".  Every outcome shrinks
the support, so states are solved bottom-up by interval length.

All weights of a sweep are solved in one pass: the per-state tables carry
one column per ``lam`` and no information flows between columns.  The
successor expectation for every admitted quantizer of a state is a sparse
matrix ``W`` (actions x states), so a whole state costs one sparse-dense
product.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import sparse

from iqdp.errors import ConfigurationError, DomainError, PolicyIncompleteError
from iqdp.model import (
    Quantizer,
    State,
    Target,
    check_quantizer,
    stage_cost,
    terminal,
    transitions,
)
from iqdp.spaces import PARTITIONS, SearchSpace

TIE_RTOL = 1e-12
GAP_TOL = 1e-9
_BLOCK_ENTRIES = 4_000_000


def default_lambda_grid(points: int = 201) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


@dataclass(frozen=True)
class SolveConfig:
    lam: float
    target: Target = Target.MAX
    space: SearchSpace = PARTITIONS
    include_ceo_feedback: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError(f"lambda must lie in [0, 1], got {self.lam}")
        object.__setattr__(self, "target", Target.parse(self.target))


def _tie_order(q: Quantizer) -> tuple:
    # fewer bins first, then lexicographically largest tuple
    return (len(q), tuple(-b for b in q))


@dataclass(frozen=True)
class _ActionSet:
    quantizers: tuple[Quantizer, ...]
    row: np.ndarray  # action index of each bin
    start: np.ndarray  # bin offset within the interval
    length: np.ndarray  # bin size

    @classmethod
    def build(cls, space: SearchSpace, m: int) -> _ActionSet:
        qs = sorted({q for q in space.candidates(m) if len(q) >= 2}, key=_tie_order)
        if not qs:
            raise ConfigurationError(
                f"search space {space.name!r} has no quantizer with K >= 2 for L={m}"
            )
        row, start, length = [], [], []
        for a, q in enumerate(qs):
            offset = 0
            for b in q:
                row.append(a)
                start.append(offset)
                length.append(b)
                offset += b
        return cls(
            tuple(qs),
            np.asarray(row, dtype=np.int64),
            np.asarray(start, dtype=np.int64),
            np.asarray(length, dtype=np.int64),
        )


def _xlog2x(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log2(x[pos])
    return out


def _rowdot(w_rows: sparse.csr_matrix, table: np.ndarray) -> np.ndarray:
    """``out[l] = w_rows[l] . table[:, l]``."""
    return np.asarray(w_rows.multiply(table.T).sum(axis=1)).ravel()


class SolutionSet:
    """Optimal costs, rates, delays and actions of every state, for a grid of weights.

    Use :meth:`solution` to extract the per-weight :class:`Solution` with its
    reachable policy.
    """

    def __init__(
        self,
        root: State,
        target: Target | str,
        space: SearchSpace,
        lambdas: Sequence[float],
        include_ceo_feedback: bool = False,
    ) -> None:
        lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
        if lam.ndim != 1 or np.any(lam < 0.0) or np.any(lam > 1.0):
            raise DomainError("lambda values must lie in [0, 1]")
        self.root = root
        self.target = Target.parse(target)
        self.space = space
        self.lambdas = lam
        self.include_ceo_feedback = include_ceo_feedback
        self.pmf = root.pmf
        self._base = root.pmf.support_lo
        self._L = root.pmf.size
        self._uniform = root.pmf.is_uniform
        n_states = root.n_users * self._L * self._L
        shape = (n_states, lam.size)
        self._cost = np.zeros(shape)
        self._rate = np.zeros(shape)
        self._delay = np.zeros(shape)
        self._feedback = np.zeros(shape)
        self._action = np.full(shape, -1, dtype=np.int64)
        self._solved = np.zeros(n_states, dtype=bool)
        self._actions: dict[int, _ActionSet] = {}
        self.states_evaluated = 0
        self._run()

    # -- indexing -----------------------------------------------------------

    def _index(self, n, lo, hi):
        """Table row of ``(n, lo, hi)``; uniform sources share rows across shifts."""
        L, base = self._L, self._base
        if self._uniform:
            return ((n - 1) * L) * L + (hi - lo)
        return ((n - 1) * L + (lo - base)) * L + (hi - base)

    def _row(self, s: State) -> int:
        if s.pmf is not self.pmf:
            raise DomainError("state belongs to a different source PMF")
        if s.n_users > self.root.n_users:
            raise DomainError(f"state has more users than the solved root ({s.n_users})")
        r = self._index(s.n_users, s.lo, s.hi)
        if not self._solved[r]:
            raise DomainError(f"state {s.key} was not part of this solve")
        return r

    def _is_terminal(self, n, m):
        return (m == 1) | ((n == 1) & (self.target is Target.ARGMAX))

    def _intervals(self) -> list[tuple[int, int]]:
        lo0, hi0 = self.root.lo, self.root.hi
        if self._uniform:
            return [(lo0, lo0 + m - 1) for m in range(1, hi0 - lo0 + 2)]
        out = [
            (a, a + m - 1)
            for m in range(1, hi0 - lo0 + 2)
            for a in range(lo0, hi0 - m + 2)
        ]
        return [(a, b) for a, b in out if self.pmf.mass(a, b) > 0]

    def _action_set(self, m: int) -> _ActionSet:
        if m not in self._actions:
            self._actions[m] = _ActionSet.build(self.space, m)
        return self._actions[m]

    # -- bottom-up pass -----------------------------------------------------

    def _run(self) -> None:
        if not self._is_terminal(self.root.n_users, self.root.size):
            # fail on capacity before the smaller sizes are paid for
            self._action_set(self.root.size)
        for lo, hi in self._intervals():
            m = hi - lo + 1
            for n in range(1, self.root.n_users + 1):
                r = self._index(n, lo, hi)
                self._solved[r] = True
                if not self._is_terminal(n, m):
                    self._solve_state(n, lo, hi, r)
                    self.states_evaluated += 1

    def _solve_state(self, n: int, lo: int, hi: int, r: int) -> None:
        acts = self._action_set(hi - lo + 1)
        n_act = len(acts.quantizers)
        pre = self.pmf.prefix
        a0 = lo - self._base
        cum = pre[a0 : hi - self._base + 2] - pre[a0]
        cum = cum / cum[-1]
        cum[-1] = 1.0

        p_bin = np.clip(cum[acts.start + acts.length] - cum[acts.start], 0.0, None)
        below = cum[acts.start]
        stage = -n * np.bincount(acts.row, weights=_xlog2x(p_bin), minlength=n_act)

        i = np.arange(1, n + 1)
        binom = np.array([math.comb(n, k) for k in i], dtype=float)
        rho = binom * p_bin[:, None] ** i * below[:, None] ** (n - i)
        keep = rho > 0
        bin_idx, i_idx = np.nonzero(keep)
        probs = rho[keep]
        survivors = i[i_idx]
        succ_lo = lo + acts.start[bin_idx]
        succ_hi = succ_lo + acts.length[bin_idx] - 1
        cols = self._index(survivors, succ_lo, succ_hi)
        rows = acts.row[bin_idx]
        W = sparse.csr_matrix((probs, (rows, cols)), shape=(n_act, self._cost.shape[0]))

        fb = np.zeros(n_act)
        if self.include_ceo_feedback:
            term = self._is_terminal(survivors, acts.length[bin_idx])
            p_term = np.bincount(rows[term], weights=probs[term], minlength=n_act)
            open_ent = np.bincount(rows[~term], weights=_xlog2x(probs[~term]), minlength=n_act)
            fb = -(open_ent + _xlog2x(p_term))
        self._select(r, W, stage, fb)

    def _q_values(self, W, stage_rate, lo_row, hi_row):
        lam = self.lambdas
        return (
            np.outer(stage_rate[lo_row:hi_row], 1.0 - lam)
            + lam
            + W[lo_row:hi_row] @ self._cost
        )

    def _select(self, r: int, W, stage, fb) -> None:
        lam = self.lambdas
        n_act = W.shape[0]
        stage_rate = stage + fb
        block = max(1, _BLOCK_ENTRIES // lam.size)
        spans = [(a, min(a + block, n_act)) for a in range(0, n_act, block)]

        if len(spans) == 1:
            blocks = [self._q_values(W, stage_rate, 0, n_act)]
            qmin = blocks[0].min(axis=0)
        else:
            blocks = None
            qmin = np.full(lam.size, np.inf)
            for a, b in spans:
                qmin = np.minimum(qmin, self._q_values(W, stage_rate, a, b).min(axis=0))
        tol = TIE_RTOL * np.maximum(1.0, np.abs(qmin))

        tie_a, tie_l = [], []
        for j, (a, b) in enumerate(spans):
            q = blocks[j] if blocks is not None else self._q_values(W, stage_rate, a, b)
            aa, ll = np.nonzero(q <= qmin + tol)
            tie_a.append(aa + a)
            tie_l.append(ll)
        tie_a = np.concatenate(tie_a)
        tie_l = np.concatenate(tie_l)

        chosen = np.full(lam.size, n_act, dtype=np.int64)
        np.minimum.at(chosen, tie_l, tie_a)
        counts = np.bincount(tie_l, minlength=lam.size)
        multi = counts[tie_l] > 1
        if np.any(multi):
            self._break_ties(W, stage_rate, tie_a[multi], tie_l[multi], chosen)

        w_sel = W[chosen]
        self._action[r] = chosen
        self._rate[r] = stage_rate[chosen] + _rowdot(w_sel, self._rate)
        self._feedback[r] = fb[chosen] + _rowdot(w_sel, self._feedback)
        self._delay[r] = 1.0 + _rowdot(w_sel, self._delay)
        self._cost[r] = (1.0 - lam) * stage_rate[chosen] + lam + _rowdot(w_sel, self._cost)

    def _break_ties(self, W, stage_rate, tie_a, tie_l, chosen) -> None:
        """Among cost-equal actions prefer lower delay (lower rate when lam = 1)."""
        lam = self.lambdas[tie_l]
        rows = W[tie_a]
        delay = 1.0 + np.asarray(rows.multiply(self._delay[:, tie_l].T).sum(axis=1)).ravel()
        rate = stage_rate[tie_a] + np.asarray(
            rows.multiply(self._rate[:, tie_l].T).sum(axis=1)
        ).ravel()
        secondary = np.where(lam < 1.0, delay, rate)
        for l in np.unique(tie_l):
            sel = tie_l == l
            sec = secondary[sel]
            best = sec.min()
            ok = sec <= best + TIE_RTOL * max(1.0, abs(best))
            chosen[l] = tie_a[sel][ok].min()

    # -- queries ------------------------------------------------------------

    def _lambda_index(self, lam: float) -> int:
        hits = np.nonzero(np.isclose(self.lambdas, lam, rtol=0.0, atol=1e-12))[0]
        if hits.size == 0:
            raise DomainError(f"lambda={lam} was not part of this solve")
        return int(hits[0])

    def cost(self, s: State) -> np.ndarray:
        return self._cost[self._row(s)].copy()

    def rate(self, s: State) -> np.ndarray:
        return self._rate[self._row(s)].copy()

    def delay(self, s: State) -> np.ndarray:
        return self._delay[self._row(s)].copy()

    def feedback_rate(self, s: State) -> np.ndarray:
        return self._feedback[self._row(s)].copy()

    def quantizer(self, s: State, j: int) -> Quantizer | None:
        """Optimal quantizer in state ``s`` for the ``j``-th weight; None if terminal."""
        a = self._action[self._row(s), j]
        if a < 0:
            return None
        return self._action_set(s.size).quantizers[a]

    def solution(self, j: int = 0) -> Solution:
        policy: dict[tuple[int, int, int], Quantizer] = {}
        queue = deque([self.root])
        seen = {self.root.key}
        while queue:
            s = queue.popleft()
            q = self.quantizer(s, j)
            if q is None:
                continue
            policy[s.key] = q
            for out in transitions(s, q):
                if out.next.key not in seen:
                    seen.add(out.next.key)
                    queue.append(out.next)
        r = self._row(self.root)
        return Solution(
            lam=float(self.lambdas[j]),
            target=self.target,
            space=self.space.name,
            include_ceo_feedback=self.include_ceo_feedback,
            root=self.root,
            cost=float(self._cost[r, j]),
            expected_rate=float(self._rate[r, j]),
            expected_delay=float(self._delay[r, j]),
            feedback_rate=float(self._feedback[r, j]),
            policy=dict(sorted(policy.items())),
            states_evaluated=self.states_evaluated,
            tables=self,
            lambda_index=j,
        )

    def solutions(self) -> list[Solution]:
        return [self.solution(j) for j in range(self.lambdas.size)]


@dataclass(frozen=True)
class Solution:
    """Optimal policy and its expected cost for one weight ``lam``.

    ``expected_rate`` counts uplink bits and, when ``include_ceo_feedback`` is
    set, the CEO's feedback bits as well (``feedback_rate`` is that share).
    ``policy`` maps every reachable non-terminal state key ``(N, lo, hi)`` to
    its quantizer.
    """

    lam: float
    target: Target
    space: str
    include_ceo_feedback: bool
    root: State
    cost: float
    expected_rate: float
    expected_delay: float
    feedback_rate: float
    policy: dict[tuple[int, int, int], Quantizer]
    states_evaluated: int
    tables: SolutionSet = field(repr=False, compare=False)
    lambda_index: int = field(default=0, repr=False, compare=False)

    def state_cost(self, s: State) -> float:
        return float(self.tables.cost(s)[self.lambda_index])

    def quantizer_for(self, s: State) -> Quantizer:
        try:
            return self.policy[s.key]
        except KeyError:
            raise PolicyIncompleteError(s.key) from None

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "target": self.target.value,
            "space": self.space,
            "feedback": self.include_ceo_feedback,
            "n_users": self.root.n_users,
            "cost": self.cost,
            "expected_rate": self.expected_rate,
            "expected_delay": self.expected_delay,
            "feedback_rate": self.feedback_rate,
            "states_evaluated": self.states_evaluated,
            "policy": [
                {"state": {"N": n, "lo": lo, "hi": hi}, "quantizer": list(q)}
                for (n, lo, hi), q in self.policy.items()
            ],
        }


def solve_many(
    root: State,
    target: Target | str,
    space: SearchSpace = PARTITIONS,
    lambdas: Sequence[float] | None = None,
    include_ceo_feedback: bool = False,
) -> SolutionSet:
    if lambdas is None:
        lambdas = default_lambda_grid()
    return SolutionSet(root, target, space, lambdas, include_ceo_feedback)


def solve(root: State, cfg: SolveConfig) -> Solution:
    tables = SolutionSet(root, cfg.target, cfg.space, [cfg.lam], cfg.include_ceo_feedback)
    return tables.solution(0)


def solve_with_feedback(root: State, cfg: SolveConfig) -> Solution:
    tables = SolutionSet(root, cfg.target, cfg.space, [cfg.lam], include_ceo_feedback=True)
    return tables.solution(0)


@dataclass(frozen=True)
class SweepPoint:
    lam: float
    rate: float
    delay: float
    cost: float


def sweep_lambda(
    root: State,
    target: Target | str,
    space: SearchSpace = PARTITIONS,
    lambdas: Sequence[float] | None = None,
    include_ceo_feedback: bool = False,
) -> list[SweepPoint]:
    tables = solve_many(root, target, space, lambdas, include_ceo_feedback)
    order = np.argsort(tables.lambdas, kind="stable")
    cost, rate, delay = tables.cost(root), tables.rate(root), tables.delay(root)
    return [
        SweepPoint(float(tables.lambdas[j]), float(rate[j]), float(delay[j]), float(cost[j]))
        for j in order
    ]


# -- independent evaluation routes ---------------------------------------------


def feedback_entropy(s: State, q: Sequence[int], target: Target) -> float:
    """Entropy of the next state with all terminal successors merged into one symbol."""
    outcomes = transitions(s, q)
    p_term = sum(o.prob for o in outcomes if terminal(o.next, target))
    ent = -sum(o.prob * math.log2(o.prob) for o in outcomes if not terminal(o.next, target))
    if p_term > 0:
        ent -= p_term * math.log2(p_term)
    return ent


def action_value(solution: Solution, s: State, q: Sequence[int]) -> float:
    """Cost of playing ``q`` in ``s`` and following ``solution`` afterwards.

    Built only from the single-round model functions, so it checks the
    vectorized tables from an independent route.
    """
    target = solution.target
    lam = solution.lam
    q = check_quantizer(q, s.size)
    rate, delay = stage_cost(s, q, target)
    if solution.include_ceo_feedback:
        rate += feedback_entropy(s, q, target)
    to_go = sum(o.prob * solution.state_cost(o.next) for o in transitions(s, q))
    return (1.0 - lam) * rate + lam * delay + to_go


def bellman_min(solution: Solution, s: State) -> float:
    """Right-hand side of the Bellman equation at ``s``, via :func:`action_value`."""
    if terminal(s, solution.target):
        return 0.0
    qs = [q for q in solution.tables.space.candidates(s.size) if len(q) >= 2]
    return min(action_value(solution, s, q) for q in qs)


@dataclass(frozen=True)
class PolicyValue:
    cost: float
    rate: float
    delay: float


def evaluate_policy(
    root: State,
    policy: Mapping[tuple[int, int, int], Sequence[int]],
    target: Target | str,
    lam: float,
    include_ceo_feedback: bool = False,
) -> PolicyValue:
    """Expected cost, rate and delay of a fixed policy, by memoized recursion."""
    target = Target.parse(target)
    memo: dict[tuple[int, int, int], tuple[float, float]] = {}

    def visit(s: State) -> tuple[float, float]:
        if terminal(s, target):
            return 0.0, 0.0
        if s.key in memo:
            return memo[s.key]
        if s.key not in policy:
            raise PolicyIncompleteError(s.key)
        q = tuple(policy[s.key])
        rate, delay = stage_cost(s, q, target)
        if include_ceo_feedback:
            rate += feedback_entropy(s, q, target)
        for o in transitions(s, q):
            r, d = visit(o.next)
            rate += o.prob * r
            delay += o.prob * d
        memo[s.key] = (rate, delay)
        return rate, delay

    rate, delay = visit(root)
    return PolicyValue((1.0 - lam) * rate + lam * delay, rate, delay)


# -- comparisons -----------------------------------------------------------------


def quantizer_cost_curve(
    root: State,
    q: Sequence[int],
    target: Target | str,
    lambdas: Sequence[float] | None = None,
    space: SearchSpace = PARTITIONS,
    tables: SolutionSet | None = None,
) -> np.ndarray:
    """Cost of playing ``q`` at ``root`` then acting optimally, for each weight."""
    if tables is None:
        tables = solve_many(root, target, space, lambdas)
    q = check_quantizer(q, root.size)
    target = tables.target
    if terminal(root, target):
        return np.zeros(tables.lambdas.size)
    rate, delay = stage_cost(root, q, target)
    lam = tables.lambdas
    out = (1.0 - lam) * rate + lam * delay
    for o in transitions(root, q):
        out = out + o.prob * tables.cost(o.next)
    return out


def compare_quantizer_costs(
    root: State,
    q1: Sequence[int],
    q2: Sequence[int],
    lam: float,
    target: Target | str,
    space: SearchSpace = PARTITIONS,
) -> tuple[float, float]:
    tables = solve_many(root, target, space, [lam])
    c1 = quantizer_cost_curve(root, q1, target, tables=tables)
    c2 = quantizer_cost_curve(root, q2, target, tables=tables)
    return float(c1[0]), float(c2[0])


@dataclass(frozen=True)
class GapReport:
    lambdas: np.ndarray
    delta: np.ndarray
    relative: np.ndarray
    subset_cost: np.ndarray
    full_cost: np.ndarray

    @property
    def worst(self) -> float:
        return float(self.delta.max())

    @property
    def best(self) -> float:
        return float(self.delta.min())

    @property
    def worst_relative(self) -> float:
        return float(self.relative.max())


def gap_metrics(
    root: State,
    target: Target | str,
    subset: SearchSpace,
    lambdas: Sequence[float] | None = None,
    full: SearchSpace = PARTITIONS,
) -> GapReport:
    """Gap to optimality when every round draws its quantizer from ``subset``."""
    if lambdas is None:
        lambdas = default_lambda_grid()
    lam = np.asarray(lambdas, dtype=float)
    c_sub = solve_many(root, target, subset, lam).cost(root)
    c_full = solve_many(root, target, full, lam).cost(root)
    delta = c_sub - c_full
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(c_full > 0, delta / c_full, 0.0)
    return GapReport(lam, delta, rel, c_sub, c_full)


def argmax_max_gap(
    root: State,
    lambdas: Sequence[float] | None = None,
    space: SearchSpace = PARTITIONS,
) -> list[tuple[float, float, float]]:
    """Paired optimal costs ``(lam, C_argmax, C_max)`` on the same root."""
    c_a = solve_many(root, Target.ARGMAX, space, lambdas)
    c_m = solve_many(root, Target.MAX, space, lambdas)
    return [
        (float(l), float(a), float(m))
        for l, a, m in zip(c_a.lambdas, c_a.cost(root), c_m.cost(root))
    ]
