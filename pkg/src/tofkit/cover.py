"""Minimum-cost dialogue selection: cover every intent at least once.

Four routes, trading optimality for scale:

* :func:`solve_greedy` — best uncovered-intents-per-cost ratio, logarithmic
  approximation guarantee.
* :func:`solve_lp` — the fractional relaxation, solved by the in-package
  bounded-variable simplex (:mod:`tofkit.simplex`).
* :func:`solve_ilp` — provably optimal: cost-pruned exhaustive search on
  small instances, LP-guided depth-first branch-and-bound above that.
* :func:`lp_round` — seeded randomized rounding of the LP solution with a
  greedy repair pass; expected logarithmic approximation at a fraction of the
  ILP cost.

Instances are reduced before the optimizing solvers run: duplicate intent
sets collapse to the cheapest representative and dominated sets are pruned.
Greedy runs on the unreduced list so its documented tie-break (lowest
dialogue index) stays meaningful.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, IntentUniverse
from .errors import BudgetExceededError, InfeasibleInstanceError
from .rng import ALGORITHM as RNG_ALGORITHM
from .rng import SplitMix64
from .simplex import solve_covering_lp

METHOD_GREEDY = "greedy"
METHOD_ILP = "ilp"
METHOD_LP_ROUNDING = "lp-rounding"

EXHAUSTIVE_LIMIT = 25  # set count at or below which exact search skips the LP machinery


@dataclass(frozen=True)
class CoverSet:
    dialogue_id: str
    intents: frozenset[str]
    cost: float


@dataclass(frozen=True)
class CoverInstance:
    universe: IntentUniverse
    sets: tuple[CoverSet, ...]

    def __post_init__(self):
        if not self.sets:
            raise InfeasibleInstanceError("instance has no candidate sets")
        union: set[str] = set()
        ids = set()
        for s in self.sets:
            if s.cost <= 0:
                raise InfeasibleInstanceError(f"set {s.dialogue_id!r} has nonpositive cost")
            if s.dialogue_id in ids:
                raise InfeasibleInstanceError(f"duplicate set id {s.dialogue_id!r}")
            ids.add(s.dialogue_id)
            union |= s.intents
        if union != set(self.universe.labels):
            missing = sorted(set(self.universe.labels) - union)
            raise InfeasibleInstanceError(
                "instance infeasible: intents not coverable: " + ", ".join(missing[:10])
            )

    @property
    def labels(self) -> list[str]:
        return sorted(self.universe.labels)

    def set_by_id(self, dialogue_id: str) -> CoverSet:
        for s in self.sets:
            if s.dialogue_id == dialogue_id:
                return s
        raise KeyError(f"unknown dialogue id {dialogue_id!r}")

    @classmethod
    def from_universe(
        cls, universe: IntentUniverse, corpus: Corpus | None = None, weighted: bool = False
    ) -> "CoverInstance":
        """Build an instance from a labeled corpus. Cost is 1 per dialogue, or
        the utterance count when ``weighted``. Dialogues with no intents are
        left out (they cannot contribute coverage)."""
        if weighted and corpus is None:
            raise ValueError("weighted instances need the corpus for utterance counts")
        sets = []
        for did, subset in sorted(universe.per_dialogue.items()):
            if not subset:
                continue
            cost = float(len(corpus[did])) if weighted else 1.0
            sets.append(CoverSet(dialogue_id=did, intents=subset, cost=cost))
        return cls(universe=universe, sets=tuple(sets))

    @classmethod
    def from_sets(cls, items: list[tuple[str, set[str] | frozenset[str], float]]) -> "CoverInstance":
        """Convenience constructor for synthetic instances: a list of
        (id, intent set, cost) triples; the universe is their union."""
        sets = tuple(
            CoverSet(dialogue_id=i, intents=frozenset(s), cost=float(c)) for i, s, c in items
        )
        labels = frozenset().union(*(s.intents for s in sets)) if sets else frozenset()
        universe = IntentUniverse(
            labels=labels, per_dialogue={s.dialogue_id: s.intents for s in sets}
        )
        return cls(universe=universe, sets=sets)


@dataclass(frozen=True)
class CoverSolution:
    selected: frozenset[str]
    total_cost: float
    method: str
    seed: int | None = None
    universe_size: int = 0
    rng_algorithm: str | None = None
    wall_time_s: float = 0.0

    def to_json_obj(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "selected": sorted(self.selected),
            "totalCost": self.total_cost,
            "universeSize": self.universe_size,
        }


@dataclass(frozen=True)
class LpSolution:
    values: dict[str, float]
    objective: float
    iterations: int = 0
    wall_time_s: float = 0.0


def _finish(
    inst: CoverInstance,
    selected_ids: set[str],
    method: str,
    started: float,
    seed: int | None = None,
    rng_algorithm: str | None = None,
) -> CoverSolution:
    """Re-check feasibility and recompute the cost before handing a solution out."""
    covered: set[str] = set()
    total = 0.0
    by_id = {s.dialogue_id: s for s in inst.sets}
    for did in selected_ids:
        if did not in by_id:
            raise KeyError(f"unknown dialogue id {did!r}")
        covered |= by_id[did].intents
        total += by_id[did].cost
    if covered != set(inst.universe.labels):
        raise InfeasibleInstanceError("produced selection does not cover the universe")
    return CoverSolution(
        selected=frozenset(selected_ids),
        total_cost=total,
        method=method,
        seed=seed,
        universe_size=len(inst.universe.labels),
        rng_algorithm=rng_algorithm,
        wall_time_s=time.perf_counter() - started,
    )


def coverage_value(selected: set[str], inst: CoverInstance) -> int:
    """Number of distinct intents covered by a selection (monotone and
    submodular in the selection)."""
    by_id = {s.dialogue_id: s for s in inst.sets}
    covered: set[str] = set()
    for did in selected:
        if did not in by_id:
            raise KeyError(f"unknown dialogue id {did!r}")
        covered |= by_id[did].intents
    return len(covered)


def solve_greedy(inst: CoverInstance) -> CoverSolution:
    """Repeatedly take the set with the best uncovered-intents-per-cost
    ratio; ties go to the lowest dialogue index."""
    started = time.perf_counter()
    uncovered = set(inst.universe.labels)
    selected: set[str] = set()
    while uncovered:
        best_idx = -1
        best_ratio = -1.0
        for idx, s in enumerate(inst.sets):
            if s.dialogue_id in selected:
                continue
            gain = len(s.intents & uncovered)
            if gain == 0:
                continue
            ratio = gain / s.cost
            if ratio > best_ratio + 1e-12:
                best_ratio = ratio
                best_idx = idx
        if best_idx < 0:
            raise InfeasibleInstanceError("greedy ran out of useful sets")
        chosen = inst.sets[best_idx]
        selected.add(chosen.dialogue_id)
        uncovered -= chosen.intents
    return _finish(inst, selected, METHOD_GREEDY, started)


def _reduced_indices(inst: CoverInstance) -> list[int]:
    """Indices surviving duplicate collapse (cheapest representative) and
    dominance pruning (subset at no better cost)."""
    keep: list[int] = []
    best_for_set: dict[frozenset[str], int] = {}
    for idx, s in enumerate(inst.sets):
        prev = best_for_set.get(s.intents)
        if prev is None or inst.sets[prev].cost > s.cost:
            best_for_set[s.intents] = idx
    deduped = sorted(best_for_set.values())
    for i in deduped:
        si = inst.sets[i]
        dominated = False
        for j in deduped:
            if i == j:
                continue
            sj = inst.sets[j]
            if si.intents < sj.intents and si.cost >= sj.cost:
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep


def _matrix(inst: CoverInstance, indices: list[int]) -> tuple[np.ndarray, np.ndarray, list[str]]:
    labels = inst.labels
    row_of = {label: r for r, label in enumerate(labels)}
    a = np.zeros((len(labels), len(indices)))
    costs = np.zeros(len(indices))
    for col, idx in enumerate(indices):
        s = inst.sets[idx]
        costs[col] = s.cost
        for intent in s.intents:
            a[row_of[intent], col] = 1.0
    return a, costs, labels


def solve_lp(inst: CoverInstance, *, tol: float = 1e-9) -> LpSolution:
    """Optimal fractional cover. Values are reported for every input set;
    sets dropped by reduction sit at zero."""
    started = time.perf_counter()
    indices = _reduced_indices(inst)
    a, costs, _ = _matrix(inst, indices)
    result = solve_covering_lp(a, costs, tol=tol)
    values = {s.dialogue_id: 0.0 for s in inst.sets}
    for col, idx in enumerate(indices):
        values[inst.sets[idx].dialogue_id] = float(result.x[col])
    # feasibility re-check against the full instance
    for label in inst.labels:
        total = sum(
            values[s.dialogue_id] for s in inst.sets if label in s.intents
        )
        if total < 1.0 - 1e-9:
            raise InfeasibleInstanceError(f"LP left intent {label!r} uncovered")
    return LpSolution(
        values=values,
        objective=float(result.objective),
        iterations=result.iterations,
        wall_time_s=time.perf_counter() - started,
    )


def _bitmasks(inst: CoverInstance, indices: list[int]) -> tuple[list[int], int]:
    bit_of = {label: 1 << b for b, label in enumerate(inst.labels)}
    masks = []
    for idx in indices:
        mask = 0
        for intent in inst.sets[idx].intents:
            mask |= bit_of[intent]
        masks.append(mask)
    full = (1 << len(inst.labels)) - 1
    return masks, full


def _solve_exhaustive(inst: CoverInstance, indices: list[int], node_cap: int) -> set[str]:
    """Cost-pruned depth-first enumeration over include/exclude choices.
    Explores the entire feasible space except branches provably no better
    than the incumbent, so the result is exactly optimal."""
    masks, full = _bitmasks(inst, indices)
    costs = [inst.sets[i].cost for i in indices]
    suffix_union = [0] * (len(indices) + 1)
    for i in range(len(indices) - 1, -1, -1):
        suffix_union[i] = suffix_union[i + 1] | masks[i]

    greedy_ids = solve_greedy(inst).selected
    best_cost = sum(s.cost for s in inst.sets if s.dialogue_id in greedy_ids)
    best_pick: list[int] | None = None
    nodes = 0

    def dfs(pos: int, covered: int, cost: float, picked: list[int]) -> None:
        nonlocal best_cost, best_pick, nodes
        nodes += 1
        if nodes > node_cap:
            raise BudgetExceededError(f"exhaustive search exceeded {node_cap} nodes")
        if cost >= best_cost - 1e-12:
            return
        if covered == full:
            best_cost = cost
            best_pick = list(picked)
            return
        if pos == len(indices) or (covered | suffix_union[pos]) != full:
            return
        gain = masks[pos] & ~covered
        if gain:
            picked.append(pos)
            dfs(pos + 1, covered | masks[pos], cost + costs[pos], picked)
            picked.pop()
        dfs(pos + 1, covered, cost, picked)

    dfs(0, 0, 0.0, [])
    if best_pick is None:
        return set(greedy_ids)
    return {inst.sets[indices[p]].dialogue_id for p in best_pick}


def _solve_bnb(inst: CoverInstance, indices: list[int], node_cap: int) -> set[str]:
    """LP-guided depth-first branch and bound. Branches on the most
    fractional relaxation variable; prunes when the node bound cannot beat
    the incumbent (rounded up when all costs are integral)."""
    a, costs, _ = _matrix(inst, indices)
    n = len(indices)
    integral_costs = all(float(c).is_integer() for c in costs)

    greedy_ids = solve_greedy(inst).selected
    incumbent_cost = sum(s.cost for s in inst.sets if s.dialogue_id in greedy_ids)
    incumbent: set[str] | None = None

    def bound_beats_incumbent(bound: float) -> bool:
        if integral_costs:
            return math.ceil(bound - 1e-6) < incumbent_cost - 1e-9
        return bound < incumbent_cost - 1e-9

    stack: list[tuple[np.ndarray, np.ndarray]] = [(np.zeros(n), np.ones(n))]
    nodes = 0
    while stack:
        lower, upper = stack.pop()
        nodes += 1
        if nodes > node_cap:
            raise BudgetExceededError(f"branch and bound exceeded {node_cap} nodes")
        try:
            rel = solve_covering_lp(a, costs, lower=lower, upper=upper)
        except InfeasibleInstanceError:
            continue
        if not bound_beats_incumbent(rel.objective):
            continue
        frac = np.abs(rel.x - np.round(rel.x))
        if np.max(frac) <= 1e-6:
            chosen = {i for i in range(n) if rel.x[i] > 0.5}
            cost = float(sum(costs[i] for i in chosen))
            if cost < incumbent_cost - 1e-9:
                incumbent_cost = cost
                incumbent = {inst.sets[indices[i]].dialogue_id for i in chosen}
            continue
        candidates = [i for i in range(n) if frac[i] > 1e-6]
        branch = min(candidates, key=lambda i: (abs(rel.x[i] - 0.5), i))
        lo1, up0 = lower.copy(), upper.copy()
        lo1[branch] = 1.0
        up0[branch] = 0.0
        stack.append((lower, up0))  # explored second
        stack.append((lo1, upper))  # explored first: forces the set in
    if incumbent is None:
        return set(greedy_ids)
    return incumbent


def solve_ilp(
    inst: CoverInstance,
    *,
    node_cap: int = 1_000_000,
    force_branch_and_bound: bool = False,
) -> CoverSolution:
    """Provably optimal selection. Instances with at most
    ``EXHAUSTIVE_LIMIT`` sets after reduction use the direct exhaustive
    search; larger ones use branch and bound over the LP relaxation."""
    started = time.perf_counter()
    indices = _reduced_indices(inst)
    if len(indices) <= EXHAUSTIVE_LIMIT and not force_branch_and_bound:
        selected = _solve_exhaustive(inst, indices, node_cap)
    else:
        selected = _solve_bnb(inst, indices, node_cap)
    return _finish(inst, selected, METHOD_ILP, started)


def lp_round(
    inst: CoverInstance, seed: int, *, lp: LpSolution | None = None
) -> CoverSolution:
    """Randomized rounding of the LP relaxation.

    Each set enters the selection when a uniform draw falls below
    ``min(1, alpha * x_i)`` with ``alpha = ceil(ln |universe|)``; any intents
    still uncovered are then closed greedily by best uncovered-per-cost
    ratio. Reproducible given (instance, seed); pass ``lp`` to reuse an
    already-solved relaxation.
    """
    started = time.perf_counter()
    if lp is None:
        lp = solve_lp(inst)
    alpha = math.ceil(math.log(len(inst.universe.labels)))
    rng = SplitMix64(seed)
    selected: set[str] = set()
    uncovered = set(inst.universe.labels)
    for s in inst.sets:
        p = min(1.0, alpha * lp.values[s.dialogue_id])
        if rng.uniform() <= p:
            selected.add(s.dialogue_id)
            uncovered -= s.intents
    while uncovered:
        best_idx = -1
        best_ratio = -1.0
        for idx, s in enumerate(inst.sets):
            if s.dialogue_id in selected:
                continue
            gain = len(s.intents & uncovered)
            if gain == 0:
                continue
            ratio = gain / s.cost
            if ratio > best_ratio + 1e-12:
                best_ratio = ratio
                best_idx = idx
        chosen = inst.sets[best_idx]
        selected.add(chosen.dialogue_id)
        uncovered -= chosen.intents
    return _finish(
        inst, selected, METHOD_LP_ROUNDING, started, seed=seed, rng_algorithm=RNG_ALGORITHM
    )
