"""Task allocation by auction-style greedy heuristics over cached plan values.

The group objective is F = prod_r f_r(T_r): every robot must complete its own
target set, so assignments multiply. Forward greedy starts from empty sets and
assigns one task per round; reverse greedy starts from every robot holding
every task and peels copies off until each task has exactly one owner.
Each round the robots that must refresh their bid do so; everyone else reuses
a bid that provably still maximizes its marginal. Traces record every fresh
marginal evaluation so suboptimality ratios can be estimated afterwards.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Protocol, Sequence, Tuple

from .errors import CapExceededError, NumericViolationError, ValidationError

BRUTE_FORCE_CAP = 10**6


class ObjectiveSource(Protocol):
    """Anything that can price (robot, target-subset) pairs; usually ObjectiveCache."""

    @property
    def n_robots(self) -> int: ...

    @property
    def n_tasks(self) -> int: ...

    def value(self, robot: int, mask: int) -> float: ...


@dataclass(frozen=True)
class Bid:
    """One robot's best single-task change and the f_r difference it causes."""

    robot: int
    task: int
    delta: float


@dataclass
class IterationRecord:
    """Everything one auction round saw and decided."""

    index: int
    open_tasks: Tuple[int, ...]
    recomputed: Tuple[int, ...]
    masks_before: Tuple[int, ...]
    f_before: Tuple[float, ...]
    bids: Tuple[Bid, ...]
    evaluations: Dict[int, Tuple[Tuple[int, float], ...]]
    winner: int
    winning_task: int
    masks_after: Tuple[int, ...]
    f_after: Tuple[float, ...]
    objective_before: float
    objective_after: float
    task_closed: bool


@dataclass
class GreedyTrace:
    """Full record of a greedy run, sufficient to audit and to bound ratios."""

    kind: str
    n_robots: int
    n_tasks: int
    start_masks: Tuple[int, ...]
    baseline_f: Tuple[float, ...]
    iterations: List[IterationRecord] = field(default_factory=list)
    allocation: Tuple[int, ...] = ()
    excluded: Tuple[int, ...] = ()
    notes: Tuple[str, ...] = ()
    plan_solves: int = 0

    @property
    def degenerate(self) -> bool:
        return any("degenerate" in n for n in self.notes)


def _product(values: Iterable[float]) -> float:
    out = 1.0
    for v in values:
        out *= v
    return out


def group_success(source: ObjectiveSource, allocation: Sequence[int]) -> float:
    """F of a per-robot mask vector (not necessarily a partition)."""
    if len(allocation) != source.n_robots:
        raise ValidationError(
            f"allocation covers {len(allocation)} robots, expected {source.n_robots}"
        )
    return _product(source.value(r, int(m)) for r, m in enumerate(allocation))


def is_partition(allocation: Sequence[int], n_tasks: int) -> bool:
    union = 0
    for m in allocation:
        if union & m:
            return False
        union |= m
    return union == (1 << n_tasks) - 1


def pair_bit(task: int, robot: int, n_robots: int) -> int:
    """Bit index of ground pair (task, robot) in the task-major layout."""
    return task * n_robots + robot


def ground_masks(wmask: int, n_robots: int, n_tasks: int) -> Tuple[int, ...]:
    """Split a ground-set bitmask into per-robot target masks."""
    masks = [0] * n_robots
    for t in range(n_tasks):
        for r in range(n_robots):
            if wmask >> pair_bit(t, r, n_robots) & 1:
                masks[r] |= 1 << t
    return tuple(masks)


def ground_extension(source: ObjectiveSource, pairs: Iterable[Tuple[int, int]]) -> float:
    """F extended to arbitrary sets of (task, robot) pairs: each robot prices
    the union of tasks the set hands it, independent of other robots."""
    masks = [0] * source.n_robots
    for task, robot in pairs:
        if not 0 <= task < source.n_tasks:
            raise ValidationError(f"task index {task} out of range")
        if not 0 <= robot < source.n_robots:
            raise ValidationError(f"robot index {robot} out of range")
        masks[robot] |= 1 << task
    return _product(source.value(r, m) for r, m in enumerate(masks))


def ground_value(source: ObjectiveSource, wmask: int) -> float:
    return _product(
        source.value(r, m)
        for r, m in enumerate(ground_masks(wmask, source.n_robots, source.n_tasks))
    )


def _score(bid: Bid, f_values: Mapping[int, float]) -> Tuple[int, float]:
    """Zero-aware value of the group objective after applying the bid.

    Returns (-zero_factor_count, product_of_positive_factors): comparing these
    lexicographically ranks any outcome with fewer dead robots above a larger
    partial product, so a bid that removes the only zero factor dominates.
    """
    zeros = 0
    prod = 1.0
    for r, f in f_values.items():
        val = f + bid.delta if r == bid.robot else f
        if val <= 0.0:
            zeros += 1
        else:
            prod *= val
    return (-zeros, prod)


def auction_round(bids: Sequence[Bid], f_values: Mapping[int, float]) -> int:
    """Settle one round: the winner maximizes the post-bid group objective
    computed from the scalar bids and cached f values alone. Ties go to the
    smallest robot id, then the smallest task id."""
    if not bids:
        raise ValidationError("no bids to settle")
    winner = None
    best_key = None
    for bid in sorted(bids, key=lambda b: (b.robot, b.task)):
        if bid.robot not in f_values:
            raise ValidationError(f"bid from robot {bid.robot} without an f value")
        key = _score(bid, f_values)
        if best_key is None or key > best_key:
            best_key = key
            winner = bid
    return winner.robot


def _solve_count(source) -> int:
    return getattr(source, "solve_count", 0)


def forward_greedy(source: ObjectiveSource) -> Tuple[Tuple[int, ...], GreedyTrace]:
    """Assign every task by repeated auctions, growing sets from empty.

    Each round, only robots whose previous bid died (their task was just
    assigned) recompute; the winner applies its bid and the task closes.
    Robots that cannot succeed even unburdened (f_r(empty) = 0) are excluded
    from bidding and from the winner products, with a note.
    """
    n_r, n_t = source.n_robots, source.n_tasks
    solves0 = _solve_count(source)
    masks = [0] * n_r
    if n_t == 0:
        trace = GreedyTrace(
            kind="forward", n_robots=n_r, n_tasks=0,
            start_masks=tuple(masks), baseline_f=tuple(source.value(r, 0) for r in range(n_r)),
            allocation=tuple(masks), notes=("degenerate: no tasks to assign",),
            plan_solves=_solve_count(source) - solves0,
        )
        return tuple(masks), trace
    f_empty = [source.value(r, 0) for r in range(n_r)]
    excluded = tuple(r for r in range(n_r) if f_empty[r] <= 0.0)
    active = [r for r in range(n_r) if r not in excluded]
    notes: List[str] = []
    if excluded:
        notes.append(
            "robots excluded (zero success probability with no tasks): "
            + ", ".join(str(r) for r in excluded)
        )
    if not active:
        masks[0] = (1 << n_t) - 1
        notes.append("degenerate: every robot has zero base success; all tasks parked on robot 0")
        trace = GreedyTrace(
            kind="forward", n_robots=n_r, n_tasks=n_t,
            start_masks=(0,) * n_r, baseline_f=tuple(f_empty),
            allocation=tuple(masks), excluded=excluded, notes=tuple(notes),
            plan_solves=_solve_count(source) - solves0,
        )
        return tuple(masks), trace
    f_cur: Dict[int, float] = {r: f_empty[r] for r in range(n_r)}
    open_tasks = set(range(n_t))
    to_bid = set(active)
    bids: Dict[int, Bid] = {}
    trace = GreedyTrace(
        kind="forward", n_robots=n_r, n_tasks=n_t,
        start_masks=(0,) * n_r, baseline_f=tuple(f_empty),
        excluded=excluded, notes=tuple(notes),
    )
    for k in range(1, n_t + 1):
        evaluations: Dict[int, Tuple[Tuple[int, float], ...]] = {}
        for r in sorted(to_bid):
            evals: List[Tuple[int, float]] = []
            best: Tuple[int, float] | None = None
            for t in sorted(open_tasks):
                v = source.value(r, masks[r] | (1 << t))
                d = v - f_cur[r]
                evals.append((t, d))
                if best is None or d > best[1]:
                    best = (t, d)
            evaluations[r] = tuple(evals)
            bids[r] = Bid(r, best[0], best[1])
        for r in active:
            if bids[r].task not in open_tasks:
                raise NumericViolationError("stale bid survived a task closure")
        live = {r: f_cur[r] for r in active}
        winner = auction_round([bids[r] for r in sorted(bids)], live)
        wb = bids[winner]
        masks_before = tuple(masks)
        f_before = tuple(f_cur[r] for r in range(n_r))
        obj_before = _product(f_cur[r] for r in active)
        round_bids = tuple(sorted(bids.values(), key=lambda b: b.robot))
        masks[winner] |= 1 << wb.task
        f_cur[winner] = f_cur[winner] + wb.delta
        open_tasks.discard(wb.task)
        to_bid = {r for r in active if bids[r].task == wb.task}
        bids = {r: b for r, b in bids.items() if b.task != wb.task}
        trace.iterations.append(
            IterationRecord(
                index=k,
                open_tasks=tuple(sorted(open_tasks | {wb.task})),
                recomputed=tuple(sorted(evaluations)),
                masks_before=masks_before,
                f_before=f_before,
                bids=round_bids,
                evaluations=evaluations,
                winner=winner,
                winning_task=wb.task,
                masks_after=tuple(masks),
                f_after=tuple(f_cur[r] for r in range(n_r)),
                objective_before=obj_before,
                objective_after=_product(f_cur[r] for r in active),
                task_closed=True,
            )
        )
    trace.allocation = tuple(masks)
    trace.plan_solves = _solve_count(source) - solves0
    return tuple(masks), trace


def reverse_greedy(source: ObjectiveSource) -> Tuple[Tuple[int, ...], GreedyTrace]:
    """Start with every robot holding every task; auction removals until each
    task keeps exactly one owner. A bid offers to drop one still-shared task,
    its value being the f_r gain; a task leaves the open set the moment a
    single holder remains."""
    n_r, n_t = source.n_robots, source.n_tasks
    solves0 = _solve_count(source)
    full = (1 << n_t) - 1
    masks = [full] * n_r
    baseline = tuple(source.value(r, full) for r in range(n_r))
    trace = GreedyTrace(
        kind="reverse", n_robots=n_r, n_tasks=n_t,
        start_masks=tuple(masks), baseline_f=baseline,
    )
    if n_t == 0 or n_r == 1:
        trace.allocation = tuple(masks)
        trace.notes = ("degenerate: nothing to remove",)
        trace.plan_solves = _solve_count(source) - solves0
        return tuple(masks), trace
    f_cur: Dict[int, float] = {r: baseline[r] for r in range(n_r)}
    open_tasks = set(range(n_t))
    to_bid = set(range(n_r))
    bids: Dict[int, Bid] = {}
    for k in range(1, n_t * (n_r - 1) + 1):
        evaluations: Dict[int, Tuple[Tuple[int, float], ...]] = {}
        for r in sorted(to_bid):
            domain = [t for t in sorted(open_tasks) if masks[r] >> t & 1]
            if not domain:
                bids.pop(r, None)
                evaluations[r] = ()
                continue
            evals: List[Tuple[int, float]] = []
            best: Tuple[int, float] | None = None
            for t in domain:
                v = source.value(r, masks[r] & ~(1 << t))
                d = v - f_cur[r]
                evals.append((t, d))
                if best is None or d > best[1]:
                    best = (t, d)
            evaluations[r] = tuple(evals)
            bids[r] = Bid(r, best[0], best[1])
        if not bids:
            raise NumericViolationError("no legal removal bid although copies remain")
        winner = auction_round([bids[r] for r in sorted(bids)], dict(f_cur))
        wb = bids[winner]
        masks_before = tuple(masks)
        f_before = tuple(f_cur[r] for r in range(n_r))
        obj_before = _product(f_cur.values())
        masks[winner] &= ~(1 << wb.task)
        f_cur[winner] = f_cur[winner] + wb.delta
        holders = sum(1 for r in range(n_r) if masks[r] >> wb.task & 1)
        all_bids = tuple(sorted(bids.values(), key=lambda b: b.robot))
        if holders == 1:
            open_tasks.discard(wb.task)
            to_bid = {r for r, b in bids.items() if b.task == wb.task}
            bids = {r: b for r, b in bids.items() if b.task != wb.task}
            closed = True
        else:
            to_bid = {winner}
            closed = False
        trace.iterations.append(
            IterationRecord(
                index=k,
                open_tasks=tuple(sorted(open_tasks | ({wb.task} if closed else set()))),
                recomputed=tuple(sorted(evaluations)),
                masks_before=masks_before,
                f_before=f_before,
                bids=all_bids,
                evaluations=evaluations,
                winner=winner,
                winning_task=wb.task,
                masks_after=tuple(masks),
                f_after=tuple(f_cur[r] for r in range(n_r)),
                objective_before=obj_before,
                objective_after=_product(f_cur.values()),
                task_closed=closed,
            )
        )
    if not is_partition(masks, n_t):
        raise NumericViolationError("reverse greedy did not end at a partition")
    trace.allocation = tuple(masks)
    trace.plan_solves = _solve_count(source) - solves0
    return tuple(masks), trace


def brute_force_optimal(
    source: ObjectiveSource, cap: int = BRUTE_FORCE_CAP
) -> Tuple[Tuple[int, ...], float]:
    """Exhaust all labeled assignments (robots^tasks); ties keep the first in
    lexicographic task-to-robot order."""
    n_r, n_t = source.n_robots, source.n_tasks
    count = n_r**n_t
    if count > cap:
        raise CapExceededError(
            f"brute force needs {count} assignments > cap {cap}"
        )
    best_val = None
    best_masks: Tuple[int, ...] = ()
    for assign in itertools.product(range(n_r), repeat=n_t):
        masks = [0] * n_r
        for t, r in enumerate(assign):
            masks[r] |= 1 << t
        val = _product(source.value(r, masks[r]) for r in range(n_r))
        if best_val is None or val > best_val:
            best_val = val
            best_masks = tuple(masks)
    return best_masks, float(best_val)
