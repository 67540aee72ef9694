"""Single-robot reachability planning against the contamination field.

A mission state is (q, x): the set of the robot's targets visited so far and
its cell, plus two absorbing outcomes (contaminated, or at the exit with every
target visited). Moves succeed per the motion kernel; arrival at x' survives
with probability 1 - p[k](x', x) from the contamination field. dp_solve runs
the standard backward finite-horizon recursion, maximizing the probability of
reaching the exit with all targets visited within the horizon.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NumericViolationError, ValidationError
from .grid import Cell, GridMap, MotionKernel, MoveAction, N_ACTIONS
from .hazard import ContaminationField, HazardModel, _clear_probs, _dynamics

VALUE_TOL = 1e-9
WILSON_Z95 = 1.959963984540054
_ROLLOUT_CHUNK = 16384


@dataclass(frozen=True)
class MissionState:
    """Planner state: visited-target bitmask and cell; x None once contaminated."""

    q: int
    x: Optional[Cell]

    @property
    def absorbed_by_hazard(self) -> bool:
        return self.x is None


HAZARD_STATE = MissionState(0, None)


@dataclass(frozen=True)
class PlanQuery:
    """One robot's planning instance against a fixed contamination field."""

    gridmap: GridMap
    kernel: MotionKernel
    field: ContaminationField
    start: Cell
    targets: Tuple[Cell, ...]
    horizon: int

    def __post_init__(self):
        object.__setattr__(self, "start", Cell(*self.start))
        object.__setattr__(self, "targets", tuple(Cell(*t) for t in self.targets))
        gm = self.gridmap
        gm.index(self.start)
        for t in self.targets:
            gm.index(t)
        if len(set(self.targets)) != len(self.targets):
            raise ValidationError("duplicate target cells in query")
        if len(self.targets) > 20:
            raise ValidationError("more than 20 targets for one robot")
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}")
        if self.field.n_free != gm.n_free:
            raise ValidationError("contamination field built for a different grid")
        if self.field.horizon < self.horizon:
            raise ValidationError(
                f"field covers {self.field.horizon} steps, query needs {self.horizon}"
            )
        if self.kernel.gridmap != gm:
            raise ValidationError("motion kernel built for a different grid")

    @property
    def full_mask(self) -> int:
        return (1 << len(self.targets)) - 1

    def target_bits(self) -> np.ndarray:
        tb = np.zeros(self.gridmap.n_free, dtype=np.int64)
        for b, cell in enumerate(self.targets):
            tb[self.gridmap.index(cell)] |= 1 << b
        return tb

    def initial_state(self) -> MissionState:
        q0 = 0
        for b, cell in enumerate(self.targets):
            if cell == self.start:
                q0 |= 1 << b
        return MissionState(q0, self.start)

    def goal_state(self) -> MissionState:
        return MissionState(self.full_mask, self.gridmap.goal)


def task_update(q: int, x: Cell, targets: Sequence[Cell]) -> int:
    """Visited-set update on arrival at x: targets at x are marked visited."""
    for b, cell in enumerate(targets):
        if Cell(*cell) == Cell(*x):
            q |= 1 << b
    return q


def transition_distribution(
    query: PlanQuery, state: MissionState, u: MoveAction, k: int
) -> List[Tuple[MissionState, float]]:
    """One-step outcome distribution at step k; absorbing states self-loop."""
    if not 0 <= k < query.horizon:
        raise ValidationError(f"step {k} outside horizon {query.horizon}")
    if state.absorbed_by_hazard or state == query.goal_state():
        return [(state, 1.0)]
    gm = query.gridmap
    i = gm.index(state.x)
    u = MoveAction(u)
    if gm.neighbor_slots[i, u] < 0:
        raise ValidationError(f"action {u.name} is not admissible at {state.x}")
    tb = query.target_bits()
    out: List[Tuple[MissionState, float]] = []
    hazard_mass = 0.0
    for j in range(N_ACTIONS):
        p_move = float(query.kernel.slot_probs[i, u, j])
        if p_move == 0.0:
            continue
        dest = int(gm.neighbor_slots[i, j])
        ph = float(query.field.prob[k, i, j])
        hazard_mass += p_move * ph
        live = p_move * (1.0 - ph)
        if live > 0.0:
            q2 = state.q | int(tb[dest])
            out.append((MissionState(q2, gm.cells[dest]), live))
    if hazard_mass > 0.0:
        out.append((HAZARD_STATE, hazard_mass))
    total = sum(p for _, p in out)
    if abs(total - 1.0) > 1e-12:
        raise NumericViolationError(f"transition mass {total!r} at {state}, {u.name}")
    return out


@dataclass
class PlanResult:
    """DP output: value tables, greedy policy, and the start-state value."""

    query: PlanQuery
    values: np.ndarray  # (horizon+1, 2^t, n_free)
    policy: np.ndarray  # (horizon, 2^t, n_free) int8 action ids
    success: float
    diagnostics: Tuple[str, ...] = ()

    def value_at(self, k: int, visited_mask: int, cell: Cell) -> float:
        return float(self.values[k, visited_mask, self.query.gridmap.index(cell)])

    def action_at(self, k: int, visited_mask: int, cell: Cell) -> MoveAction:
        return MoveAction(int(self.policy[k, visited_mask, self.query.gridmap.index(cell)]))

    def greedy_path(self) -> List[Cell]:
        """Cells visited when every move lands as aimed and no hazard strikes."""
        gm = self.query.gridmap
        tb = self.query.target_bits()
        full = self.query.full_mask
        x = gm.index(self.query.start)
        q = int(tb[x])
        path = [gm.cells[x]]
        for k in range(self.query.horizon):
            if q == full and x == gm.goal_index:
                break
            u = int(self.policy[k, q, x])
            if u == MoveAction.STAY:
                continue
            dest = int(gm.neighbor_slots[x, u])
            x = dest
            q |= int(tb[x])
            path.append(gm.cells[x])
        return path


def _reachability_diagnostics(query: PlanQuery) -> List[str]:
    gm = query.gridmap
    seen = np.zeros(gm.n_free, dtype=bool)
    start = gm.index(query.start)
    seen[start] = True
    queue = deque([start])
    while queue:
        i = queue.popleft()
        for j in range(1, N_ACTIONS):
            k = gm.neighbor_slots[i, j]
            if k >= 0 and not seen[k]:
                seen[k] = True
                queue.append(int(k))
    diags = []
    for cell in query.targets:
        if not seen[gm.index(cell)]:
            diags.append(f"target {tuple(cell)} unreachable from start {tuple(query.start)}")
    if not seen[gm.goal_index]:
        diags.append(f"exit {tuple(gm.goal)} unreachable from start {tuple(query.start)}")
    return diags


def _stub_result(query: PlanQuery, diagnostics: List[str]) -> PlanResult:
    n = query.gridmap.n_free
    nq = 1 << len(query.targets)
    return PlanResult(
        query=query,
        values=np.zeros((query.horizon + 1, nq, n)),
        policy=np.zeros((query.horizon, nq, n), dtype=np.int8),
        success=0.0,
        diagnostics=tuple(diagnostics),
    )


def dp_solve(query: PlanQuery) -> PlanResult:
    """Backward value recursion; returns tables, greedy policy and f = V^0(s0)."""
    gm = query.gridmap
    fld = query.field
    n = gm.n_free
    t = len(query.targets)
    nq = 1 << t
    full = nq - 1
    horizon = query.horizon
    start_idx = gm.index(query.start)
    goal_idx = gm.goal_index
    tb = query.target_bits()

    diagnostics = _reachability_diagnostics(query)
    if fld.flagged[0, start_idx]:
        diagnostics.append(
            f"start {tuple(query.start)} is almost surely contaminated at step 0"
        )
        return _stub_result(query, diagnostics)
    bad_targets = [c for c in query.targets if fld.flagged[0, gm.index(c)]]
    if bad_targets:
        for c in bad_targets:
            diagnostics.append(
                f"target {tuple(c)} is almost surely contaminated at step 0"
            )
        return _stub_result(query, diagnostics)

    nbr = gm.neighbor_slots[:, :N_ACTIONS]
    admissible = nbr >= 0
    kernel_terms = [list(query.kernel.action_terms(u)) for u in range(N_ACTIONS)]

    values = np.zeros((horizon + 1, nq, n))
    values[horizon, full, goal_idx] = 1.0
    policy = np.zeros((horizon, nq, n), dtype=np.int8)
    for k in range(horizon - 1, -1, -1):
        vflat = values[k + 1].reshape(-1)
        best = np.full((nq, n), -1.0)
        bestu = np.zeros((nq, n), dtype=np.int8)
        for u in range(N_ACTIONS):
            acc = np.zeros((nq, n))
            for j, w in kernel_terms[u]:
                sel = w > 0
                if not np.any(sel):
                    continue
                dsel = nbr[sel, j]
                surv = w[sel] * (1.0 - fld.prob[k, sel, j])
                tbd = tb[dsel]
                for q in range(nq):
                    rows = q | tbd
                    acc[q, sel] += surv * vflat[rows * n + dsel]
            acc[:, ~admissible[:, u]] = -1.0
            better = acc > best
            best = np.where(better, acc, best)
            bestu[better] = u
        # The completed-mission state is absorbing.
        best[full, goal_idx] = values[k + 1, full, goal_idx]
        bestu[full, goal_idx] = MoveAction.STAY
        if best.max() > 1.0 + VALUE_TOL or best.min() < -VALUE_TOL:
            raise NumericViolationError(
                f"value outside [0, 1] at step {k}: [{best.min()}, {best.max()}]"
            )
        np.clip(best, 0.0, 1.0, out=best)
        values[k] = best
        policy[k] = bestu

    q0 = int(tb[start_idx])
    success = float(values[0, q0, start_idx])
    return PlanResult(
        query=query,
        values=values,
        policy=policy,
        success=success,
        diagnostics=tuple(diagnostics),
    )


class ObjectiveCache:
    """Memoized per-robot success probabilities over target subsets.

    Keys are (robot index, subset bitmask over the shared target list). The
    cache is safe for concurrent lookups; counters track distinct plan solves
    versus hits so allocator cost can be reported.
    """

    def __init__(
        self,
        gridmap: GridMap,
        kernel: MotionKernel,
        contamination: ContaminationField,
        starts: Sequence[Cell],
        targets: Sequence[Cell],
        horizon: int,
    ):
        self.gridmap = gridmap
        self.kernel = kernel
        self.contamination = contamination
        self.starts = tuple(Cell(*s) for s in starts)
        self.targets = tuple(Cell(*t) for t in targets)
        self.horizon = horizon
        if not self.starts:
            raise ValidationError("at least one robot start is required")
        if len(set(self.targets)) != len(self.targets):
            raise ValidationError("duplicate target cells")
        self._values: Dict[Tuple[int, int], float] = {}
        self._diags: Dict[Tuple[int, int], Tuple[str, ...]] = {}
        self._lock = threading.Lock()
        self.solve_count = 0
        self.hit_count = 0

    @property
    def n_robots(self) -> int:
        return len(self.starts)

    @property
    def n_tasks(self) -> int:
        return len(self.targets)

    def query(self, robot: int, mask: int) -> PlanQuery:
        subset = tuple(
            self.targets[b] for b in range(self.n_tasks) if mask >> b & 1
        )
        return PlanQuery(
            gridmap=self.gridmap,
            kernel=self.kernel,
            field=self.contamination,
            start=self.starts[robot],
            targets=subset,
            horizon=self.horizon,
        )

    def solve(self, robot: int, mask: int) -> PlanResult:
        return dp_solve(self.query(robot, mask))

    def value(self, robot: int, mask: int) -> float:
        if not 0 <= robot < self.n_robots:
            raise ValidationError(f"robot index {robot} out of range")
        if mask < 0 or mask >> self.n_tasks:
            raise ValidationError(f"target mask {mask} out of range")
        key = (robot, mask)
        with self._lock:
            if key in self._values:
                self.hit_count += 1
                return self._values[key]
        result = self.solve(robot, mask)
        with self._lock:
            self._values[key] = result.success
            if result.diagnostics:
                self._diags[key] = result.diagnostics
            self.solve_count += 1
        return result.success

    def diagnostics(self) -> Dict[Tuple[int, int], Tuple[str, ...]]:
        return dict(self._diags)


def success_probability(cache: ObjectiveCache, robot: int, targets) -> float:
    """f_r for a target subset given as a bitmask or iterable of cells."""
    if isinstance(targets, (int, np.integer)):
        mask = int(targets)
    else:
        mask = 0
        wanted = [Cell(*t) for t in targets]
        for cell in wanted:
            try:
                mask |= 1 << cache.targets.index(cell)
            except ValueError:
                raise ValidationError(f"{cell} is not a shared target") from None
    return cache.value(robot, mask)


@dataclass(frozen=True)
class RolloutResult:
    mode: str
    trials: int
    successes: int
    rate: float
    ci_low: float
    ci_high: float


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z95) -> Tuple[float, float]:
    if trials <= 0:
        raise ValidationError("trials must be positive")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = z * np.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def rollout(
    result: PlanResult,
    mode: str,
    trials: int,
    seed: int,
    model: Optional[HazardModel] = None,
) -> RolloutResult:
    """Simulate the policy and report its empirical success rate.

    mode "model" draws per-step contamination independently from the field
    (the process the DP optimizes, so the mean equals the DP value). Mode
    "joint" samples full hazard trajectories and checks occupancy against
    them, which requires the hazard model. Chunk sizes are fixed so results
    never depend on threading or platform parallelism.
    """
    if mode not in ("model", "joint"):
        raise ValidationError(f"unknown rollout mode {mode!r}")
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if mode == "joint" and model is None:
        raise ValidationError("joint rollout needs the hazard model")
    successes = 0
    chunk_starts = list(range(0, trials, _ROLLOUT_CHUNK))
    for ci, lo in enumerate(chunk_starts):
        m = min(_ROLLOUT_CHUNK, trials - lo)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, ci))))
        if mode == "model":
            successes += _rollout_model_chunk(result, rng, m)
        else:
            successes += _rollout_joint_chunk(result, model, rng, m)
    rate = successes / trials
    lo95, hi95 = wilson_interval(successes, trials)
    return RolloutResult(
        mode=mode, trials=trials, successes=successes,
        rate=rate, ci_low=lo95, ci_high=hi95,
    )


def _motion_slots(query, rng, x, act, m):
    """Realized landing slot per trial; one uniform per trial when stochastic."""
    if query.kernel.kind == "deterministic":
        return act
    cum = query.kernel.slot_probs.cumsum(axis=2)
    r = rng.random(m)
    slots = (cum[x, act] <= r[:, None]).sum(axis=1)
    return np.minimum(slots, N_ACTIONS - 1)


def _rollout_model_chunk(result: PlanResult, rng: np.random.Generator, m: int) -> int:
    query = result.query
    gm = query.gridmap
    fld = query.field
    nbr = gm.neighbor_slots[:, :N_ACTIONS]
    tb = query.target_bits()
    full = query.full_mask
    start = gm.index(query.start)
    goal = gm.goal_index
    x = np.full(m, start, dtype=np.int64)
    q = np.full(m, int(tb[start]), dtype=np.int64)
    alive = np.ones(m, dtype=bool)
    success = np.zeros(m, dtype=bool)
    if fld.flagged[0, start]:
        return 0
    if int(tb[start]) == full and start == goal:
        return m
    for k in range(query.horizon):
        act = result.policy[k, q, x]
        slot = _motion_slots(query, rng, x, act, m)
        draws = rng.random(m)
        ph = fld.prob[k, x, slot]
        dest = nbr[x, slot]
        active = alive & ~success
        die = active & (draws < ph)
        alive[die] = False
        move = active & ~die
        x[move] = dest[move]
        q[move] = q[move] | tb[x[move]]
        reached = move & (q == full) & (x == goal)
        success[reached] = True
    return int(success.sum())


def _rollout_joint_chunk(
    result: PlanResult, model: HazardModel, rng: np.random.Generator, m: int
) -> int:
    query = result.query
    gm = query.gridmap
    dyn = _dynamics(gm, model)
    n = gm.n_free
    nbr = gm.neighbor_slots[:, :N_ACTIONS]
    tb = query.target_bits()
    full = query.full_mask
    start = gm.index(query.start)
    goal = gm.goal_index
    contam = np.broadcast_to(dyn.initial, (m, n)).copy()
    x = np.full(m, start, dtype=np.int64)
    q = np.full(m, int(tb[start]), dtype=np.int64)
    alive = ~contam[:, start]
    success = alive & (int(tb[start]) == full) & (start == goal)
    rows = np.arange(m)
    for k in range(query.horizon):
        act = result.policy[k, q, x]
        slot = _motion_slots(query, rng, x, act, m)
        dest = nbr[x, slot]
        hazard_draws = rng.random((m, n))
        pc = 1.0 - _clear_probs(dyn, contam)
        ignite = (~contam) & (hazard_draws < pc)
        contam = contam | ignite
        active = alive & ~success
        die = active & contam[rows, dest]
        alive[die] = False
        move = active & ~die
        x[move] = dest[move]
        q[move] = q[move] | tb[x[move]]
        reached = move & (q == full) & (x == goal)
        success[reached] = True
    return int(success.sum())
