"""Stochastic hazard spread and the per-step contamination transition field.

Contamination is permanent and spreads cell to cell: in each step an
uncontaminated free cell stays clear with probability

    prod over contaminated orthogonal neighbors nb of (1 - theta(nb))
    * prod over contaminated diagonal neighbors nb of (1 - theta(nb)/sqrt(2))

where theta(nb) is the spread speed carried by the neighbor. With a single
global speed this is (1-theta)^n_orth * (1-theta/sqrt(2))^n_diag. Obstacles
never ignite and block spread entirely.

The planner consumes the spread only through the transition field
p[k](x', x) = P(x' contaminated at k+1 | x clear at k), stored for x' in
{x} union orthogonal neighbors, which mirrors the five move slots.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import CapExceededError, NumericViolationError, ValidationError
from .grid import Cell, GridMap, N_ACTIONS, N_SLOTS

SQRT2 = math.sqrt(2.0)
EXACT_HAZARD_CELL_CAP = 12
FIELD_SUM_TOL = 1e-10


@dataclass(frozen=True)
class HazardSource:
    """One initially contaminated region with its own spread speed."""

    cells: FrozenSet[Cell]
    theta: float
    label: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "cells", frozenset(Cell(*c) for c in self.cells))
        if not 0.0 <= self.theta <= 1.0:
            raise ValidationError(f"spread speed {self.theta} outside [0, 1]")


@dataclass(frozen=True)
class HazardModel:
    """Initially contaminated cells plus per-source spread speeds."""

    sources: Tuple[HazardSource, ...]

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        seen = set()
        for src in self.sources:
            if seen & src.cells:
                raise ValidationError("hazard sources overlap")
            seen |= src.cells

    @classmethod
    def uniform(cls, cells: Iterable[Cell], theta: float) -> "HazardModel":
        cells = frozenset(Cell(*c) for c in cells)
        if not cells:
            return cls(sources=())
        return cls(sources=(HazardSource(cells=cells, theta=theta),))

    @property
    def initial_cells(self) -> FrozenSet[Cell]:
        out = frozenset()
        for src in self.sources:
            out |= src.cells
        return out


class _SpreadDynamics:
    """Precomputed arrays binding a hazard model to one grid."""

    def __init__(self, gridmap: GridMap, model: HazardModel):
        self.gridmap = gridmap
        self.model = model
        n = gridmap.n_free
        for cell in model.initial_cells:
            if not gridmap.is_free(cell):
                raise ValidationError(f"hazard source cell {cell} is not free")
        self.initial = np.zeros(n, dtype=bool)
        for cell in model.initial_cells:
            self.initial[gridmap.index(cell)] = True
        self.theta = self._theta_field()
        self.w_orth = 1.0 - self.theta
        self.w_diag = 1.0 - self.theta / SQRT2

    def _theta_field(self) -> np.ndarray:
        """Per-cell spread speed: each cell inherits the speed of the nearest
        source (breadth-first through free cells, earlier sources win ties).
        Cells no source can ever reach keep speed 0."""
        gm = self.gridmap
        theta = np.zeros(gm.n_free)
        assigned = np.zeros(gm.n_free, dtype=bool)
        queue = deque()
        for src in self.model.sources:
            for cell in sorted(src.cells):
                i = gm.index(cell)
                if not assigned[i]:
                    assigned[i] = True
                    theta[i] = src.theta
                    queue.append(i)
        nbr = gm.neighbor_slots
        while queue:
            i = queue.popleft()
            for j in range(1, N_SLOTS):
                k = nbr[i, j]
                if k >= 0 and not assigned[k]:
                    assigned[k] = True
                    theta[k] = theta[i]
                    queue.append(k)
        return theta

    def clear_prob_vector(self, contaminated: np.ndarray) -> np.ndarray:
        """P(cell stays clear one step | current contamination), per free cell.

        Valid for clear cells; contaminated cells are reported as 0 so that
        1 - value is their (certain) contamination probability.
        """
        return _clear_probs(self, contaminated[np.newaxis, :])[0]


def _clear_probs(dyn: _SpreadDynamics, contaminated: np.ndarray) -> np.ndarray:
    """Row-wise stay-clear probabilities for a (samples, n_free) contamination
    matrix; entries at contaminated cells are forced to 0."""
    nbr = dyn.gridmap.neighbor_slots
    pnc = np.ones_like(contaminated, dtype=np.float64)
    for j in range(1, N_SLOTS):
        idx = nbr[:, j]
        valid = idx >= 0
        if not np.any(valid):
            continue
        weights = dyn.w_orth if j < N_ACTIONS else dyn.w_diag
        sel = idx[valid]
        factors = np.where(contaminated[:, sel], weights[sel], 1.0)
        pnc[:, valid] *= factors
    pnc[contaminated] = 0.0
    return pnc


@lru_cache(maxsize=16)
def _dynamics(gridmap: GridMap, model: HazardModel) -> _SpreadDynamics:
    return _SpreadDynamics(gridmap, model)


def remain_clear_prob(
    gridmap: GridMap, model: HazardModel, x: Cell, contaminated: Iterable[Cell]
) -> float:
    """Probability that clear cell x survives one step of spread."""
    dyn = _dynamics(gridmap, model)
    x = Cell(*x)
    i = gridmap.index(x)
    y = _as_mask(gridmap, contaminated)
    if y[i]:
        raise ValidationError(f"{x} is already contaminated")
    return float(dyn.clear_prob_vector(y)[i])


def contaminate_prob(
    gridmap: GridMap, model: HazardModel, x: Cell, contaminated: Iterable[Cell]
) -> float:
    """Probability that x is contaminated after one step (1 if it already is)."""
    dyn = _dynamics(gridmap, model)
    i = gridmap.index(Cell(*x))
    y = _as_mask(gridmap, contaminated)
    if y[i]:
        return 1.0
    return 1.0 - float(dyn.clear_prob_vector(y)[i])


def _as_mask(gridmap: GridMap, cells: Iterable[Cell]) -> np.ndarray:
    mask = np.zeros(gridmap.n_free, dtype=bool)
    for c in cells:
        mask[gridmap.index(Cell(*c))] = True
    return mask


def hazard_step_sample(
    gridmap: GridMap,
    model: HazardModel,
    contaminated: Iterable[Cell],
    rng: np.random.Generator,
) -> FrozenSet[Cell]:
    """Draw one spread step. Consumes exactly n_free uniforms from rng."""
    dyn = _dynamics(gridmap, model)
    y = _as_mask(gridmap, contaminated)
    clear_p = dyn.clear_prob_vector(y)
    draws = rng.random(gridmap.n_free)
    ignite = (~y) & (draws < 1.0 - clear_p)
    out = y | ignite
    return frozenset(gridmap.cells[i] for i in np.nonzero(out)[0])


def hazard_step_exact(
    gridmap: GridMap,
    model: HazardModel,
    dist: Mapping[FrozenSet[Cell], float],
    cell_cap: int = EXACT_HAZARD_CELL_CAP,
) -> Dict[FrozenSet[Cell], float]:
    """Push a distribution over contamination sets through one exact step."""
    if gridmap.n_free > cell_cap:
        raise CapExceededError(
            f"exact hazard propagation needs {gridmap.n_free} free cells <= cap {cell_cap}"
        )
    dyn = _dynamics(gridmap, model)
    masks: Dict[int, float] = {}
    for cells, p in dist.items():
        if p < -FIELD_SUM_TOL:
            raise ValidationError("negative probability in hazard distribution")
        m = _cells_to_bits(gridmap, cells)
        masks[m] = masks.get(m, 0.0) + float(p)
    total = sum(masks.values())
    if abs(total - 1.0) > FIELD_SUM_TOL:
        raise ValidationError(f"hazard distribution sums to {total!r}, not 1")
    out = _exact_step_masks(dyn, masks)
    check = sum(out.values())
    if abs(check - 1.0) > FIELD_SUM_TOL:
        raise NumericViolationError(f"exact step output sums to {check!r}")
    return {_bits_to_cells(gridmap, m): p for m, p in out.items()}


def _cells_to_bits(gridmap: GridMap, cells: Iterable[Cell]) -> int:
    m = 0
    for c in cells:
        m |= 1 << gridmap.index(Cell(*c))
    return m


def _bits_to_cells(gridmap: GridMap, mask: int) -> FrozenSet[Cell]:
    return frozenset(gridmap.cells[i] for i in range(gridmap.n_free) if mask >> i & 1)


def _exact_step_masks(dyn: _SpreadDynamics, masks: Dict[int, float]) -> Dict[int, float]:
    n = dyn.gridmap.n_free
    out: Dict[int, float] = {}
    for m, p in masks.items():
        if p == 0.0:
            continue
        y = np.array([(m >> i) & 1 for i in range(n)], dtype=bool)
        pc = 1.0 - dyn.clear_prob_vector(y)
        forced = m
        uncertain: List[Tuple[int, float]] = []
        for i in np.nonzero(~y)[0]:
            q = float(pc[i])
            if q >= 1.0:
                forced |= 1 << int(i)
            elif q > 0.0:
                uncertain.append((int(i), q))
        _spread_outcomes(out, forced, uncertain, p)
    return out


def _spread_outcomes(
    out: Dict[int, float],
    base: int,
    uncertain: List[Tuple[int, float]],
    prob: float,
) -> None:
    k = len(uncertain)
    for combo in range(1 << k):
        m = base
        p = prob
        for idx, (cell_bit, q) in enumerate(uncertain):
            if combo >> idx & 1:
                m |= 1 << cell_bit
                p *= q
            else:
                p *= 1.0 - q
        out[m] = out.get(m, 0.0) + p


@dataclass
class ContaminationField:
    """Step-indexed transition probabilities p[k, x, slot] into contamination.

    Slot j of cell x is x + SLOT_DISPLACEMENTS[j] for j < 5 (self plus the
    orthogonal moves); entries for blocked slots are 0 and never read. When no
    sample had x clear at step k the conditioning is undefined: the row is set
    to 1 and flagged[k, x] marks the cell almost surely contaminated then.
    """

    horizon: int
    n_free: int
    prob: np.ndarray
    flagged: np.ndarray
    kind: str
    samples: int = 0
    seed: int = 0
    scenario_hash: str = ""

    def entry(self, k: int, cell_index: int, slot: int) -> float:
        return float(self.prob[k, cell_index, slot])

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            horizon=self.horizon,
            n_free=self.n_free,
            prob=self.prob,
            flagged=self.flagged,
            kind=np.array(self.kind),
            samples=self.samples,
            seed=self.seed,
            scenario_hash=np.array(self.scenario_hash),
        )

    @classmethod
    def load(cls, path) -> "ContaminationField":
        with np.load(path, allow_pickle=False) as d:
            return cls(
                horizon=int(d["horizon"]),
                n_free=int(d["n_free"]),
                prob=d["prob"],
                flagged=d["flagged"],
                kind=str(d["kind"]),
                samples=int(d["samples"]),
                seed=int(d["seed"]),
                scenario_hash=str(d["scenario_hash"]) if "scenario_hash" in d else "",
            )


def _sample_chunk(
    dyn: _SpreadDynamics,
    horizon: int,
    seed: int,
    start: int,
    stop: int,
    want_field: bool,
):
    """Simulate trajectories for samples [start, stop) on their own RNG
    streams. Chunking and threading never change the draws a sample sees."""
    gm = dyn.gridmap
    n = gm.n_free
    m = stop - start
    nbr = gm.neighbor_slots[:, :N_ACTIONS]
    uniforms = np.empty((m, horizon, n))
    for row, i in enumerate(range(start, stop)):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, i))))
        uniforms[row] = rng.random((horizon, n))
    contam = np.broadcast_to(dyn.initial, (m, n)).copy()
    den = np.zeros((horizon, n), dtype=np.int64) if want_field else None
    num = np.zeros((horizon, n, N_ACTIONS), dtype=np.int64) if want_field else None
    for k in range(horizon):
        clear = ~contam
        pc = 1.0 - _clear_probs(dyn, contam)
        ignite = clear & (uniforms[:, k, :] < pc)
        nxt = contam | ignite
        if want_field:
            den[k] += clear.sum(axis=0)
            for j in range(N_ACTIONS):
                idx = nbr[:, j]
                valid = idx >= 0
                if not np.any(valid):
                    continue
                hits = clear[:, valid] & nxt[:, idx[valid]]
                num[k, valid, j] += hits.sum(axis=0)
        contam = nxt
    final = contam.sum(axis=0, dtype=np.int64)
    return den, num, final


def _run_chunks(dyn, horizon, samples, seed, threads, want_field):
    n = dyn.gridmap.n_free
    chunk = max(1, min(2048, 24_000_000 // max(1, horizon * n * 8)))
    ranges = [(s, min(s + chunk, samples)) for s in range(0, samples, chunk)]
    worker = lambda r: _sample_chunk(dyn, horizon, seed, r[0], r[1], want_field)
    if threads > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, ranges))
    else:
        results = [worker(r) for r in ranges]
    den = np.zeros((horizon, n), dtype=np.int64)
    num = np.zeros((horizon, n, N_ACTIONS), dtype=np.int64)
    final = np.zeros(n, dtype=np.int64)
    for d, nm, f in results:
        if want_field:
            den += d
            num += nm
        final += f
    return den, num, final


def estimate_contamination_field(
    gridmap: GridMap,
    model: HazardModel,
    horizon: int,
    samples: int,
    seed: int,
    threads: int = 1,
) -> ContaminationField:
    """Monte-Carlo estimate of the contamination transition field.

    Counts are integers summed in a fixed chunk order before any division, so
    the result is bitwise identical for any thread count.
    """
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    if samples < 1:
        raise ValidationError(f"sample count must be >= 1, got {samples}")
    dyn = _dynamics(gridmap, model)
    den, num, _ = _run_chunks(dyn, horizon, samples, seed, threads, want_field=True)
    flagged = den == 0
    safe = np.where(flagged, 1, den)[:, :, np.newaxis]
    prob = num / safe
    prob[flagged] = 1.0
    valid_slots = gridmap.neighbor_slots[:, :N_ACTIONS] >= 0
    prob[:, ~valid_slots] = 0.0
    # Step-0 conditioning is deterministic: exactly the initial cells flag.
    if not np.array_equal(flagged[0], dyn.initial):
        raise NumericViolationError("step-0 flags disagree with the initial contamination")
    if prob.min() < 0.0 or prob.max() > 1.0:
        raise NumericViolationError("contamination field entry outside [0, 1]")
    out = ContaminationField(
        horizon=horizon,
        n_free=gridmap.n_free,
        prob=prob,
        flagged=flagged,
        kind="monte-carlo",
        samples=samples,
        seed=seed,
    )
    return out


def contamination_heatmap(
    gridmap: GridMap,
    model: HazardModel,
    horizon: int,
    samples: int,
    seed: int,
    threads: int = 1,
) -> np.ndarray:
    """Per-free-cell empirical probability of contamination at the horizon."""
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    if samples < 1:
        raise ValidationError(f"sample count must be >= 1, got {samples}")
    dyn = _dynamics(gridmap, model)
    _, _, final = _run_chunks(dyn, horizon, samples, seed, threads, want_field=False)
    return final / samples


def exact_contamination_field(
    gridmap: GridMap,
    model: HazardModel,
    horizon: int,
    cell_cap: int = EXACT_HAZARD_CELL_CAP,
) -> ContaminationField:
    """Contamination transition field from exact distribution propagation."""
    if gridmap.n_free > cell_cap:
        raise CapExceededError(
            f"exact field needs {gridmap.n_free} free cells <= cap {cell_cap}"
        )
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    dyn = _dynamics(gridmap, model)
    n = gridmap.n_free
    nbr = gridmap.neighbor_slots[:, :N_ACTIONS]
    init_mask = 0
    for i in np.nonzero(dyn.initial)[0]:
        init_mask |= 1 << int(i)
    dist: Dict[int, float] = {init_mask: 1.0}
    prob = np.zeros((horizon, n, N_ACTIONS))
    flagged = np.zeros((horizon, n), dtype=bool)
    den = np.zeros(n)
    num = np.zeros((n, N_ACTIONS))
    for k in range(horizon):
        den[:] = 0.0
        num[:] = 0.0
        for m, p in dist.items():
            if p == 0.0:
                continue
            y = np.array([(m >> i) & 1 for i in range(n)], dtype=bool)
            pc_next = 1.0 - dyn.clear_prob_vector(y)
            pc_next[y] = 1.0
            clear = ~y
            den += p * clear
            for j in range(N_ACTIONS):
                idx = nbr[:, j]
                valid = (idx >= 0) & clear
                if not np.any(valid):
                    continue
                num[valid, j] += p * pc_next[idx[valid]]
        flag_k = den == 0.0
        flagged[k] = flag_k
        safe = np.where(flag_k, 1.0, den)
        prob[k] = num / safe[:, np.newaxis]
        prob[k, flag_k, :] = 1.0
        dist = _exact_step_masks(dyn, dist)
        total = sum(dist.values())
        if abs(total - 1.0) > FIELD_SUM_TOL:
            raise NumericViolationError(f"exact propagation mass {total!r} at step {k}")
    valid_slots = nbr >= 0
    prob[:, ~valid_slots] = 0.0
    prob = np.clip(prob, 0.0, 1.0)
    return ContaminationField(
        horizon=horizon,
        n_free=n,
        prob=prob,
        flagged=flagged,
        kind="exact",
    )


def exact_contamination_marginals(
    gridmap: GridMap,
    model: HazardModel,
    horizon: int,
    cell_cap: int = EXACT_HAZARD_CELL_CAP,
) -> np.ndarray:
    """Exact per-cell contamination probability at the horizon."""
    if gridmap.n_free > cell_cap:
        raise CapExceededError(
            f"exact marginals need {gridmap.n_free} free cells <= cap {cell_cap}"
        )
    dyn = _dynamics(gridmap, model)
    n = gridmap.n_free
    init_mask = 0
    for i in np.nonzero(dyn.initial)[0]:
        init_mask |= 1 << int(i)
    dist: Dict[int, float] = {init_mask: 1.0}
    for _ in range(horizon):
        dist = _exact_step_masks(dyn, dist)
    out = np.zeros(n)
    for m, p in dist.items():
        for i in range(n):
            if m >> i & 1:
                out[i] += p
    return out
