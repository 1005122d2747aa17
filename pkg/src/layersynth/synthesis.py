"""Game-solving core over multi-layered abstractions.

Safety is a greatest fixed point of the controllable-predecessor
operator, reach-avoid a least one.  The multi-resolution protocols run
those fixed points one layer at a time, saving intermediate winning
sets to the finest layer and re-loading them when switching layers.  In
lazy mode abstract transitions are computed only for frontier cells:
directly for safety, and through a cooperative-predecessor
over-approximation on coarse auxiliary systems for reach-avoid.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .abstraction import TransitionTable, UnexploredTransitionError
from .controller import LayerController, MultiLayeredController
from .dynamics import ControlSystem
from .grid import CellSet, LayerMismatchError, LayerStack, gamma_down, gamma_up
from .problem import ProblemSpec, REACH_AVOID, SAFETY, SpecSets, build_spec_sets


class NonterminationError(RuntimeError):
    """Layer-switching exceeded the configured recursion cap."""


@dataclass
class SynthesisStats:
    """Counters and trace of one synthesis run (timings kept separate)."""

    levels: int
    transitions_per_layer: list[int] = field(default_factory=list)
    aux_transitions: dict[int, int] = field(default_factory=dict)
    cpre_evals: list[int] = field(default_factory=list)
    upre_evals: dict[int, int] = field(default_factory=dict)
    fp_iterations: list[int] = field(default_factory=list)
    winning_sizes: list[int] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.cpre_evals:
            self.cpre_evals = [0] * self.levels
        if not self.fp_iterations:
            self.fp_iterations = [0] * self.levels

    def to_dict(self) -> dict:
        """Deterministic counters only; wall times are reported apart."""
        return {
            "levels": self.levels,
            "transitions_per_layer": list(self.transitions_per_layer),
            "aux_transitions": {str(k): v for k, v in sorted(self.aux_transitions.items())},
            "cpre_evals": list(self.cpre_evals),
            "upre_evals": {str(k): v for k, v in sorted(self.upre_evals.items())},
            "fp_iterations": list(self.fp_iterations),
            "winning_sizes": list(self.winning_sizes),
            "trace": list(self.trace),
        }


@dataclass
class SynthesisResult:
    winning: CellSet
    controller: MultiLayeredController
    stats: SynthesisStats


def _check_table_set(table: TransitionTable, cells: CellSet) -> None:
    if cells.layer != table.grid_layer:
        raise LayerMismatchError(
            f"cell set lives on layer {cells.layer} but the table's grid is "
            f"layer {table.grid_layer}"
        )


def cpre(table: TransitionTable, target: CellSet, candidates: CellSet | None = None) -> CellSet:
    """Cells with an input whose every successor lies in ``target``.

    Blocked pairs never qualify.  ``candidates`` restricts the cells
    under consideration; reading a candidate whose transitions were
    never computed is a frontier bug and raises.
    """
    _check_table_set(table, target)
    if candidates is not None:
        _check_table_set(table, candidates)
        missing = candidates.bits & ~table.explored_cells().bits
        if missing.any():
            raise UnexploredTransitionError(
                f"{int(missing.sum())} candidate cells of layer {table.layer} "
                f"({table.kind}) were never explored"
            )
    result = np.zeros(table.n_cells, dtype=bool)
    tb = target.bits
    for u_idx in range(table.sys.n_inputs):
        cells, indptr, flat, _ = table.csr(u_idx)
        if cells.size == 0:
            continue
        ok = np.minimum.reduceat(tb[flat], indptr[:-1])
        result[cells[ok]] = True
    if candidates is not None:
        result &= candidates.bits
    return CellSet(target.layer, result)


def upre(table: TransitionTable, target: CellSet) -> CellSet:
    """Cells with an input having some successor in ``target``.

    The cooperative predecessor: used only to over-approximate where
    synthesis could make progress, never to decide winning.
    """
    _check_table_set(table, target)
    result = np.zeros(table.n_cells, dtype=bool)
    tb = target.bits
    for u_idx in range(table.sys.n_inputs):
        cells, indptr, flat, _ = table.csr(u_idx)
        if cells.size == 0:
            continue
        ok = np.maximum.reduceat(tb[flat], indptr[:-1])
        result[cells[ok]] = True
    return CellSet(target.layer, result)


def upre_m(table: TransitionTable, target: CellSet, m: int) -> CellSet:
    """Cumulative m-fold application of the cooperative predecessor."""
    if m < 1:
        raise ValueError("m must be >= 1")
    acc = upre(table, target)
    for _ in range(m - 1):
        nxt = acc.union(upre(table, acc))
        if nxt == acc:
            break
        acc = nxt
    return acc


@dataclass
class ReachOutcome:
    won: CellSet
    ranks: dict[int, int]
    snapshots: list[CellSet]
    fixed_point: bool
    iterations: int


class SynthesisEngine:
    """Holds the abstraction layers and runs the synthesis protocols."""

    def __init__(
        self,
        sys: ControlSystem,
        stack: LayerStack,
        spec: ProblemSpec,
        m: int = 2,
        substeps: int = 5,
        workers: int = 1,
        max_switches: int = 100_000,
    ):
        self.sys = sys
        self.stack = stack
        self.spec = spec
        self.spec_sets: SpecSets = build_spec_sets(stack, spec)
        self.m = m
        self.substeps = substeps
        self.workers = workers
        self.max_switches = max_switches
        self.main = [
            TransitionTable(sys, stack, l, "main", substeps) for l in range(1, stack.levels + 1)
        ]
        self.aux: dict[int, TransitionTable] = {}
        self.stats = SynthesisStats(levels=stack.levels)

    # -- plumbing --------------------------------------------------------

    def table(self, layer: int) -> TransitionTable:
        return self.main[layer - 1]

    def _timed(self, key: str, fn, *args):
        t0 = time.perf_counter()
        out = fn(*args)
        self.stats.timings[key] = self.stats.timings.get(key, 0.0) + time.perf_counter() - t0
        return out

    def explore(self, layer: int, region: CellSet) -> None:
        self._timed("abstraction", self.table(layer).compute_region, region, self.workers)

    def ensure_aux(self, layer: int) -> TransitionTable:
        """Auxiliary system: this layer's period on the coarsest grid.

        Populated eagerly over the whole coarse grid at first use; the
        frontier over-approximation deliberately looks past obstacles.
        """
        if layer not in self.aux:
            t = TransitionTable(self.sys, self.stack, layer, "aux", self.substeps)
            full = CellSet.full(self.stack, self.stack.levels)
            self._timed("aux_abstraction", t.compute_region, full, self.workers)
            self.aux[layer] = t
            self.stats.aux_transitions[layer] = t.explored_count
        return self.aux[layer]

    def populate_eager(self) -> None:
        """Pre-compute every main table over its layer's safe set."""
        for l in range(1, self.stack.levels + 1):
            self.explore(l, self.spec_sets.safe_at(l))

    def _cpre(self, layer: int, target: CellSet, candidates: CellSet) -> CellSet:
        self.stats.cpre_evals[layer - 1] += 1
        return cpre(self.table(layer), target, candidates)

    # -- single-layer fixed points ----------------------------------------

    def safe_step(self, layer: int, current: CellSet, covered: CellSet | None = None) -> CellSet:
        """One contraction step of the safety fixed point.

        Result is the subset of ``current`` (within the layer's safe
        set) that can stay inside ``current`` for one period.  In lazy
        runs ``covered`` names the cells allowed to be unexplored
        because a coarser layer already won them this round.
        """
        safe = self.spec_sets.safe_at(layer)
        current = current.intersect(safe)
        candidates = current
        if covered is not None:
            explored = self.table(layer).explored_cells()
            missing = current.difference(explored)
            if not missing.is_subset(covered):
                raise UnexploredTransitionError(
                    f"{missing.difference(covered).count()} frontier cells at "
                    f"layer {layer} were never explored"
                )
            candidates = current.intersect(explored)
        w = self._cpre(layer, current, candidates)
        self.stats.fp_iterations[layer - 1] += 1
        return w

    def safe_fixpoint(self, layer: int) -> tuple[CellSet, dict[int, tuple[int, ...]], int]:
        """Greatest fixed point of :meth:`safe_step` within the safe set."""
        w = self.spec_sets.safe_at(layer).copy()
        iterations = 0
        while True:
            nxt = self.safe_step(layer, w)
            iterations += 1
            if nxt == w:
                break
            w = nxt
        moves = _moves_into(self.table(layer), w.indices(), w.bits)
        return w, moves, iterations

    def reach_m(
        self,
        layer: int,
        target: CellSet,
        safe: CellSet,
        m: int | None,
    ) -> ReachOutcome:
        """Run the reach-avoid fixed point for ``m`` steps (None: converge).

        Iterates ``W <- (CPre(W) n safe) u target`` from ``W = target``
        and records, for every newly won cell, the iteration at which it
        entered.  Reports whether a fixed point was reached.
        """
        safe = safe.intersect(self.spec_sets.safe_at(layer))
        target = target.intersect(safe)
        explored = self.table(layer).explored_cells()
        candidates = safe.intersect(explored)
        w = target.copy()
        snapshots = [w.copy()]
        ranks: dict[int, int] = {}
        fixed = False
        iterations = 0
        while m is None or iterations < m:
            nxt = self._cpre(layer, w, candidates).union(target)
            iterations += 1
            self.stats.fp_iterations[layer - 1] += 1
            if nxt == w:
                fixed = True
                break
            for c in nxt.difference(w).indices():
                ranks[int(c)] = iterations
            w = nxt
            snapshots.append(w.copy())
        return ReachOutcome(w, ranks, snapshots, fixed, iterations)

    def reach_moves(self, layer: int, outcome: ReachOutcome) -> dict[int, tuple[int, ...]]:
        """Inputs that drive each newly won cell into its entry set."""
        by_rank: dict[int, list[int]] = {}
        for cell, rank in outcome.ranks.items():
            by_rank.setdefault(rank, []).append(cell)
        moves: dict[int, tuple[int, ...]] = {}
        for rank in sorted(by_rank):
            region = outcome.snapshots[rank - 1].bits
            cells = np.asarray(sorted(by_rank[rank]), dtype=np.int64)
            moves.update(_moves_into(self.table(layer), cells, region))
        return moves

    # -- frontier exploration ----------------------------------------------

    def expand_abstraction(self, layer: int, upsilon: CellSet, m: int | None = None) -> CellSet:
        """Explore where reach synthesis at ``layer`` could make progress.

        Over-approximates the m-step cooperative predecessors of the
        winning region on the coarse auxiliary system, drops cells whose
        region is already won, refines to ``layer``, and computes the
        transitions of the safe part.  Returns the refined candidate set.
        """
        if layer >= self.stack.levels:
            raise ValueError("frontier expansion applies to layers below the coarsest")
        m = self.m if m is None else m
        aux = self.ensure_aux(layer)
        L = self.stack.levels
        coarse = upre_m(aux, gamma_up(self.stack, upsilon, L), m)
        self.stats.upre_evals[layer] = self.stats.upre_evals.get(layer, 0) + m
        w1 = coarse.difference(gamma_down(self.stack, upsilon, L))
        w2 = gamma_down(self.stack, w1, layer)
        self.explore(layer, w2.intersect(self.spec_sets.safe_at(layer)))
        return w2

    # -- multi-resolution protocols -----------------------------------------

    def safe_iteration(self, lazy: bool) -> tuple[CellSet, list[LayerController], list[CellSet]]:
        """Round-robin safety protocol over all layers.

        Each round performs one fixed-point step per layer from coarse
        to fine, accumulating results on layer 1; it terminates when a
        round adds no change.  Controller domains come from the final
        round; their moves are filled in afterwards.
        """
        stack = self.stack
        L = stack.levels
        psi = self.spec_sets.safe_at(1).copy()
        history: list[CellSet] = []
        rounds = 0
        while True:
            rounds += 1
            if rounds > self.max_switches:
                raise NonterminationError(f"safety protocol exceeded {self.max_switches} rounds")
            upsilon = CellSet.empty(stack, 1)
            round_domains: list[tuple[int, CellSet]] = []
            for layer in range(L, 0, -1):
                cur = gamma_down(stack, psi, layer)
                covered = gamma_down(stack, upsilon, layer)
                if lazy:
                    frontier = cur.intersect(self.spec_sets.safe_at(layer)).difference(covered)
                    self.explore(layer, frontier)
                w = self.safe_step(layer, cur, covered)
                round_domains.append((layer, w))
                upsilon.union_update(gamma_down(stack, w, 1))
                self.stats.trace.append(
                    {"phase": "safe", "round": rounds, "layer": layer, "size": w.count()}
                )
            if not upsilon.is_subset(psi):
                raise AssertionError("layer-1 safety winning sets must shrink per round")
            history.append(upsilon.copy())
            if upsilon == psi:
                break
            psi = upsilon
        stages: list[LayerController] = []
        for layer, w in round_domains:
            if w.is_empty():
                continue
            region = gamma_down(stack, psi, layer)
            moves = _moves_into(self.table(layer), w.indices(), region.bits)
            stages.append(LayerController(layer, len(stages), w, moves))
        return psi, stages, history

    def reach_iteration(self, lazy: bool) -> tuple[CellSet, list[LayerController]]:
        """Coarse-to-fine switching protocol for reach-avoid synthesis.

        The coarsest layer runs its fixed point to convergence; lower
        layers run ``m`` steps and switch coarser whenever they keep
        making progress, finer once they stall.  Terminates when the
        finest layer reaches a fixed point.
        """
        stack = self.stack
        L = stack.levels
        upsilon = self.spec_sets.target_at(1).copy()
        stages: list[LayerController] = []
        if upsilon.is_empty():
            warnings.warn("target under-approximation is empty; nothing to synthesize")
            return upsilon, stages
        layer = L
        switches = 0
        while True:
            switches += 1
            if switches > self.max_switches:
                raise NonterminationError(
                    f"layer switching exceeded {self.max_switches} steps; "
                    f"trace tail: {self.stats.trace[-10:]}"
                )
            safe_l = self.spec_sets.safe_at(layer)
            target_l = gamma_down(stack, upsilon, layer)
            if layer == L:
                if lazy:
                    self.explore(layer, safe_l)
                outcome = self.reach_m(layer, target_l, safe_l, None)
            else:
                expansion = None
                if lazy:
                    expansion = self.expand_abstraction(layer, upsilon)
                outcome = self.reach_m(layer, target_l, safe_l, self.m)
                if lazy:
                    fresh = outcome.won.difference(target_l.intersect(safe_l))
                    if not fresh.is_subset(expansion):
                        raise AssertionError(
                            "frontier expansion missed "
                            f"{fresh.difference(expansion).count()} newly won cells "
                            f"at layer {layer}"
                        )
            self.stats.trace.append(
                {
                    "phase": "reach",
                    "layer": layer,
                    "iterations": outcome.iterations,
                    "fixed_point": outcome.fixed_point,
                    "new_cells": len(outcome.ranks),
                }
            )
            if outcome.ranks:
                moves = self.reach_moves(layer, outcome)
                domain = CellSet.from_indices(
                    stack, layer, np.asarray(sorted(outcome.ranks), dtype=np.int64)
                )
                stages.append(
                    LayerController(layer, len(stages), domain, moves, dict(outcome.ranks))
                )
                upsilon.union_update(gamma_down(stack, outcome.won, 1))
            if layer == L:
                if L == 1:
                    break
                layer -= 1
            elif outcome.fixed_point:
                if layer == 1:
                    break
                layer -= 1
            else:
                layer += 1
        return upsilon, stages

    def finalize_stats(self, winning: CellSet, stages: list[LayerController]) -> None:
        self.stats.transitions_per_layer = [t.explored_count for t in self.main]
        sizes = [0] * self.stack.levels
        for st in stages:
            sizes[st.layer - 1] += st.domain.count()
        self.stats.winning_sizes = sizes
        self.stats.trace.append({"phase": "result", "layer1_winning": winning.count()})


def _moves_into(table: TransitionTable, cells: np.ndarray, region_bits: np.ndarray):
    """For each cell, the inputs whose successors all lie in ``region``."""
    cells = np.asarray(cells, dtype=np.int64)
    moves: dict[int, list[int]] = {int(c): [] for c in cells}
    if cells.size == 0:
        return {}
    want = np.zeros(table.n_cells, dtype=bool)
    want[cells] = True
    for u_idx in range(table.sys.n_inputs):
        tab_cells, indptr, flat, _ = table.csr(u_idx)
        if tab_cells.size == 0:
            continue
        ok = np.minimum.reduceat(region_bits[flat], indptr[:-1]) & want[tab_cells]
        for c in tab_cells[ok]:
            moves[int(c)].append(u_idx)
    out = {c: tuple(v) for c, v in moves.items()}
    if any(len(v) == 0 for v in out.values()):
        raise AssertionError("winning cell without a closing move")
    return out


# -- wrappers ---------------------------------------------------------------


def _empty_result(engine: SynthesisEngine, kind: str, reason: str) -> SynthesisResult:
    warnings.warn(f"{reason}; returning an empty controller")
    winning = CellSet.empty(engine.stack, 1)
    controller = MultiLayeredController(kind, engine.stack, [])
    engine.finalize_stats(winning, [])
    return SynthesisResult(winning, controller, engine.stats)


def _engine(sys, stack, spec, m, substeps, workers) -> SynthesisEngine:
    return SynthesisEngine(sys, stack, spec, m=m, substeps=substeps, workers=workers)


def _run_safe(engine: SynthesisEngine, lazy: bool) -> SynthesisResult:
    if engine.spec_sets.safe_at(1).is_empty():
        return _empty_result(engine, SAFETY, "safe-set under-approximation is empty")
    if not lazy:
        engine._timed("eager_abstraction", engine.populate_eager)
    t0 = time.perf_counter()
    psi, stages, _ = engine.safe_iteration(lazy)
    engine.stats.timings["synthesis"] = time.perf_counter() - t0
    controller = MultiLayeredController(SAFETY, engine.stack, stages)
    engine.finalize_stats(psi, stages)
    return SynthesisResult(psi, controller, engine.stats)


def _run_reach(engine: SynthesisEngine, lazy: bool) -> SynthesisResult:
    if engine.spec_sets.safe_at(1).is_empty():
        return _empty_result(engine, REACH_AVOID, "safe-set under-approximation is empty")
    if engine.spec_sets.target_at(1).is_empty():
        return _empty_result(engine, REACH_AVOID, "target under-approximation is empty")
    if not lazy:
        engine._timed("eager_abstraction", engine.populate_eager)
    t0 = time.perf_counter()
    upsilon, stages = engine.reach_iteration(lazy)
    engine.stats.timings["synthesis"] = time.perf_counter() - t0
    controller = MultiLayeredController(REACH_AVOID, engine.stack, stages)
    engine.finalize_stats(upsilon, stages)
    return SynthesisResult(upsilon, controller, engine.stats)


def eager_safe(sys, stack, spec, substeps=5, workers=1) -> SynthesisResult:
    """Safety synthesis with fully pre-computed abstractions."""
    return _run_safe(_engine(sys, stack, spec, 2, substeps, workers), lazy=False)


def lazy_safe(sys, stack, spec, substeps=5, workers=1) -> SynthesisResult:
    """Safety synthesis exploring only per-round frontier cells."""
    return _run_safe(_engine(sys, stack, spec, 2, substeps, workers), lazy=True)


def eager_reach(sys, stack, spec, m=2, substeps=5, workers=1) -> SynthesisResult:
    """Reach-avoid synthesis with fully pre-computed abstractions."""
    return _run_reach(_engine(sys, stack, spec, m, substeps, workers), lazy=False)


def lazy_reach(sys, stack, spec, m=2, substeps=5, workers=1) -> SynthesisResult:
    """Reach-avoid synthesis with frontier-driven exploration."""
    return _run_reach(_engine(sys, stack, spec, m, substeps, workers), lazy=True)


def single_layer(sys, stack, spec, substeps=5, workers=1) -> SynthesisResult:
    """Finest-layer-only baseline; the reference the protocols must match."""
    engine = _engine(sys, stack, spec, 2, substeps, workers)
    kind = engine.spec.kind
    if engine.spec_sets.safe_at(1).is_empty():
        return _empty_result(engine, kind, "safe-set under-approximation is empty")
    if kind == REACH_AVOID and engine.spec_sets.target_at(1).is_empty():
        return _empty_result(engine, kind, "target under-approximation is empty")
    engine._timed("eager_abstraction", engine.explore, 1, engine.spec_sets.safe_at(1))
    t0 = time.perf_counter()
    stages: list[LayerController] = []
    if kind == SAFETY:
        winning, moves, _ = engine.safe_fixpoint(1)
        if not winning.is_empty():
            stages.append(LayerController(1, 0, winning, moves))
    else:
        target = engine.spec_sets.target_at(1)
        outcome = engine.reach_m(1, target, engine.spec_sets.safe_at(1), None)
        winning = outcome.won
        if outcome.ranks:
            moves = engine.reach_moves(1, outcome)
            domain = CellSet.from_indices(
                stack, 1, np.asarray(sorted(outcome.ranks), dtype=np.int64)
            )
            stages.append(LayerController(1, 0, domain, moves, dict(outcome.ranks)))
    engine.stats.timings["synthesis"] = time.perf_counter() - t0
    controller = MultiLayeredController(kind, engine.stack, stages)
    engine.finalize_stats(winning, stages)
    return SynthesisResult(winning, controller, engine.stats)
