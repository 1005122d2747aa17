"""Safety and reach-avoid problem descriptions.

A problem is given by closed boxes: optional safe boxes (default: the
whole region of interest), obstacle boxes carved out of them, and, for
reach-avoid, target boxes.  Synthesis consumes per-layer cell-level
approximations: the safe and target sets are under-approximated (cells
fully inside), obstacles are over-approximated (cells touching them are
removed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import CellSet, LayerStack, cells_inside_box, cells_intersecting_box, gamma_down

SAFETY = "safe"
REACH_AVOID = "reach-avoid"


def _as_boxes(boxes) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for lo, hi in boxes:
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError(f"malformed box ({lo}, {hi})")
        out.append((lo, hi))
    return out


@dataclass
class ProblemSpec:
    """Box-level control problem over a layer stack's region of interest."""

    kind: str
    safe_boxes: list = field(default_factory=list)
    obstacle_boxes: list = field(default_factory=list)
    target_boxes: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in (SAFETY, REACH_AVOID):
            raise ValueError(f"kind must be '{SAFETY}' or '{REACH_AVOID}'")
        self.safe_boxes = _as_boxes(self.safe_boxes)
        self.obstacle_boxes = _as_boxes(self.obstacle_boxes)
        self.target_boxes = _as_boxes(self.target_boxes)
        if self.kind == REACH_AVOID and not self.target_boxes:
            raise ValueError("reach-avoid problems need at least one target box")

    def in_safe_region(self, x, stack: LayerStack) -> bool:
        """Point test against the concrete safe region (closed boxes)."""
        x = np.asarray(x, dtype=float)
        if np.any(x < stack.y_lower) or np.any(x > stack.y_upper):
            return False
        if self.safe_boxes and not any(
            np.all(x >= lo) and np.all(x <= hi) for lo, hi in self.safe_boxes
        ):
            return False
        return not any(
            np.all(x >= lo) and np.all(x <= hi) for lo, hi in self.obstacle_boxes
        )

    def in_target_region(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return any(np.all(x >= lo) and np.all(x <= hi) for lo, hi in self.target_boxes)


@dataclass
class SpecSets:
    """Per-layer cell approximations of a :class:`ProblemSpec`."""

    safe: list[CellSet]
    target: list[CellSet] | None
    coarse_obstacles: CellSet

    def safe_at(self, layer: int) -> CellSet:
        return self.safe[layer - 1]

    def target_at(self, layer: int) -> CellSet:
        if self.target is None:
            raise ValueError("safety problems have no target sets")
        return self.target[layer - 1]


def _union_inside(stack: LayerStack, layer: int, boxes) -> CellSet:
    acc = CellSet.empty(stack, layer)
    for lo, hi in boxes:
        acc.union_update(cells_inside_box(stack, layer, lo, hi))
    return acc


def _union_intersecting(stack: LayerStack, layer: int, boxes) -> CellSet:
    acc = CellSet.empty(stack, layer)
    for lo, hi in boxes:
        acc.union_update(cells_intersecting_box(stack, layer, lo, hi))
    return acc


def build_spec_sets(stack: LayerStack, spec: ProblemSpec) -> SpecSets:
    """Compute the per-layer safe/target cell sets of a problem.

    The layer-1 sets are computed directly from the boxes; coarser
    layers additionally intersect with the projection of the layer-1
    sets, so a coarser set never exceeds what the finer sets justify.
    """
    L = stack.levels

    def inside_safe(layer: int) -> CellSet:
        if spec.safe_boxes:
            safe = _union_inside(stack, layer, spec.safe_boxes)
        else:
            safe = CellSet.full(stack, layer)
        return safe.difference(_union_intersecting(stack, layer, spec.obstacle_boxes))

    safe_sets = [inside_safe(1)]
    for layer in range(2, L + 1):
        direct = inside_safe(layer)
        safe_sets.append(gamma_down(stack, safe_sets[0], layer).intersect(direct))

    target_sets = None
    if spec.kind == REACH_AVOID:
        t1 = _union_inside(stack, 1, spec.target_boxes).intersect(safe_sets[0])
        target_sets = [t1]
        for layer in range(2, L + 1):
            direct = _union_inside(stack, layer, spec.target_boxes)
            target_sets.append(
                gamma_down(stack, t1, layer).intersect(direct).intersect(safe_sets[layer - 1])
            )

    coarse_obstacles = _union_intersecting(stack, L, spec.obstacle_boxes)
    return SpecSets(safe=safe_sets, target=target_sets, coarse_obstacles=coarse_obstacles)
