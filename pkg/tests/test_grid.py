import numpy as np
import pytest

from layersynth import (
    CellId,
    CellSet,
    LayerMismatchError,
    LayerStack,
    cells_inside_box,
    cells_intersecting_box,
    export_cellset_csv,
)


def make_stack():
    return LayerStack(2, [1.0, 1.0], 0.5, [0.0, 0.0], [4.0, 4.0])


class TestLayerStack:
    def test_dims_halve_per_layer(self):
        stack = LayerStack(3, [0.5, 0.25], 0.1, [0.0, 0.0], [4.0, 4.0])
        assert stack.dims(1).tolist() == [8, 16]
        assert stack.dims(2).tolist() == [4, 8]
        assert stack.dims(3).tolist() == [2, 4]
        assert np.allclose(stack.eta(3), [2.0, 1.0])
        assert stack.tau(3) == pytest.approx(0.4)

    def test_rejects_non_divisible_extent(self):
        with pytest.raises(ValueError, match="integer multiple"):
            LayerStack(1, [0.3, 0.3], 0.1, [0.0, 0.0], [1.0, 1.0])

    def test_rejects_extent_not_divisible_across_layers(self):
        # 6 layer-1 cells per axis cannot be halved twice
        with pytest.raises(ValueError, match="divisible"):
            LayerStack(3, [1.0, 1.0], 0.1, [0.0, 0.0], [6.0, 6.0])

    def test_linearize_is_fortran_order(self):
        stack = LayerStack(1, [1.0, 1.0, 1.0], 0.1, [0, 0, 0], [2.0, 3.0, 4.0])
        rng = np.random.default_rng(7)
        for _ in range(50):
            idx = tuple(int(rng.integers(0, k)) for k in (2, 3, 4))
            expect = np.ravel_multi_index(idx, (2, 3, 4), order="F")
            assert stack.linearize(1, idx) == expect
            assert tuple(stack.unlinearize(1, expect)) == idx


class TestQuantize:
    def test_interior_point(self):
        assert make_stack().quantize([0.5, 0.5], 1) == CellId(1, (0, 0))

    def test_coarse_layer_point(self):
        assert make_stack().quantize([2.0, 3.999], 2) == CellId(2, (1, 1))

    def test_upper_boundary_is_out_of_domain(self):
        assert make_stack().quantize([4.0, 0.0], 1) is None

    def test_below_domain(self):
        assert make_stack().quantize([-0.1, 1.0], 1) is None


class TestCellBox:
    def test_fine_cell(self):
        box = make_stack().cell_box(CellId(1, (0, 0)))
        assert np.allclose(box.lower, [0, 0]) and np.allclose(box.upper, [1, 1])

    def test_coarse_cell(self):
        box = make_stack().cell_box(CellId(2, (1, 0)))
        assert np.allclose(box.lower, [2, 0]) and np.allclose(box.upper, [4, 2])

    def test_quantize_round_trip_on_random_cells(self):
        stack = LayerStack(2, [0.5, 0.25, 1.0], 0.1, [-1, 0, 2], [3.0, 2.0, 10.0])
        rng = np.random.default_rng(3)
        for _ in range(1000):
            layer = int(rng.integers(1, 3))
            dims = stack.dims(layer)
            idx = tuple(int(rng.integers(0, k)) for k in dims)
            cid = CellId(layer, idx)
            center = stack.cell_box(cid).center
            assert stack.quantize(center, layer) == cid


class TestCellSetAlgebra:
    def test_union_with_empty(self):
        stack = make_stack()
        rng = np.random.default_rng(0)
        a = CellSet(1, rng.random(16) < 0.5)
        assert a.union(CellSet.empty(stack, 1)) == a

    def test_intersection_idempotent(self):
        a = CellSet(1, np.random.default_rng(1).random(16) < 0.5)
        assert a.intersect(a) == a

    def test_difference_partitions_count(self):
        rng = np.random.default_rng(2)
        a = CellSet(1, rng.random(16) < 0.5)
        b = CellSet(1, rng.random(16) < 0.5)
        assert a.difference(b).count() + a.intersect(b).count() == a.count()

    def test_complement(self):
        stack = make_stack()
        a = CellSet.from_indices(stack, 1, [0, 3, 7])
        assert a.complement().count() == 13
        assert a.union(a.complement()) == CellSet.full(stack, 1)

    def test_layer_mismatch_raises(self):
        stack = make_stack()
        with pytest.raises(LayerMismatchError):
            CellSet.empty(stack, 1).union(CellSet.empty(stack, 2))

    def test_subset_and_emptiness(self):
        stack = make_stack()
        a = CellSet.from_indices(stack, 1, [1, 2])
        b = CellSet.from_indices(stack, 1, [1, 2, 9])
        assert a.is_subset(b) and not b.is_subset(a)
        assert CellSet.empty(stack, 1).is_empty() and not a.is_empty()


class TestBoxToCells:
    def test_inside_requires_full_cells(self):
        stack = make_stack()
        got = cells_inside_box(stack, 1, [0.5, 0.0], [3.0, 1.0])
        # only the x-range [1,3) is fully covered
        idx = {tuple(i) for i in stack.unlinearize(1, got.indices())}
        assert idx == {(1, 0), (2, 0)}

    def test_intersecting_includes_boundary_touch(self):
        stack = make_stack()
        got = cells_intersecting_box(stack, 1, [1.0, 0.5], [2.0, 0.5])
        idx = {tuple(i) for i in stack.unlinearize(1, got.indices())}
        # the closed box touches x=2.0, the lower edge of cell (2, 0)
        assert idx == {(1, 0), (2, 0)}

    def test_intersecting_clips_to_region(self):
        stack = make_stack()
        got = cells_intersecting_box(stack, 1, [3.5, 3.5], [9.0, 9.0])
        idx = {tuple(i) for i in stack.unlinearize(1, got.indices())}
        assert idx == {(3, 3)}

    def test_inside_tolerates_float_noise(self):
        stack = LayerStack(1, [0.1], 0.1, [0.0], [1.0])
        noisy_lo = 0.30000000000000004  # 3 * 0.1 in floating point
        got = cells_inside_box(stack, 1, [noisy_lo], [0.5])
        assert sorted(got.indices().tolist()) == [3, 4]


def test_csv_export(tmp_path):
    stack = make_stack()
    cells = CellSet.from_indices(stack, 2, [0, 3])
    path = tmp_path / "cells.csv"
    export_cellset_csv(stack, cells, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "layer,idx0,idx1,center0,center1"
    assert lines[1] == "2,0,0,1.0,1.0"
    assert lines[2] == "2,1,1,3.0,3.0"
