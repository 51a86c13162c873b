import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gliomapipe.data import LabelVolume, Region
from gliomapipe.errors import DataError, ShapeError
from gliomapipe.metrics import (
    RegionMetrics,
    SegCaseMetrics,
    boundary,
    dice,
    evaluate_case,
    hausdorff95,
    hausdorff_distance,
    metric_columns,
    sensitivity,
    specificity,
    summarize_cohort,
)
from oracles import (
    boundary_voxels,
    brute_dice,
    brute_hausdorff,
    brute_sensitivity,
    brute_specificity,
    random_mask_pair,
)


def _voxels(shape, *coords):
    m = np.zeros(shape, bool)
    for c in coords:
        m[c] = True
    return m


class TestExamples:
    def test_dice_two_thirds(self):
        pred = np.zeros((16, 16, 16), bool)
        pred[4:6, 4:6, 4:6] = True
        gt = np.zeros_like(pred)
        gt[4:6, 4:6, 4] = True
        assert dice(pred, gt) == pytest.approx(2 / 3)

    def test_single_voxels_five_apart(self):
        pred = _voxels((8, 8, 8), (0, 0, 0))
        gt = _voxels((8, 8, 8), (3, 4, 0))
        assert hausdorff95(pred, gt) == pytest.approx(5.0)

    def test_anisotropic_spacing(self):
        pred = _voxels((8, 8, 8), (0, 0, 0))
        gt = _voxels((8, 8, 8), (0, 0, 2))
        assert hausdorff95(pred, gt, spacing=(1, 1, 2.5)) == pytest.approx(5.0)

    def test_sensitivity_three_of_four(self):
        gt = _voxels((4, 4, 4), (0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0))
        pred = _voxels((4, 4, 4), (0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 3, 3))
        assert sensitivity(pred, gt) == 0.75

    def test_identical_masks(self):
        m = np.zeros((6, 6, 6), bool)
        m[1:4, 2:5, 0:3] = True
        assert dice(m, m) == 1.0 and hausdorff95(m, m) == 0.0
        assert sensitivity(m, m) == 1.0 and specificity(m, m) == 1.0

    def test_empty_rules(self):
        empty = np.zeros((4, 5, 6), bool)
        some = _voxels((4, 5, 6), (1, 1, 1))
        assert dice(empty, empty) == 1.0
        assert dice(some, empty) == 0.0
        assert hausdorff95(empty, empty) == 0.0
        assert hausdorff95(some, empty) == pytest.approx(math.sqrt(16 + 25 + 36))
        assert hausdorff95(some, empty, spacing=(2, 1, 1)) == pytest.approx(math.sqrt(64 + 25 + 36))
        assert hausdorff95(empty, some, empty_penalty=373.13) == 373.13
        assert sensitivity(empty, empty) == 1.0 and sensitivity(some, empty) == 0.0
        full = np.ones((4, 5, 6), bool)
        assert specificity(full, full) == 1.0 and specificity(~some, full) == 0.0

    def test_max_percentile_is_classic_hausdorff(self):
        pred = _voxels((10, 10, 10), (0, 0, 0), (9, 0, 0))
        gt = _voxels((10, 10, 10), (0, 0, 0))
        assert hausdorff_distance(pred, gt, percentile=100) == pytest.approx(9.0)

    def test_region_swap_leaves_tc(self):
        gt = np.zeros((8, 8, 8), np.uint8)
        gt[2:6, 2:6, 2:6] = 2
        gt[3:5, 3:5, 3:5] = 1
        gt[3, 3, 3] = 4
        swapped = gt.copy()
        swapped[gt == 1], swapped[gt == 4] = 4, 1
        m = evaluate_case(LabelVolume(swapped), LabelVolume(gt))
        assert m.value("dice", Region.TC) == 1.0 and m.value("dice", Region.WT) == 1.0
        assert m.value("dice", Region.ET) < 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dice(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))
        with pytest.raises(ShapeError):
            evaluate_case(LabelVolume(np.zeros((2, 2, 2))), LabelVolume(np.zeros((2, 2, 3))))


class TestAgainstOracles:
    def test_boundary_matches_enumeration(self, rng):
        for _ in range(30):
            m, _ = random_mask_pair(rng, 10)
            got = np.argwhere(boundary(m)).astype(float)
            assert np.array_equal(got, boundary_voxels(m))

    def test_overlap_metrics(self, rng):
        for _ in range(60):
            p, g = random_mask_pair(rng)
            assert dice(p, g) == pytest.approx(brute_dice(p, g), abs=1e-12)
            assert sensitivity(p, g) == pytest.approx(brute_sensitivity(p, g), abs=1e-12)
            assert specificity(p, g) == pytest.approx(brute_specificity(p, g), abs=1e-12)

    def test_hausdorff(self, rng):
        for _ in range(40):
            p, g = random_mask_pair(rng, 12)
            spacing = tuple(rng.uniform(0.5, 2.0, size=3))
            for q in (95, 100, 50):
                assert hausdorff_distance(p, g, spacing, q) == pytest.approx(
                    brute_hausdorff(p, g, spacing, q), rel=1e-9, abs=1e-9)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_symmetry_and_ranges(self, seed):
        p, g = random_mask_pair(np.random.default_rng(seed), 10)
        assert dice(p, g) == dice(g, p)
        assert hausdorff95(p, g) == pytest.approx(hausdorff95(g, p), abs=1e-12)
        assert sensitivity(p, g) == specificity(~p, ~g)
        for v in (dice(p, g), sensitivity(p, g), specificity(p, g)):
            assert 0.0 <= v <= 1.0
        assert 0.0 <= hausdorff95(p, g) <= math.sqrt(sum(n * n for n in p.shape)) + 1e-9


def _case(case_id, value):
    regions = {r: RegionMetrics(value, 10 * value, value, value) for r in (Region.ET, Region.WT, Region.TC)}
    return SegCaseMetrics(case_id, regions)


class TestCohort:
    def test_single_case(self):
        s = summarize_cohort([_case("a", 0.7)])
        assert s.row("StdDev") == [0.0] * 12
        assert s.row("Mean") == s.row("Median")

    def test_three_cases(self):
        s = summarize_cohort([_case("a", 0.2), _case("b", 0.5), _case("c", 0.8)])
        assert s.stats["Mean"]["dice_et"] == pytest.approx(0.5)
        assert s.stats["Median"]["dice_wt"] == pytest.approx(0.5)
        assert s.stats["StdDev"]["dice_tc"] == pytest.approx(math.sqrt(0.06))
        assert s.stats["Mean"]["hd95_et"] == pytest.approx(5.0)

    def test_empty(self):
        with pytest.raises(DataError):
            summarize_cohort([])

    def test_column_order(self):
        cols = [c for c, _, _ in metric_columns()]
        assert cols[:3] == ["dice_et", "dice_wt", "dice_tc"]
        assert cols[3:6] == ["hd95_et", "hd95_wt", "hd95_tc"]
        assert cols[-3:] == ["specificity_et", "specificity_wt", "specificity_tc"]
        assert list(_case("x", 0.1).as_row()) == ["case_id"] + cols

    def test_render_layout(self):
        text = summarize_cohort([_case("a", 0.2), _case("b", 0.4)]).render()
        lines = text.splitlines()
        titles = [t.strip() for t in lines[0].split("|")[1:]]
        assert titles == ["Dice", "Hausdorff", "Sensitivity", "Specificity"]
        assert [t.strip() for t in lines[1].split("|")[1:]] == ["ET", "WT", "TC"] * 4
        assert [ln.split("|")[0].strip() for ln in lines[2:]] == ["Mean", "StdDev", "Median"]
        assert lines[2].split("|")[1].strip() == "0.300"
