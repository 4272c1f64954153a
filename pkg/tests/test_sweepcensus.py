import math

import numpy as np
import pytest

from chordflow import manifold as mf
from chordflow.errors import EmptyPlan
from chordflow.sweepcensus import (Limit, SweepPlan, census, dedupe, pair_distance,
                                   recheck_representatives, reversed_chords, sample_chords)


def _lim(p, q, r=1e-10):
    p, q = np.array(p, float), np.array(q, float)
    return Limit(p, q, float(np.linalg.norm(p - q)), r)


def test_circle_grid_pairs():
    chords = sample_chords(mf.circle(), SweepPlan(resolution=8))
    assert len(chords) == 8 * 9 // 2 - 8


def test_resolution_one_is_empty():
    with pytest.raises(EmptyPlan):
        sample_chords(mf.circle(), SweepPlan(resolution=1))


def test_all_pairs_excluded_is_empty():
    with pytest.raises(EmptyPlan):
        sample_chords(mf.circle(), SweepPlan(resolution=4, min_length_frac=1.5))


def test_two_circles_cross_pairs_included():
    m = mf.two_circles()
    chords = sample_chords(m, SweepPlan(resolution=6))
    cross = [c for c in chords if c.p.chart != c.q.chart]
    assert len(cross) == 36


def test_dedupe_examples():
    a = _lim([1, 0], [-1, 0])
    assert len(dedupe([a, _lim([1, 1e-6], [-1, 0])], 1e-4)) == 1
    assert len(dedupe([a, _lim([-1, 0], [1, 0])], 1e-4)) == 1
    assert len(dedupe([a, _lim([0, 0.5], [0, -0.5])], 1e-4)) == 2


def test_dedupe_order_independent_and_lowest_residual():
    lims = [_lim([1, 0], [-1, 0], 1e-9), _lim([1, 2e-5], [-1, 0], 1e-12),
            _lim([0, 0.5], [0, -0.5]), _lim([0, -0.5], [0, 0.5 + 3e-5], 1e-11)]
    a = dedupe(lims, 1e-4)
    b = dedupe(lims[::-1], 1e-4)
    assert [c.basin for c in a] == [c.basin for c in b]
    for ca, cb in zip(a, b):
        assert ca.representative is cb.representative
    assert min(c.representative.residual for c in a) == 1e-12


def test_single_linkage_chains():
    lims = [_lim([1, k * 6e-5], [-1, 0]) for k in range(5)]
    assert len(dedupe(lims, 1e-4)) == 1


def test_pair_distance_swap_invariant():
    a, b = _lim([1, 2], [3, 4]), _lim([3.1, 4], [1, 2])
    assert pair_distance(a, b) == pytest.approx(0.1)


def test_ellipse_census_two_axes():
    m = mf.ellipse()
    cen = census(m, SweepPlan(resolution=24))
    assert len(cen.clusters) == 2
    found = sorted(tuple(sorted([tuple(np.round(c.representative.xp, 4) + 0.0),
                                 tuple(np.round(c.representative.xq, 4) + 0.0)]))
                   for c in cen.clusters)
    assert found == [((-1.0, 0.0), (1.0, 0.0)), ((0.0, -0.5), (0.0, 0.5))]
    assert cen.ogc_count + cen.shrink_count + cen.budget_count + cen.failure_count == cen.total
    assert max(recheck_representatives(cen, m)) < 1e-8


def test_census_swap_invariance():
    m = mf.ellipse()
    plan = SweepPlan(resolution=12)
    chords = sample_chords(m, plan)
    a = census(m, plan, chords=chords)
    b = census(m, plan, chords=reversed_chords(chords))
    assert [c.basin for c in a.clusters] == [c.basin for c in b.clusters]
    assert (a.shrink_count, a.budget_count) == (b.shrink_count, b.budget_count)
    for ca, cb in zip(a.clusters, b.clusters):
        assert pair_distance(ca.representative, cb.representative) < 1e-8


def test_census_stable_under_refinement():
    m = mf.ellipse()
    assert len(census(m, SweepPlan(resolution=24)).clusters) <= len(
        census(m, SweepPlan(resolution=48)).clusters)


def test_two_circles_census():
    m = mf.two_circles()
    cen = census(m, SweepPlan(resolution=8))
    assert cen.cross_component_shrinks == 0
    gap = _lim([1, 0], [2, 0])
    assert min(pair_distance(c.representative, gap) for c in cen.clusters) < 1e-4


def test_jobs_give_same_census():
    m = mf.circle()
    plan = SweepPlan(resolution=10, batch=8)
    a, b = census(m, plan), census(m, plan, jobs=2)
    assert [c.basin for c in a.clusters] == [c.basin for c in b.clusters]
    assert a.shrink_count == b.shrink_count
