import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chordflow import manifold as mf
from chordflow.chordcore import (EndpointField, boundary_angle, conormal_data, endpoint_normals,
                                 half_laplacian, is_convex_chord, make_chord, ogc_residual,
                                 pair_inner, xi_angle_identity_check)
from chordflow.errors import DegenerateChord, NotPlanarBoundary
from chordflow.manifold import ChartPoint

R2 = 1 / math.sqrt(2)


def test_make_chord_examples():
    assert make_chord(mf.circle(), 0.0, math.pi).ell == pytest.approx(2.0, abs=1e-15)
    c = make_chord(mf.ellipse(), math.pi / 2, 3 * math.pi / 2)
    assert np.allclose([c.xp, c.xq], [[0, 0.5], [0, -0.5]], atol=1e-15)
    assert c.ell == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DegenerateChord):
        make_chord(mf.circle(), 0.4, 0.4)


def test_chord_length_matches_cache():
    c = make_chord(mf.ellipsoid(), (0.7, 1.0), (2.0, 4.0))
    assert abs(c.ell - np.linalg.norm(c.xp - c.xq)) < 1e-14


def test_conormal_examples():
    line = mf.line(dx=0.6, dy=0.8)
    c = make_chord(line, 0.0, 5.0)  # (0,0) -> (3,4)
    cd = conormal_data(c)
    assert np.allclose(cd.eta.f0, [-0.6, -0.8]) and np.allclose(cd.eta.f1, [0.6, 0.8])
    assert np.allclose(conormal_data(make_chord(mf.circle(), 0.3, 0.3 + math.pi)).eta_T.f0, 0,
                       atol=1e-15)
    flat = conormal_data(make_chord(mf.line(), -1.0, 1.0))
    assert np.allclose(flat.eta_T.f0, flat.eta.f0) and np.allclose(flat.eta_T.f1, flat.eta.f1)


def test_conormal_invariants_random():
    rng = np.random.default_rng(3)
    m = mf.ellipsoid()
    for _ in range(50):
        c = make_chord(m, rng.uniform([0.2, 0], [2.9, 6]), rng.uniform([0.2, 0], [2.9, 6]))
        cd = conormal_data(c)
        assert np.array_equal(cd.eta.f0, -cd.eta.f1)
        assert abs(np.linalg.norm(cd.eta.f0) - 1) < 1e-15
        for u in (0, 1):
            assert abs(np.dot(cd.eta_T[u], cd.eta_N[u])) < 1e-12


def test_half_laplacian_examples():
    d = half_laplacian(EndpointField.of(1.0, 0.0), 2.0)
    assert (float(d.f0), float(d.f1)) == (0.5, -0.5)
    assert np.all(half_laplacian(EndpointField.of(2.0, 2.0), 0.7).bar == 0)
    f = EndpointField.of(3.0, 1.0)
    d = half_laplacian(f, 2.0)
    assert (float(d.f0), float(d.f1)) == (1.0, -1.0)
    assert float(d.bar) == 0
    assert float(pair_inner(f, d).bar) == 2.0 == 2.0 / 2 * d.l2_sq
    with pytest.raises(DegenerateChord):
        half_laplacian(f, 0.0)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-10, 10), min_size=3, max_size=3), st.floats(1e-3, 10))
@settings(max_examples=200, deadline=None)
def test_half_laplacian_lemma(f0, f1, ell):
    f = EndpointField.of(f0, f1)
    d = half_laplacian(f, ell)
    assert np.all(d.bar == 0)
    lhs = float(pair_inner(f, d).bar)
    assert lhs == pytest.approx(ell / 2 * d.l2_sq, rel=1e-12, abs=1e-12)
    assert lhs <= 2 / ell * f.l2_sq * (1 + 1e-12) + 1e-12


def test_boundary_angle_examples():
    disk = mf.circle()
    diam = boundary_angle(make_chord(disk, 0.0, math.pi))
    assert abs(diam.p) < 1e-15 and abs(diam.q) < 1e-15
    c = make_chord(disk, 0.0, math.pi / 2)
    th = boundary_angle(c)
    assert th.p == pytest.approx(-R2) and th.q == pytest.approx(-R2)
    rev = boundary_angle(c.reversed())
    assert rev.p == pytest.approx(R2) and rev.q == pytest.approx(R2)
    with pytest.raises(NotPlanarBoundary):
        boundary_angle(make_chord(mf.line(), 0.0, 1.0))


def _random_planar_chords(n, seed):
    rng = np.random.default_rng(seed)
    models = [mf.circle(), mf.ellipse(), mf.ellipse(2.0, 0.7), mf.two_circles()]
    out = []
    while len(out) < n:
        m = models[rng.integers(len(models))]
        ch = (int(rng.integers(len(m.charts))), int(rng.integers(len(m.charts))))
        p = ChartPoint(ch[0], np.array([rng.uniform(0, 2 * math.pi)]))
        q = ChartPoint(ch[1], np.array([rng.uniform(0, 2 * math.pi)]))
        try:
            out.append(make_chord(m, p, q))
        except DegenerateChord:
            pass
    return out


def test_planar_identities_random():
    for c in _random_planar_chords(300, 11):
        th = boundary_angle(c)
        rev = boundary_angle(c.reversed())
        assert (rev.p, rev.q) == (-th.q, -th.p)
        assert abs(th.p) <= 1 and abs(th.q) <= 1
        cd = conormal_data(c)
        N = endpoint_normals(c)
        assert np.linalg.norm(-cd.eta_T.f0 - th.p * N.f0) < 1e-12
        assert np.linalg.norm(-cd.eta_T.f1 - th.q * N.f1) < 1e-12
        assert abs(ogc_residual(c) ** 2 - (th.p**2 + th.q**2)) < 1e-12


def test_ogc_residual_examples():
    assert ogc_residual(make_chord(mf.ellipse(), math.pi / 2, 3 * math.pi / 2)) < 1e-12
    assert ogc_residual(make_chord(mf.line(), -1.0, 1.0)) == pytest.approx(math.sqrt(2))
    m = mf.two_circles()
    gap = make_chord(m, ChartPoint(0, np.array([0.0])), ChartPoint(1, np.array([math.pi])))
    assert ogc_residual(gap) < 1e-12


def test_xi_identity_examples():
    disk = mf.circle()
    diam = make_chord(disk, 3 * math.pi / 2, math.pi / 2)
    assert xi_angle_identity_check(diam) < 1e-15
    c = make_chord(disk, math.pi / 2, 0.0)  # orientation giving Theta = +1/sqrt(2)
    th = boundary_angle(c)
    assert th.p == pytest.approx(R2) and th.q == pytest.approx(R2)
    assert xi_angle_identity_check(c) < 1e-15
    assert xi_angle_identity_check(c.reversed()) is None  # not convex: skipped


def test_xi_identity_random_convex_ellipse_chords():
    rng = np.random.default_rng(5)
    m = mf.ellipse()
    checked = 0
    for _ in range(400):
        c = make_chord(m, rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi))
        if not is_convex_chord(c):
            c = c.reversed()
        r = xi_angle_identity_check(c)
        if r is not None:
            checked += 1
            assert r < 1e-10
    assert checked > 300


def test_xi_identity_skipped_outside_convex_domain():
    m = mf.two_circles()
    c = make_chord(m, ChartPoint(0, np.array([0.3])), ChartPoint(1, np.array([2.8])))
    assert xi_angle_identity_check(c) is None
