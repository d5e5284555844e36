from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import ASYM_BOTTOM, ASYM_TOP, SKEW_BOTTOM, SKEW_TOP, covers_of, staircase, straight
from dimercyl.errors import DomainError
from dimercyl.kasteleyn import assemble, invert
from dimercyl.lattice import BOTTOM, TOP, dual_path, reference_cover
from dimercyl.height_stats import (MomentReport, empirical_H2, exact_H2, exact_mean_height,
                                   exact_moment, exact_report, height_from_cover, heights_along,
                                   mc_moments, mc_report, top_height)
from dimercyl.sampling import DimerCover, sample_covers


def _ref(d):
    return DimerCover.from_matching(d, reference_cover(d))


def _enum_heights(d, face=TOP):
    ref = _ref(d)
    return np.array([height_from_cover(c, ref, d)[face] for c in covers_of(d)], dtype=float)


def _central(x, n):
    return float(np.mean((x - x.mean()) ** n))


def test_reference_height_is_zero():
    d = straight(6, 4)[0]
    ref = _ref(d)
    h = height_from_cover(ref, ref, d)
    assert set(h.values.values()) == {0}
    assert top_height(ref, ref, d) == 0


def test_4x2_heights():
    d = straight(4, 2)[0]
    ref = _ref(d)
    tops = {top_height(c, ref, d): c for c in covers_of(d)}
    assert sorted(tops) == [-1, 0, 1]
    # the two covers that shift the top face are made of horizontal dimers only
    for t in (-1, 1):
        assert all(b[1] == w[1] for w, b in tops[t].matching.items())
    assert sum(top_height(c, ref, d) != 0 for c in covers_of(d)) == 2


def test_height_field_integer_and_pinned():
    d, system, table = straight(16, 8, 3)
    ref = _ref(d)
    for m in sample_covers(system, table, 5, seed=1):
        h = height_from_cover(DimerCover(d, m), ref, d)
        assert h[BOTTOM] == 0
        assert all(isinstance(v, int) for v in h.values.values())
        assert h[TOP] == top_height(DimerCover(d, m), ref, d)


def test_invalid_cover_detected():
    d = straight(6, 4)[0]
    ref = _ref(d)
    bad = ref.match.copy()
    bad[0] = bad[1]
    with pytest.raises(DomainError):
        height_from_cover(DimerCover(d, bad), ref, d)


def test_heights_along_matches_fields():
    d, system, table = straight(8, 4)
    ref = _ref(d)
    S = sample_covers(system, table, 20, seed=4)
    faces = [TOP, (3, 2), (0, 1)]
    H = heights_along(d, S, [dual_path(d, f) for f in faces], ref)
    for row, m in zip(H, S):
        h = height_from_cover(DimerCover(d, m), ref, d)
        assert list(row) == [h[f] for f in faces]


ENUM_DOMAINS = [("straight", (4, 2)), ("straight", (6, 4)), ("straight", (4, 4)),
                ("straight", (8, 2)), ("skew", None), ("asym", None)]


def _setup(kind, shape):
    if kind == "skew":
        return staircase(SKEW_BOTTOM, SKEW_TOP)
    if kind == "asym":
        return staircase(ASYM_BOTTOM, ASYM_TOP)
    return straight(*shape)


@pytest.mark.parametrize("kind,shape", ENUM_DOMAINS)
def test_exact_moments_match_enumeration(kind, shape):
    d, system, table = _setup(kind, shape)
    h = _enum_heights(d)
    assert exact_moment(system, table, 2) == pytest.approx(_central(h, 2), abs=1e-10)
    assert exact_moment(system, table, 3) == pytest.approx(_central(h, 3), abs=1e-10)


def test_third_moment_sign_and_symmetry():
    d, system, table = staircase(ASYM_BOTTOM, ASYM_TOP)
    m3 = exact_moment(system, table, 3)
    assert abs(m3) > 1e-4
    # the mirror image has the opposite third moment
    mb, mt = tuple(ASYM_BOTTOM[::-1]), tuple(ASYM_TOP[::-1])
    mb, mt = mb[-1:] + mb[:-1], mt[-1:] + mt[:-1]
    _, s2, t2 = staircase(mb, mt)
    assert exact_moment(s2, t2, 3) == pytest.approx(-m3, abs=1e-12)
    # reflection-symmetric shapes have none
    assert abs(exact_moment(*staircase(SKEW_BOTTOM, SKEW_TOP)[1:], 3)) < 1e-12


@pytest.mark.parametrize("kind,shape", [("straight", (6, 4)), ("asym", None)])
def test_tuple_sum_equals_closed_form(kind, shape):
    d, system, table = _setup(kind, shape)
    for n in (2, 3):
        assert exact_moment(system, table, n, method="tuples") == pytest.approx(
            exact_moment(system, table, n), abs=1e-10)


def test_exact_moment_refuses_n4():
    _, system, table = straight(4, 2)
    with pytest.raises(ValueError):
        exact_moment(system, table, 4)


def test_moment_independent_of_path():
    d, system, table = straight(8, 4)
    ref = dual_path(d, TOP)
    shifted = dual_path(d.rotated(2), TOP)
    assert ref.edges != shifted.edges
    for n in (2, 3):
        assert exact_moment(system, table, n, path=shifted) == pytest.approx(
            exact_moment(system, table, n), abs=1e-10)


def test_moments_invariant_under_cut_and_rotation():
    base = exact_report(*straight(16, 8)[1:])
    for cut in (1, 5):
        rep = exact_report(*straight(16, 8, cut)[1:])
        assert rep.M2 == pytest.approx(base.M2, abs=1e-9)
        assert abs(rep.M3 - base.M3) < 1e-9
    d = staircase(ASYM_BOTTOM, ASYM_TOP)[0]
    a = exact_report(*staircase(ASYM_BOTTOM, ASYM_TOP)[1:])
    rd = d.rotated(2)
    sys_r = assemble(rd)
    b = exact_report(sys_r, invert(sys_r))
    assert b.M2 == pytest.approx(a.M2, abs=1e-9) and b.M3 == pytest.approx(a.M3, abs=1e-9)


def test_exact_H2_matches_enumeration():
    d, system, table = straight(6, 4)
    ref = _ref(d)
    faces = [(1, 2), (3, 2), (4, 1), TOP]
    fields = [height_from_cover(c, ref, d) for c in covers_of(d)]
    for f1 in faces:
        for f2 in faces:
            x = np.array([h[f1] for h in fields], float)
            y = np.array([h[f2] for h in fields], float)
            cov = float(np.mean((x - x.mean()) * (y - y.mean())))
            assert exact_H2(system, table, f1, f2) == pytest.approx(cov, abs=1e-10)
    assert exact_H2(system, table, BOTTOM, (3, 2)) == 0.0


def test_exact_mean_height():
    d, system, table = staircase(SKEW_BOTTOM, SKEW_TOP)
    assert exact_mean_height(system, table, TOP) == pytest.approx(_enum_heights(d).mean(), abs=1e-10)


def test_empirical_H2_bottom_and_top():
    d, system, table = straight(8, 4)
    S = sample_covers(system, table, 4000, seed=17)
    H = heights_along(d, S, [dual_path(d, BOTTOM), dual_path(d, TOP)])
    v, se = empirical_H2(H[:, 0], H[:, 0])
    assert v == 0.0 and se == 0.0
    v, se = empirical_H2(H[:, 1], H[:, 1])
    assert abs(v - exact_moment(system, table, 2)) <= 3 * se


def test_empirical_H2_refuses_few_samples():
    with pytest.raises(ValueError):
        empirical_H2(np.zeros(999), np.zeros(999))


def test_top_height_sample_variance_positive():
    d, system, table = straight(16, 8)
    S = sample_covers(system, table, 10_000, seed=23)
    h = heights_along(d, S, [dual_path(d, TOP)])[:, 0]
    hc = h - h.mean()
    assert abs(hc.mean()) < 1e-12
    assert np.var(h) > 0
    assert np.all(h == np.round(h))


def test_mc_moments_and_report_json():
    rng = np.random.default_rng(0)
    x = rng.integers(-3, 4, size=5000)
    m = mc_moments(x)
    assert m[2][0] == pytest.approx(np.var(x))
    assert m[2][1] > 0
    d = straight(8, 4)[0]
    rep = mc_report(d, x, seed=7)
    back = json.loads(rep.to_json())
    for key in ("domain_hash", "delta", "method", "M2", "M3", "M4", "se2", "se3", "se4",
                "n_samples", "seed"):
        assert key in back
    assert back["method"] == "monte_carlo" and back["n_samples"] == 5000
    ex = exact_report(*straight(8, 4)[1:])
    assert ex.se2 == 0.0 and ex.M2 >= 0 and isinstance(ex, MomentReport)
