from __future__ import annotations

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import FIG_BOTTOM, FIG_TOP
from dimercyl.errors import DomainError
from dimercyl.lattice import (BOTTOM, TOP, CylinderDomain, build_staircase_cylinder,
                              build_straight_cylinder, disjoint_paths, domain_to_text, dual_path,
                              is_perfect_matching, parse_domain_text, reference_cover,
                              validate_temperleyan, vertex_type)


def test_vertex_typing_4x2():
    d = build_straight_cylinder(4, 2)
    assert len(d.vertices) == 8
    assert len(d.blacks) == len(d.whites) == 4
    # bottom-left corner is B1; vertical neighbours keep the subtype
    assert vertex_type(0, 0).name == "B1"
    assert vertex_type(0, 1).name == "W1"
    assert vertex_type(1, 0).name == "W0"
    assert vertex_type(1, 1).name == "B0"
    assert vertex_type(0, 0).eta == 1j and vertex_type(1, 1).eta == 1


@pytest.mark.parametrize("w,h", [(4, 3), (5, 2), (2, 2), (4, 0)])
def test_straight_rejects_bad_sizes(w, h):
    with pytest.raises(DomainError):
        build_straight_cylinder(w, h)


def test_large_straight():
    d = build_straight_cylinder(64, 32)
    assert len(d.vertices) == 2048
    assert validate_temperleyan(d).ok


def _adjacency_ok(d: CylinderDomain) -> bool:
    for v in d.vertices:
        t = vertex_type(*v)
        for u, direction in d.neighbors(v):
            s = vertex_type(*u)
            if s.color == t.color:
                return False
            vertical = direction in ("up", "down")
            # vertical neighbours share the subtype, horizontal ones swap it
            if vertical != (s.subtype == t.subtype):
                return False
    return True


def test_adjacency_table_straight():
    assert _adjacency_ok(build_straight_cylinder(8, 4))


def test_figure_shape_validates():
    d = build_staircase_cylinder(12, FIG_BOTTOM, FIG_TOP)
    assert validate_temperleyan(d).ok
    assert _adjacency_ok(d)
    assert is_perfect_matching(d, reference_cover(d))


def test_flat_staircase_equals_straight():
    a = build_staircase_cylinder(6, [0] * 6, [4] * 6)
    b = build_straight_cylinder(6, 4)
    assert a == b and a.hash == b.hash


def test_w0_corner_names_column():
    with pytest.raises(DomainError, match="column 1"):
        build_staircase_cylinder(4, [2, 0, 0, 0], [4, 4, 4, 4])


def test_shifted_bottom_reports_b1_violation():
    rep = validate_temperleyan(CylinderDomain(4, (1, 1, 1, 1), (5, 5, 5, 5)))
    assert not rep.ok
    assert any("B1" in issue for issue in rep.issues)


def test_count_violation():
    rep = validate_temperleyan(CylinderDomain(4, (0, 0, 0, 0), (2, 2, 2, 3)))
    assert any(issue.startswith("count") for issue in rep.issues)


def test_valid_report_empty():
    rep = validate_temperleyan(build_straight_cylinder(8, 4))
    assert rep.ok and rep.issues == [] and str(rep) == "valid"


@pytest.mark.parametrize("w,h,n", [(4, 2, 4), (6, 4, 12)])
def test_reference_cover_bricks(w, h, n):
    d = build_straight_cylinder(w, h)
    m = reference_cover(d)
    assert len(m) == n
    assert all(b[0] == wv[0] and abs(b[1] - wv[1]) == 1 for wv, b in m.items())
    assert is_perfect_matching(d, m)


def test_dual_path_empty_and_top():
    d = build_straight_cylinder(4, 4)
    assert len(dual_path(d, BOTTOM)) == 0
    p = dual_path(d, TOP)
    # five dual vertices, four crossed horizontal edges
    assert len(p.faces) == 5 and len(p) == 4
    assert all(d.edges[k][0][1] == d.edges[k][1][1] for k in p.edges)


def test_dual_path_consecutive_faces_adjacent():
    d = build_staircase_cylinder(12, FIG_BOTTOM, FIG_TOP)
    for target in [TOP, (5, 4), (0, 3)]:
        p = dual_path(d, target)
        for f, g, k, s in zip(p.faces, p.faces[1:], p.edges, p.signs):
            fm, fp, sign = d.dual_edges[k]
            assert (f, g, s) in ((fm, fp, sign), (fp, fm, -sign))


def test_dual_path_reverse_negates():
    d = build_straight_cylinder(8, 4)
    p = dual_path(d, (3, 2))
    r = p.reversed()
    assert r.faces == p.faces[::-1]
    assert r.signs == tuple(-s for s in p.signs[::-1])


def test_disjoint_paths():
    d = build_straight_cylinder(8, 6)
    paths = disjoint_paths(d, [(1, 3), (5, 2)])
    f0, f1 = set(paths[0].faces[1:]), set(paths[1].faces[1:])
    assert not f0 & f1
    with pytest.raises(DomainError):
        disjoint_paths(d, [(1, 3), (1, 2)])


def test_domain_text_roundtrip():
    d = build_staircase_cylinder(12, FIG_BOTTOM, FIG_TOP, cut_column=3)
    assert parse_domain_text(domain_to_text(d)) == d
    s = build_straight_cylinder(8, 4, 2)
    assert parse_domain_text(domain_to_text(s)) == s


@pytest.mark.parametrize("text", ["width = 4\n", "width = x\nheight = 2\n", "width 4\n",
                                  "width = 4\nheight = 2\ncolour = red\n"])
def test_domain_text_errors(text):
    with pytest.raises(DomainError):
        parse_domain_text(text)


def test_seam_and_rotation():
    d = build_straight_cylinder(6, 4, cut_column=2)
    seam = [e for e in d.edges if d.crosses_seam(e)]
    assert len(seam) == 4 and all({e[0][0], e[1][0]} == {1, 2} for e in seam)
    assert d.rotated(6) == d


@st.composite
def profiles(draw):
    # even columns are free; odd columns sit inside both even neighbours,
    # which puts every step corner on an even column
    w = draw(st.sampled_from([4, 6, 8]))
    bottom, top = [0] * w, [0] * w
    for c in range(0, w, 2):
        bottom[c] = 2 * draw(st.integers(-1, 1))
        top[c] = bottom[c] + 2 * draw(st.integers(2, 4))
    for c in range(1, w, 2):
        lo = max(bottom[c - 1], bottom[(c + 1) % w]) + 2 * draw(st.integers(0, 1))
        hi = min(top[c - 1], top[(c + 1) % w]) - 2 * draw(st.integers(0, 1))
        bottom[c], top[c] = lo, hi
    return w, bottom, top


@settings(max_examples=60, deadline=None)
@given(profiles())
def test_random_profiles_invariants(prof):
    w, bottom, top = prof
    d = CylinderDomain(w, bottom, top)
    assume(validate_temperleyan(d).ok)
    assert len(d.blacks) == len(d.whites)
    assert _adjacency_ok(d)
    m = reference_cover(d)
    assert is_perfect_matching(d, m)
    assert sorted(m.values()) == sorted(d.blacks)
    p = dual_path(d, TOP)
    assert p.faces[0] == BOTTOM and p.faces[-1] == TOP
