from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import FIG_BOTTOM, FIG_TOP, SKEW_BOTTOM, SKEW_TOP, covers_of, staircase, straight
from dimercyl.errors import DomainError
from dimercyl.kasteleyn import (F_values, KasteleynSystem, _F_at, assemble, coupling, cr_defect_at,
                                discrete_cr_residual, edge_probability, export_table,
                                extract_components, face_products, hadamard_components,
                                kasteleyn_weight, loop_increment, normalize_on_top,
                                partition_function_log, primitive_Gw, read_table)
from dimercyl.lattice import CylinderDomain, build_straight_cylinder, is_black, vertex_type


def square_product(d, c, r):
    """Alternating product K(b1,w1)/K(b1,w2)*K(b2,w2)/K(b2,w1) around a unit square."""
    W = d.width
    corners = [(c, r), ((c + 1) % W, r), ((c + 1) % W, r + 1), (c, r + 1)]
    vals = []
    for a, b in zip(corners, corners[1:] + corners[:1]):
        bl, wh = (a, b) if is_black(a) else (b, a)
        vals.append(kasteleyn_weight(d, bl, wh))
    return vals[0] / vals[1] * vals[2] / vals[3]


def test_weight_below_is_delta():
    d, system, _ = straight(4, 2)
    # white (0, 1) has black (0, 0) directly below
    assert system.weight((0, 0), (0, 1)) == pytest.approx(0.25)
    assert system.weight((1, 1), (1, 0)) == pytest.approx(-0.25)


def test_entries_in_phase_class():
    d, system, _ = straight(8, 4, 3)
    for b, w in d.edges:
        k = system.weight(b, w)
        assert abs(abs(k) - d.delta) < 1e-15
        ph = k * vertex_type(*b).eta * vertex_type(*w).eta
        assert abs(ph.imag) < 1e-15


@pytest.mark.parametrize("cut", [0, 3])
def test_square_faces_minus_one(cut):
    d = build_straight_cylinder(8, 4, cut)
    for f in d.faces[2:]:
        assert square_product(d, *f) == pytest.approx(-1)


def test_face_condition_staircase():
    d = staircase(FIG_BOTTOM, FIG_TOP)[0]
    prods = face_products(d)
    assert "top" in prods
    assert all(abs(v - 1) < 1e-12 for v in prods.values())


def test_seam_edge_negated():
    a = build_straight_cylinder(6, 4, 0)
    b = build_straight_cylinder(6, 4, 2)
    e = ((1, 1), (2, 1))
    assert is_black(e[0]) and not is_black(e[1])
    assert kasteleyn_weight(b, *e) == -kasteleyn_weight(a, *e)


def test_inverse_matches_numpy():
    _, system, table = straight(4, 2)
    assert np.allclose(table.Kinv, np.linalg.inv(system.K), atol=1e-13)
    assert table.residual < 1e-12


def test_large_inverse_residual():
    _, _, table = straight(32, 16)
    assert table.residual < 1e-10


def test_unequal_counts_rejected():
    with pytest.raises(DomainError):
        assemble(CylinderDomain(4, (0, 0, 0, 0), (2, 2, 2, 3)))


def test_singular_log_det():
    d = CylinderDomain(4, (0, 0, 0, 2), (1, 1, 1, 3))
    K = np.zeros((len(d.blacks), len(d.whites)), dtype=complex)
    for b, w in d.edges:
        K[d.black_index[b], d.white_index[w]] = kasteleyn_weight(d, b, w)
    assert partition_function_log(KasteleynSystem(d, K)) == -math.inf


@pytest.mark.parametrize("shape", [(4, 2), (6, 4), (4, 4), (8, 2)])
def test_log_det_counts_covers(shape):
    d, system, _ = straight(*shape)
    n = len(covers_of(d))
    count = math.exp(system.log_abs_det - len(d.whites) * math.log(d.delta))
    assert count == pytest.approx(n, rel=1e-9)


def test_log_det_staircase_counts():
    d, system, _ = staircase(SKEW_BOTTOM, SKEW_TOP)
    count = math.exp(system.log_abs_det - len(d.whites) * math.log(d.delta))
    assert count == pytest.approx(len(covers_of(d)), rel=1e-9)


def test_log_det_scaling():
    d, system, _ = straight(6, 4)
    scaled = KasteleynSystem(d, 3.0 * system.K)
    assert partition_function_log(scaled) == pytest.approx(
        system.log_abs_det + len(d.whites) * math.log(3.0), rel=1e-12)


def test_coupling_phases():
    d, _, table = straight(8, 4)
    for w in d.whites:
        for b in d.blacks:
            v = coupling(table, w, b)
            if abs(v) < 1e-14:
                continue
            tw, tb = vertex_type(*w), vertex_type(*b)
            rot = v / (tw.eta * tb.eta)
            assert abs(rot.imag) < 1e-12 * max(1, abs(v))
            if tw.subtype == 0 and tb.subtype == 0:
                assert abs(v.imag) < 1e-12
            if tw.subtype == 0 and tb.subtype == 1:
                assert abs(v.real) < 1e-12


def test_edge_probabilities_sum_to_one():
    d, system, table = straight(8, 4, 5)
    for w in d.whites:
        probs = [edge_probability(system, table, b, w) for b, _ in d.neighbors(w)]
        assert all(-1e-12 <= p <= 1 + 1e-12 for p in probs)
        assert sum(probs) == pytest.approx(1, abs=1e-12)


def test_cr_residual_and_defect():
    d, _, table = straight(16, 8, 5)
    for w in [d.whites[0], d.whites[37], d.whites[-1]]:
        assert discrete_cr_residual(table, w) < 1e-10
        assert abs(cr_defect_at(table, w)) > 1


def test_cr_holds_next_to_bottom_boundary():
    d, _, table = straight(16, 8)
    for w in d.whites[:5]:
        F = F_values(table, w)
        # the zero extension to bottom boundary blacks is what the CR residual uses
        for b in d.boundary_bottom:
            if is_black(b) and vertex_type(*b).subtype == 0:
                assert _F_at(table, F, b) == 0
        assert discrete_cr_residual(table, w) < 1e-10


def test_top_boundary_imaginary_part_vanishes():
    d, _, table = straight(16, 8)
    w = (5, 4)
    base = (d.cut_column + 1, d.top[0])
    base = base if not is_black(base) and vertex_type(*base).subtype == 0 else (base[0] + 1, base[1])
    prim = normalize_on_top(primitive_Gw(table, w, base), d)
    tops = [v for v in prim.values if v[1] == d.top[v[0] % d.width]]
    assert len(tops) >= 4
    assert max(abs(prim.values[v].imag) for v in tops) < 1e-10


def test_monodromy_around_w0():
    d, _, table = straight(16, 8)
    w = (5, 4)
    assert vertex_type(*w).name == "W0"
    loop = [(6, 3), (6, 5), (4, 5), (4, 3)]
    assert loop_increment(table, w, loop).real == pytest.approx(2.0, abs=1e-10)
    # a loop not enclosing w closes
    far = [(10, 3), (10, 5), (8, 5), (8, 3)]
    assert abs(loop_increment(table, w, far)) < 1e-12


def test_primitive_rejects_winding_patch():
    d, _, table = straight(16, 8)
    with pytest.raises(DomainError):
        primitive_Gw(table, (5, 4), (1, 0), columns=(0, 16))


def test_seam_invariance_of_products():
    a = straight(8, 4, 0)
    b = straight(8, 4, 5)
    d = a[0]
    for (b1, w1), (b2, w2) in [(((0, 0), (3, 2)), ((6, 2), (1, 2))), (((2, 2), (7, 0)), ((4, 0), (5, 2)))]:
        pa = coupling(a[2], w1, b2) * coupling(a[2], w2, b1)
        pb = coupling(b[2], w1, b2) * coupling(b[2], w2, b1)
        assert pa == pytest.approx(pb, abs=1e-12)
    for bb, ww in d.edges:
        assert edge_probability(a[1], a[2], bb, ww) == pytest.approx(
            edge_probability(b[1], b[2], bb, ww), abs=1e-12)


def test_components_reconstruct(rng):
    vals = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    ew, eb = [1.0, -1.0], [-1.0, 1.0]
    comp = hadamard_components(vals, ew, eb)
    for i in range(2):
        for j in range(2):
            assert comp.reconstruct(ew[i], eb[j]) == pytest.approx(vals[i, j], abs=1e-14)


def test_extract_components_swap_and_errors():
    _, _, table = straight(16, 8)
    whites, blacks = [(3, 2), (4, 3)], [(9, 5), (10, 4)]
    a = extract_components(table, whites, blacks)
    b = extract_components(table, whites[::-1], blacks)
    assert a.F_pp == pytest.approx(b.F_pp) and a.F_pm == pytest.approx(b.F_pm)
    # the white values enter F^[-.] with weight eta_w^2, so their sum is order-free
    assert a.F_mp == pytest.approx(b.F_mp) and a.F_mm == pytest.approx(b.F_mm)
    vals = np.array([[coupling(table, w, bb) for bb in blacks] for w in whites])
    # (3, 2) is W0 and (9, 5) is B0; (4, 3) is W1 and (10, 4) is B1
    assert a.reconstruct(1, 1) == pytest.approx(vals[0, 0])
    assert a.reconstruct(-1, -1) == pytest.approx(vals[1, 1])
    assert a.reconstruct(1, -1) == pytest.approx(vals[0, 1])
    with pytest.raises(DomainError):
        extract_components(table, [(3, 2), (4, 3)], [(4, 2), (5, 3)])
    with pytest.raises(DomainError):
        extract_components(table, [(3, 2), (5, 2)], blacks)


def test_swapping_white_types_flips_minus_components():
    _, _, table = straight(16, 8)
    whites, blacks = [(3, 2), (4, 3)], [(9, 5), (10, 4)]
    vals = np.array([[coupling(table, w, b) for b in blacks] for w in whites])
    a = hadamard_components(vals, [1.0, -1.0], [-1.0, 1.0])
    b = hadamard_components(vals, [-1.0, 1.0], [-1.0, 1.0])
    assert b.F_mp == pytest.approx(-a.F_mp) and b.F_mm == pytest.approx(-a.F_mm)
    assert b.F_pp == pytest.approx(a.F_pp)


def test_export_roundtrip(tmp_path):
    d, _, table = straight(6, 4, 1)
    p = tmp_path / "table.csv"
    export_table(table, p)
    meta, K = read_table(p)
    assert meta["domain_hash"] == d.hash and int(meta["cut_column"]) == 1
    assert float(meta["delta"]) == d.delta
    assert np.array_equal(K, table.Kinv)
