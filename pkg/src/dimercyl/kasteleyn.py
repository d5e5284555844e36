"""Kasteleyn matrix, coupling table and discrete complex-analysis diagnostics.

K is indexed (black, white) and K^{-1} is indexed (white, black).  Around each
white vertex the weights are delta, i*delta, -delta, -i*delta for a black
neighbour below, right, above and left respectively; horizontal edges between
columns ``cut_column - 1`` and ``cut_column`` carry an extra factor -1.

Functions on the double cover are stored on the fundamental domain.  A value
queried at an unwrapped column x picks up the sheet sign
(-1)^floor((x - cut_column)/W).
"""
from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import DomainError, NumericalError
from .lattice import TOP, CylinderDomain, is_black, validate_temperleyan, vertex_type

_DIRECTIONS = {"down": 1.0 + 0j, "right": 1j, "up": -1.0 + 0j, "left": -1j}
_CLOCKWISE = ("up", "right", "down", "left")
_STEP = {"right": (1, 0), "up": (0, 1), "left": (-1, 0), "down": (0, -1)}


def _direction(domain: CylinderDomain, frm, to) -> str:
    """Direction of ``to`` as seen from ``frm`` (neighbours only)."""
    W = domain.width
    dc = (to[0] - frm[0]) % W
    dr = to[1] - frm[1]
    if dr == 1:
        return "up"
    if dr == -1:
        return "down"
    return "right" if dc == 1 else "left"


def kasteleyn_weight(domain: CylinderDomain, b, w) -> complex:
    """K(b, w) for an edge of the domain, including the seam sign."""
    val = _DIRECTIONS[_direction(domain, w, b)] * domain.delta
    if domain.crosses_seam((b, w)):
        val = -val
    return val


def sheet_sign(domain: CylinderDomain, col: int) -> int:
    """Sign picked up by a function value at unwrapped column ``col``."""
    return -1 if ((col - domain.cut_column) // domain.width) % 2 else 1


@dataclass(frozen=True)
class KasteleynSystem:
    domain: CylinderDomain
    K: np.ndarray

    @cached_property
    def cut_flags(self) -> np.ndarray:
        return np.array([self.domain.crosses_seam(e) for e in self.domain.edges])

    @cached_property
    def lu(self):
        # singularity is reported by partition_function_log, not as a warning
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            return sla.lu_factor(self.K, check_finite=False)

    @cached_property
    def log_abs_det(self) -> float:
        return partition_function_log(self)

    def weight(self, b, w) -> complex:
        d = self.domain
        return complex(self.K[d.black_index[b], d.white_index[w]])

    @property
    def size(self) -> int:
        return self.K.shape[0]


def _face_walk(domain: CylinderDomain, u, v, limit: int):
    """Walk the face lying to the left of the directed edge u -> v."""
    walk = [u]
    start = (u, v)
    for _ in range(limit):
        walk.append(v)
        back = _direction(domain, v, u)
        nbrs = {name: x for x, name in domain.neighbors(v)}
        i = _CLOCKWISE.index(back)
        for k in range(1, 5):
            name = _CLOCKWISE[(i + k) % 4]
            if name in nbrs:
                u, v = v, nbrs[name]
                break
        if (u, v) == start:
            return walk[:-1]
    raise DomainError("face walk did not close")


def _alternating_product(domain: CylinderDomain, cycle) -> complex:
    prod = 1.0 + 0j
    n = len(cycle)
    for i in range(n):
        a, b = cycle[i], cycle[(i + 1) % n]
        bl, wh = (a, b) if is_black(a) else (b, a)
        k = kasteleyn_weight(domain, bl, wh) / domain.delta
        prod = prod * k if i % 2 == 0 else prod / k
    return prod


def face_products(domain: CylinderDomain) -> dict:
    """Alternating weight products around all square faces and the top face,
    divided by the Kasteleyn target (-1)^(k+1) for a face of degree 2k.
    A correct weighting gives 1 everywhere."""
    out = {}
    W = domain.width
    for f in domain.faces[2:]:
        c, r = f
        cyc = [(c, r), ((c + 1) % W, r), ((c + 1) % W, r + 1), (c, r + 1)]
        out[f] = _alternating_product(domain, cyc) / -1
    # top face: start on a dual edge whose plus or minus side is TOP
    for k, (fm, fp, _) in enumerate(domain.dual_edges):
        if TOP not in (fm, fp) or fm == fp:
            continue
        b, w = domain.edges[k]
        horizontal = b[1] == w[1]
        if horizontal:
            left = b if (w[0] - b[0]) % W == 1 else w
            right = w if left is b else b
            u, v = (left, right) if fp == TOP else (right, left)
        else:
            lower, upper = (b, w) if b[1] < w[1] else (w, b)
            u, v = (upper, lower) if fp == TOP else (lower, upper)
        cyc = _face_walk(domain, u, v, 4 * len(domain.vertices))
        kk = len(cyc) // 2
        out[TOP] = _alternating_product(domain, cyc) / (-1) ** (kk + 1)
        break
    return out


def assemble(domain: CylinderDomain, check_faces: bool = True) -> KasteleynSystem:
    rep = validate_temperleyan(domain)
    if not rep.ok:
        raise DomainError(f"invalid domain: {rep}")
    nb, nw = len(domain.blacks), len(domain.whites)
    K = np.zeros((nb, nw), dtype=complex)
    bi, wi = domain.black_index, domain.white_index
    for b, w in domain.edges:
        K[bi[b], wi[w]] = kasteleyn_weight(domain, b, w)
    if check_faces:
        for f, val in face_products(domain).items():
            if abs(val - 1) > 1e-12:
                raise DomainError(f"Kasteleyn condition fails at face {f} (ratio {val})")
    return KasteleynSystem(domain, K)


def partition_function_log(system: KasteleynSystem) -> float:
    """log |det K|; -inf when K is singular (no dimer cover)."""
    lu, _ = system.lu
    d = np.abs(np.diag(lu))
    if np.any(d == 0) or np.min(d) < 1e-14 * max(np.max(d), 1e-300):
        return -math.inf
    return float(np.sum(np.log(d)))


@dataclass(frozen=True)
class CouplingTable:
    domain: CylinderDomain
    Kinv: np.ndarray      # (white, black)
    residual: float

    @property
    def cut_column(self) -> int:
        return self.domain.cut_column

    def __call__(self, w, b) -> complex:
        return coupling(self, w, b)


def invert(system: KasteleynSystem, tol: float = 1e-10) -> CouplingTable:
    if system.K.shape[0] != system.K.shape[1]:
        raise NumericalError("Kasteleyn matrix is not square")
    if partition_function_log(system) == -math.inf:
        raise NumericalError("Kasteleyn matrix is singular: no dimer cover")
    Kinv = sla.lu_solve(system.lu, np.eye(system.size, dtype=complex))
    res = float(np.max(np.abs(system.K @ Kinv - np.eye(system.size))))
    if not res < tol * max(1.0, system.size / 100):
        raise NumericalError(f"inverse residual {res:.2e} above tolerance")
    return CouplingTable(system.domain, Kinv, res)


def coupling(table: CouplingTable, w, b) -> complex:
    """K^{-1}(w, b).  Columns outside [0, W) are read on the double cover."""
    d = table.domain
    W = d.width
    wf, bf = (w[0] % W, w[1]), (b[0] % W, b[1])
    s = sheet_sign(d, w[0]) * sheet_sign(d, b[0])
    return s * complex(table.Kinv[d.white_index[wf], d.black_index[bf]])


def stored_coupling(table: CouplingTable, w, b) -> complex:
    """K^{-1}(w, b) as stored, i.e. paired with the seam-signed K."""
    d = table.domain
    W = d.width
    return complex(table.Kinv[d.white_index[(w[0] % W, w[1])], d.black_index[(b[0] % W, b[1])]])


def edge_probability(system: KasteleynSystem, table: CouplingTable, b, w) -> float:
    return float((system.weight(b, w) * stored_coupling(table, w, b)).real)


# --------------------------------------------------------- discrete holomorphicity

def F_values(table: CouplingTable, w) -> dict:
    """F_w(b) = conj(eta_w) K^{-1}(w, b) on domain blacks (fundamental domain)."""
    d = table.domain
    eta = np.conj(vertex_type(*w).eta)
    row = table.Kinv[d.white_index[(w[0] % d.width, w[1])]]
    return {b: eta * row[i] for i, b in enumerate(d.blacks)}


def _F_at(table: CouplingTable, F: dict, b) -> complex:
    """F on the double cover; zero on boundary and exterior blacks."""
    d = table.domain
    bf = (b[0] % d.width, b[1])
    if bf not in F:
        return 0j
    return sheet_sign(d, b[0]) * F[bf]


def discrete_cr_residual(table: CouplingTable, w) -> float:
    """max over whites u != w of |F(u#) - F(u_b) - i (F(u+) - F(u-))|."""
    d = table.domain
    F = F_values(table, w)
    worst = 0.0
    wf = (w[0] % d.width, w[1])
    for u in d.whites:
        if u == wf:
            continue
        c, r = u
        # neighbours read on the sheet of u
        s = sheet_sign(d, c)
        up, dn = _F_at(table, F, (c, r + 1)), _F_at(table, F, (c, r - 1))
        rt, lt = _F_at(table, F, (c + 1, r)), _F_at(table, F, (c - 1, r))
        val = s * (up - dn - 1j * (rt - lt))
        worst = max(worst, abs(val))
    return worst


def cr_defect_at(table: CouplingTable, w) -> complex:
    """The CR expression evaluated at u = w itself (non-zero: the singularity)."""
    F = F_values(table, w)
    c, r = w
    return (_F_at(table, F, (c, r + 1)) - _F_at(table, F, (c, r - 1))
            - 1j * (_F_at(table, F, (c + 1, r)) - _F_at(table, F, (c - 1, r))))


def _white_nodes(domain: CylinderDomain, subtype: int, c0: int, c1: int):
    nodes = set()
    W = domain.width
    for c in range(c0, c1 + 1):
        cf = c % W
        for r in range(domain.bottom[cf] - 1, domain.top[cf] + 1):
            if not is_black((c, r)) and vertex_type(c, r).subtype == subtype:
                nodes.add((c, r))
    return nodes


def _increment(table, F, u, v) -> complex:
    """G(v) - G(u) for sublattice neighbours u, v (a step of length 2)."""
    d = table.domain
    mid = ((u[0] + v[0]) // 2, (u[1] + v[1]) // 2)
    if not d.contains(*mid):
        return None
    fb = _F_at(table, F, mid)
    dx, dy = v[0] - u[0], v[1] - u[1]
    if dy == 0:
        return 2 * d.delta * fb * np.sign(dx)
    return 2j * d.delta * fb * np.sign(dy)


@dataclass
class Primitive:
    values: dict          # unwrapped white -> complex
    residual: float       # worst path-independence defect
    subtype: int


def primitive_Gw(table: CouplingTable, w, base, columns: tuple | None = None,
                 tol: float = 1e-8) -> Primitive:
    """Discrete primitive of F_w on the white sublattice containing ``base``.

    The patch is the column range ``columns`` (unwrapped, inclusive), by default
    the cylinder cut open along the seam.  Raises if the increments are not
    exact on the patch (the patch winds around the cylinder or around w).
    """
    d = table.domain
    if columns is None:
        columns = (d.cut_column, d.cut_column + d.width - 1)
    c0, c1 = columns
    if c1 - c0 >= d.width:
        raise DomainError("patch winds around the cylinder")
    if not c0 <= base[0] <= c1:
        raise DomainError("base vertex outside patch")
    sub = vertex_type(*base).subtype
    nodes = _white_nodes(d, sub, c0, c1)
    if base not in nodes:
        raise DomainError(f"base {base} is not a white vertex of the closed domain")
    F = F_values(table, w)
    G = {base: 0j}
    q = deque([base])
    worst = 0.0
    while q:
        u = q.popleft()
        for dx, dy in ((2, 0), (0, 2), (-2, 0), (0, -2)):
            v = (u[0] + dx, u[1] + dy)
            if v not in nodes:
                continue
            inc = _increment(table, F, u, v)
            if inc is None:
                continue
            if v in G:
                worst = max(worst, abs(G[v] - G[u] - inc))
            else:
                G[v] = G[u] + inc
                q.append(v)
    if worst > tol:
        raise DomainError(f"patch is not simply connected for G_w (defect {worst:.3g})")
    return Primitive(G, worst, sub)


def normalize_on_top(prim: Primitive, domain: CylinderDomain) -> Primitive:
    """Shift the primitive so that Im G vanishes at the first top-boundary
    white of the patch."""
    tops = sorted(v for v in prim.values if v[1] == domain.top[v[0] % domain.width])
    if not tops:
        raise DomainError("patch contains no top boundary white")
    shift = 1j * prim.values[tops[0]].imag
    return Primitive({k: v - shift for k, v in prim.values.items()}, prim.residual, prim.subtype)


def loop_increment(table: CouplingTable, w, loop) -> complex:
    """Sum of primitive increments along a closed loop of same-subtype whites
    (unwrapped coordinates, consecutive entries two steps apart)."""
    F = F_values(table, w)
    tot = 0j
    for u, v in zip(loop, loop[1:] + loop[:1]):
        if abs(u[0] - v[0]) + abs(u[1] - v[1]) != 2 or (u[0] != v[0] and u[1] != v[1]):
            raise DomainError(f"{u} -> {v} is not a sublattice step")
        inc = _increment(table, F, u, v)
        tot += 0 if inc is None else inc
    return tot


# --------------------------------------------------------- component extraction

@dataclass(frozen=True)
class CouplingComponents:
    F_pp: complex
    F_mp: complex
    F_pm: complex
    F_mm: complex

    def reconstruct(self, ew: int, eb: int) -> complex:
        """K^{-1} for a white with eta_w^2 = ew and black with eta_b^2 = eb."""
        return 0.25 * (self.F_pp + ew * self.F_mp + eb * self.F_pm + ew * eb * self.F_mm)


def hadamard_components(values: np.ndarray, ew, eb) -> CouplingComponents:
    """values[i, j] = K^{-1}(w_i, b_j); ew, eb hold eta^2 of the two whites/blacks."""
    ew = np.asarray(ew, dtype=float)
    eb = np.asarray(eb, dtype=float)
    one = np.ones(2)
    comp = {}
    for name, sw, sb in (("F_pp", one, one), ("F_mp", ew, one), ("F_pm", one, eb), ("F_mm", ew, eb)):
        comp[name] = complex(sw @ values @ sb)
    return CouplingComponents(**comp)


def extract_components(table: CouplingTable, white_pair, black_pair) -> CouplingComponents:
    """Four components F^[s1 s2] from a (W0, W1) pair near z1 and a (B0, B1)
    pair near z2.  Vertices may be given in unwrapped coordinates."""
    d = table.domain
    wt = [vertex_type(*v) for v in white_pair]
    bt = [vertex_type(*v) for v in black_pair]
    if [t.color for t in wt] != ["W", "W"] or sorted(t.subtype for t in wt) != [0, 1]:
        raise DomainError("white pair must contain one W0 and one W1 vertex")
    if [t.color for t in bt] != ["B", "B"] or sorted(t.subtype for t in bt) != [0, 1]:
        raise DomainError("black pair must contain one B0 and one B1 vertex")
    W = d.width
    for w in white_pair:
        for b in black_pair:
            dc = (w[0] - b[0]) % W
            if (dc in (1, W - 1) and w[1] == b[1]) or (dc == 0 and abs(w[1] - b[1]) == 1):
                raise DomainError(f"white {w} and black {b} are adjacent")
    vals = np.array([[coupling(table, w, b) for b in black_pair] for w in white_pair])
    ew = [(t.eta ** 2).real for t in wt]
    eb = [(t.eta ** 2).real for t in bt]
    return hadamard_components(vals, ew, eb)


# --------------------------------------------------------- export

def export_table(table: CouplingTable, path) -> None:
    """CSV dump: commented header, then white_index,black_index,re,im rows."""
    d = table.domain
    n_w, n_b = table.Kinv.shape
    with open(path, "w") as fh:
        fh.write(f"# domain_hash={d.hash} delta={d.delta!r} cut_column={d.cut_column}\n")
        fh.write("white_index,black_index,re,im\n")
        for i in range(n_w):
            row = table.Kinv[i]
            for j in range(n_b):
                fh.write(f"{i},{j},{float(row[j].real)!r},{float(row[j].imag)!r}\n")


def read_table(path) -> tuple:
    """Inverse of export_table: (header dict, Kinv array)."""
    with open(path) as fh:
        head = fh.readline().lstrip("#").split()
        meta = dict(kv.split("=", 1) for kv in head)
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n_w = int(data[:, 0].max()) + 1
    n_b = int(data[:, 1].max()) + 1
    Kinv = np.zeros((n_w, n_b), dtype=complex)
    Kinv[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2] + 1j * data[:, 3]
    return meta, Kinv
