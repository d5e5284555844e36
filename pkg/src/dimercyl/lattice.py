"""Black-and-white Temperleyan cylinders on the square grid.

Coordinates: column ``c`` in ``0..W-1`` (periodic), integer row ``r``.  A
vertex is black iff ``c + r`` is even; its subtype is 1 iff ``c`` is even, so
even rows carry B1/W0 vertices and odd rows carry B0/W1 vertices.  Column ``c``
of a domain contains rows ``bottom[c] <= r < top[c]``; the vertices directly
below and above these ranges form the two boundary components and are not part
of the domain.

Dual vertices (faces) are the two strings ``BOTTOM`` and ``TOP`` for the outer
faces and ``(c, r)`` tuples for unit squares whose lower-left corner is
``(c, r)``.
"""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DomainError

BLACK, WHITE = "B", "W"
BOTTOM, TOP = "bottom", "top"


@dataclass(frozen=True)
class VertexType:
    color: str
    subtype: int

    @property
    def eta(self) -> complex:
        return 1j if self.subtype else 1.0 + 0j

    @property
    def name(self) -> str:
        return f"{self.color}{self.subtype}"


def vertex_type(col: int, row: int) -> VertexType:
    color = BLACK if (col + row) % 2 == 0 else WHITE
    return VertexType(color, 1 if col % 2 == 0 else 0)


def is_black(v) -> bool:
    return (v[0] + v[1]) % 2 == 0


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "valid" if self.ok else "\n".join(self.issues)


@dataclass(frozen=True)
class CylinderDomain:
    """Immutable cylinder graph given by per-column row ranges."""

    width: int
    bottom: tuple
    top: tuple
    cut_column: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bottom", tuple(int(x) for x in self.bottom))
        object.__setattr__(self, "top", tuple(int(x) for x in self.top))
        if len(self.bottom) != self.width or len(self.top) != self.width:
            raise DomainError("profile length must equal width")
        if not 0 <= self.cut_column < self.width:
            raise DomainError(f"cut_column {self.cut_column} outside [0, {self.width})")

    # -- basic geometry
    @property
    def delta(self) -> float:
        return 1.0 / self.width

    @property
    def is_straight(self) -> bool:
        return len(set(self.bottom)) == 1 and len(set(self.top)) == 1

    @property
    def height(self) -> int:
        if not self.is_straight:
            raise DomainError("height is only defined for straight cylinders")
        return self.top[0] - self.bottom[0]

    def contains(self, c: int, r: int) -> bool:
        c %= self.width
        return self.bottom[c] <= r < self.top[c]

    @cached_property
    def vertices(self) -> list:
        return [(c, r) for c in range(self.width) for r in range(self.bottom[c], self.top[c])]

    @cached_property
    def blacks(self) -> list:
        return [v for v in self.vertices if is_black(v)]

    @cached_property
    def whites(self) -> list:
        return [v for v in self.vertices if not is_black(v)]

    @cached_property
    def black_index(self) -> dict:
        return {v: i for i, v in enumerate(self.blacks)}

    @cached_property
    def white_index(self) -> dict:
        return {v: i for i, v in enumerate(self.whites)}

    def vtype(self, v) -> VertexType:
        return vertex_type(*v)

    def neighbors(self, v) -> list:
        """In-domain neighbours as (vertex, direction) with direction in
        {'right', 'up', 'left', 'down'}."""
        c, r = v
        out = []
        for dc, dr, name in ((1, 0, "right"), (0, 1, "up"), (-1, 0, "left"), (0, -1, "down")):
            cc, rr = (c + dc) % self.width, r + dr
            if self.contains(cc, rr):
                out.append(((cc, rr), name))
        return out

    @cached_property
    def boundary_bottom(self) -> list:
        out = set()
        for c, r in self.vertices:
            for dc, dr in ((1, 0), (-1, 0), (0, -1)):
                cc, rr = (c + dc) % self.width, r + dr
                if rr < self.bottom[cc]:
                    out.add((cc, rr))
        return sorted(out)

    @cached_property
    def boundary_top(self) -> list:
        out = set()
        for c, r in self.vertices:
            for dc, dr in ((1, 0), (-1, 0), (0, 1)):
                cc, rr = (c + dc) % self.width, r + dr
                if rr >= self.top[cc]:
                    out.add((cc, rr))
        return sorted(out)

    def position(self, v) -> complex:
        """Continuum location of a vertex; the bottom boundary row sits at height 0."""
        return complex(v[0] * self.delta, (v[1] - min(self.bottom) + 1) * self.delta)

    def face_center(self, f) -> complex:
        if f in (BOTTOM, TOP):
            raise DomainError("outer faces have no centre")
        return self.position(f) + complex(0.5, 0.5) * self.delta

    @cached_property
    def continuum_height(self) -> float:
        """Distance between the two boundary rows of a straight cylinder."""
        return (self.height + 1) * self.delta

    # -- edges and dual graph
    @cached_property
    def edges(self) -> list:
        """Primal edges (b, w) of the domain, ordered by white vertex."""
        out = []
        for w in self.whites:
            for b, _ in self.neighbors(w):
                out.append((b, w))
        return out

    @cached_property
    def edge_index(self) -> dict:
        return {e: i for i, e in enumerate(self.edges)}

    def _square(self, c, r):
        c %= self.width
        if all(self.contains(c + dc, r + dr) for dc in (0, 1) for dr in (0, 1)):
            return (c, r)
        return None

    @cached_property
    def faces(self) -> list:
        sq = [(c, r) for c, r in self.vertices if self._square(c, r) is not None]
        return [BOTTOM, TOP] + sq

    @cached_property
    def dual_edges(self) -> list:
        """Per primal edge: (minus face, plus face, sign) where travelling from the
        minus to the plus face keeps b on the right iff sign = +1."""
        out = []
        W = self.width
        for b, w in self.edges:
            if b[1] == w[1]:
                # horizontal edge, left endpoint (c1, r1); minus = below, plus = above
                left = b if (b[0] - w[0]) % W == W - 1 else w
                c, r = left
                below = self._square(c, r - 1) or BOTTOM
                above = self._square(c, r) or TOP
                sign = 1 if b != left else -1   # upward travel: right side is the right endpoint
                out.append((below, above, sign))
            else:
                lower = b if b[1] < w[1] else w
                c, r = lower
                sl = self._square(c - 1, r)
                sr = self._square(c, r)
                lface = sl if sl is not None else (BOTTOM if r < self.bottom[(c - 1) % W] else TOP)
                rface = sr if sr is not None else (BOTTOM if r < self.bottom[(c + 1) % W] else TOP)
                sign = 1 if b == lower else -1  # rightward travel: right side is below
                out.append((lface, rface, sign))
        return out

    @cached_property
    def dual_adjacency(self) -> dict:
        adj = {f: [] for f in self.faces}
        for k, (fm, fp, s) in enumerate(self.dual_edges):
            if fm == fp:
                continue
            adj[fm].append((fp, k, s))
            adj[fp].append((fm, k, -s))
        return adj

    def is_horizontal(self, e) -> bool:
        b, w = e
        return b[1] == w[1]

    def crosses_seam(self, e) -> bool:
        b, w = e
        if b[1] != w[1]:
            return False
        k = self.cut_column
        return {b[0], w[0]} == {(k - 1) % self.width, k}

    @cached_property
    def hash(self) -> str:
        s = f"{self.width}|{self.bottom}|{self.top}|{self.cut_column}"
        return hashlib.sha256(s.encode()).hexdigest()[:16]

    def with_cut(self, cut_column: int) -> "CylinderDomain":
        return CylinderDomain(self.width, self.bottom, self.top, cut_column)

    def rotated(self, shift: int = 1) -> "CylinderDomain":
        b = self.bottom[-shift:] + self.bottom[:-shift]
        t = self.top[-shift:] + self.top[:-shift]
        return CylinderDomain(self.width, b, t, (self.cut_column + shift) % self.width)


# ---------------------------------------------------------------- builders

def validate_temperleyan(domain: CylinderDomain) -> ValidationReport:
    """Collect every violated parity, corner, overlap or count rule."""
    rep = ValidationReport()
    W = domain.width
    if W % 2 or W < 4:
        rep.issues.append(f"width {W} must be even and at least 4")
    for c in range(W):
        b, t = domain.bottom[c], domain.top[c]
        if b >= t:
            rep.issues.append(f"column {c}: bottom {b} not below top {t}")
        if b % 2:
            rep.issues.append(f"column {c}: odd bottom row {b} puts a B0/W1 row against the "
                              f"bottom boundary (B1 corner rule)")
        if t % 2:
            rep.issues.append(f"column {c}: odd top row {t} puts a B1/W0 row against the "
                              f"top boundary (W1 corner rule)")
    for c in range(W):
        n = (c + 1) % W
        b0, b1, t0, t1 = domain.bottom[c], domain.bottom[n], domain.top[c], domain.top[n]
        if min(t0, t1) - max(b0, b1) < 2:
            rep.issues.append(f"columns {c},{n}: overlap shorter than two rows")
        # convex corners along the bottom must be B1
        if b0 != b1:
            corner = (c, b0) if b0 < b1 else (n, b1)
            vt = vertex_type(*corner)
            if vt.name != "B1":
                rep.issues.append(f"column {corner[0]}: bottom corner {corner} is {vt.name}, expected B1")
        if t0 != t1:
            corner = (c, t0 - 1) if t0 > t1 else (n, t1 - 1)
            vt = vertex_type(*corner)
            if vt.name != "W1":
                rep.issues.append(f"column {corner[0]}: top corner {corner} is {vt.name}, expected W1")
    nb, nw = len(domain.blacks), len(domain.whites)
    if nb != nw:
        rep.issues.append(f"count: {nb} black vs {nw} white vertices")
    return rep


def _check(domain: CylinderDomain) -> CylinderDomain:
    rep = validate_temperleyan(domain)
    if not rep.ok:
        raise DomainError("; ".join(rep.issues))
    return domain


def build_straight_cylinder(width: int, height: int, cut_column: int = 0) -> CylinderDomain:
    if width % 2 or width < 4:
        raise DomainError(f"width must be even and >= 4, got {width}")
    if height % 2 or height < 2:
        raise DomainError(f"height must be even and >= 2, got {height}")
    return _check(CylinderDomain(width, (0,) * width, (height,) * width, cut_column))


def build_staircase_cylinder(width: int, bottom_profile: Sequence[int],
                             top_profile: Sequence[int], cut_column: int = 0) -> CylinderDomain:
    return _check(CylinderDomain(width, tuple(bottom_profile), tuple(top_profile), cut_column))


# ---------------------------------------------------------------- covers

def is_perfect_matching(domain: CylinderDomain, matching: dict) -> bool:
    """matching: white vertex -> black vertex."""
    if set(matching) != set(domain.whites):
        return False
    if sorted(matching.values()) != sorted(domain.blacks):
        return False
    eidx = domain.edge_index
    return all((b, w) in eidx for w, b in matching.items())


def reference_cover(domain: CylinderDomain) -> dict:
    """Deterministic perfect matching (white -> black) used as D0."""
    if domain.is_straight and domain.height % 2 == 0:
        out = {}
        for c in range(domain.width):
            for r in range(domain.bottom[c], domain.top[c], 2):
                lo, hi = (c, r), (c, r + 1)
                if is_black(lo):
                    out[hi] = lo
                else:
                    out[lo] = hi
        return out
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_bipartite_matching

    nb, nw = len(domain.blacks), len(domain.whites)
    if nb != nw:
        raise DomainError("no perfect matching: colour classes differ in size")
    rows, cols = [], []
    for b, w in sorted(domain.edges, key=lambda e: (domain.white_index[e[1]], domain.black_index[e[0]])):
        rows.append(domain.white_index[w])
        cols.append(domain.black_index[b])
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nw, nb))
    m = maximum_bipartite_matching(g, perm_type="column")
    if np.any(m < 0):
        raise DomainError("domain admits no perfect matching")
    return {domain.whites[i]: domain.blacks[j] for i, j in enumerate(m)}


# ---------------------------------------------------------------- dual paths

@dataclass(frozen=True)
class DualPath:
    faces: tuple
    edges: tuple   # edge indices into domain.edges
    signs: tuple

    def __len__(self):
        return len(self.edges)

    def reversed(self) -> "DualPath":
        return DualPath(self.faces[::-1], self.edges[::-1], tuple(-s for s in self.signs[::-1]))


def dual_path(domain: CylinderDomain, target, start=BOTTOM, column: int | None = None) -> DualPath:
    """Shortest dual path from ``start`` to ``target`` preferring vertical steps.

    Ties between equally short paths are broken towards vertical moves and,
    when ``column`` is given, towards crossings in that column strip.
    """
    if target not in domain.dual_adjacency:
        raise DomainError(f"unknown dual vertex {target}")
    if target == start:
        return DualPath((start,), (), ())
    if column is None:
        column = target[0] if isinstance(target, tuple) else (
            start[0] if isinstance(start, tuple) else domain.cut_column)
    W = domain.width
    edges = domain.edges

    def key(item):
        f, k, _ = item
        b, w = edges[k]
        vertical_step = b[1] == w[1]
        strip = min(b[0], w[0]) if abs(b[0] - w[0]) == 1 else max(b[0], w[0])
        return (not vertical_step, min((strip - column) % W, (column - strip) % W), k)

    # breadth-first search backwards from the target
    parent = {target: None}
    queue = deque([target])
    while queue:
        f = queue.popleft()
        if f == start:
            break
        for g, k, s in sorted(domain.dual_adjacency[f], key=key):
            if g not in parent:
                parent[g] = (f, k, -s)
                queue.append(g)
    if start not in parent:
        raise DomainError(f"{target} unreachable from {start}")
    faces, eds, sg = [start], [], []
    f = start
    while f != target:
        g, k, s = parent[f]
        faces.append(g)
        eds.append(k)
        sg.append(s)
        f = g
    return DualPath(tuple(faces), tuple(eds), tuple(sg))


def disjoint_paths(domain: CylinderDomain, targets: Sequence) -> list:
    """One path per target from the bottom face; raises if any two share a
    dual vertex other than the bottom face."""
    paths = [dual_path(domain, t) for t in targets]
    seen = {}
    for i, p in enumerate(paths):
        for f in p.faces[1:]:
            if f in seen and seen[f] != i:
                raise DomainError(f"paths {seen[f]} and {i} meet at {f}")
            seen[f] = i
    return paths


# ---------------------------------------------------------------- domain files

def parse_domain_text(text: str, check: bool = True) -> CylinderDomain:
    """Parse the ``key = value`` domain description format (see README).

    With ``check=False`` the Temperleyan rules are not enforced, so that
    :func:`validate_temperleyan` can report every violation.
    """
    vals = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        vals[k] = v
    unknown = set(vals) - {"width", "height", "bottom_profile", "top_profile", "cut_column"}
    if unknown:
        raise DomainError(f"unknown keys: {sorted(unknown)}")
    try:
        width = int(vals["width"])
        cut = int(vals.get("cut_column", 0))
        if "height" in vals:
            if "bottom_profile" in vals or "top_profile" in vals:
                raise DomainError("give either height or profiles, not both")
            h = int(vals["height"])
            if not check:
                return CylinderDomain(width, (0,) * width, (h,) * width, cut)
            return build_straight_cylinder(width, h, cut)
        bottom = [int(x) for x in vals["bottom_profile"].split(",")]
        top = [int(x) for x in vals["top_profile"].split(",")]
    except KeyError as exc:
        raise DomainError(f"missing key {exc}") from None
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"malformed integer: {exc}") from None
    if not check:
        return CylinderDomain(width, tuple(bottom), tuple(top), cut)
    return build_staircase_cylinder(width, bottom, top, cut)


def domain_to_text(domain: CylinderDomain) -> str:
    lines = [f"width = {domain.width}"]
    if domain.is_straight and domain.bottom[0] == 0:
        lines.append(f"height = {domain.height}")
    else:
        lines.append("bottom_profile = " + ",".join(map(str, domain.bottom)))
        lines.append("top_profile = " + ",".join(map(str, domain.top)))
    lines.append(f"cut_column = {domain.cut_column}")
    return "\n".join(lines) + "\n"
