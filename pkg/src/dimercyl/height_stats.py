"""Height functions, exact determinantal moments and Monte Carlo estimators."""
from __future__ import annotations

import itertools
import json
import math
from collections import Counter, deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .kasteleyn import CouplingTable, KasteleynSystem
from .lattice import BOTTOM, TOP, CylinderDomain, DualPath, dual_path, reference_cover
from .sampling import DimerCover


@dataclass
class HeightField:
    values: dict
    reference: DimerCover

    def __getitem__(self, face):
        return self.values[face]


def _indicator(domain: CylinderDomain, match: np.ndarray, k: int) -> int:
    b, w = domain.edges[k]
    return int(match[domain.white_index[w]] == domain.black_index[b])


def height_from_cover(cover: DimerCover, reference: DimerCover, domain: CylinderDomain) -> HeightField:
    """Integer height on every face, zero on the bottom face; every dual edge
    is re-checked after the breadth-first construction."""
    inc = {}
    for k in range(len(domain.edges)):
        inc[k] = _indicator(domain, cover.match, k) - _indicator(domain, reference.match, k)
    h = {BOTTOM: 0}
    q = deque([BOTTOM])
    adj = domain.dual_adjacency
    while q:
        f = q.popleft()
        for g, k, s in adj[f]:
            if g not in h:
                h[g] = h[f] + s * inc[k]
                q.append(g)
    for k, (fm, fp, s) in enumerate(domain.dual_edges):
        if h[fp] - h[fm] != s * inc[k]:
            raise DomainError(f"height not well defined across edge {domain.edges[k]}")
    return HeightField(h, reference)


def top_height(cover: DimerCover, reference: DimerCover, domain: CylinderDomain) -> int:
    p = dual_path(domain, TOP)
    return int(sum(s * (_indicator(domain, cover.match, k) - _indicator(domain, reference.match, k))
                   for k, s in zip(p.edges, p.signs)))


def heights_along(domain: CylinderDomain, matches: np.ndarray, paths, reference: DimerCover | None = None):
    """Heights at the end faces of ``paths`` for a batch of covers: (S, len(paths))."""
    if reference is None:
        reference = DimerCover.from_matching(domain, reference_cover(domain))
    matches = np.atleast_2d(matches)
    out = np.zeros((matches.shape[0], len(paths)), dtype=np.int64)
    for j, p in enumerate(paths):
        for k, s in zip(p.edges, p.signs):
            b, w = domain.edges[k]
            wi, bi = domain.white_index[w], domain.black_index[b]
            d = (matches[:, wi] == bi).astype(np.int64) - int(reference.match[wi] == bi)
            out[:, j] += s * d
    return out


# ---------------------------------------------------------------- exact moments

def coupling_matrix(system: KasteleynSystem, table: CouplingTable, edge_ids) -> np.ndarray:
    """A[j, k] = K^{-1}(w_j, b_k) K(b_k, w_k) for domain edges ``edge_ids``."""
    d = system.domain
    bs = [d.black_index[d.edges[k][0]] for k in edge_ids]
    ws = [d.white_index[d.edges[k][1]] for k in edge_ids]
    kv = system.K[bs, ws]
    return table.Kinv[np.ix_(ws, bs)] * kv[None, :]


def edge_covariance(system: KasteleynSystem, table: CouplingTable, edge_ids) -> np.ndarray:
    """Cov(1_e, 1_e') for a list of distinct edges."""
    A = coupling_matrix(system, table, edge_ids)
    p = np.diag(A).real
    C = -(A * A.T).real
    np.fill_diagonal(C, p * (1 - p))
    return C


def centered_product(A: np.ndarray, idx) -> float:
    """E[prod_k (1_{e_k} - p_k)] for a tuple of edge positions (repeats allowed)."""
    cnt = Counter(idx)
    es = list(cnt)
    p = np.diag(A).real
    # reduce X^k = alpha X + beta with X = 1_e - p
    coef = []
    for e in es:
        k, pe = cnt[e], p[e]
        alpha = (1 - pe) ** k - (-pe) ** k
        beta = (-pe) ** k + alpha * pe
        coef.append((alpha, beta))
    total = 0.0
    for mask in itertools.product((0, 1), repeat=len(es)):
        sub = [e for e, m in zip(es, mask) if m]
        c = 1.0
        for (a, b), m in zip(coef, mask):
            c *= a if m else b
        if sub:
            B = A[np.ix_(sub, sub)].copy()
            np.fill_diagonal(B, 0)
            c *= np.linalg.det(B).real
        total += c
    return float(total)


def _path_for(domain: CylinderDomain, path):
    return dual_path(domain, TOP) if path is None else path


def exact_moment(system: KasteleynSystem, table: CouplingTable, n: int,
                 domain: CylinderDomain | None = None, path: DualPath | None = None,
                 method: str = "closed") -> float:
    """n-th centred moment (n = 2, 3) of the top-face height.

    ``method='tuples'`` sums every n-tuple of path edges explicitly;
    ``'closed'`` uses trace formulas for the same sums.
    """
    domain = domain or system.domain
    if n not in (2, 3):
        raise ValueError("exact moments are available for n = 2, 3 only")
    p_ = _path_for(domain, path)
    ids = list(p_.edges)
    if len(set(ids)) != len(ids):
        raise DomainError("dual path repeats an edge")
    s = np.array(p_.signs, dtype=float)
    A = coupling_matrix(system, table, ids)
    if method == "tuples":
        return float(sum(np.prod(s[list(t)]) * centered_product(A, t)
                         for t in itertools.product(range(len(ids)), repeat=n)))
    p = np.diag(A).real
    A0 = A - np.diag(np.diag(A))
    PP = (A0 * A0.T).real            # A_jk A_kj
    if n == 2:
        return float(np.sum(p * (1 - p)) - s @ PP @ s)
    DA = s[:, None] * A0
    distinct = 2 * np.trace(DA @ DA @ DA).real
    pair = -3 * np.sum((1 - 2 * p)[:, None] * PP * s[None, :])
    single = np.sum(s * p * (1 - p) * (1 - 2 * p))
    return float(distinct + pair + single)


def exact_H2(system: KasteleynSystem, table: CouplingTable, v1, v2,
             domain: CylinderDomain | None = None) -> float:
    """E[hbar(v1) hbar(v2)] for dual vertices v1, v2 (paths from the bottom face)."""
    domain = domain or system.domain
    p1, p2 = dual_path(domain, v1), dual_path(domain, v2)
    ids = sorted(set(p1.edges) | set(p2.edges))
    pos = {k: i for i, k in enumerate(ids)}
    a = np.zeros(len(ids))
    b = np.zeros(len(ids))
    for k, s in zip(p1.edges, p1.signs):
        a[pos[k]] += s
    for k, s in zip(p2.edges, p2.signs):
        b[pos[k]] += s
    if not ids:
        return 0.0
    C = edge_covariance(system, table, ids)
    return float(a @ C @ b)


def exact_mean_height(system: KasteleynSystem, table: CouplingTable, face,
                      reference: DimerCover | None = None) -> float:
    d = system.domain
    if reference is None:
        reference = DimerCover.from_matching(d, reference_cover(d))
    p_ = dual_path(d, face)
    A = coupling_matrix(system, table, list(p_.edges))
    pr = np.diag(A).real
    ref = np.array([_indicator(d, reference.match, k) for k in p_.edges])
    return float(np.sum(np.array(p_.signs) * (pr - ref)))


# ---------------------------------------------------------------- Monte Carlo

def _jackknife(stat, data: np.ndarray, n_blocks: int = 100):
    n = data.shape[0]
    n_blocks = min(n_blocks, n)
    edges = np.linspace(0, n, n_blocks + 1).astype(int)
    full = stat(data)
    reps = []
    for i in range(n_blocks):
        keep = np.concatenate([data[:edges[i]], data[edges[i + 1]:]])
        reps.append(stat(keep))
    reps = np.array(reps)
    se = math.sqrt((n_blocks - 1) / n_blocks * np.sum((reps - reps.mean()) ** 2))
    return float(full), se


def _central(n):
    return lambda x: float(np.mean((x - x.mean()) ** n))


def empirical_H2(h1, h2, min_samples: int = 1000):
    """Sample covariance of two height series with a block-jackknife error."""
    h1 = np.asarray(h1, dtype=float)
    h2 = np.asarray(h2, dtype=float)
    if h1.shape != h2.shape or h1.ndim != 1:
        raise ValueError("height series must be 1-d and of equal length")
    if len(h1) < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {len(h1)}")
    data = np.stack([h1, h2], axis=1)

    def cov(x):
        return float(np.mean((x[:, 0] - x[:, 0].mean()) * (x[:, 1] - x[:, 1].mean())))
    return _jackknife(cov, data)


def mc_moments(heights, orders=(2, 3, 4)) -> dict:
    """Centred sample moments with block-jackknife standard errors."""
    h = np.asarray(heights, dtype=float)
    return {n: _jackknife(_central(n), h) for n in orders}


@dataclass
class MomentReport:
    domain_hash: str
    delta: float
    method: str
    M2: float | None = None
    M3: float | None = None
    M4: float | None = None
    se2: float | None = None
    se3: float | None = None
    se4: float | None = None
    n_samples: int = 0
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def exact_report(system: KasteleynSystem, table: CouplingTable) -> MomentReport:
    d = system.domain
    return MomentReport(d.hash, d.delta, "exact_determinantal",
                        M2=exact_moment(system, table, 2), M3=exact_moment(system, table, 3),
                        se2=0.0, se3=0.0)


def mc_report(domain: CylinderDomain, heights, seed: int) -> MomentReport:
    m = mc_moments(heights)
    return MomentReport(domain.hash, domain.delta, "monte_carlo",
                        M2=m[2][0], M3=m[3][0], M4=m[4][0], se2=m[2][1], se3=m[3][1],
                        se4=m[4][1], n_samples=len(heights), seed=seed)
