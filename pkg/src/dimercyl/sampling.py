"""Exact dimer sampling, edge probabilities and an enumeration oracle.

The sampler visits whites in column-major order.  At each step the matched
black is drawn from the conditional law p(b) = K(b, w) K^{-1}(w, b), and the
coupling table is conditioned with the rank-one Schur complement.  The table
is kept in the real gauge conj(eta_w eta_b) K^{-1}(w, b), and rank-one updates
are accumulated in blocks so that most of the work is matrix-matrix products.
Many samples are advanced together; every sample owns an independent random
stream spawned from the master seed, so results do not depend on batching.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, NumericalError
from .kasteleyn import CouplingTable, KasteleynSystem, stored_coupling
from .lattice import CylinderDomain, is_perfect_matching, vertex_type

log = logging.getLogger(__name__)

MAX_ENUM_VERTICES = 24


@dataclass(frozen=True)
class DimerCover:
    """Perfect matching stored as ``match[white_index] = black_index``."""

    domain: CylinderDomain
    match: np.ndarray

    @cached_property
    def matching(self) -> dict:
        d = self.domain
        return {d.whites[i]: d.blacks[j] for i, j in enumerate(self.match)}

    def is_valid(self) -> bool:
        return is_perfect_matching(self.domain, self.matching)

    @classmethod
    def from_matching(cls, domain: CylinderDomain, matching: dict) -> "DimerCover":
        m = np.empty(len(domain.whites), dtype=np.int64)
        for w, b in matching.items():
            m[domain.white_index[w]] = domain.black_index[b]
        return cls(domain, m)


# ---------------------------------------------------------------- probabilities

def _check_disjoint(edges):
    seen = set()
    for b, w in edges:
        for v in (b, w):
            if v in seen:
                raise DomainError(f"vertex {v} used twice in edge set")
            seen.add(v)


def multi_edge_probability(table: CouplingTable, system: KasteleynSystem, edges,
                           return_residue: bool = False):
    """det[K^{-1}(w_j, b_k)] * prod K(b_k, w_k) for vertex-disjoint edges (b, w)."""
    edges = list(edges)
    _check_disjoint(edges)
    if not edges:
        return (1.0, 0.0) if return_residue else 1.0
    M = np.array([[stored_coupling(table, wj, bk) for bk, _ in edges] for _, wj in edges])
    val = np.linalg.det(M) * np.prod([system.weight(b, w) for b, w in edges])
    residue = abs(val.imag)
    if residue > 1e-10:
        log.warning("edge probability has imaginary residue %.2e", residue)
    p = min(max(val.real, 0.0), 1.0)
    if abs(p - val.real) > 1e-12:
        log.warning("edge probability %.3e clamped to [0, 1]", val.real)
    return (p, residue) if return_residue else p


# ---------------------------------------------------------------- enumeration

def enumerate_covers(domain: CylinderDomain, max_vertices: int = MAX_ENUM_VERTICES) -> list:
    """All perfect matchings by backtracking over whites in index order."""
    if len(domain.vertices) > max_vertices:
        raise DomainError(f"enumeration refused for {len(domain.vertices)} vertices "
                          f"(limit {max_vertices})")
    if len(domain.blacks) != len(domain.whites):
        return []
    bi = domain.black_index
    nbrs = [sorted(bi[b] for b, _ in domain.neighbors(w)) for w in domain.whites]
    n = len(nbrs)
    used = [False] * n
    cur = [0] * n
    out = []

    def rec(i):
        if i == n:
            out.append(DimerCover(domain, np.array(cur, dtype=np.int64)))
            return
        for j in nbrs[i]:
            if not used[j]:
                used[j] = True
                cur[i] = j
                rec(i + 1)
                used[j] = False

    rec(0)
    return out


# ---------------------------------------------------------------- sampler

class _Plan:
    """Per-domain data shared by all sampler batches."""

    def __init__(self, system: KasteleynSystem, table: CouplingTable):
        d = system.domain
        self.domain = d
        eta_w = np.array([vertex_type(*w).eta for w in d.whites])
        eta_b = np.array([vertex_type(*b).eta for b in d.blacks])
        A = np.conj(np.outer(eta_w, eta_b)) * table.Kinv
        Kh = np.outer(eta_b, eta_w) * system.K          # real by the phase rule
        if np.max(np.abs(A.imag)) > 1e-9 or np.max(np.abs(Kh.imag)) > 1e-12:
            raise NumericalError("coupling table is not in eta_w*eta_b*R")
        self.A = np.ascontiguousarray(A.real)
        self.Kh = Kh.real
        n = len(d.whites)
        self.n = n
        self.adj = np.full((n, 4), -1, dtype=np.int64)
        self.kw = np.zeros((n, 4))
        for i, w in enumerate(d.whites):
            js = sorted(d.black_index[b] for b, _ in d.neighbors(w))
            self.adj[i, :len(js)] = js
            self.kw[i, :len(js)] = self.Kh[js, i]

    def refactor(self, matched_w, matched_b):
        """Conditioned real table from scratch: inverse of K on unmatched vertices."""
        n = self.n
        rw = np.setdiff1d(np.arange(n), matched_w)
        rb = np.setdiff1d(np.arange(n), matched_b)
        out = np.zeros((n, n))
        if len(rw):
            sub = np.linalg.inv(self.Kh[np.ix_(rb, rw)])
            out[np.ix_(rw, rb)] = sub
        return out


def _uniforms(seed: int, n_samples: int, n_steps: int, offset: int = 0) -> np.ndarray:
    # the k-th child of SeedSequence(seed).spawn(...) has spawn_key (k,)
    out = np.empty((n_samples, n_steps))
    for k in range(n_samples):
        ss = np.random.SeedSequence(seed, spawn_key=(offset + k,))
        out[k] = np.random.default_rng(ss).random(n_steps)
    return out


def _sample_chunk(plan: _Plan, U01: np.ndarray, block: int, tol: float) -> np.ndarray:
    S = U01.shape[0]
    n = plan.n
    M = np.broadcast_to(plan.A, (S, n, n)).copy()
    match = np.empty((S, n), dtype=np.int64)
    ar = np.arange(S)
    t = 0
    while t < n:
        k = min(block, n - t)
        Ub = np.zeros((S, n, k))
        Vb = np.zeros((S, k, n))
        for j in range(k):
            i = t + j
            row = M[:, i, :]
            if j:
                row = row - np.einsum("sj,sjn->sn", Ub[:, i, :j], Vb[:, :j, :])
            adj = plan.adj[i]
            valid = adj >= 0
            cols = np.where(valid, adj, 0)
            p = row[:, cols] * plan.kw[i] * valid
            tot = p.sum(axis=1)
            bad = np.abs(tot - 1) > tol
            if np.any(bad):
                # drift: rebuild the conditioned table for the affected samples
                for s in np.flatnonzero(bad):
                    fresh = plan.refactor(np.arange(i), match[s, :i])
                    M[s] = fresh
                    Ub[s] = 0
                    Vb[s] = 0
                    # earlier block updates are now folded into M[s]; replay none
                    row_s = fresh[i]
                    p[s] = row_s[cols] * plan.kw[i] * valid
                    row = row.copy()
                    row[s] = row_s
                tot = p.sum(axis=1)
                if np.any(np.abs(tot - 1) > tol):
                    raise NumericalError("conditional probabilities do not sum to 1 "
                                         "after refactorisation")
            neg = p < -1e-12
            if np.any(neg):
                log.warning("negative conditional probability %.2e clamped", p.min())
            p = np.clip(p, 0.0, None)
            cum = np.cumsum(p, axis=1)
            pick = (cum <= (U01[:, i] * cum[:, -1])[:, None]).sum(axis=1)
            pick = np.minimum(pick, valid.sum() - 1)
            b = cols[pick]
            match[:, i] = b
            col = M[ar, :, b]
            if j:
                col = col - np.einsum("snj,sj->sn", Ub[:, :, :j], Vb[ar, :j, b])
            piv = row[ar, b]
            Ub[:, :, j] = col / piv[:, None]
            Vb[:, j, :] = row
        t += k
        if t < n:
            M[:, t:, :] -= np.matmul(Ub[:, t:, :], Vb)
    return match


def sample_covers(system: KasteleynSystem, table: CouplingTable, n_samples: int, seed: int,
                  chunk: int = 128, block: int = 32, tol: float = 1e-8,
                  offset: int = 0, threads: int = 1) -> np.ndarray:
    """``n_samples`` exact covers as an (n_samples, N) array of black indices.

    Sample ``k`` uses the ``offset + k``-th child stream of ``seed``, so the
    output does not depend on ``chunk`` or ``threads``.
    """
    plan = _Plan(system, table)
    out = np.empty((n_samples, plan.n), dtype=np.int64)
    starts = list(range(0, n_samples, chunk))

    def work(s0):
        s1 = min(n_samples, s0 + chunk)
        U01 = _uniforms(seed, s1 - s0, plan.n, offset + s0)
        out[s0:s1] = _sample_chunk(plan, U01, block, tol)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(work, starts))
    else:
        for s0 in starts:
            work(s0)
    return out


def sample_cover(system: KasteleynSystem, table: CouplingTable, seed: int) -> DimerCover:
    m = sample_covers(system, table, 1, seed)[0]
    return DimerCover(system.domain, m)


# ---------------------------------------------------------------- dumps

def write_cover(cover: DimerCover, seed: int, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# domain_hash={cover.domain.hash} seed={seed}\n")
        for i, j in enumerate(cover.match):
            fh.write(f"{i} {j}\n")


def read_cover(domain: CylinderDomain, path) -> DimerCover:
    with open(path) as fh:
        head = fh.readline()
        if f"domain_hash={domain.hash}" not in head:
            raise DomainError("cover file belongs to a different domain")
        pairs = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    m = np.empty(len(domain.whites), dtype=np.int64)
    m[pairs[:, 0]] = pairs[:, 1]
    return DimerCover(domain, m)
