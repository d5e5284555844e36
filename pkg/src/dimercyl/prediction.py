"""Continuum predictions on the straight cylinder T+ = R/ell Z x (0, pi).

Points are complex numbers in T+ coordinates unless stated otherwise.  A
discrete straight cylinder with W columns and H rows is sent to T+ by
z -> ell * z after placing it in R/Z x (0, (H+1)/W); see
:func:`CylinderGeometry.from_domain`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from .elliptic import EllipticContext, f_mu, half_periods, wp, wp_deriv, z_mu
from .errors import DomainError, NumericalError, PrecisionError, RangeError
from .lattice import CylinderDomain

PI = math.pi


@dataclass(frozen=True)
class CylinderGeometry:
    ell: float

    def __post_init__(self):
        if not self.ell > 0:
            raise ValueError("ell must be positive")

    @classmethod
    def from_domain(cls, domain: CylinderDomain) -> "CylinderGeometry":
        """Modulus of a straight cylinder measured between its boundary rows."""
        if not domain.is_straight:
            raise DomainError("modulus matching is implemented for straight cylinders only")
        return cls(PI / domain.continuum_height)

    @property
    def ctx(self) -> EllipticContext:
        return EllipticContext(self.ell)

    def to_T(self, z: complex) -> complex:
        """Map a point of R/Z x (0, height) to T+."""
        return self.ell * complex(z)


# ---------------------------------------------------------------- Green's function

def _log_abs_one_minus(z, ell):
    # log|1 - exp(2 pi i z~/ell)| with z~ = +-z chosen in the upper half plane
    zt = np.where(np.imag(z) >= 0, z, -z)
    return np.log(np.abs(1 - np.exp(2j * PI * zt / ell)))


def green(z1: complex, z2: complex, geom: CylinderGeometry, tol: float = 1e-15) -> float:
    """Dirichlet Green's function of T+, G ~ -(2 pi)^-1 log|z2 - z1|.

    The x-independent mode is summed in closed form; the remaining modes are
    an image series over reflections in both boundaries, whose paired terms
    decay like exp(-4 pi^2 |n| / ell).
    """
    ell = geom.ell
    y1, y2 = z1.imag, z2.imag
    for y in (y1, y2):
        if not (-1e-14 <= y <= PI + 1e-14):
            raise DomainError("point outside the closed cylinder")
    d = (z2 - z1) / ell
    if abs(y1 - y2) < 1e-14 and abs(d.real - round(d.real)) < 1e-14:
        raise DomainError("coincident points")
    y1 = min(max(y1, 0.0), PI)
    y2 = min(max(y2, 0.0), PI)
    zero_mode = (min(y1, y2) - y1 * y2 / PI) / ell
    zb1 = z1.conjugate()
    total = 0.0
    n = 0
    while True:
        ns = [0] if n == 0 else [n, -n]
        term = 0.0
        for m in ns:
            shift = 2j * PI * m
            term += _log_abs_one_minus(z2 - z1 - shift, ell) - _log_abs_one_minus(z2 - zb1 - shift, ell)
        total += term
        if n > 0 and abs(term) < tol:
            break
        n += 1
        if n > 200:
            raise PrecisionError("image series did not converge")
    return float(zero_mode - total / (2 * PI))


def hm_top(z: complex) -> float:
    return complex(z).imag / PI


def h2_pred(z1, z2, M2: float, geom: CylinderGeometry) -> float:
    return green(z1, z2, geom) / PI + M2 * hm_top(z1) * hm_top(z2)


def h3_pred(z1, z2, z3, M3: float) -> float:
    return M3 * hm_top(z1) * hm_top(z2) * hm_top(z3)


# ---------------------------------------------------------------- moment curve

def M2_of_mu(mu: float, ctx: EllipticContext) -> float:
    return float(-wp(z_mu(mu, ctx.ell), ctx).real - ctx.c_ell)


def M3_of_mu(mu: float, ctx: EllipticContext) -> float:
    return float(wp_deriv(z_mu(mu, ctx.ell), ctx, 1).real)


def cubic_residual(M2: float, M3: float, ctx: EllipticContext) -> float:
    e1, e2, e3 = half_periods(ctx)
    c = ctx.c_ell
    return M3 ** 2 + 4 * (M2 + e1 + c) * (M2 + e2 + c) * (M2 + e3 + c)


@dataclass(frozen=True)
class MuPoint:
    mu: float
    z_mu: complex
    residual_M2: float = 0.0
    residual_M3: float = 0.0


def _check_monotone(ctx: EllipticContext, n: int = 201):
    grid = np.linspace(0.0, 0.5, n)
    vals = np.array([M2_of_mu(m, ctx) for m in grid])
    if not np.all(np.diff(vals) > 0):
        raise NumericalError("M2(mu) is not increasing on [0, 1/2]")
    return vals[0], vals[-1]


def mu_from_moments(M2: float, M3: float, ctx: EllipticContext, m3_tol: float = 1e-12,
                    xtol: float = 1e-14) -> MuPoint:
    """Solve -wp(z_mu) - c = M2 by bisection on [0, 1/2]; the sign of M3
    selects between mu and 1 - mu (wp'(z_mu) > 0 on (0, 1/2))."""
    lo, hi = _check_monotone(ctx)
    slack = 1e-12 * max(1.0, abs(hi))
    if not lo - slack <= M2 <= hi + slack:
        raise RangeError(f"M2 = {M2:.6g} outside attainable range [{lo:.6g}, {hi:.6g}]")
    if M2 <= lo:
        mu0 = 0.0
    elif M2 >= hi:
        mu0 = 0.5
    else:
        mu0 = bisect(lambda m: M2_of_mu(m, ctx) - M2, 0.0, 0.5, xtol=xtol)
    mu = 1.0 - mu0 if (M3 < -m3_tol and 0 < mu0 < 0.5) else mu0
    mu %= 1.0
    return MuPoint(mu, z_mu(mu, ctx.ell), M2 - M2_of_mu(mu, ctx), M3 - M3_of_mu(mu, ctx))


def mu_distance(a: float, b: float) -> float:
    """Distance on R/Z."""
    d = (a - b) % 1.0
    return min(d, 1.0 - d)


# ---------------------------------------------------------------- discrete Gaussian

@dataclass
class DiscreteGaussianDist:
    mu: float
    ell: float
    K: int
    support: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)
    Z_mu: float = 0.0
    a_mu: float = 0.0


def discrete_gaussian(mu: float, ell: float, K: int | None = None,
                      tail_tol: float = 1e-14) -> DiscreteGaussianDist:
    """P[xi = k - a] proportional to exp(-ell (k - mu)^2 / 2), centred."""
    if K is None:
        K = int(math.ceil(9.0 / math.sqrt(ell))) + 2
    k0 = round(mu)
    ks = np.arange(k0 - K, k0 + K + 1, dtype=float)
    w = np.exp(-0.5 * ell * (ks - mu) ** 2)
    Z = float(w.sum())
    # first omitted terms bound the tail
    tail = math.exp(-0.5 * ell * (K + 1 - abs(mu - k0)) ** 2) * 2 / Z
    if tail > tail_tol:
        raise PrecisionError(f"truncation K={K} leaves tail mass {tail:.2e}")
    p = w / Z
    a = float(p @ ks)
    return DiscreteGaussianDist(mu, ell, K, ks - a, p, Z, a)


def dg_moment(dist: DiscreteGaussianDist, n: int) -> float:
    return float(dist.probs @ dist.support ** n)


def cumulants_from_moments(m: dict) -> dict:
    """Cumulants 2..6 from central moments (first moment zero)."""
    m2, m3, m4, m5, m6 = (m.get(k, 0.0) for k in (2, 3, 4, 5, 6))
    return {
        2: m2,
        3: m3,
        4: m4 - 3 * m2 ** 2,
        5: m5 - 10 * m3 * m2,
        6: m6 - 15 * m4 * m2 - 10 * m3 ** 2 + 30 * m2 ** 3,
    }


def moments_from_cumulants(k: dict) -> dict:
    """Central moments 2..6 from cumulants."""
    k2, k3, k4, k5, k6 = (k.get(n, 0.0) for n in (2, 3, 4, 5, 6))
    return {
        2: k2,
        3: k3,
        4: k4 + 3 * k2 ** 2,
        5: k5 + 10 * k3 * k2,
        6: k6 + 15 * k4 * k2 + 10 * k3 ** 2 + 15 * k2 ** 3,
    }


def dg_cumulant(dist: DiscreteGaussianDist, n: int) -> float:
    if not 2 <= n <= 6:
        raise ValueError("cumulants of order 2..6 only")
    m = {k: dg_moment(dist, k) for k in range(2, 7)}
    return cumulants_from_moments(m)[n]


def connected_coefficient(n: int, mu: float, ctx: EllipticContext) -> float:
    if n < 3:
        raise ValueError("n >= 3 required")
    return float((-1) ** (n - 1) * wp_deriv(z_mu(mu, ctx.ell), ctx, n - 2).real)


def cumulant_pred(n: int, mu: float, ctx: EllipticContext) -> float:
    return M2_of_mu(mu, ctx) if n == 2 else connected_coefficient(n, mu, ctx)


def predicted_moments(mu: float, ctx: EllipticContext) -> dict:
    """Central moments M2..M6 assembled from the elliptic cumulants."""
    return moments_from_cumulants({n: cumulant_pred(n, mu, ctx) for n in range(2, 7)})


# ---------------------------------------------------------------- model functions

def _conj_if(z, s):
    return z if s > 0 else np.conj(z)


def F2_pred(s1: int, s2: int, z1, z2, mu: float, ctx: EllipticContext) -> complex:
    """s1 s2 (2/pi)^2 (wp(z2^[s2] - z1^[s1]) - wp(z_mu))."""
    d = _conj_if(complex(z2), s2) - _conj_if(complex(z1), s1)
    return complex(s1 * s2 * (2 / PI) ** 2 * (wp(d, ctx) - wp(z_mu(mu, ctx.ell), ctx)))


def F2_product(s1: int, s2: int, z1, z2, mu: float, ctx: EllipticContext) -> complex:
    """The same quantity from model functions: s1 s2 f(z2^[s2]-z1^[s1]) f(z1^[s1]-z2^[s2])."""
    d = _conj_if(complex(z2), s2) - _conj_if(complex(z1), s1)
    return complex(s1 * s2 * f_mu(d, ctx, mu) * f_mu(-d, ctx, mu))


def F3_sum_pred(s1: int, s2: int, s3: int, mu: float, ctx: EllipticContext) -> complex:
    return complex(1j * s1 * s2 * s3 * (2 / PI) ** 3 * wp_deriv(z_mu(mu, ctx.ell), ctx, 1))


def n_cycles(n: int):
    """All n-cycles of range(n) as permutation tuples sigma with sigma[k] the image of k."""
    for rest in itertools.permutations(range(1, n)):
        order = (0,) + rest
        sigma = [0] * n
        for i in range(n):
            sigma[order[i]] = order[(i + 1) % n]
        yield tuple(sigma)


def cycle_sum(points, mu: float, ctx: EllipticContext, n: int | None = None) -> complex:
    """Sum over n-cycles sigma of prod_k f_mu(z_sigma(k) - z_k)."""
    pts = [complex(p) for p in points]
    n = len(pts) if n is None else n
    if n > 6:
        raise ValueError("n <= 6")
    pts = pts[:n]
    diffs = {}
    for j in range(n):
        for k in range(n):
            if j != k:
                diffs[j, k] = f_mu(pts[k] - pts[j], ctx, mu)
    tot = 0j
    for sigma in n_cycles(n):
        prod = 1 + 0j
        for k in range(n):
            prod *= diffs[k, sigma[k]]
        tot += prod
    return tot


def cycle_sum_pred(n: int, mu: float, ctx: EllipticContext) -> complex:
    """(-2i/pi)^n wp^(n-2)(z_mu); equal to cycle_sum for n >= 3."""
    return complex((-2j / PI) ** n * wp_deriv(z_mu(mu, ctx.ell), ctx, n - 2))


# ---------------------------------------------------------------- reports

def prediction_report(ctx: EllipticContext, mu: float | None = None,
                      M2: float | None = None, M3: float | None = None) -> dict:
    """Predictions for the CLI: give either mu or (M2, M3)."""
    out = {"ell": ctx.ell, "c": ctx.c_ell}
    if mu is None:
        if M2 is None or M3 is None:
            raise ValueError("need mu or both M2 and M3")
        mp_ = mu_from_moments(M2, M3, ctx)
        mu = mp_.mu
        out.update(input_M2=M2, input_M3=M3, cubic_residual_input=cubic_residual(M2, M3, ctx),
                   fit_residual_M2=mp_.residual_M2, fit_residual_M3=mp_.residual_M3)
    cum = {n: cumulant_pred(n, mu, ctx) for n in range(2, 7)}
    mom = moments_from_cumulants(cum)
    out.update(
        mu=mu,
        z_mu=[z_mu(mu, ctx.ell).real, z_mu(mu, ctx.ell).imag],
        moments={f"M{n}": mom[n] for n in range(2, 7)},
        cumulants={f"k{n}": cum[n] for n in range(2, 7)},
        cubic_residual=cubic_residual(mom[2], mom[3], ctx),
        half_periods=dict(zip(("e1", "e2", "e3"), half_periods(ctx))),
    )
    return out
