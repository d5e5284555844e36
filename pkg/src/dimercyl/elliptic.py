"""Theta and Weierstrass functions for the rectangular lattice ell*Z + 2*pi*i*Z.

Everything is evaluated from q-series.  Weierstrass functions are computed on a
unit-normalised lattice Z + tau_a Z, with the basis chosen so that the nome
|q_a| <= exp(-pi); the theta quotient defining g_mu switches to the imaginary
(tau -> -1/tau) transformation when Im tau is small.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import PoleError, PrecisionError

PI = math.pi
_MAX_TERMS = 400
_POLE_TOL = 1e-13


def _as_complex(x):
    arr = np.asarray(x, dtype=complex)
    return arr, arr.ndim == 0


def _out(arr, scalar):
    return complex(arr) if scalar else arr


def _n_terms_quadratic(im_tau: float, tol: float = 1e-18) -> int:
    # q^{n^2} with the reduced argument costs at most a factor q^{-n}
    a = PI * im_tau
    n = int(math.ceil(math.sqrt(-math.log(tol) / a) + 2.0))
    if n > _MAX_TERMS:
        raise PrecisionError(f"theta series needs {n} terms (Im tau = {im_tau:.3g})")
    return n


def _reduce(w, tau):
    """Split w = w0 + m + n*tau with |Im w0| <= Im(tau)/2 and |Re w0| <= 1/2."""
    n = np.rint(w.imag / tau.imag)
    w1 = w - n * tau
    m = np.rint(w1.real)
    return w1 - m, m, n


# ---------------------------------------------------------------- thetas

def _theta1_series(v, tau):
    q = np.exp(1j * PI * tau)
    out = np.zeros_like(v)
    for n in range(_n_terms_quadratic(tau.imag)):
        out = out + 2 * (-1) ** n * q ** ((n + 0.5) ** 2) * np.sin((2 * n + 1) * PI * v)
    return out


def _theta3_series(v, tau):
    q = np.exp(1j * PI * tau)
    out = np.ones_like(v)
    for n in range(1, _n_terms_quadratic(tau.imag)):
        out = out + 2 * q ** (n * n) * np.cos(2 * n * PI * v)
    return out


def theta1(w, tau):
    """Jacobi theta_1(w|tau) = 2 sum (-1)^n q^{(n+1/2)^2} sin((2n+1) pi w), q = e^{i pi tau}."""
    tau = complex(tau)
    if tau.imag <= 0:
        raise ValueError("Im tau must be positive")
    w, scalar = _as_complex(w)
    w0, m, n = _reduce(w, tau)
    q = np.exp(1j * PI * tau)
    factor = (-1.0) ** (m + n) * q ** (-(n * n)) * np.exp(-2j * PI * n * w0)
    return _out(factor * _theta1_series(w0, tau), scalar)


def theta3(w, tau):
    """Jacobi theta_3(w|tau) = 1 + 2 sum q^{n^2} cos(2 n pi w)."""
    tau = complex(tau)
    if tau.imag <= 0:
        raise ValueError("Im tau must be positive")
    w, scalar = _as_complex(w)
    w0, _, n = _reduce(w, tau)
    q = np.exp(1j * PI * tau)
    factor = q ** (-(n * n)) * np.exp(-2j * PI * n * w0)
    return _out(factor * _theta3_series(w0, tau), scalar)


def theta1_prime0(tau) -> complex:
    """Derivative of theta_1 at the origin."""
    tau = complex(tau)
    if tau.imag <= 0:
        raise ValueError("Im tau must be positive")
    q = np.exp(1j * PI * tau)
    return complex(sum(2 * (-1) ** n * q ** ((n + 0.5) ** 2) * (2 * n + 1) * PI
                       for n in range(_n_terms_quadratic(tau.imag))))


# ------------------------------------------------------------ g_mu, f_mu

def _g_direct(w0, mu, tau):
    num = theta1_prime0(tau) * theta3(w0 + mu, tau)
    den = theta3(complex(mu), tau) * theta1(w0, tau)
    return (2 / (PI * 1j)) * num / den


def _g_transformed(w0, mu, tau):
    tp = -1.0 / tau
    num = theta1_prime0(tp) * np.exp(-2j * PI * w0 * mu / tau) * theta3((w0 + mu) / tau, tp)
    den = theta3(mu / tau, tp) * theta1(w0 / tau, tp)
    return (2 / (PI * 1j)) * num / (tau * den)


def g_mu(w, mu: float, tau, transform: bool | None = None):
    """Theta quotient with a simple pole of residue 2/(pi i) at w = 0.

    Antiperiodic in w -> w+1 and multiplied by -exp(-2 pi i mu) under w -> w+tau.
    ``transform`` forces (True) or forbids (False) evaluation through the
    imaginary transformation; by default it is used when Im tau < 1/2.
    """
    tau = complex(tau)
    w, scalar = _as_complex(w)
    w0, m, n = _reduce(w, tau)
    if np.any(np.abs(w0) < _POLE_TOL):
        raise PoleError("g_mu evaluated at a lattice point (residue 2/(pi i))")
    if transform is None:
        transform = tau.imag < 0.5
    val = _g_transformed(w0, mu, tau) if transform else _g_direct(w0, mu, tau)
    val = val * (-1.0) ** m * (-np.exp(-2j * PI * mu)) ** n
    return _out(val, scalar)


def f_mu(z, ctx: "EllipticContext", mu: float):
    """g_mu rescaled to the lattice ell*Z + 2 pi i*Z: f_mu(z) = g_mu(z/ell)/ell."""
    z, scalar = _as_complex(z)
    return _out(g_mu(z / ctx.ell, mu, ctx.tau) / ctx.ell, scalar)


def z_mu(mu: float, ell: float) -> complex:
    return complex((0.5 - mu) * ell, PI)


# ------------------------------------------------------------ Weierstrass

@dataclass(frozen=True)
class EllipticContext:
    """Lattice data for ell*Z + 2*pi*i*Z."""

    ell: float
    tol: float = 1e-17

    def __post_init__(self):
        if not (self.ell > 0 and math.isfinite(self.ell)):
            raise ValueError(f"ell must be positive, got {self.ell}")

    @property
    def omega1(self) -> complex:
        return complex(self.ell)

    @property
    def omega2(self) -> complex:
        return 2j * PI

    @property
    def tau(self) -> complex:
        return 2j * PI / self.ell

    @property
    def q(self) -> float:
        return math.exp(-2 * PI * PI / self.ell)

    # unit-normalised frame: Lambda = omega_a * (Z + tau_a Z), Im tau_a >= 1
    @cached_property
    def omega_a(self) -> complex:
        return complex(self.ell) if self.ell <= 2 * PI else 2j * PI

    @cached_property
    def tau_a(self) -> complex:
        return 2j * PI / self.ell if self.ell <= 2 * PI else 1j * self.ell / (2 * PI)

    @cached_property
    def _coeffs(self):
        qa = math.exp(-PI * self.tau_a.imag)
        n_max = int(math.ceil(math.log(self.tol) / math.log(qa))) + 8
        n = np.arange(1, n_max + 1, dtype=float)
        q2n = qa ** (2 * n)
        a = n * q2n / (1 - q2n)
        b = q2n / (1 - q2n)
        eta_c = -PI ** 2 / 3 + 8 * PI ** 2 * a.sum()
        return n, a, b, eta_c

    @cached_property
    def c_ell(self) -> float:
        return c_const(self)


def _csc2_polys(k_max: int):
    # d^k/dw^k csc^2(pi w) = P_k(cot(pi w)), with d cot/dw = -pi (1 + cot^2)
    polys = [np.polynomial.Polynomial([1.0, 0.0, 1.0])]
    one_t2 = np.polynomial.Polynomial([1.0, 0.0, 1.0])
    for _ in range(k_max):
        polys.append(-PI * one_t2 * polys[-1].deriv())
    return polys


_CSC2 = _csc2_polys(8)


def _wp_unit(w, ctx: EllipticContext, k: int):
    n, a, _, _ = ctx._coeffs
    w0, _, _ = _reduce(w, ctx.tau_a)
    if np.any(np.abs(w0) < _POLE_TOL):
        raise PoleError("Weierstrass function evaluated at a lattice point")
    t = 1.0 / np.tan(PI * w0)
    val = PI ** 2 * _CSC2[k](t)
    phase = np.multiply.outer(w0, 2 * PI * n)
    if k == 0:
        val = val - PI ** 2 / 3 + 8 * PI ** 2 * ((1 - np.cos(phase)) @ a)
    else:
        val = val - 8 * PI ** 2 * (np.cos(phase + k * PI / 2) @ (a * (2 * PI * n) ** k))
    return val


def wp(z, ctx: EllipticContext):
    """Weierstrass p-function of the lattice ell*Z + 2 pi i*Z."""
    return wp_deriv(z, ctx, 0)


def wp_deriv(z, ctx: EllipticContext, k: int = 1):
    """k-th derivative of the Weierstrass p-function, 0 <= k <= 8."""
    if not 0 <= k < len(_CSC2):
        raise ValueError(f"derivative order {k} not supported")
    z, scalar = _as_complex(z)
    oa = ctx.omega_a
    return _out(_wp_unit(z / oa, ctx, k) / oa ** (2 + k), scalar)


def zeta_w(z, ctx: EllipticContext):
    """Weierstrass zeta function (quasi-periodic, zeta' = -wp)."""
    z, scalar = _as_complex(z)
    n, _, b, eta_c = ctx._coeffs
    tau = ctx.tau_a
    w = z / ctx.omega_a
    w0, m, nn = _reduce(w, tau)
    if np.any(np.abs(w0) < _POLE_TOL):
        raise PoleError("zeta evaluated at a lattice point")
    phase = np.multiply.outer(w0, 2 * PI * n)
    val = PI / np.tan(PI * w0) + 4 * PI * (np.sin(phase) @ b) - eta_c * w0
    val = val - m * eta_c - nn * (eta_c * tau + 2j * PI)
    return _out(val / ctx.omega_a, scalar)


def c_const(ctx: EllipticContext, return_residue: bool = False):
    """The constant (2/omega2) * zeta(omega2/2); real for rectangular lattices."""
    val = 2.0 / ctx.omega2 * zeta_w(ctx.omega2 / 2, ctx)
    if return_residue:
        return float(val.real), abs(val.imag)
    return float(val.real)


def half_periods(ctx: EllipticContext) -> tuple[float, float, float]:
    """(e1, e2, e3) = wp at ell/2, pi*i and ell/2 + pi*i."""
    e = wp(np.array([ctx.ell / 2, 1j * PI, ctx.ell / 2 + 1j * PI]), ctx)
    return float(e[0].real), float(e[1].real), float(e[2].real)
