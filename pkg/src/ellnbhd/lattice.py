"""Geometric dictionary: model maps, Serre-type isomorphisms, sectors,
changes of lattice basis, and torsion-cover parameter algebra.

The elliptic curve is C*/(z -> qz) with q = e^{2 i pi tau}.  The model
neighborhoods are quotients by the time-1 flow of the commuting pair

    v0 = (xi^k + nu)^{-1} (-xi d/dxi + 2 i pi tau z P(xi) d/dz)
    vinf = 2 i pi tau z d/dz

and the Serre map (z, xi) -> (e^{2 i pi xi}, z e^{2 i pi tau xi}) carries a
punctured neighborhood of the curve onto a punctured neighborhood of the
four-line cycle in P1 x P1.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .jets import BivariateJet, JetDiffeo

__all__ = [
    "LatticeParams",
    "ModelSpec",
    "TorsionData",
    "SectorSpec",
    "model_map",
    "model_jet",
    "serre_map",
    "generalized_serre",
    "sector_membership",
    "canonical_sectors",
    "sl2_change",
    "torsion_cover_params",
]

TWO_PI_I = 2j * math.pi


@dataclass(frozen=True)
class LatticeParams:
    """tau in the upper half plane plus derived quantities."""

    tau: complex
    q: complex = None
    varpi: float = None
    lam: complex = None

    def __post_init__(self):
        tau = complex(self.tau)
        if tau.imag <= 0:
            raise ValueError("need Im(tau) > 0")
        q = cmath.exp(TWO_PI_I * tau)
        if self.q is not None and abs(complex(self.q) - q) > 1e-14 * abs(q):
            raise ValueError("stored q inconsistent with tau")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "varpi", cmath.phase(tau))
        object.__setattr__(self, "lam", -TWO_PI_I * tau)
        assert abs(q) < 1
        assert self.lam.real > 0
        assert 0 < self.varpi < math.pi


@dataclass(frozen=True)
class TorsionData:
    """Linear monodromy data of a torsion normal bundle.

    a1, atau are roots of unity of orders m1, mtau; the torsion order is
    m = lcm(m1, mtau) and d = gcd(m1, mtau).  l satisfies
    a1^l atau^(mtau/d) = 1 (smallest nonnegative choice unless given).
    """

    m1: int
    mtau: int
    a1: complex
    atau: complex
    l: int = None

    def __post_init__(self):
        for a, m in ((self.a1, self.m1), (self.atau, self.mtau)):
            if abs(complex(a) ** m - 1.0) > 1e-12:
                raise ValueError(f"{a!r} is not an order-{m} root of unity (tol 1e-12)")
        if self.l is None:
            object.__setattr__(self, "l", self._find_l())
        else:
            if abs(self.a1 ** self.l * self.atau ** (self.mtau // self.d) - 1.0) > 1e-10:
                raise ValueError("provided l does not satisfy a1^l atau^(mtau/d) = 1")

    @property
    def d(self):
        return math.gcd(self.m1, self.mtau)

    @property
    def m(self):
        return self.m1 * self.mtau // math.gcd(self.m1, self.mtau)

    def _find_l(self):
        target = self.atau ** (self.mtau // self.d)
        for l in range(self.m1):
            if abs(self.a1**l * target - 1.0) < 1e-10:
                return l
        raise ValueError("no integer l with a1^l atau^(mtau/d) = 1: inconsistent torsion data")

    def generator_exponents(self):
        """Lexicographically smallest (v, w) with a1^v atau^w = e^{-2 i pi / m}."""
        target = cmath.exp(-TWO_PI_I / self.m)
        for v in range(self.m1):
            for w in range(self.mtau):
                if abs(self.a1**v * self.atau**w - target) < 1e-10:
                    return v, w
        raise ValueError("no (v, w) with a1^v atau^w = e^(-2 i pi/m): inconsistent torsion data")


@dataclass(frozen=True)
class ModelSpec:
    """(k, nu, P) of a formal normal form, with optional torsion block."""

    k: int
    nu: complex = 0.0
    P: tuple = ()
    torsion: TorsionData = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("Ueda type k must be a positive integer")
        P = tuple(complex(c) for c in self.P)
        object.__setattr__(self, "P", P)
        kprime = self.k if self.torsion is None else self.k // self.torsion.m
        if self.torsion is not None:
            if self.k % self.torsion.m:
                raise ValueError("Ueda type k must be a multiple of the torsion order m")
        if len(P) > max(kprime, 0):
            raise ValueError(f"deg P must be < {kprime}")

    @property
    def a0(self):
        return self.P[0] if self.P else 0.0

    def poly(self, x):
        """P evaluated by Horner's scheme."""
        acc = 0.0 + 0j
        for c in reversed(self.P):
            acc = acc * x + c
        return acc

    def is_serre_model(self):
        return self.k == 1 and self.nu == 0 and all(c == 0 for c in self.P)


# -- model map ----------------------------------------------------------

def _flow_field(spec, params):
    k, nu, tau = spec.k, complex(spec.nu), params.tau

    def rhs(_, u):
        z = u[0] + 1j * u[1]
        xi = u[2] + 1j * u[3]
        denom = xi**k + nu
        dz = TWO_PI_I * tau * z * (1.0 + spec.poly(xi) / denom)
        dxi = -xi / denom
        return [dz.real, dz.imag, dxi.real, dxi.imag]

    return rhs


def model_map(spec, params, z, xi, rtol=1e-12, atol=1e-12):
    """Time-1 flow of v0 + vinf at the point (z, xi).

    Closed form (qz, xi-1) for the (1,0,0) model; otherwise a DOP853
    integration of the explicit field.  Points too close to the zeros of
    xi^k + nu are rejected.
    """
    z, xi = complex(z), complex(xi)
    if xi == 0:
        raise ValueError("chart requires xi != 0")
    if spec.is_serre_model():
        return params.q * z, xi - 1.0
    if abs(xi**spec.k + complex(spec.nu)) < 1e-6 * max(abs(xi) ** spec.k, 1.0):
        raise ValueError("evaluation too close to the zeros of xi^k + nu")
    sol = solve_ivp(
        _flow_field(spec, params),
        (0.0, 1.0),
        [z.real, z.imag, xi.real, xi.imag],
        method="DOP853",
        rtol=rtol,
        atol=atol,
        dense_output=False,
    )
    if not sol.success:
        raise RuntimeError(f"flow integration failed: {sol.message}")
    u = sol.y[:, -1]
    return u[0] + 1j * u[1], u[2] + 1j * u[3]


def model_jet(spec, params, y_order=8):
    """Jet of F_{k,nu,P} in the curve chart (z, y), y = 1/xi.

    The field splits as 2 i pi tau z d/dz (whose time-1 flow is z -> qz)
    plus a commuting part that raises the y-degree, so the Lie-series
    exponential terminates at the truncation order.  Work is done at a
    padded internal order because each d/dy lowers the known order by one.
    """
    N_out = y_order
    N = 2 * y_order + 2
    k, nu, tau = spec.k, complex(spec.nu), params.tau
    # 1/(1 + nu y^k) as a jet
    denom = BivariateJet.zero((0, 0), N)
    denom[0, 0] = 1.0
    if nu != 0:
        denom_full = BivariateJet.zero((0, 0), N)
        denom_full[0, 0] = 1.0
        if k <= N:
            denom_full[0, k] = nu
        denom = denom_full.inverse_unit()
    # B(y) = y^{k+1}/(1+nu y^k): coefficient of d/dy
    B = BivariateJet.zero((0, 0), N)
    if k + 1 <= N:
        B[0, k + 1] = 1.0
        B = B * denom
    # Atil(y) = 2 i pi tau * y^k P(1/y) / (1 + nu y^k): coefficient of z d/dz
    Atil = BivariateJet.zero((0, 0), N)
    for i, c in enumerate(spec.P):
        if k - i <= N:
            Atil[0, k - i] = c
    Atil = (TWO_PI_I * tau) * (Atil * denom)

    def derivation(f):
        ms = np.arange(f.m_min, f.m_max + 1, dtype=float)[:, None]
        z_dz = BivariateJet(f.m_min, ms * f.coeffs)  # z * df/dz
        return Atil * z_dz + B * f.dy()

    def lie_exp(f):
        acc = f.copy()
        term = f.copy()
        fact = 1.0
        for n in range(1, N + 2):
            term = derivation(term)
            fact *= n
            if term.max_abs() == 0.0:
                break
            acc = acc + (1.0 / fact) * term
        return acc

    comp1 = lie_exp(BivariateJet.variable_z(N))
    comp1 = params.q * comp1  # commuting linear flow z -> qz
    comp2 = lie_exp(BivariateJet.variable_y(N))
    return JetDiffeo(comp1.truncate(None, N_out), comp2.truncate(None, N_out), "curve")


# -- Serre isomorphisms ---------------------------------------------------

def serre_map(params, z, xi):
    """(z, xi) -> (e^{2 i pi xi}, z e^{2 i pi tau xi})."""
    z = np.asarray(z, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    X = np.exp(TWO_PI_I * xi)
    Y = z * np.exp(TWO_PI_I * params.tau * xi)
    return X, Y


def branch_log(xi, anchor_angle):
    """log with the argument chosen continuously around the given direction.

    arg is taken in (anchor - pi, anchor + pi]; principal at the anchor.
    """
    xi = np.asarray(xi, dtype=complex)
    rot = xi * np.exp(-1j * anchor_angle)
    return np.log(np.abs(xi)) + 1j * (np.angle(rot) + anchor_angle)


def generalized_serre(spec, params, z, xi, sector=None, branch_anchor=None):
    """Pi_{k,nu,P}: the model's identification with the corner charts.

    (z, xi) -> (e^{2 i pi xi^k / k} xi^{2 i pi nu},
                z e^{P1(xi) + 2 i pi tau xi^k / k} xi^{2 i pi tau (nu + a0)})

    P1 is the polynomial part of the antiderivative of
    2 i pi tau P(xi)/xi (constant term 0; only cross-sector differences
    matter).  The xi powers need a branch of log xi: one fixed continuous
    determination per sector, anchored at the sector bisector.
    """
    z = np.asarray(z, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    if branch_anchor is None:
        if sector is not None:
            if not np.all(sector_membership(sector, z, xi)):
                raise ValueError("point outside the declared sector")
            branch_anchor = sector.bisector
        else:
            branch_anchor = 0.0
    k, nu, tau = spec.k, complex(spec.nu), params.tau
    logxi = branch_log(xi, branch_anchor)
    xik = xi**k
    # P1(xi) = 2 i pi tau * sum_{i>=1} p_i xi^i / i
    P1 = np.zeros_like(xi)
    for i, c in enumerate(spec.P):
        if i >= 1:
            P1 = P1 + c * xi**i / i
    P1 = TWO_PI_I * tau * P1
    X = np.exp(TWO_PI_I * xik / k + TWO_PI_I * nu * logxi)
    Y = z * np.exp(P1 + TWO_PI_I * tau * xik / k + TWO_PI_I * tau * (nu + spec.a0) * logxi)
    return X, Y


def corner_monodromy(spec, params):
    """Multipliers of the linear gluing at the distinguished corner.

    Crossing the branch cut shifts log xi by 2 i pi, which multiplies the
    two components by (e^{-4 pi^2 nu}, e^{-4 pi^2 tau (nu + a0)}).
    """
    nu, tau = complex(spec.nu), params.tau
    return (
        cmath.exp(-4 * math.pi**2 * nu),
        cmath.exp(-4 * math.pi**2 * tau * (nu + spec.a0)),
    )


# -- sectors --------------------------------------------------------------

@dataclass(frozen=True)
class SectorSpec:
    """S(I, R; c): arg xi in (theta1, theta2), |xi| > R, e^{-c} < |z| < e^c."""

    theta1: float
    theta2: float
    radius: float = 0.0
    log_half_width: float = math.inf
    label: tuple = (1, 0)

    @property
    def bisector(self):
        return 0.5 * (self.theta1 + self.theta2)

    @property
    def opening(self):
        return self.theta2 - self.theta1


def _angle_in(theta, lo, hi):
    """Does theta have a representative mod 2 pi inside (lo, hi)?"""
    span = hi - lo
    if span >= 2 * math.pi:
        return np.ones_like(np.asarray(theta, dtype=float), dtype=bool)
    t = np.mod(np.asarray(theta, dtype=float) - lo, 2 * math.pi)
    return (t > 0) & (t < span)


def sector_membership(sector, z, xi):
    """Membership test for S(I, R; c)."""
    z = np.asarray(z, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    ok_arg = _angle_in(np.angle(xi), sector.theta1, sector.theta2)
    ok_rad = np.abs(xi) > sector.radius
    c = sector.log_half_width
    if math.isinf(c):
        ok_z = np.ones_like(ok_rad, dtype=bool)
    else:
        az = np.abs(z)
        ok_z = (az > math.exp(-c)) & (az < math.exp(c))
    return ok_arg & ok_rad & ok_z


def canonical_sectors(k, params, radius=0.0, log_half_width=math.inf):
    """The 4k sectors of opening pi/k covering the circle of directions.

    k = 1 uses I1 = (-varpi, pi - varpi), I2 = (-pi, 0), I3 = I1 + pi,
    I4 = I2 + pi.  For k >= 2 the base intervals are those divided by k
    with I2^0 = (0, pi/k), shifted by 2 pi l / k for l = 0..k-1; listed in
    the cyclic order (1,0),(2,0),(3,0),(4,0),(1,1),... so consecutive
    entries overlap (the step from (4,l) wraps to (1,l+1)).
    """
    w = params.varpi
    if k == 1:
        base = [(-w, math.pi - w), (-math.pi, 0.0), (math.pi - w, 2 * math.pi - w), (0.0, math.pi)]
    else:
        b1 = (-w / k, (math.pi - w) / k)
        b2 = (0.0, math.pi / k)
        base = [
            b1,
            b2,
            (b1[0] + math.pi / k, b1[1] + math.pi / k),
            (b2[0] + math.pi / k, b2[1] + math.pi / k),
        ]
    sectors = []
    for l in range(k):
        shift = 2 * math.pi * l / k
        for i, (t1, t2) in enumerate(base, start=1):
            sectors.append(
                SectorSpec(t1 + shift, t2 + shift, radius, log_half_width, label=(i, l))
            )
    return sectors


# -- SL2(Z) ---------------------------------------------------------------

def sl2_change(M, params):
    """Change of lattice basis by an integer matrix [[m, m'], [n, n']].

    Returns (new LatticeParams with tau' = (m' + tau n')/(m + tau n),
    exponent matrix of the monomial map (X', Y') = (X^m Y^n, X^m' Y^n')).
    Applying M1 then M2 composes to the matrix product M1 @ M2 (monomial
    exponent matrices multiply on the right factor).
    """
    M = np.asarray(M, dtype=object)
    if M.shape != (2, 2) or any(int(v) != v for v in np.ravel(M).tolist()):
        raise ValueError("M must be an integer 2x2 matrix")
    m, mp, n, np_ = int(M[0, 0]), int(M[0, 1]), int(M[1, 0]), int(M[1, 1])
    if m * np_ - mp * n != 1:
        raise ValueError("M must have determinant 1")
    tau = params.tau
    tau_new = (mp + tau * np_) / (m + tau * n)
    new_params = LatticeParams(tau_new)
    exponents = np.array([[m, mp], [n, np_]], dtype=int)
    return new_params, exponents


def monomial_apply(exponents, X, Y):
    """(X, Y) -> (X^m Y^n, X^m' Y^n') for an exponent matrix [[m, m'], [n, n']]."""
    m, mp = int(exponents[0, 0]), int(exponents[0, 1])
    n, np_ = int(exponents[1, 0]), int(exponents[1, 1])
    return X**m * Y**n, X**mp * Y**np_


# -- torsion covers --------------------------------------------------------

@dataclass(frozen=True)
class TorsionCoverParams:
    tau_new: complex
    nu_new: complex
    P_new: tuple
    beta1: float
    beta2: float
    vw: tuple
    l: int
    deck_multipliers: tuple


def torsion_cover_params(spec, params):
    """Transported parameters on the m-cyclic cover trivializing the bundle.

    tau' = (l + (mtau/d) tau)/m1, nu' = d nu / mtau, P'(x) = tau P(x^m)/(tau' m1),
    beta1 = -w d/mtau, beta2 = v/m1 - w l d/m, and the deck gluing acts on the
    corner charts by (e^{-4 pi^2 nu'/m + 2 i pi beta1} X,
    e^{-4 pi^2 tau'(nu' + a0')/m + 2 i pi beta2} Y).  (v, w) is the
    lexicographically smallest solution of a1^v atau^w = e^{-2 i pi/m}.
    """
    tor = spec.torsion
    if tor is None:
        tor = TorsionData(1, 1, 1.0, 1.0)
    d, m = tor.d, tor.m
    l = tor.l
    v, w = tor.generator_exponents()
    tau = params.tau
    tau_new = (l + (tor.mtau / d) * tau) / tor.m1
    nu_new = d * complex(spec.nu) / tor.mtau
    # P'(x) = tau P(x^m) / (tau' m1): coefficient j of P lands at x^(m j)
    P_new = [0j] * (m * max(len(spec.P) - 1, 0) + 1) if spec.P else []
    for j, c in enumerate(spec.P):
        P_new[m * j] = tau * c / (tau_new * tor.m1)
    beta1 = -w * d / tor.mtau
    beta2 = v / tor.m1 - w * l * d / m
    a0_new = P_new[0] if P_new else 0.0
    mult_x = cmath.exp(-4 * math.pi**2 * nu_new / m + TWO_PI_I * beta1)
    mult_y = cmath.exp(-4 * math.pi**2 * tau_new * (nu_new + a0_new) / m + TWO_PI_I * beta2)
    return TorsionCoverParams(
        tau_new=tau_new,
        nu_new=nu_new,
        P_new=tuple(P_new),
        beta1=beta1,
        beta2=beta2,
        vw=(v, w),
        l=l,
        deck_multipliers=(mult_x, mult_y),
    )
