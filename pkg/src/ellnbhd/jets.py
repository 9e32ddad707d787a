"""Truncated bivariate series arithmetic.

A :class:`BivariateJet` is an exact Laurent polynomial

    f(z, y) = sum_{m, n} c[m, n] z^m y^n

with ``m`` running over an explicit integer window ``[m_min, m_max]`` and
``0 <= n <= y_order``.  The z-window is a support bound (operations take
hulls), while ``y_order`` is a truncation order (operations take the min).
Coefficients are complex doubles, so all identities hold to rounding error.

The same class carries germs in the curve chart (z, y) and in corner charts
(X, Y); :class:`JetDiffeo` packages two component jets plus a chart tag.
Two-forms with simple poles along the coordinate axes are a scalar jet plus
two pole flags (:class:`TwoFormJet`).
"""

from __future__ import annotations

import io

import numpy as np
from scipy.signal import convolve2d

__all__ = [
    "BivariateJet",
    "JetDiffeo",
    "TwoFormJet",
    "jet_add",
    "jet_mul",
    "jet_compose",
    "invert_jet",
    "corner_residues",
    "save_jet",
    "load_jet",
    "save_diffeo",
    "load_diffeo",
]


class JetError(ValueError):
    pass


class BivariateJet:
    """Exact Laurent-polynomial jet with explicit truncation metadata."""

    __slots__ = ("m_min", "coeffs")

    def __init__(self, m_min, coeffs):
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=complex))
        self.m_min = int(m_min)
        self.coeffs = coeffs

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, window=(0, 0), y_order=0):
        m0, m1 = window
        return cls(m0, np.zeros((m1 - m0 + 1, y_order + 1), dtype=complex))

    @classmethod
    def constant(cls, value, window=(0, 0), y_order=0):
        jet = cls.zero(window, y_order)
        jet[0, 0] = value
        return jet

    @classmethod
    def from_terms(cls, terms, y_order=None):
        """Build from a {(m, n): coeff} mapping."""
        ms = [m for m, _ in terms]
        ns = [n for _, n in terms]
        if min(ns) < 0:
            raise JetError("negative y exponents are not representable")
        m0, m1 = min(ms), max(ms)
        N = max(ns) if y_order is None else y_order
        jet = cls.zero((m0, m1), N)
        for (m, n), c in terms.items():
            if n <= N:
                jet[m, n] = c
        return jet

    @classmethod
    def variable_z(cls, y_order=0):
        return cls.from_terms({(1, 0): 1.0}, y_order=y_order)

    @classmethod
    def variable_y(cls, y_order=1):
        return cls.from_terms({(0, 1): 1.0}, y_order=y_order)

    # -- basic structure ----------------------------------------------
    @property
    def m_max(self):
        return self.m_min + self.coeffs.shape[0] - 1

    @property
    def window(self):
        return (self.m_min, self.m_max)

    @property
    def y_order(self):
        return self.coeffs.shape[1] - 1

    def __getitem__(self, key):
        m, n = key
        if self.m_min <= m <= self.m_max and 0 <= n <= self.y_order:
            return self.coeffs[m - self.m_min, n]
        return 0j

    def __setitem__(self, key, value):
        m, n = key
        if not (self.m_min <= m <= self.m_max and 0 <= n <= self.y_order):
            raise JetError(f"index {key} outside window {self.window} x [0,{self.y_order}]")
        self.coeffs[m - self.m_min, n] = value

    def copy(self):
        return BivariateJet(self.m_min, self.coeffs.copy())

    def truncate(self, window=None, y_order=None):
        """Restrict to a smaller window / lower y order (drops coefficients)."""
        m0, m1 = self.window if window is None else window
        N = self.y_order if y_order is None else min(y_order, self.y_order)
        out = BivariateJet.zero((m0, m1), N)
        lo, hi = max(m0, self.m_min), min(m1, self.m_max)
        if lo <= hi:
            out.coeffs[lo - m0 : hi - m0 + 1, : N + 1] = self.coeffs[
                lo - self.m_min : hi - self.m_min + 1, : N + 1
            ]
        return out

    def trim(self, tol=0.0):
        """Shrink the window to the actual support (within tol)."""
        mask = np.abs(self.coeffs) > tol
        rows = np.nonzero(mask.any(axis=1))[0]
        cols = np.nonzero(mask.any(axis=0))[0]
        if rows.size == 0:
            return BivariateJet.zero((0, 0), 0)
        out = BivariateJet(
            self.m_min + rows[0], self.coeffs[rows[0] : rows[-1] + 1, : cols[-1] + 1].copy()
        )
        return out

    def max_abs(self):
        return float(np.abs(self.coeffs).max()) if self.coeffs.size else 0.0

    def is_zero(self, tol=0.0):
        return bool((np.abs(self.coeffs) <= tol).all())

    # -- ring operations ----------------------------------------------
    def _aligned(self, other):
        m0 = min(self.m_min, other.m_min)
        m1 = max(self.m_max, other.m_max)
        N = min(self.y_order, other.y_order)
        a = self.truncate((m0, m1), N)
        b = other.truncate((m0, m1), N)
        return a, b

    def __add__(self, other):
        if np.isscalar(other):
            other = BivariateJet.constant(other, y_order=self.y_order)
        a, b = self._aligned(other)
        return BivariateJet(a.m_min, a.coeffs + b.coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            other = BivariateJet.constant(other, y_order=self.y_order)
        a, b = self._aligned(other)
        return BivariateJet(a.m_min, a.coeffs - b.coeffs)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __neg__(self):
        return BivariateJet(self.m_min, -self.coeffs)

    def __mul__(self, other):
        if np.isscalar(other):
            return BivariateJet(self.m_min, self.coeffs * other)
        N = min(self.y_order, other.y_order)
        c = convolve2d(self.coeffs, other.coeffs)[:, : N + 1]
        return BivariateJet(self.m_min + other.m_min, c)

    __rmul__ = __mul__

    def shift_z(self, k):
        """Multiply by z^k."""
        return BivariateJet(self.m_min + k, self.coeffs.copy())

    def dz(self):
        """d/dz; the window shifts down by one."""
        ms = np.arange(self.m_min, self.m_max + 1, dtype=float)[:, None]
        return BivariateJet(self.m_min - 1, ms * self.coeffs)

    def dy(self):
        if self.y_order == 0:
            return BivariateJet.zero(self.window, 0)
        ns = np.arange(1, self.y_order + 1, dtype=float)[None, :]
        return BivariateJet(self.m_min, ns * self.coeffs[:, 1:])

    def y_coefficient(self, n):
        """The z-Laurent coefficient array of y^n (aligned with the window)."""
        return self.coeffs[:, n].copy()

    def restrict_y0(self):
        """Restriction to y = 0, as a jet."""
        return BivariateJet(self.m_min, self.coeffs[:, :1].copy())

    def inverse_unit(self, n_terms=None):
        """Reciprocal of a unit jet.

        Requires a nonzero (0, 0) coefficient and no other pure-z terms with
        m < 0 ... more precisely the non-constant part must be nilpotent in
        the grading used: either it vanishes at y=0 (y-graded) or it has
        nonnegative window and vanishes at (0,0) (total-degree graded).
        """
        c0 = self[0, 0]
        if c0 == 0:
            raise JetError("inverse of a non-unit jet (zero constant term)")
        w = self * (1.0 / c0)
        w[0, 0] = 0.0
        order = _nilpotency_order(w, n_terms)
        # geometric series 1/(1+w) = sum (-w)^k
        acc = BivariateJet.constant(1.0, (0, 0), w.y_order)
        powk = BivariateJet.constant(1.0, (0, 0), w.y_order)
        for k in range(1, order + 1):
            powk = powk * w
            acc = acc + (-1) ** k * powk
        return acc * (1.0 / c0)

    def log_unit(self):
        """log of a unit jet (principal branch on the constant term)."""
        c0 = self[0, 0]
        if c0 == 0:
            raise JetError("log of a non-unit jet")
        w = self * (1.0 / c0)
        w[0, 0] = 0.0
        order = _nilpotency_order(w, None)
        acc = BivariateJet.constant(np.log(complex(c0)), (0, 0), self.y_order)
        powk = BivariateJet.constant(1.0, (0, 0), self.y_order)
        for k in range(1, order + 1):
            powk = powk * w
            acc = acc + ((-1) ** (k + 1) / k) * powk
        return acc

    def exp(self):
        """exp of a jet whose non-constant part is nilpotent."""
        c0 = self[0, 0]
        w = self.copy()
        w[0, 0] = 0.0
        order = _nilpotency_order(w, None)
        acc = BivariateJet.constant(1.0, (0, 0), self.y_order)
        powk = BivariateJet.constant(1.0, (0, 0), self.y_order)
        fact = 1.0
        for k in range(1, order + 1):
            powk = powk * w
            fact *= k
            acc = acc + (1.0 / fact) * powk
        return acc * np.exp(complex(c0))

    def power_unit(self, exponent):
        """Fractional/complex power of a unit jet: exp(exponent * log)."""
        return (self.log_unit() * exponent).exp()

    def int_power(self, k):
        """Integer power; negative k requires a unit jet."""
        if k == 0:
            return BivariateJet.constant(1.0, (0, 0), self.y_order)
        base = self if k > 0 else self.inverse_unit()
        out = base.copy()
        for _ in range(abs(k) - 1):
            out = out * base
        return out

    # -- evaluation ----------------------------------------------------
    def eval(self, z, y):
        """Evaluate at (broadcastable) complex points."""
        z = np.asarray(z, dtype=complex)
        y = np.asarray(y, dtype=complex)
        ms = np.arange(self.m_min, self.m_max + 1)
        ns = np.arange(self.y_order + 1)
        zp = z[..., None] ** ms  # (..., W)
        yp = y[..., None] ** ns  # (..., N+1)
        return np.einsum("...m,mn,...n->...", zp, self.coeffs, yp)

    def __repr__(self):
        return f"BivariateJet(window={self.window}, y_order={self.y_order})"

    def __str__(self):
        parts = []
        for m in range(self.m_min, self.m_max + 1):
            for n in range(self.y_order + 1):
                c = self[m, n]
                if c != 0:
                    parts.append(f"({c:.6g})*z^{m}*y^{n}")
        return " + ".join(parts) if parts else "0"


def _nilpotency_order(w, cap):
    """Number of powers of w that can contribute within its truncation."""
    if w.is_zero():
        return 0
    if w.restrict_y0().is_zero():
        order = w.y_order  # y-graded: w = O(y)
    elif w.m_min >= 0 and w[0, 0] == 0:
        order = w.m_max * max(w.y_order, 1) + w.y_order  # total-degree graded
        order = min(order, (w.m_max + w.y_order) * 2 + 4)
    else:
        raise JetError(
            "non-nilpotent perturbation: unit operations need the non-constant "
            "part to vanish along y=0 or to have nonnegative window"
        )
    if cap is not None:
        order = min(order, cap)
    return max(order, 1)


def jet_add(a, b):
    """Coefficientwise sum carrying the common y truncation."""
    return a + b


def jet_mul(a, b):
    """Cauchy product truncated to the common y order."""
    return a * b


CHART_CURVE = "curve"
CHART_CORNER = "corner"


class JetDiffeo:
    """Two-component jet map with a chart tag.

    curve chart: (z, y) -> (Z(z,y), Y(z,y)), Z = z * unit, Y divisible by y.
    corner chart: (X, Y) -> (X*a(X,Y), Y*b(X,Y)): both components divisible
    by their variable (the divisor is preserved).
    """

    __slots__ = ("comp1", "comp2", "chart")

    def __init__(self, comp1, comp2, chart=CHART_CURVE):
        self.comp1 = comp1
        self.comp2 = comp2
        self.chart = chart

    @classmethod
    def identity(cls, window=(0, 1), y_order=1, chart=CHART_CURVE):
        c1 = BivariateJet.zero((min(0, window[0]), max(1, window[1])), y_order)
        c1[1, 0] = 1.0
        c2 = BivariateJet.zero((0, 0), max(1, y_order))
        c2[0, 1] = 1.0
        return cls(c1, c2, chart)

    @classmethod
    def from_unit_factors(cls, u, v, chart=CHART_CORNER):
        """Map (x*u(x,y), y*v(x,y)) from its two unit factors."""
        x = BivariateJet.variable_z(u.y_order)
        y = BivariateJet.variable_y(max(v.y_order, 1))
        return cls(x * u, y * v, chart)

    @property
    def y_order(self):
        return min(self.comp1.y_order, self.comp2.y_order)

    def unit_factors(self):
        """(u, v) with comp1 = x*u, comp2 = y*v (requires divisibility)."""
        u = self.comp1.shift_z(-1)
        v = _divide_by_y(self.comp2)
        return u, v

    def linear_part(self):
        """Multipliers (c, d) of the diagonal linear part (c*x, d*y)."""
        return self.comp1[1, 0], self.comp2[0, 1]

    def is_tangent_to_identity(self, tol=0.0):
        c, d = self.linear_part()
        return abs(c - 1) <= tol and abs(d - 1) <= tol

    def eval(self, z, y):
        return self.comp1.eval(z, y), self.comp2.eval(z, y)

    def copy(self):
        return JetDiffeo(self.comp1.copy(), self.comp2.copy(), self.chart)

    def max_deviation_from_identity(self):
        d1 = self.comp1 - BivariateJet.variable_z()
        d2 = self.comp2 - BivariateJet.variable_y()
        return max(d1.max_abs(), d2.max_abs())

    def __repr__(self):
        return f"JetDiffeo(chart={self.chart!r}, y_order={self.y_order})"


def _divide_by_y(jet):
    if jet.coeffs.shape[1] < 2 or np.abs(jet.coeffs[:, 0]).max(initial=0.0) > 0:
        raise JetError("component not divisible by y")
    return BivariateJet(jet.m_min, jet.coeffs[:, 1:].copy())


def substitute(f, phi, window_cap=None):
    """f(phi) for a jet f and a JetDiffeo phi, truncated to common y order.

    Uses the factorizations Z = z*u, Y = y*v with u, v units, so negative
    powers of Z are well defined at jet level.  ``window_cap`` truncates
    intermediate (and final) z-windows; without it, windows take exact
    support hulls, which grow under repeated composition.
    """
    u, v = phi.unit_factors()
    N = min(f.y_order, phi.y_order)
    u = u.truncate(None, N)
    v = v.truncate(None, N)

    def capped(jet):
        return jet if window_cap is None else jet.truncate(window_cap, None)

    acc = None
    u_pows = {0: BivariateJet.constant(1.0, (0, 0), N)}
    v_pows = {0: BivariateJet.constant(1.0, (0, 0), N)}

    def upow(k):
        if k not in u_pows:
            if k > 0:
                u_pows[k] = capped(upow(k - 1) * u)
            else:
                if -1 not in u_pows:
                    u_pows[-1] = capped(u.inverse_unit())
                u_pows[k] = capped(upow(k + 1) * u_pows[-1]) if k < -1 else u_pows[-1]
        return u_pows[k]

    def vpow(k):
        if k not in v_pows:
            v_pows[k] = capped(vpow(k - 1) * v)
        return v_pows[k]

    for m in range(f.m_min, f.m_max + 1):
        col = None
        for n in range(0, min(f.y_order, N) + 1):
            c = f[m, n]
            if c == 0:
                continue
            term = (c * vpow(n)).truncate(None, max(N - n, 0))
            term = _shift_y(term, n)
            col = term if col is None else col + term
        if col is None:
            continue
        term = col * upow(m)
        term = _shift_window(term, m)
        acc = capped(term) if acc is None else capped(acc + term)
    if acc is None:
        acc = BivariateJet.zero((0, 0), N)
    return acc.truncate(None, N)


def _shift_y(jet, n):
    """Multiply by y^n (raises y exponents; keeps array length by padding)."""
    if n == 0:
        return jet
    c = np.pad(jet.coeffs, ((0, 0), (n, 0)))
    return BivariateJet(jet.m_min, c)


def _shift_window(jet, m):
    return BivariateJet(jet.m_min + m, jet.coeffs.copy())


def jet_compose(outer, inner, window_cap=None):
    """outer composed with inner, truncated to the common y order."""
    if outer.chart != inner.chart:
        raise JetError("composition across different charts")
    c1 = substitute(outer.comp1, inner, window_cap)
    c2 = substitute(outer.comp2, inner, window_cap)
    return JetDiffeo(c1, c2, outer.chart)


def invert_jet(phi, tol=1e-9, window_cap=None):
    """Inverse of a jet diffeomorphism with invertible diagonal linear part.

    Successive substitution against the linear part; one y-grading (or
    total-degree grading) order is gained per sweep.  The y^n coefficient of
    the true inverse has z-support inside (n+1) times phi's window hull, so
    the default window cap is lossless for the reported range.  The round
    trip phi o phi^{-1} = id is verified to jet truncation.
    """
    c, d = phi.linear_part()
    if c == 0 or d == 0:
        raise JetError("non-invertible linear part")
    N = phi.y_order
    if window_cap is None:
        lo = min(phi.comp1.m_min, phi.comp2.m_min, 0)
        hi = max(phi.comp1.m_max, phi.comp2.m_max, 1)
        window_cap = ((N + 2) * lo, (N + 2) * hi)
    # H := phi - linear part (component jets)
    h1 = phi.comp1 - BivariateJet.from_terms({(1, 0): c}, y_order=N)
    h2 = phi.comp2 - BivariateJet.from_terms({(0, 1): d}, y_order=N)
    guess = JetDiffeo(
        BivariateJet.from_terms({(1, 0): 1.0 / c}, y_order=N),
        BivariateJet.from_terms({(0, 1): 1.0 / d}, y_order=N),
        phi.chart,
    )
    ident1 = BivariateJet.variable_z(N)
    ident2 = BivariateJet.variable_y(N)
    sweeps = min(max(2 * N + 2, 4), 40)
    for _ in range(sweeps):
        # G <- L^{-1} (id - H(G))
        hg1 = substitute(h1, guess, window_cap)
        hg2 = substitute(h2, guess, window_cap)
        new = JetDiffeo(
            (ident1 - hg1) * (1.0 / c), (ident2 - hg2) * (1.0 / d), phi.chart
        )
        delta = max((new.comp1 - guess.comp1).max_abs(), (new.comp2 - guess.comp2).max_abs())
        guess = new
        if delta == 0.0:
            break
    check = jet_compose(phi, guess, window_cap)
    dev = check.max_deviation_from_identity()
    scale = max(phi.comp1.max_abs(), phi.comp2.max_abs(), 1.0)
    if dev > tol * scale:
        raise JetError(f"inversion failed to converge (round-trip deviation {dev:.3e})")
    return guess


class TwoFormJet:
    """2-form W(X,Y) dX^dY / (X^pole_x Y^pole_y) with pole flags in {0,1}."""

    __slots__ = ("coeff", "pole_x", "pole_y")

    def __init__(self, coeff, pole_x=False, pole_y=False):
        self.coeff = coeff
        self.pole_x = bool(pole_x)
        self.pole_y = bool(pole_y)


def corner_residues(form):
    """Residual parts of a logarithmic 2-form along the two axes.

    Returns (res_X, res_Y): the restriction of the numerator jet to X=0
    (a jet in Y) and to Y=0 (a jet in X).  A missing pole flag gives an
    identically zero residue.  Forms with higher-order poles are not
    representable in this type, so no further checks are needed.
    """
    W = form.coeff
    if form.pole_x:
        if W.m_min < 0:
            raise JetError("numerator with negative X powers: higher-order pole")
        res_x = W.truncate((0, 0), None)
    else:
        res_x = BivariateJet.zero((0, 0), W.y_order)
    if form.pole_y:
        res_y = W.restrict_y0()
    else:
        res_y = BivariateJet.zero(W.window, 0)
    return res_x, res_y


# -- serialization -----------------------------------------------------

def save_jet(jet, fh):
    """Text format: header + one `m n re im` line per stored coefficient.

    Floats are written with repr, which round-trips doubles bit-exactly.
    """
    close = False
    if isinstance(fh, str):
        fh = open(fh, "w")
        close = True
    try:
        fh.write(f"jet z_window=({jet.m_min},{jet.m_max}) y_order={jet.y_order}\n")
        for m in range(jet.m_min, jet.m_max + 1):
            for n in range(jet.y_order + 1):
                c = jet[m, n]
                if c != 0:
                    fh.write(f"{m} {n} {float(c.real)!r} {float(c.imag)!r}\n")
    finally:
        if close:
            fh.close()


def load_jet(fh):
    close = False
    if isinstance(fh, str):
        fh = open(fh)
        close = True
    try:
        header = fh.readline().strip()
        if not header.startswith("jet "):
            raise JetError(f"not a jet header: {header!r}")
        fields = dict(part.split("=") for part in header[4:].split())
        m0, m1 = (int(v) for v in fields["z_window"].strip("()").split(","))
        N = int(fields["y_order"])
        jet = BivariateJet.zero((m0, m1), N)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("jet ") or line.startswith("diffeo"):
                raise JetError("unexpected header inside jet block")
            m, n, re, im = line.split()
            jet[int(m), int(n)] = complex(float(re), float(im))
        return jet
    finally:
        if close:
            fh.close()


def save_diffeo(phi, fh):
    close = False
    if isinstance(fh, str):
        fh = open(fh, "w")
        close = True
    try:
        fh.write(f"diffeo chart={phi.chart}\n")
        buf = io.StringIO()
        save_jet(phi.comp1, buf)
        save_jet(phi.comp2, buf)
        fh.write(buf.getvalue())
    finally:
        if close:
            fh.close()


def load_diffeo(fh):
    close = False
    if isinstance(fh, str):
        fh = open(fh)
        close = True
    try:
        header = fh.readline().strip()
        if not header.startswith("diffeo"):
            raise JetError(f"not a diffeo header: {header!r}")
        chart = header.split("chart=")[1].strip()
        text = fh.read()
        blocks = ["jet " + b for b in text.split("jet ") if b.strip()]
        if len(blocks) != 2:
            raise JetError("diffeo file must contain exactly two jet blocks")
        c1 = load_jet(io.StringIO(blocks[0]))
        c2 = load_jet(io.StringIO(blocks[1]))
        return JetDiffeo(c1, c2, chart)
    finally:
        if close:
            fh.close()
