"""Exact jet-level solvers for q-difference equations on C*.

Both equations act on Laurent-polynomial jets in z alone:

    additive        phi(q z) - phi(z) = g(z)
    multiplicative  phi(q z) / phi(z) = f(z) / a

The additive solve is modewise division, phi_n = g_n / (q^n - 1); it is
solvable iff the mean g_0 vanishes, and the n = 0 coefficient is free
(canonically set to 0).  The multiplicative equation requires topological
index 0, computed by phase tracking on |z| = 1; the constant a = exp(g_0)
absorbs the mean of log f.
"""

from __future__ import annotations

import numpy as np

from .jets import BivariateJet

__all__ = [
    "NonSolvableError",
    "IndexNonZeroError",
    "IllConditionedError",
    "topological_index",
    "solve_additive",
    "solve_multiplicative",
]

RESONANCE_GUARD = 1e-8


class NonSolvableError(ValueError):
    """g has a nonzero mean; carries the obstruction g_0."""

    def __init__(self, obstruction):
        self.obstruction = obstruction
        super().__init__(f"additive equation not solvable: mean {obstruction!r} != 0")


class IndexNonZeroError(ValueError):
    """f has nonzero winding on |z|=1; carries the integer index."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"multiplicative equation blocked: topological index {index}")


class IllConditionedError(ValueError):
    pass


def _as_laurent(jet):
    if isinstance(jet, BivariateJet):
        if jet.y_order != 0:
            raise ValueError("expected a pure-z jet (y_order 0)")
        return jet
    raise TypeError("expected a BivariateJet")


def solve_additive(g, q, mean_tol=1e-14):
    """Solve phi(qz) - phi(z) = g(z) for Laurent-jet g with zero mean.

    phi_n = g_n / (q^n - 1) for n != 0, phi_0 = 0.  Raises NonSolvableError
    when |g_0| exceeds mean_tol relative to the largest coefficient, and
    IllConditionedError if some divisor q^n - 1 falls under the resonance
    guard (cannot happen for |q| < 1 at moderate n).
    """
    g = _as_laurent(g)
    q = complex(q)
    if not 0 < abs(q) < 1:
        raise ValueError("need 0 < |q| < 1")
    scale = max(g.max_abs(), 1.0)
    g0 = g[0, 0]
    if abs(g0) > mean_tol * scale:
        raise NonSolvableError(g0)
    phi = BivariateJet.zero(g.window, 0)
    for m in range(g.m_min, g.m_max + 1):
        if m == 0:
            continue
        div = q**m - 1.0
        if abs(div) < RESONANCE_GUARD:
            raise IllConditionedError(f"near-resonant divisor q^{m} - 1 = {div!r}")
        phi[m, 0] = g[m, 0] / div
    return phi


def topological_index(f, n_samples=4096):
    """Winding number of z -> f(z) along |z| = 1, by phase tracking."""
    f = _as_laurent(f)
    theta = np.linspace(0.0, 2 * np.pi, n_samples, endpoint=False)
    vals = f.eval(np.exp(1j * theta), np.zeros_like(theta))
    if np.abs(vals).min() == 0.0:
        raise ZeroDivisionError("f vanishes on |z| = 1")
    phases = np.unwrap(np.angle(vals))
    closing = np.angle(vals[0] / vals[-1])  # step from last sample back to first
    winding = (phases[-1] - phases[0] + closing) / (2 * np.pi)
    return int(np.rint(winding))


def _supported_window(modes, n_samples, chop, cap=512):
    """Largest |m| with a mode above the noise floor, scanning outward."""
    hi = 0
    lo = 0
    half = min(n_samples // 2 - 1, cap)
    for m in range(1, half + 1):
        if abs(modes[m]) > chop:
            hi = m
        if abs(modes[-m % n_samples]) > chop:
            lo = -m
    return lo, max(hi, 1)


def _modes_to_jet(modes, n_samples, window):
    m0, m1 = window
    out = BivariateJet.zero((m0, m1), 0)
    chop = 1e-14 * np.abs(modes).max()
    for m in range(m0, m1 + 1):
        c = modes[m % n_samples]
        if abs(c) > chop:  # FFT noise amplifies when evaluated off |z| = 1
            out[m, 0] = c
    return out


def _log_modes(f, window, n_samples=4096):
    """Laurent coefficients of log f on |z| = 1 by FFT with tracked phase."""
    theta = 2 * np.pi * np.arange(n_samples) / n_samples
    vals = f.eval(np.exp(1j * theta), np.zeros_like(theta))
    logs = np.log(np.abs(vals)) + 1j * np.unwrap(np.angle(vals))
    modes = np.fft.fft(logs) / n_samples
    if window is None:
        window = _supported_window(modes, n_samples, 1e-15 * max(np.abs(modes).max(), 1.0))
    return _modes_to_jet(modes, n_samples, window)


def solve_multiplicative(f, q, window=None, n_samples=4096):
    """Solve phi(qz)/phi(z) = f(z)/a; returns (phi, a).

    f must be a unit Laurent jet, nonvanishing on |z| = 1 with topological
    index 0 (otherwise IndexNonZeroError carries the index, which equals the
    degree of the normal bundle in the geometric application).  a = exp(g_0)
    for g = log f; phi = exp of the additive solution of g - g_0, normalized
    by phi_0 = 1's mean convention.  The returned phi satisfies the equation
    pointwise on |z| = 1 to spectral accuracy of the declared window.
    """
    f = _as_laurent(f)
    index = topological_index(f, n_samples)
    if index != 0:
        raise IndexNonZeroError(index)
    g = _log_modes(f, window, n_samples)
    a = np.exp(complex(g[0, 0]))
    g0 = g.copy()
    g0[0, 0] = 0.0
    psi = solve_additive(g0, q)
    # exponentiate on the circle and read coefficients back off by FFT
    theta = 2 * np.pi * np.arange(n_samples) / n_samples
    zc = np.exp(1j * theta)
    phi_vals = np.exp(psi.eval(zc, np.zeros_like(theta)))
    modes = np.fft.fft(phi_vals) / n_samples
    if window is None:
        window = _supported_window(modes, n_samples, 1e-14 * np.abs(modes).max())
    phi = _modes_to_jet(modes, n_samples, window)
    return phi, a
