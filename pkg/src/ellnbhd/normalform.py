"""Order-by-order formal reduction to the model neighborhoods.

For F(z, y) = (qz + ..., y + ...) with trivial normal bundle, the reduction
builds a tangent-to-identity conjugacy Psi = (z + sum a_j(z) y^j,
y + sum b_j(z) y^j) with Psi o F = G o Psi against a model G, solving one
pair of q-difference equations per y-order:

    comp1 row j:  a_j(q z) - q a_j(z) = -(residual row)    [modes n != 1]
    comp2 row j:  b_j(q z) -   b_j(z) = -(residual row)    [modes n != 0]

The excluded modes are obstructions.  The free coefficients a_{j,1} and
b_{j,0} shift the next row's obstruction; the shift slope is probed
numerically, and a vanishing slope marks a genuine invariant slot (the
alpha and beta constants for k = 1).  That avoids trusting the step
bookkeeping at the special low orders, where the generic-step coefficients
do not apply.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .jets import BivariateJet, JetDiffeo, jet_compose
from .lattice import LatticeParams, ModelSpec, model_jet
from .qdiff import topological_index, solve_multiplicative

__all__ = [
    "FormalReport",
    "IndeterminateObstruction",
    "detect_normal_bundle",
    "ueda_type",
    "reduce",
    "canonical_P",
]

ZERO_TOL = 1e-10
AMBIGUOUS_TOL = 1e-6
SLOPE_TOL = 1e-8


class IndeterminateObstruction(ArithmeticError):
    """Obstruction magnitude falls in the ambiguous band [1e-10, 1e-6]."""


@dataclass
class FormalReport:
    ueda_type: object
    alpha: complex
    beta: complex
    model: ModelSpec
    psi: JetDiffeo
    steps: list = field(default_factory=list)
    residual_max: float = float("nan")
    certified: bool = False
    gauge_t: complex = 0.0

    def to_json(self):
        def cplx(c):
            c = complex(c)
            return [c.real, c.imag]

        return json.dumps(
            {
                "ueda_type": self.ueda_type if isinstance(self.ueda_type, str) else int(self.ueda_type),
                "alpha": cplx(self.alpha),
                "beta": cplx(self.beta),
                "model": {
                    "k": self.model.k,
                    "nu": cplx(self.model.nu),
                    "P": [cplx(c) for c in self.model.P],
                },
                "gauge_t": cplx(self.gauge_t),
                "residual_max": self.residual_max,
                "certified": self.certified,
                "steps": self.steps,
            },
            indent=2,
        )


def _row_jet(jet, j):
    """The y^j coefficient row of a jet, as a pure-z jet."""
    if j > jet.y_order:
        return BivariateJet.zero(jet.window, 0)
    return BivariateJet(jet.m_min, jet.coeffs[:, j : j + 1].copy())


def _f_scale(F):
    return max(F.comp1.max_abs(), F.comp2.max_abs(), 1.0)


def _extract_q(F):
    q = complex(F.comp1[1, 0])
    row0_1 = _row_jet(F.comp1, 0)
    row0_1[1, 0] = 0.0
    row0_2 = _row_jet(F.comp2, 0)
    if row0_1.max_abs() > 1e-12 * _f_scale(F) or row0_2.max_abs() > 1e-12 * _f_scale(F):
        raise ValueError("F does not fix the curve: F(z, 0) must be (qz, 0)")
    if not 0 < abs(q) < 1:
        raise ValueError(f"multiplier q = {q!r} must satisfy 0 < |q| < 1")
    return q


def detect_normal_bundle(F):
    """(topological index of the y-linear coefficient, flat monodromy a).

    Index 0 with a = 1 means the normal bundle is the trivial flat bundle;
    a nonzero index is the degree of the normal bundle and blocks reduction.
    """
    _extract_q(F)
    lam = _row_jet(F.comp2, 1).trim()
    index = topological_index(lam)
    if index != 0:
        return index, None
    q = _extract_q(F)
    _, a = solve_multiplicative(lam, q)
    return 0, a


def _linearize_bundle(F, q):
    """Conjugate by (z, phi(z) y) so the y-linear coefficient is constant."""
    lam = _row_jet(F.comp2, 1).trim()
    if lam.window == (0, 0):
        return F, complex(lam[0, 0])
    phi, a = solve_multiplicative(lam, q)
    inv_phi = _laurent_reciprocal(phi)
    N = F.y_order
    psi1 = JetDiffeo(BivariateJet.variable_z(N), _mul_row(phi, N), "curve")
    psi1_inv = JetDiffeo(BivariateJet.variable_z(N), _mul_row(inv_phi, N), "curve")
    cap = _default_cap(F)
    out = jet_compose(psi1_inv, jet_compose(F, psi1, cap), cap)
    return out, a


def _mul_row(phi, N):
    """(z, phi(z) y)'s second component."""
    c = np.zeros((phi.coeffs.shape[0], N + 1), dtype=complex)
    c[:, 1] = phi.coeffs[:, 0]
    return BivariateJet(phi.m_min, c)


def _laurent_reciprocal(f, n_samples=4096):
    theta = 2 * np.pi * np.arange(n_samples) / n_samples
    vals = f.eval(np.exp(1j * theta), np.zeros(n_samples))
    modes = np.fft.fft(1.0 / vals) / n_samples
    w = max(abs(f.m_min), abs(f.m_max), 1)
    out = BivariateJet.zero((-3 * w, 3 * w), 0)
    chop = 1e-14 * np.abs(modes).max()
    for m in range(-3 * w, 3 * w + 1):
        c = modes[m % n_samples]
        if abs(c) > chop:
            out[m, 0] = c
    return out


def _default_cap(F):
    c1 = F.comp1.trim(1e-14 * _f_scale(F))
    c2 = F.comp2.trim(1e-14 * _f_scale(F))
    w = max(abs(c1.m_min), abs(c1.m_max), abs(c2.m_min), abs(c2.m_max), 1)
    N = F.y_order
    pad = 2 * N + 6
    return (-(w + pad), w + pad)


def _solve_row(residual_row, q, skip_mode, scale):
    """Modewise solve of u(qz) - c u(z) = -row, excluding the obstruction mode.

    skip_mode = 1 solves a(qz) - q a(z) (comp1); skip_mode = 0 solves
    b(qz) - b(z) (comp2).  Returns (solution jet, obstruction coefficient).
    """
    c = q if skip_mode == 1 else 1.0
    sol = BivariateJet.zero(residual_row.window, 0)
    obstruction = 0j
    for m in range(residual_row.m_min, residual_row.m_max + 1):
        val = residual_row[m, 0]
        if m == skip_mode:
            obstruction = val
            continue
        if val == 0:
            continue
        if m >= 0:
            sol[m, 0] = -val / (q**m - c)
        else:
            p = q ** (-m)  # |p| < 1: q^m - c = (1 - c p)/p, stable for deep modes
            sol[m, 0] = -val * p / (1.0 - c * p)
    return sol, obstruction


class _Ladder:
    """Joint state of the order-by-order conjugacy solve."""

    def __init__(self, F, G, q, cap):
        self.F = F
        self.G = G
        self.q = q
        self.cap = cap
        self.N = min(F.y_order, G.y_order)
        self.scale = _f_scale(F)
        win = cap
        self.a = {j: BivariateJet.zero(win, 0) for j in range(1, self.N + 1)}
        self.b = {j: BivariateJet.zero(win, 0) for j in range(2, self.N + 1)}

    def psi(self):
        N = self.N
        comp1 = BivariateJet.zero(self.cap, N)
        comp1[1, 0] = 1.0
        comp2 = BivariateJet.zero(self.cap, N)
        comp2[0, 1] = 1.0
        for j, jet in self.a.items():
            for m in range(jet.m_min, jet.m_max + 1):
                if self.cap[0] <= m <= self.cap[1] and jet[m, 0] != 0:
                    comp1[m, j] += jet[m, 0]
        for j, jet in self.b.items():
            for m in range(jet.m_min, jet.m_max + 1):
                if self.cap[0] <= m <= self.cap[1] and jet[m, 0] != 0:
                    comp2[m, j] += jet[m, 0]
        return JetDiffeo(comp1, comp2, "curve")

    def residual(self):
        psi = self.psi()
        left = jet_compose(psi, self.F, self.cap)
        right = jet_compose(self.G, psi, self.cap)
        return JetDiffeo(left.comp1 - right.comp1, left.comp2 - right.comp2, "curve")

    def residual_rows(self, j):
        r = self.residual()
        return _row_jet(r.comp1, j).truncate(self.cap, None), _row_jet(
            r.comp2, j
        ).truncate(self.cap, None)


def reduce(F, order=None, model=None, params=None, gauge_t=0.0, auto_fit=False):
    """Full reduction of F to a model, with certificate.

    Returns a FormalReport whose psi satisfies psi o F = G o psi to the
    requested order when certified.  gauge_t sets the otherwise-free
    constant whose exponentiation is the reparametrization
    (z, y/(1 - t y)); two runs with different gauge_t differ by exactly
    that map.  With auto_fit=True, unkillable obstructions are absorbed
    into the model parameters (nu and the coefficients of P), discovering
    the normal form instead of certifying against a fixed one.
    """
    q = _extract_q(F)
    if params is None:
        params = LatticeParams(np.log(q) / (2j * np.pi))
    if order is None:
        order = F.y_order
    index, a = detect_normal_bundle(F)
    if index != 0:
        raise ValueError(f"normal bundle has degree {index}; reduction requires index 0")
    if abs(a - 1.0) > AMBIGUOUS_TOL:
        raise ValueError(f"normal bundle has nontrivial flat monodromy a = {a!r}")
    F_work, _ = _linearize_bundle(F, q)
    F_work = JetDiffeo(
        F_work.comp1.truncate(None, order), F_work.comp2.truncate(None, order), "curve"
    )
    if model is None:
        model = ModelSpec(1)
    steps = []
    model, ladder, invariants = _run_ladder(
        F_work, model, params, order, gauge_t, steps, auto_fit
    )
    alpha = invariants.get(("comp1", 1), 0j)
    beta = 1.0 + invariants.get(("comp2", 3), 0j)
    res = ladder.residual()
    res_max = max(res.comp1.max_abs(), res.comp2.max_abs())
    certified = res_max < ZERO_TOL * ladder.scale and all(
        abs(v) < ZERO_TOL * ladder.scale
        for key, v in invariants.items()
        if key not in (("comp1", 1), ("comp2", 3))
    )
    if model.is_serre_model():
        certified = certified and abs(alpha) < ZERO_TOL and abs(beta - 1.0) < ZERO_TOL
    return FormalReport(
        ueda_type=model.k,
        alpha=alpha,
        beta=beta,
        model=model,
        psi=ladder.psi(),
        steps=steps,
        residual_max=res_max,
        certified=certified,
        gauge_t=gauge_t,
    )


def _run_ladder(F, model, params, order, gauge_t, steps, auto_fit):
    """Sequential solve; returns (possibly refitted model, ladder, invariants)."""
    q = params.q
    cap = _default_cap(F)
    G = model_jet(model, params, order)
    ladder = _Ladder(F, G, q, cap)
    invariants = {}
    free_prev = {"comp1": None, "comp2": None}  # (row, kind) of pending free params

    for j in range(1, ladder.N + 1):
        for comp, skip in (("comp1", 1), ("comp2", 0)):
            if comp == "comp2" and j < 2:
                continue
            row1, row2 = ladder.residual_rows(j)
            row = row1 if comp == "comp1" else row2
            sol, obstruction = _solve_row(row, q, skip, ladder.scale)
            # try to kill the obstruction with the previous row's free mode
            killed = False
            pending = free_prev[comp]
            if pending is not None and abs(obstruction) > ZERO_TOL * ladder.scale:
                slope = _probe_slope(ladder, pending, comp, j, skip)
                if abs(slope) > SLOPE_TOL:
                    _bump_free(ladder, pending, -obstruction / slope, comp)
                    row1, row2 = ladder.residual_rows(j)
                    row = row1 if comp == "comp1" else row2
                    sol, obstruction = _solve_row(row, q, skip, ladder.scale)
                    killed = True
            if abs(obstruction) > ZERO_TOL * ladder.scale and not killed:
                if auto_fit:
                    model, G = _absorb_into_model(
                        ladder, model, params, order, comp, j, skip, obstruction, steps
                    )
                    row1, row2 = ladder.residual_rows(j)
                    row = row1 if comp == "comp1" else row2
                    sol, obstruction = _solve_row(row, q, skip, ladder.scale)
                if abs(obstruction) > ZERO_TOL * ladder.scale:
                    invariants[(comp, j)] = obstruction
            if comp == "comp1":
                ladder.a[j] = ladder.a[j] + sol
            else:
                ladder.b[j] = ladder.b[j] + sol
            steps.append(
                {
                    "row": j,
                    "component": comp,
                    "obstruction": [obstruction.real, obstruction.imag],
                    "killed_by_free_constant": killed,
                }
            )
            free_prev[comp] = j
        # gauge: the y^2 mean of psi's second component is the t freedom
        if j == 2 and gauge_t != 0.0:
            ladder.b[2][0, 0] += gauge_t
    return model, ladder, invariants


def _probe_slope(ladder, row, comp, j, skip):
    base = ladder.residual_rows(j)[0 if comp == "comp1" else 1]
    base_obs = base[skip, 0]
    _bump_free(ladder, row, 1.0, comp)
    bumped = ladder.residual_rows(j)[0 if comp == "comp1" else 1]
    _bump_free(ladder, row, -1.0, comp)
    return bumped[skip, 0] - base_obs


def _bump_free(ladder, row, amount, comp="comp2"):
    if comp == "comp1":
        ladder.a[row][1, 0] += amount
    else:
        ladder.b[row][0, 0] += amount


def _absorb_into_model(ladder, model, params, order, comp, j, skip, obstruction, steps):
    """Fit one model parameter (nu or a P coefficient) to kill an obstruction."""
    candidates = [("nu", None)] + [("P", i) for i in range(model.k)]
    best = None
    for name, idx in candidates:
        trial = _perturbed_model(model, name, idx, 1.0)
        Gt = model_jet(trial, params, order)
        old_G = ladder.G
        ladder.G = Gt
        row = ladder.residual_rows(j)[0 if comp == "comp1" else 1]
        ladder.G = old_G
        slope = row[skip, 0] - obstruction
        if best is None or abs(slope) > abs(best[2]):
            best = (name, idx, slope)
    name, idx, slope = best
    if abs(slope) < SLOPE_TOL:
        return model, ladder.G  # nothing absorbs it: leave as invariant
    model = _perturbed_model(model, name, idx, -obstruction / slope)
    ladder.G = model_jet(model, params, order)
    steps.append(
        {
            "row": j,
            "component": comp,
            "fitted_parameter": name if idx is None else f"P[{idx}]",
            "value": [(-obstruction / slope).real, (-obstruction / slope).imag],
        }
    )
    return model, ladder.G


def _perturbed_model(model, name, idx, amount):
    if name == "nu":
        return ModelSpec(model.k, model.nu + amount, model.P, model.torsion)
    P = list(model.P) + [0j] * (model.k - len(model.P))
    P[idx] = P[idx] + amount
    while P and P[-1] == 0:
        P.pop()
    return ModelSpec(model.k, model.nu, tuple(P), model.torsion)


def ueda_type(F, max_k=8):
    """Smallest k with a nonremovable tangential obstruction, or ">= max_k".

    Reduces toward the linear model (qz, y): the first y-row whose constant
    obstruction survives gives k = row - 1, and the returned jet has that
    constant rescaled to 1 by the (z, lambda y) freedom.  Obstruction
    magnitudes inside [1e-10, 1e-6] (relative) raise
    IndeterminateObstruction.
    """
    q = _extract_q(F)
    index, a = detect_normal_bundle(F)
    if index != 0 or abs(a - 1.0) > AMBIGUOUS_TOL:
        raise ValueError("ueda_type requires a trivial normal bundle")
    F_work, _ = _linearize_bundle(F, q)
    cap = _default_cap(F)
    N = F.y_order
    lin = JetDiffeo(
        BivariateJet.from_terms({(1, 0): q}, y_order=N),
        BivariateJet.variable_y(N),
        "curve",
    )
    ladder = _Ladder(F_work, lin, q, cap)
    for j in range(1, min(max_k + 1, ladder.N) + 1):
        for comp, skip in (("comp1", 1), ("comp2", 0)):
            if comp == "comp2" and j < 2:
                continue
            row1, row2 = ladder.residual_rows(j)
            row = row1 if comp == "comp1" else row2
            sol, obstruction = _solve_row(row, q, skip, ladder.scale)
            if comp == "comp2":
                mag = abs(obstruction) / ladder.scale
                if ZERO_TOL <= mag <= AMBIGUOUS_TOL:
                    raise IndeterminateObstruction(
                        f"obstruction magnitude {mag:.3e} at row {j} is ambiguous"
                    )
                if mag > AMBIGUOUS_TOL:
                    k = j - 1
                    return k, _rescale_leading(F_work, k, obstruction)
                ladder.b[j] = ladder.b[j] + sol
            else:
                ladder.a[j] = ladder.a[j] + sol
    return f">= {max_k}", F_work


def _rescale_leading(F, k, b):
    """(z, lambda y) conjugation scaling the y^{k+1} constant to 1."""
    lam = complex(b) ** (-1.0 / k)
    N = F.y_order
    scale = JetDiffeo(
        BivariateJet.variable_z(N),
        BivariateJet.from_terms({(0, 1): lam}, y_order=N),
        "curve",
    )
    unscale = JetDiffeo(
        BivariateJet.variable_z(N),
        BivariateJet.from_terms({(0, 1): 1.0 / lam}, y_order=N),
        "curve",
    )
    cap = _default_cap(F)
    return jet_compose(unscale, jet_compose(F, scale, cap), cap)


def canonical_P(P, kprime):
    """Lexicographically minimal representative of P under P(X) -> P(mu X).

    mu runs over the kprime-th roots of unity; the order compares the
    flattened (real, imag) coefficient tuples.
    """
    P = tuple(complex(c) for c in P)
    best = None
    for j in range(max(int(kprime), 1)):
        mu = np.exp(2j * np.pi * j / kprime)
        cand = tuple(c * mu**i for i, c in enumerate(P))
        key = tuple(x for c in cand for x in (round(c.real, 12), round(c.imag, 12)))
        if best is None or key < best[0]:
            best = (key, cand)
    return best[1]
