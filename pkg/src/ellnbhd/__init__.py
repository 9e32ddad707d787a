"""Invariants of 2D neighborhoods of elliptic curves with torsion normal bundle.

Submodules
----------
jets        truncated bivariate Laurent/power series and jet diffeomorphisms
qdiff       q-difference equation solvers on C*
lattice     model maps, Serre-type isomorphisms, sectors, SL2(Z), torsion covers
normalform  order-by-order formal reduction to the model neighborhoods
homological difference equation phi(s+lam) - phi(s) = Delta(s) on strips
sectorial   nonlinear fixed point producing sectorial conjugacies
cocycle     classifying cocycles, normalization, equivalence, symmetries
foliation   foliation existence tests on cocycles
cli         batch command-line front end
"""

from .jets import (
    BivariateJet,
    JetDiffeo,
    TwoFormJet,
    corner_residues,
    invert_jet,
    jet_add,
    jet_compose,
    jet_mul,
)
from .qdiff import (
    IllConditionedError,
    IndexNonZeroError,
    NonSolvableError,
    solve_additive,
    solve_multiplicative,
    topological_index,
)

__version__ = "0.1.0"
