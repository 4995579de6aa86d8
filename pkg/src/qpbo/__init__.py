"""Spectral toolkit for the quasiperiodic Benjamin-Ono equation."""
from .lattice import FrequencyBasis, make_basis, enumerate_box
from .field import (
    QpField, make_field, zeros, random_field, evaluate, hilbert, d_dx, frac_deriv,
    chi_cutoff, delta_regularize, multiply, power, pair, sobolev_norm,
    l1_coeff_norm, leibniz_commutator, project,
)

__version__ = "0.1.0"
