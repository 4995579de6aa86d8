"""Frequency basis and the integer lattice box it indexes.

A quasiperiodic function is stored by its coefficients on the cube
``{k in Z^N : |k_i| <= K}``.  Two magnitudes are attached to each lattice
point: the Euclidean length ``|k|`` (used by Sobolev weights, ``D^s`` and
the data regularizer) and the physical frequency ``alpha . k`` (used by the
Hilbert transform, ``d/dx`` and the ``chi_n`` cutoff).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

#: Smallest admissible |alpha . k| for nonzero k in the box.
RESONANCE_TOL = 1e-12


class ResonanceError(ValueError):
    """The frequency vector is (numerically) resonant on the requested box."""


@dataclass(frozen=True)
class FrequencyBasis:
    """Base frequencies ``alpha`` together with the truncation box radius."""

    alpha: tuple[float, ...]
    box_radius: int

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if len(alpha) < 1:
            raise ValueError("alpha must have at least one entry")
        if any(not math.isfinite(a) or a == 0.0 for a in alpha):
            raise ValueError(f"alpha entries must be finite and nonzero, got {alpha}")
        if int(self.box_radius) != self.box_radius or self.box_radius < 1:
            raise ValueError(f"box_radius must be a positive integer, got {self.box_radius}")
        object.__setattr__(self, "box_radius", int(self.box_radius))
        freq = np.abs(self.physical)
        freq.flat[self.center] = np.inf
        worst = float(freq.min())
        if worst < RESONANCE_TOL:
            raise ResonanceError(
                f"|alpha.k| = {worst:.3e} < {RESONANCE_TOL:g} for a nonzero k in the "
                f"box of radius {self.box_radius}"
            )

    @property
    def dim(self) -> int:
        return len(self.alpha)

    @property
    def side(self) -> int:
        return 2 * self.box_radius + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.side,) * self.dim

    @property
    def size(self) -> int:
        return self.side ** self.dim

    @property
    def center(self) -> int:
        """Flat (row-major) index of k = 0."""
        return (self.size - 1) // 2

    def with_radius(self, radius: int) -> "FrequencyBasis":
        if radius == self.box_radius:
            return self
        return _with_radius(self.alpha, int(radius))

    def compatible(self, other: "FrequencyBasis") -> bool:
        return self.alpha == other.alpha

    # Dense per-lattice-point tables, shape == self.shape.  Instances are
    # frozen, so caching on the instance is safe.

    @cached_property
    def grids(self) -> tuple[np.ndarray, ...]:
        axis = np.arange(-self.box_radius, self.box_radius + 1)
        return tuple(np.meshgrid(*([axis] * self.dim), indexing="ij"))

    @cached_property
    def physical(self) -> np.ndarray:
        """``alpha . k`` summed in coordinate order."""
        out = np.zeros(self.shape)
        for a, g in zip(self.alpha, self.grids):
            out = out + a * g
        # exact odd symmetry: compute once, negate for the reflected half
        flat = out.reshape(-1)
        half = self.center
        flat[half + 1:] = -flat[:half][::-1]
        flat[half] = 0.0
        out.flags.writeable = False
        return out

    @cached_property
    def norm_sq(self) -> np.ndarray:
        """Integer ``|k|^2``."""
        out = sum(g.astype(np.int64) ** 2 for g in self.grids)
        out.flags.writeable = False
        return out

    @cached_property
    def norm(self) -> np.ndarray:
        out = np.sqrt(self.norm_sq.astype(float))
        out.flags.writeable = False
        return out

    def bracket(self, s: float) -> np.ndarray:
        """``(1 + |k|^2)^s`` on the box."""
        return (1.0 + self.norm_sq) ** float(s)

    def euclid(self, s: float) -> np.ndarray:
        """``|k|^s`` on the box, with the k = 0 convention of :func:`euclid_weight`."""
        s = float(s)
        if s < 0:
            raise ValueError("negative order is undefined at k = 0")
        if s == 0:
            return np.ones(self.shape)
        return self.norm ** s

    @cached_property
    def sign(self) -> np.ndarray:
        out = np.sign(self.physical)
        out.flags.writeable = False
        return out

    @property
    def min_frequency(self) -> float:
        """Smallest nonzero ``|alpha . k|`` in the box."""
        freq = np.abs(self.physical).copy()
        freq.flat[self.center] = np.inf
        return float(freq.min())

    @property
    def max_frequency(self) -> float:
        return float(np.abs(self.physical).max())

    def index(self, k: Sequence[int]) -> tuple[int, ...]:
        """Array index of lattice point ``k``; raises if outside the box."""
        k = tuple(int(c) for c in k)
        if len(k) != self.dim:
            raise ValueError(f"lattice point {k} has wrong dimension (expected {self.dim})")
        if any(abs(c) > self.box_radius for c in k):
            raise IndexError(f"lattice point {k} lies outside the box of radius {self.box_radius}")
        return tuple(c + self.box_radius for c in k)


_RADIUS_CACHE: dict[tuple[tuple[float, ...], int], FrequencyBasis] = {}


def _with_radius(alpha: tuple[float, ...], radius: int) -> FrequencyBasis:
    key = (alpha, radius)
    basis = _RADIUS_CACHE.get(key)
    if basis is None:
        basis = _RADIUS_CACHE[key] = FrequencyBasis(alpha, radius)
    return basis


def make_basis(alpha: Sequence[float], box_radius: int) -> FrequencyBasis:
    return _with_radius(tuple(float(a) for a in alpha), int(box_radius))


def physical_frequency(basis: FrequencyBasis, k: Sequence[int]) -> float:
    return float(basis.physical[basis.index(k)])


def euclid_weight(k: Sequence[int], s: float) -> float:
    """``|k|^s``; zero at the origin for s >= 0."""
    n2 = sum(int(c) ** 2 for c in k)
    if n2 == 0:
        if s < 0:
            raise ValueError("|0|^s is undefined for s < 0")
        return 0.0
    return math.sqrt(n2) ** s


def japanese_bracket(k: Sequence[int], s: float) -> float:
    return (1.0 + sum(int(c) ** 2 for c in k)) ** s


def enumerate_box(basis: FrequencyBasis) -> list[tuple[int, ...]]:
    """Row-major enumeration of the box; this order is used by serialization."""
    r = basis.box_radius
    return list(itertools.product(range(-r, r + 1), repeat=basis.dim))
