"""
Tube-type discrete symbols c(t, xi) = a(t, xi) + i b(t, xi) and their
per-frequency profiles.

A symbol is any :class:`SymbolSpec` subclass; all it has to provide is
``samples(grid, box)``, the complex array ``c(t_j, xi_k)``. :func:`evaluate`
turns those samples into one :class:`ModeProfile` per frequency, holding the
averages, the primitives A and B, the maximiser of B and the resonance flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Callable, NamedTuple

import numpy as np

from .spectral import TWO_PI, CircleGrid, FrequencyBox, spectral_derivative, spectral_primitive

DEFAULT_EPS_Z = 1e-9


def _norms(xi):
    return np.sqrt((np.asarray(xi, dtype=float) ** 2).sum(axis=-1))


class SymbolSpec:
    """Base class. Subclasses set ``order`` and implement :meth:`samples`."""

    order: float
    variant = "abstract"

    def samples(self, grid: CircleGrid, box: FrequencyBox) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantSymbol(SymbolSpec):
    """c(t, xi) = value(xi), independent of t.

    ``value`` is a complex scalar or a callable taking the (n_freq, N) integer
    frequency array.
    """

    order: float
    value: complex | Callable = 0.0
    variant = "constant"

    def samples(self, grid, box):
        xi = box.frequencies
        v = self.value(xi) if callable(self.value) else self.value
        v = np.broadcast_to(np.asarray(v, dtype=complex), (len(box),))
        return np.broadcast_to(v, (grid.n_t, len(box))).copy()


@dataclass(frozen=True)
class SeparableSymbol(SymbolSpec):
    """c(t, xi) = profile(t) * weight(xi); weight defaults to |xi|**order."""

    order: float
    profile: Callable
    weight: Callable | None = None
    variant = "separable"

    def samples(self, grid, box):
        p = np.asarray(self.profile(grid.nodes), dtype=complex)
        p = np.broadcast_to(p, (grid.n_t,))
        if self.weight is None:
            w = _norms(box.frequencies) ** self.order
            if self.order < 0:
                w = np.where(_norms(box.frequencies) == 0, 0.0, w)
        else:
            w = self.weight(box.frequencies)
        w = np.broadcast_to(np.asarray(w, dtype=complex), (len(box),))
        return np.outer(p, w)


@dataclass(frozen=True)
class HomogeneousSymbol(SymbolSpec):
    """Positively homogeneous of degree ``order``: c(t, n xi) = n**order c(t, xi).

    Only the values on primitive lattice points are stored: ``base(t, xi_hat)``
    is called with a tuple of coprime components. ``c(t, 0) = 0``.
    """

    order: float
    base: Callable
    variant = "homogeneous"

    @classmethod
    def isotropic(cls, order, profile):
        """c(t, xi) = |xi|**order * profile(t)."""

        def base(t, xi_hat):
            return float(np.hypot.reduce(np.asarray(xi_hat, dtype=float))) ** order * np.asarray(profile(t))

        return cls(order, base)

    def samples(self, grid, box):
        t = grid.nodes
        out = np.zeros((grid.n_t, len(box)), dtype=complex)
        cache = {}
        for k, xi in enumerate(box.frequencies):
            g = int(np.gcd.reduce(np.abs(xi)))
            if g == 0:
                continue
            prim = tuple(int(v) // g for v in xi)
            if prim not in cache:
                vals = np.asarray(self.base(t, prim), dtype=complex)
                cache[prim] = np.broadcast_to(vals, (grid.n_t,))
            out[:, k] = float(g) ** self.order * cache[prim]
        return out


@dataclass(frozen=True)
class HomogeneousPlusLower(SymbolSpec):
    """Homogeneous principal part plus a remainder of strictly lower order."""

    principal: HomogeneousSymbol
    lower: SymbolSpec
    variant = "homogeneous_plus_lower"

    def __post_init__(self):
        if not self.lower.order < self.principal.order:
            raise ValueError(
                f"lower-order part has order {self.lower.order}, "
                f"not below the principal order {self.principal.order}"
            )

    @property
    def order(self):
        return self.principal.order

    def samples(self, grid, box):
        return self.principal.samples(grid, box) + self.lower.samples(grid, box)


@dataclass(frozen=True, eq=False)
class TabulatedSymbol(SymbolSpec):
    """Samples supplied directly on a fixed grid and box."""

    order: float
    grid: CircleGrid
    box: FrequencyBox
    table: np.ndarray = field(repr=False)
    variant = "tabulated"

    def __post_init__(self):
        table = np.asarray(self.table, dtype=complex)
        if table.shape != (self.grid.n_t, len(self.box)):
            raise ValueError(f"table shape {table.shape} does not match grid/box")
        object.__setattr__(self, "table", table)

    def samples(self, grid, box):
        if grid.n_t != self.grid.n_t:
            raise ValueError(f"tabulated symbol lives on n_t={self.grid.n_t}, requested n_t={grid.n_t}")
        if box.N != self.box.N or not np.array_equal(box.frequencies, self.box.frequencies):
            if box.N == self.box.N and len(box) <= len(self.box):
                idx = [self.box.index_of(xi) for xi in box.frequencies]
                return self.table[:, idx].copy()
            raise ValueError("tabulated symbol does not cover the requested frequency box")
        return self.table.copy()


class Resonance(NamedTuple):
    resonant: bool
    margin: float


@dataclass(frozen=True, eq=False)
class ModeProfile:
    """Everything about c(., xi) that the conditions, solver and forge need.

    ``A`` and ``B`` are primitives of ``a`` and ``b`` vanishing at node
    ``basepoint``; they carry the ramps ``a0*t`` and ``b0*t`` so that
    ``B(t + 2 pi) = B(t) + 2 pi b0``. ``t_max_index`` is the first grid node
    where B is maximal (meaningful for resonant frequencies, where B is
    periodic).
    """

    xi: tuple
    norm: float
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    a0: float
    b0: float
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    basepoint: int
    t_max_index: int
    resonant: bool
    eps_z: float = DEFAULT_EPS_Z

    @property
    def n_t(self):
        return self.a.shape[0]

    @property
    def c(self):
        return self.a + 1j * self.b

    @property
    def c0(self):
        return complex(self.a0, self.b0)

    @property
    def C(self):
        return self.A + 1j * self.B

    @property
    def tau(self) -> int:
        """Integer nearest to a0."""
        return int(np.rint(self.a0))

    @property
    def c_reduced(self) -> complex:
        """c0 minus the nearest integer; its modulus is the diophantine margin."""
        return complex(self.a0 - self.tau, self.b0)

    def B_lift(self, j):
        """B at (possibly out-of-range) node indices, via the ramp law."""
        j = np.asarray(j)
        n = self.n_t
        return self.B[j % n] + (j // n) * (TWO_PI * self.b0)

    def A_lift(self, j):
        j = np.asarray(j)
        n = self.n_t
        return self.A[j % n] + (j // n) * (TWO_PI * self.a0)

    def C_lift(self, j):
        return self.A_lift(j) + 1j * self.B_lift(j)

    def rebased(self, basepoint: int) -> "ModeProfile":
        """Same profile with primitives shifted to vanish at another node."""
        return _make_profile(self.xi, self.a, self.b, basepoint, self.eps_z)


def resonance_test(profile: ModeProfile, eps_z: float = DEFAULT_EPS_Z) -> Resonance:
    """xi is resonant when c0(xi) lies within ``eps_z`` of an integer in both parts.

    The returned margin is ``max(dist(a0, Z), |b0|)``, the quantity compared
    against ``eps_z``.
    """
    margin = max(abs(profile.a0 - np.rint(profile.a0)), abs(profile.b0))
    return Resonance(bool(margin <= eps_z), float(margin))


def _make_profile(xi, a, b, basepoint, eps_z, A=None, B=None):
    n = a.shape[0]
    a0 = float(np.mean(a))
    b0 = float(np.mean(b))
    if A is None:
        A = spectral_primitive(a, basepoint)
    if B is None:
        B = spectral_primitive(b, basepoint)
    margin = max(abs(a0 - np.rint(a0)), abs(b0))
    resonant = bool(margin <= eps_z)
    return ModeProfile(
        xi=tuple(int(v) for v in xi),
        norm=float(np.sqrt(np.sum(np.asarray(xi, dtype=float) ** 2))),
        a=a,
        b=b,
        a0=a0,
        b0=b0,
        A=A,
        B=B,
        basepoint=int(basepoint) % n,
        t_max_index=int(np.argmax(B)),
        resonant=resonant,
        eps_z=eps_z,
    )


def evaluate(
    spec: SymbolSpec,
    grid: CircleGrid,
    box: FrequencyBox,
    eps_z: float = DEFAULT_EPS_Z,
    basepoint: int = 0,
) -> list[ModeProfile]:
    """One :class:`ModeProfile` per frequency of ``box``, in box order."""
    c = np.asarray(spec.samples(grid, box), dtype=complex)
    if not np.all(np.isfinite(c)):
        raise ValueError("symbol produced non-finite samples")
    a = np.ascontiguousarray(c.real)
    b = np.ascontiguousarray(c.imag)
    A = spectral_primitive(a, basepoint)
    B = spectral_primitive(b, basepoint)
    return [
        _make_profile(xi, a[:, k], b[:, k], basepoint, eps_z, A[:, k], B[:, k])
        for k, xi in enumerate(box.frequencies)
    ]


def mode_profile(xi, c, eps_z=DEFAULT_EPS_Z, basepoint=0) -> ModeProfile:
    """Profile of one frequency from the samples ``c(t_j, xi)``."""
    c = np.asarray(c, dtype=complex)
    if c.ndim != 1 or c.shape[0] < 8 or c.shape[0] % 2:
        raise ValueError(f"need an even number >= 8 of samples, got shape {c.shape}")
    xi = (int(xi),) if np.ndim(xi) == 0 else tuple(int(v) for v in xi)
    return _make_profile(xi, c.real.copy(), c.imag.copy(), basepoint, eps_z)


def profiles_from_samples(c, box, eps_z=DEFAULT_EPS_Z, basepoint=0):
    """Profiles from a raw (n_t, n_freq) sample table."""
    c = np.asarray(c, dtype=complex)
    return [
        _make_profile(xi, c[:, k].real.copy(), c[:, k].imag.copy(), basepoint, eps_z)
        for k, xi in enumerate(box.frequencies)
    ]


def symbol_class_constants(spec, grid, box, max_order=2):
    """Spot-check of |d_t^alpha c(t, xi)| <= C_alpha (1 + |xi|)^m on the box.

    Returns a dict alpha -> (C_alpha, slope) where ``slope`` is the log-log
    growth of the running maximum of sup_t|d^alpha c| / (1+|xi|)^m over the
    upper half of the box (|xi| >= K/2); a slope near zero or below means the
    bound looks uniform.
    """
    c = spec.samples(grid, box)
    norms = box.norms
    weight = (1.0 + norms) ** spec.order
    order = np.argsort(norms, kind="stable")
    x = np.log1p(norms[order])
    tail = norms[order] >= 0.5 * norms.max()
    out = {}
    for alpha in range(max_order + 1):
        d = spectral_derivative(c, alpha) if alpha else c
        ratio = np.abs(d).max(axis=0) / weight
        run = np.maximum.accumulate(ratio[order])
        ok = tail & (run > 0)
        slope = float(np.polyfit(x[ok], np.log(run[ok]), 1)[0]) if ok.sum() > 1 and np.ptp(x[ok]) > 0 else 0.0
        out[alpha] = (float(ratio.max()), slope)
    return out


def primitive_part(xi) -> tuple[int, tuple]:
    """Split xi into (multiplier, primitive direction)."""
    g = 0
    for v in xi:
        g = gcd(g, abs(int(v)))
    if g == 0:
        return 0, tuple(int(v) for v in xi)
    return g, tuple(int(v) // g for v in xi)
