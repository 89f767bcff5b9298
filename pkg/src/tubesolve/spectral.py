"""
Time-circle grids, frequency boxes and the discrete Fourier machinery shared by
every other module.

Conventions
-----------
Nodes are ``t_j = 2*pi*j/n_t`` for ``j = 0..n_t-1``. Circle coefficients use
the normalisation

    h(t_j) = sum_kappa hhat(kappa) exp(i kappa t_j),   kappa = -n_t/2 .. n_t/2-1

so ``hhat(0)`` is the mean of the samples. Partial-Fourier data in the
spatial variable are supplied directly per frequency; nothing is transformed
in ``x``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


class ResolutionError(ValueError):
    """Raised when a grid is too coarse for the requested computation."""

    def __init__(self, message, required_nt=None):
        super().__init__(message)
        self.required_nt = required_nt


@dataclass(frozen=True)
class CircleGrid:
    """Uniform grid on S^1 with ``n_t`` nodes."""

    n_t: int

    def __post_init__(self):
        if int(self.n_t) != self.n_t:
            raise ValueError(f"n_t must be an integer, got {self.n_t!r}")
        if self.n_t < 8:
            raise ValueError(f"n_t must be at least 8, got {self.n_t}")
        if self.n_t % 2:
            raise ValueError(f"n_t must be even, got {self.n_t}")

    @property
    def step(self) -> float:
        return TWO_PI / self.n_t

    @property
    def nodes(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_t) / self.n_t

    @property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in numpy FFT order."""
        return np.fft.fftfreq(self.n_t, d=1.0 / self.n_t)

    @staticmethod
    def required_for_window(window: float, per_window: int = 4) -> int:
        """Smallest even node count whose step is at most ``window/per_window``."""
        n = int(np.ceil(per_window * TWO_PI / window))
        n += n % 2
        return max(n, 8)


def _lattice(N, K):
    r = int(np.floor(K))
    pts = np.array(list(itertools.product(range(-r, r + 1), repeat=N)), dtype=np.int64)
    norms = np.sqrt((pts.astype(float) ** 2).sum(axis=1))
    return pts[norms <= K * (1 + 1e-14)]


@dataclass(frozen=True)
class FrequencyBox:
    """All ``xi`` in Z^N with Euclidean norm at most ``K`` (``xi = 0`` included).

    Frequencies are listed in lexicographic order of their integer components.
    """

    N: int
    K: float
    frequencies: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"dimension N must be positive, got {self.N}")
        if not self.K > 0:
            raise ValueError(f"cutoff K must be positive, got {self.K}")
        pts = _lattice(self.N, self.K)
        pts.setflags(write=False)
        object.__setattr__(self, "frequencies", pts)

    def __len__(self):
        return len(self.frequencies)

    @property
    def norms(self) -> np.ndarray:
        return np.sqrt((self.frequencies.astype(float) ** 2).sum(axis=1))

    def index_of(self, xi) -> int:
        xi = np.atleast_1d(np.asarray(xi, dtype=np.int64))
        hits = np.flatnonzero((self.frequencies == xi).all(axis=1))
        if hits.size == 0:
            raise KeyError(f"frequency {tuple(xi)} not in box")
        return int(hits[0])

    def primitive_mask(self) -> np.ndarray:
        """True where gcd of the components is 1."""
        g = np.gcd.reduce(np.abs(self.frequencies), axis=1)
        return g == 1


@dataclass
class FourierField:
    """Partial-Fourier samples ``F[j, k] = fhat(t_j, xi_k)``."""

    grid: CircleGrid
    box: FrequencyBox
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        shape = (self.grid.n_t, len(self.box))
        if self.data.shape != shape:
            raise ValueError(f"field data has shape {self.data.shape}, expected {shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("field contains non-finite entries")

    @classmethod
    def zeros(cls, grid, box):
        return cls(grid, box, np.zeros((grid.n_t, len(box)), dtype=complex))

    def mode(self, xi) -> np.ndarray:
        return self.data[:, self.box.index_of(xi)]

    def sup_norms(self) -> np.ndarray:
        return np.abs(self.data).max(axis=0)


def _check_finite(h):
    h = np.asarray(h)
    if not np.all(np.isfinite(h)):
        bad = np.flatnonzero(~np.isfinite(h.ravel()))
        raise ValueError(f"non-finite samples at flat indices {bad[:5].tolist()}")
    return h


def analyze(h: np.ndarray) -> np.ndarray:
    """Circle coefficients ordered from kappa = -n/2 to n/2 - 1.

    Works along axis 0, so a (n_t, m) array of slices is analysed column-wise.
    """
    h = _check_finite(h)
    return np.fft.fftshift(np.fft.fft(h, axis=0) / h.shape[0], axes=0)


def synthesize(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`analyze`."""
    coeffs = np.asarray(coeffs)
    return np.fft.ifft(np.fft.ifftshift(coeffs, axes=0), axis=0) * coeffs.shape[0]


def circle_wavenumbers(n_t: int) -> np.ndarray:
    """Wavenumbers matching the ordering of :func:`analyze`."""
    return np.arange(-n_t // 2, n_t // 2)


def _spectral_op(h, multiplier):
    h = _check_finite(h)
    n = h.shape[0]
    hat = np.fft.fft(h, axis=0)
    shape = (n,) + (1,) * (h.ndim - 1)
    out = np.fft.ifft(hat * multiplier.reshape(shape), axis=0)
    if np.isrealobj(h):
        out = out.real
    return out


def spectral_derivative(h: np.ndarray, order: int = 1) -> np.ndarray:
    """d^order h / dt^order along axis 0 (Nyquist mode dropped for odd orders)."""
    if order < 0 or int(order) != order:
        raise ValueError(f"derivative order must be a nonnegative integer, got {order}")
    if order == 0:
        return np.array(h, copy=True)
    n = np.shape(h)[0]
    k = np.fft.fftfreq(n, d=1.0 / n)
    mult = (1j * k) ** order
    if order % 2:
        mult[n // 2] = 0.0
    return _spectral_op(h, mult)


def D_t(h: np.ndarray, order: int = 1) -> np.ndarray:
    """The operator D_t = -i d/dt applied ``order`` times."""
    return (-1j) ** order * spectral_derivative(np.asarray(h, dtype=complex), order)


def spectral_primitive(h: np.ndarray, basepoint: int = 0) -> np.ndarray:
    """Primitive H of the samples with H(t_basepoint) = 0.

    The mean ``h0`` is carried as an explicit ramp ``h0 * (t - t_base)`` and the
    zero-mean part is integrated mode by mode, so ``H(t + 2 pi) = H(t) +
    2 pi h0`` and the result is exact for trigonometric polynomials of degree
    below ``n_t/2``. Works along axis 0.
    """
    h = _check_finite(h)
    n = h.shape[0]
    if not 0 <= basepoint < n:
        raise ValueError(f"basepoint {basepoint} outside 0..{n - 1}")
    k = np.fft.fftfreq(n, d=1.0 / n)
    hat = np.fft.fft(h, axis=0) / n
    h0 = hat[0]
    inv = np.zeros(n, dtype=complex)
    nz = k != 0
    inv[nz] = 1.0 / (1j * k[nz])
    inv[n // 2] = 0.0
    shape = (n,) + (1,) * (h.ndim - 1)
    periodic = np.fft.ifft(hat * inv.reshape(shape) * n, axis=0)
    t = TWO_PI * np.arange(n) / n
    ramp = np.multiply.outer(t - t[basepoint], h0)
    H = ramp + periodic - periodic[basepoint]
    if np.isrealobj(h):
        H = H.real
    return H


def trapezoid_primitive(h: np.ndarray, basepoint: int = 0) -> np.ndarray:
    """Cumulative trapezoid primitive on the grid; second order, test oracle only."""
    h = np.asarray(h)
    n = h.shape[0]
    step = TWO_PI / n
    ext = np.concatenate([h, h[:1]], axis=0)
    cum = np.concatenate([np.zeros((1,) + h.shape[1:], dtype=h.dtype),
                          np.cumsum(0.5 * step * (ext[1:] + ext[:-1]), axis=0)])
    return cum[:n] - cum[basepoint]


@dataclass(frozen=True)
class DecayFit:
    """Power-law fit ``sup_t |F| ~ constant * (1+|xi|)^(-exponent)``.

    ``constant`` is capped at the largest float; ``log_constant`` is exact.
    """

    exponent: float
    constant: float
    residual: float
    n_points: int
    identically_zero: bool = False
    log_constant: float = -np.inf


_LOG_FLOAT_MAX = float(np.log(np.finfo(float).max))


def _capped_exp(x):
    return float(np.finfo(float).max) if x >= _LOG_FLOAT_MAX else float(np.exp(x))


def power_law_fit(r: np.ndarray, values: np.ndarray, zero_tol: float = 0.0) -> DecayFit:
    """Least-squares slope of log(values) against log(1 + r).

    Entries at or below ``zero_tol`` are left out; if none remain the fit is
    flagged identically zero and the exponent is +inf.
    """
    r = np.asarray(r, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > zero_tol
    if not keep.any():
        return DecayFit(np.inf, 0.0, 0.0, 0, identically_zero=True)
    x = np.log1p(r[keep])
    y = np.log(values[keep])
    if keep.sum() < 2 or np.ptp(x) == 0:
        return DecayFit(np.nan, _capped_exp(y.mean()), np.nan, int(keep.sum()), log_constant=float(y.mean()))
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return DecayFit(
        exponent=float(-coef[1]),
        constant=_capped_exp(coef[0]),
        residual=float(np.sqrt(np.mean(resid**2))),
        n_points=int(keep.sum()),
        log_constant=float(coef[0]),
    )


def decay_fit(field: FourierField, order: int = 0, zero_rtol: float = 1e-13) -> DecayFit:
    """Fit the decay of ``sup_t |D_t^order F(., xi)|`` over the nonzero frequencies.

    Slices whose sup falls below ``zero_rtol`` times the largest sup of the
    undifferentiated field are treated as zero and left out of the fit.
    """
    norms = field.box.norms
    nonzero = norms > 0
    if nonzero.sum() < 8:
        raise ValueError(f"decay_fit needs at least 8 nonzero frequencies, box has {nonzero.sum()}")
    data = field.data[:, nonzero]
    scale = np.abs(data).max() if data.size else 0.0
    if order:
        # per-column scaling keeps the FFT finite for columns near the float limit
        col = np.abs(data).max(axis=0)
        col[col == 0] = 1.0
        with np.errstate(over="ignore"):
            sups = np.minimum(np.abs(D_t(data / col, order)).max(axis=0) * col, np.finfo(float).max)
    else:
        sups = np.abs(data).max(axis=0)
    if scale == 0.0:
        return DecayFit(np.inf, 0.0, 0.0, 0, identically_zero=True)
    return power_law_fit(norms[nonzero], sups, zero_tol=zero_rtol * scale)
