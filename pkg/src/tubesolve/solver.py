"""
Per-mode solution of (D_t + c(t, xi)) u = f on the circle and global assembly.

With D_t = -i d/dt the integrating factor is e^{iC}: (e^{iC} u)' = i e^{iC} f.

Non-resonant modes have the unique periodic solution

    u(t) = i/(e^{2 pi i c0} - 1) int_0^{2pi} e^{i(C(t+s) - C(t))} f(t+s) ds      (forward)
         = i/(1 - e^{-2 pi i c0}) int_0^{2pi} e^{i(C(t-s) - C(t))} f(t-s) ds     (backward)

Writing c0 = tau + c_r with tau the nearest integer, the gauged primitive
Ct = C - c_r t makes e^{iCt} periodic, and term-by-term integration of the
Fourier series of e^{iCt} f gives u = e^{-iCt} sum_k h_k e^{ikt}/(c_r + k)
("spectral"), exact for band-limited data. That sum mixes every node with
every other one, so its rounding error grows like eps * e^{ptp B}; it is
only used while the range of B is small.

The default for wider ranges is a "sweep": the ODE is stepped node to node,
each step integrating e^{iC} f over one grid interval with an interior
Lagrange panel, and the state is carried in log scale. Started at the
maximiser of the periodic part of B and run in the direction of the stable
formula, every term it accumulates has the modulus of the true kernel, so
nothing cancels that the exact solution does not cancel itself.

Resonant modes are solved from the maximiser t_xi of B along the anticlockwise
arc, u(t) = i int_{[t_xi, t]} e^{i(C(s) - C(t))} f(s) ds, which needs the
compatibility integral int e^{iC} f to vanish.

All kernels have modulus e^{B(t) - B(s)}, which can overflow. Results are
carried as :class:`LogComplex` and samples whose modulus exceeds e^709 are
reported as saturated and zeroed, never returned as inf or nan.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import numpy as np

from .spectral import TWO_PI, FourierField, D_t, decay_fit
from .symbol import ModeProfile

OVERFLOW_GUARD = 709.0
SPECTRAL_RANGE_LIMIT = 8.0  # ptp of B on the spectral path: costs at most e^8 ulps
PANEL_POINTS = 12
PANEL_RANGE_LIMIT = 12.0  # |change of iC| across a panel stencil; beyond it the panel loses to the two-point rule
GREGORY_ORDER = 8
_BLOCK_RANGE = 30.0
STEP_VARIATION_LIMIT = 1.0  # h max|c| above this: grid too coarse for the mode
DEFAULT_COMPAT_TOL = 1e-9
DEFAULT_MARGIN_FLOOR = 1e-8
_ROW_CHUNK = 256


class ClosureError(ValueError):
    """Right-hand side fails the compatibility condition at resonant frequencies."""

    def __init__(self, message, offenders=()):
        super().__init__(message)
        self.offenders = list(offenders)


# -- log-domain complex numbers -------------------------------------------------


@dataclass(frozen=True)
class LogComplex:
    """Complex values stored as ``exp(log_mag) * exp(i phase)``.

    ``log_mag`` may be ``-inf`` (exact zero); phases lie in (-pi, pi].
    """

    log_mag: np.ndarray
    phase: np.ndarray

    @classmethod
    def from_complex(cls, z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore"):
            return cls(np.log(np.abs(z)), np.angle(z))

    @classmethod
    def from_exponent(cls, w):
        """exp(w) for complex exponents w, without evaluating it."""
        w = np.asarray(w, dtype=complex)
        return cls(w.real.copy(), np.angle(np.exp(1j * w.imag)))

    def __mul__(self, other):
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        return LogComplex(self.log_mag + other.log_mag, np.angle(np.exp(1j * (self.phase + other.phase))))

    @property
    def saturated(self):
        return np.asarray(self.log_mag) > OVERFLOW_GUARD

    def to_complex(self, guard=OVERFLOW_GUARD):
        """Ordinary complex values; saturated entries come back as 0 with a mask."""
        lm = np.asarray(self.log_mag, dtype=float)
        sat = lm > guard
        safe = np.where(sat, -np.inf, lm)
        with np.errstate(under="ignore"):
            z = np.exp(safe) * np.exp(1j * np.asarray(self.phase))
        return z, sat


def _log_rows(exponent_fn, coef_fn, n_rows):
    """Row sums sum_j coef[i, j] exp(E[i, j]) as LogComplex, one row block at a time."""
    log_mag = np.empty(n_rows)
    phase = np.empty(n_rows)
    for lo in range(0, n_rows, _ROW_CHUNK):
        rows = np.arange(lo, min(lo + _ROW_CHUNK, n_rows))
        E = exponent_fn(rows)
        coef = coef_fn(rows)
        live = coef != 0
        re = np.where(live, E.real, -np.inf)
        M = re.max(axis=1)
        M_safe = np.where(np.isfinite(M), M, 0.0)
        with np.errstate(under="ignore", over="ignore", invalid="ignore"):
            terms = np.where(live, coef * np.exp(E - M_safe[:, None]), 0.0)
        S = terms.sum(axis=1)
        with np.errstate(divide="ignore"):
            log_mag[rows] = np.where(np.isfinite(M), M + np.log(np.abs(S)), -np.inf)
        phase[rows] = np.angle(S)
    return LogComplex(log_mag, phase)


# -- gauges and weights -----------------------------------------------------------


def gauged_primitive(profile: ModeProfile):
    """C - c_r t, so that exp(i(C - c_r t)) is 2 pi periodic."""
    t = TWO_PI * np.arange(profile.n_t) / profile.n_t
    cr = profile.c_reduced
    return profile.C - cr * t


def resolvent_symbol(cr: complex, n: int, sign=+1):
    """1/(c_r + sign*k) on FFT-ordered wavenumbers; Nyquist gets the mean of its two aliases."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    v = 1.0 / (cr + sign * k)
    v[n // 2] = 0.5 * (1.0 / (cr + n / 2) + 1.0 / (cr - n / 2))
    return v


def quadrature_weights(cr: complex, n: int, sign=+1):
    """omega_j with u_i = sum_j omega_j g(s_j); exact on band-limited g."""
    return np.fft.fft(resolvent_symbol(cr, n, sign)) / n


def _arc_kernel(n):
    """g[d] = (1/n) sum_{k != 0, Nyquist dropped} e^{i k t_d}/(i k)."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    inv = np.zeros(n, dtype=complex)
    nz = k != 0
    inv[nz] = 1.0 / (1j * k[nz])
    inv[n // 2] = 0.0
    return np.fft.ifft(inv)


def _bernoulli(k):
    B = [Fraction(1)]
    for m in range(1, k + 1):
        B.append(-sum(comb(m + 1, j) * B[j] for j in range(m)) / (m + 1))
    return B[k]


def _solve_exact(A, b):
    # Gauss-Jordan over the rationals; the systems here are tiny
    n = len(b)
    M = [list(row) + [b[i]] for i, row in enumerate(A)]
    for c in range(n):
        piv = next(r for r in range(c, n) if M[r][c] != 0)
        M[c], M[piv] = M[piv], M[c]
        for r in range(n):
            if r != c and M[r][c] != 0:
                fac = M[r][c] / M[c][c]
                M[r] = [x - fac * y for x, y in zip(M[r], M[c])]
    return [M[i][n] / M[i][i] for i in range(n)]


@lru_cache(maxsize=None)
def gregory_corrections(order=GREGORY_ORDER):
    """End corrections d_0..d_{r-1} added to the trapezoid weights at each end.

    They cancel the end terms of the Euler-Maclaurin expansion, so the rule
    is exact on polynomials of degree < r. Returned in units of the step.
    """
    A = [[Fraction(k) ** p if (k, p) != (0, 0) else Fraction(1) for k in range(order)] for p in range(order)]
    b = [_bernoulli(p + 1) / (p + 1) if p % 2 else Fraction(0) for p in range(order)]
    return np.array([float(x) for x in _solve_exact(A, b)])


def gregory_weights(n_intervals, order=GREGORY_ORDER):
    """Weights (in units of the step) for n_intervals + 1 equispaced nodes."""
    r = min(order, (n_intervals + 1) // 2)
    w = np.ones(n_intervals + 1)
    w[0] = w[-1] = 0.5
    if r >= 2:
        d = gregory_corrections(r)
        w[:r] += d
        w[-r:] += d[::-1]
    return w


@lru_cache(maxsize=None)
def panel_weights(points=PANEL_POINTS):
    """Offsets m and weights W with int_0^1 g = sum W_m g(m) for g of degree < points.

    The stencil is centred on the interval [0, 1], where Lagrange
    interpolation on equispaced nodes is well conditioned.
    """
    if points % 2:
        raise ValueError("panel needs an even number of points")
    offs = list(range(-points // 2 + 1, points // 2 + 1))
    A = [[Fraction(m) ** p if (m, p) != (0, 0) else Fraction(1) for m in offs] for p in range(points)]
    b = [Fraction(1, p + 1) for p in range(points)]
    return np.array(offs), np.array([float(x) for x in _solve_exact(A, b)])


# -- sweeps -----------------------------------------------------------------------


def _lc_add(a: LogComplex, b: LogComplex) -> LogComplex:
    la, lb = np.asarray(a.log_mag, dtype=float), np.asarray(b.log_mag, dtype=float)
    M = np.maximum(la, lb)
    M_safe = np.where(np.isfinite(M), M, 0.0)
    with np.errstate(under="ignore", invalid="ignore"):
        z = np.exp(la - M_safe + 1j * a.phase) + np.exp(lb - M_safe + 1j * b.phase)
    with np.errstate(divide="ignore"):
        lm = np.where(np.isfinite(M), M + np.log(np.abs(z)), -np.inf)
    return LogComplex(lm, np.angle(z))


def _panel_sources(profile, f, nodes, direction, points=PANEL_POINTS):
    """sigma_l = i int_{t_l}^{t_{l+1}} e^{i(C(s) - C(t_{l+1}))} f(s) ds along lifted ``nodes``.

    Oriented integrals: a backward step traverses its interval right to
    left. Returned as complex logs, so a panel across which B varies by
    more than the float range still gives a finite (if under-resolved) value.
    """
    n = profile.n_t
    h = TWO_PI / n
    offs, W = panel_weights(points)
    left = nodes[:-1] if direction > 0 else nodes[1:]  # left end of each interval
    stencil = left[:, None] + offs[None, :]
    expo = 1j * (profile.C_lift(stencil) - profile.C_lift(nodes[1:])[:, None])
    rho = expo.real.max(axis=1)
    with np.errstate(under="ignore"):
        vals = np.exp(expo - rho[:, None]) * np.asarray(f, dtype=complex)[stencil % n]
    sig = (1j * direction * h) * (vals @ W)
    with np.errstate(divide="ignore"):
        out = rho + np.log(sig)
    # stiff intervals: polynomial interpolation of e^{iC} is useless there
    stiff = np.ptp(expo.real, axis=1) + np.ptp(expo.imag, axis=1) > PANEL_RANGE_LIMIT
    if stiff.any():
        out[stiff] = _linear_exponential_sources(profile, f, nodes, direction)[stiff]
    return out


def _phi_psi(z):
    """e^{-rho} (e^z - 1)/z and e^{-rho} int_0^1 w e^{zw} dw, with rho = max(Re z, 0)."""
    z = np.asarray(z, dtype=complex)
    rho = np.maximum(z.real, 0.0)
    phi = np.empty_like(z)
    psi = np.empty_like(z)
    small = np.abs(z) < 0.05
    if small.any():
        zs = z[small]
        k = np.arange(9)
        powers = zs[:, None] ** k
        fact = np.array([factorial(j) for j in k], dtype=float)
        phi[small] = powers @ (1.0 / (fact * (k + 1)))
        psi[small] = powers @ (1.0 / (fact * (k + 2)))
        rho[small] = 0.0
    big = ~small
    if big.any():
        zb = z[big]
        top = np.exp(zb - rho[big])  # e^{i Im z} or e^{z}
        low = np.exp(-rho[big])  # e^{-Re z} or 1
        phi[big] = (top - low) / zb
        psi[big] = (top * (zb - 1) + low) / zb**2
    return rho, phi, psi


def _linear_exponential_sources(profile, f, nodes, direction):
    """Two-point exponential rule: C and f linear on each step, integrated exactly.

    Second order but stable for any h * |c|; used where the panel stencil
    sees too large a change of e^{iC}.
    """
    n = profile.n_t
    h = TWO_PI / n
    f = np.asarray(f, dtype=complex)
    Cn = profile.C_lift(nodes)
    za = 1j * (Cn[:-1] - Cn[1:])
    fl, fr = f[nodes[:-1] % n], f[nodes[1:] % n]
    rho, phi, psi = _phi_psi(za)
    sig = (1j * direction * h) * (fr * phi + (fl - fr) * psi)
    with np.errstate(divide="ignore"):
        return rho + np.log(sig)


def step_variation(profile: ModeProfile):
    """h * max|c|: the phase and log-modulus change of e^{iC} over one grid step."""
    return TWO_PI / profile.n_t * float(np.abs(profile.c).max())


def _block_length(profile):
    h = TWO_PI / profile.n_t
    bmax = float(np.abs(profile.b).max()) + abs(profile.b0)
    return int(np.clip(_BLOCK_RANGE / max(h * bmax, 1e-300), 1, 256))


def sweep(profile: ModeProfile, f, start: int, direction: int, points=PANEL_POINTS) -> LogComplex:
    """Particular solution with v(t_start) = 0, stepped over one period.

    Returns v at the lifted nodes start, start + d, ..., start + n d
    (d = direction = +1 or -1), n + 1 values. Within a block of steps the
    sum is taken relative to the block's first node and every exponent
    is kept as a logarithm, so nothing over- or underflows.
    """
    n = profile.n_t
    nodes = start + direction * np.arange(n + 1)
    log_sig = _panel_sources(profile, f, nodes, direction, points)
    Cp = profile.C_lift(nodes)
    L = _block_length(profile)
    log_mag = np.full(n + 1, -np.inf)
    phase = np.zeros(n + 1)
    E, zphase = -np.inf, 0.0  # state u_l = exp(E + i zphase)
    for l0 in range(0, n, L):
        l1 = min(l0 + L, n)
        rel = 1j * (Cp[l0 + 1:l1 + 1] - Cp[l0])
        X = rel + log_sig[l0:l1]  # log of e^{i(C_{m+1} - C_ref)} sigma_m
        Eref = max(E, float(X.real.max()))
        if not np.isfinite(Eref):
            continue  # still exactly zero
        with np.errstate(under="ignore"):
            carry = np.exp(E - Eref + 1j * zphase) if np.isfinite(E) else 0.0
            S = carry + np.cumsum(np.exp(X - Eref))
        with np.errstate(divide="ignore"):
            w = np.log(S) - rel  # log of e^{-i(C_l - C_ref)} S
        log_mag[l0 + 1:l1 + 1] = Eref + w.real
        phase[l0 + 1:l1 + 1] = np.angle(np.exp(1j * w.imag))
        E, zphase = Eref + float(w[-1].real), float(w[-1].imag)
    return LogComplex(log_mag, phase)


def _periodic_start(profile):
    """Maximiser of the periodic part of B: the stable start of both sweeps."""
    t = TWO_PI * np.arange(profile.n_t) / profile.n_t
    return int(np.argmax(profile.B - profile.b0 * t))


def _reindex(lc: LogComplex, nodes, n):
    """Values at lifted ``nodes`` (n of them, one per residue) back in grid order."""
    out_l = np.empty(n)
    out_p = np.empty(n)
    out_l[nodes % n] = lc.log_mag
    out_p[nodes % n] = lc.phase
    return LogComplex(out_l, out_p)


def _nonresonant_sweep(profile, f, sign, points=PANEL_POINTS):
    """Periodic solution from one sweep and the monodromy correction.

    sign > 0 (forward formula, stable for b0 >= 0): sweep backward from
    S + n with v = 0 there, then u = v + e^{-i(C - C(S+n))} u(S) with
    u(S) = v(S) / (1 - e^{2 pi i c0}). sign < 0 mirrors this.
    """
    n = profile.n_t
    S = _periodic_start(profile)
    cr = profile.c_reduced
    if sign > 0:
        anchor = S + n
        v = sweep(profile, f, anchor, -1, points)  # nodes S+n, ..., S
        nodes = anchor - np.arange(n + 1)
        u_anchor = LogComplex(v.log_mag[-1:], v.phase[-1:]) * (-1.0 / np.expm1(2j * np.pi * cr))
    else:
        anchor = S
        v = sweep(profile, f, anchor, +1, points)  # nodes S, ..., S+n
        nodes = anchor + np.arange(n + 1)
        u_anchor = LogComplex(v.log_mag[-1:], v.phase[-1:]) * (-1.0 / np.expm1(-2j * np.pi * cr))
    prop = LogComplex.from_exponent(-1j * (profile.C_lift(nodes[:-1]) - profile.C_lift(anchor)))
    corr = prop * LogComplex(np.repeat(u_anchor.log_mag, n), np.repeat(u_anchor.phase, n))
    u = _lc_add(LogComplex(v.log_mag[:-1], v.phase[:-1]), corr)
    return _reindex(u, nodes[:-1], n)


def _resonant_sweeps(profile, f, points=PANEL_POINTS):
    """Anticlockwise and clockwise solutions from t_xi with u(t_xi) = 0, plus
    the path amplification B(t) - min B along each arc."""
    n = profile.n_t
    p = profile.t_max_index
    acw = sweep(profile, f, p, +1, points)
    cw = sweep(profile, f, p + n, -1, points)
    B = profile.B
    path = B[(p + np.arange(n + 1)) % n]
    amp_acw = path - np.minimum.accumulate(path)
    amp_cw = path - np.minimum.accumulate(path[::-1])[::-1]
    k = np.arange(n)
    acw_g = _reindex(LogComplex(acw.log_mag[:-1], acw.phase[:-1]), p + k, n)
    # cw entry l sits at node p + n - l; nodes p + 1 .. p + n take l = n - 1 .. 0
    cw_g = _reindex(LogComplex(cw.log_mag[::-1][1:], cw.phase[::-1][1:]), p + 1 + k, n)
    a_acw = np.empty(n)
    a_cw = np.empty(n)
    a_acw[(p + k) % n] = amp_acw[:-1]
    a_cw[(p + 1 + k) % n] = amp_cw[1:]
    return acw_g, cw_g, a_acw, a_cw


# -- mode solutions ---------------------------------------------------------------


@dataclass
class ModeSolution:
    xi: tuple
    u: np.ndarray = field(repr=False)
    branch: str
    saturated: bool
    saturated_nodes: np.ndarray = field(repr=False)
    log_mag: np.ndarray = field(repr=False)
    method: str = "spectral"
    small_divisor: bool = False
    amplification: float = 1.0
    check_error: float | None = None
    under_resolved: bool = False

    @property
    def sup_norm(self):
        return float(np.abs(self.u).max()) if self.u.size else 0.0

    @property
    def log_sup(self):
        """log of the sup norm including saturated nodes."""
        return float(np.max(self.log_mag)) if self.log_mag.size else -np.inf


def _finish(profile, lc: LogComplex, branch, method, **extra):
    u, sat = lc.to_complex()
    extra.setdefault("under_resolved", step_variation(profile) > STEP_VARIATION_LIMIT)
    return ModeSolution(
        xi=profile.xi,
        u=u,
        branch=branch,
        saturated=bool(sat.any()),
        saturated_nodes=np.flatnonzero(sat),
        log_mag=np.asarray(lc.log_mag),
        method=method,
        **extra,
    )


def _spectral_ok(profile, limit=SPECTRAL_RANGE_LIMIT):
    return float(np.ptp(gauged_primitive(profile).imag)) <= limit


def _scaled_exp(Ct):
    """exp(i Ct) with a shared scale, plus that scale; None if it would overflow."""
    Bt = Ct.imag
    if np.ptp(Bt) > 2 * OVERFLOW_GUARD - 100:
        return None
    ref = 0.5 * (Bt.max() + Bt.min())
    return np.exp(1j * Ct + ref), ref


def _nonresonant_spectral(profile, f):
    n = profile.n_t
    cr = profile.c_reduced
    Ct = gauged_primitive(profile)
    scaled = _scaled_exp(Ct)
    if scaled is None:
        return None
    h, ref = scaled
    v = resolvent_symbol(cr, n, +1)
    S = np.fft.ifft(v * np.fft.fft(h * f))
    # h carried the factor e^{ref}; take it back out with e^{-i Ct}
    return LogComplex.from_exponent(-1j * Ct - ref) * S


def _nonresonant_direct(profile, f, sign, quadrature="gregory"):
    n = profile.n_t
    cr = profile.c_reduced
    s = TWO_PI * np.arange(n) / n
    C = profile.C
    f = np.asarray(f, dtype=complex)
    if quadrature == "spectral":
        omega = quadrature_weights(cr, n, sign)
        jj = np.arange(n)

        def expo(rows):
            k = rows[:, None] + sign * jj[None, :]
            return 1j * (profile.C_lift(k) - C[rows, None] - sign * cr * s[None, :])

        def coef(rows):
            k = (rows[:, None] + sign * jj[None, :]) % n
            return omega[None, :] * f[k]

        return _log_rows(expo, coef, n)
    # literal formula with prefactor over s in [0, 2 pi], n + 1 nodes
    jj = np.arange(n + 1)
    if quadrature == "gregory":
        w = gregory_weights(n) * (TWO_PI / n)
    elif quadrature == "trapezoid":
        w = np.full(n + 1, TWO_PI / n)
        w[0] = w[-1] = 0.5 * TWO_PI / n
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    if sign > 0:
        pref = 1j / np.expm1(2j * np.pi * cr)
    else:
        pref = -1j / np.expm1(-2j * np.pi * cr)

    def expo(rows):
        k = rows[:, None] + sign * jj[None, :]
        return 1j * (profile.C_lift(k) - C[rows, None])

    def coef(rows):
        k = (rows[:, None] + sign * jj[None, :]) % n
        return pref * w[None, :] * f[k]

    return _log_rows(expo, coef, n)


def nonresonant_forms(profile: ModeProfile, f, quadrature="auto"):
    """(forward, backward) formulas evaluated directly, row by row in log domain.

    ``quadrature="auto"`` uses the spectral weights while the range of B is
    small and Gregory's rule (local weights, order 8) beyond that.
    """
    if quadrature == "auto":
        quadrature = "spectral" if _spectral_ok(profile) else "gregory"
    return (
        _nonresonant_direct(profile, f, +1, quadrature),
        _nonresonant_direct(profile, f, -1, quadrature),
    )


def _lc_diff(a: LogComplex, b: LogComplex, mask=None):
    za, sa = a.to_complex()
    zb, sb = b.to_complex()
    ok = ~(sa | sb)
    if mask is not None:
        ok &= mask
    if not ok.any():
        return np.nan
    return float(np.abs(za[ok] - zb[ok]).max())


def solve_mode_nonresonant(
    profile: ModeProfile,
    f,
    method="auto",
    quadrature="auto",
    margin_floor=DEFAULT_MARGIN_FLOOR,
    self_check=False,
) -> ModeSolution:
    """Unique periodic solution at a non-resonant frequency.

    The forward formula is used when b0 >= 0, the backward one otherwise.
    ``method``:

    * "spectral": FFT resolvent, exact on band-limited data, loses about
      e^{ptp B} ulps
    * "sweep": stepped along the stable direction, local panels of order 12
    * "direct": row-wise log-sum-exp of the formula with ``quadrature``
      ("gregory", "spectral", "trapezoid", or "auto": spectral weights while
      ptp B <= SPECTRAL_RANGE_LIMIT, Gregory beyond)
    * "auto": spectral while ptp B <= SPECTRAL_RANGE_LIMIT, sweep beyond

    ``self_check`` evaluates the other formula directly and stores the
    largest difference in ``check_error``.
    """
    if profile.resonant:
        raise ValueError(f"frequency {profile.xi} is resonant; use solve_mode_resonant")
    f = np.asarray(f, dtype=complex)
    sign = +1 if profile.b0 >= 0 else -1
    branch = "nonresonant-forward" if sign > 0 else "nonresonant-backward"
    margin = abs(profile.c_reduced)
    extra = dict(small_divisor=bool(margin < margin_floor), amplification=float(1.0 / margin))
    if not f.any():
        lc = LogComplex(np.full(profile.n_t, -np.inf), np.zeros(profile.n_t))
        return _finish(profile, lc, branch, "trivial", **extra)
    if quadrature == "auto":
        quadrature = "spectral" if _spectral_ok(profile) else "gregory"
    used = method
    if method == "auto":
        used = "spectral" if _spectral_ok(profile) else "sweep"
    if used == "spectral":
        lc = _nonresonant_spectral(profile, f)
        if lc is None:
            raise ValueError(f"B range too wide for the FFT path at xi={profile.xi}; use method='sweep'")
    elif used == "sweep":
        lc = _nonresonant_sweep(profile, f, sign)
    elif used == "direct":
        lc = _nonresonant_direct(profile, f, sign, quadrature)
    else:
        raise ValueError(f"unknown method {method!r}")
    if self_check:
        q = "spectral" if _spectral_ok(profile) else "gregory"
        extra["check_error"] = _lc_diff(lc, _nonresonant_direct(profile, f, -sign, q))
    return _finish(profile, lc, branch, used, **extra)


# -- compatibility --------------------------------------------------------------


@dataclass(frozen=True)
class CompatIntegral:
    """int e^{iC} f dt = value * exp(log_scale + i phase).

    ``value`` uses the kernel e^{i(C(s) - C(s*))} with s* the minimiser of B,
    whose modulus is at most 1; its magnitude does not depend on the choice
    of primitive. ``l1`` is the integral of the modulus of that integrand.
    """

    xi: tuple
    value: complex
    log_scale: float
    phase: float
    l1: float

    @property
    def relative(self):
        return abs(self.value) / self.l1 if self.l1 > 0 else 0.0

    @property
    def raw(self):
        """The unnormalised integral; ``inf`` when its modulus overflows."""
        if self.value == 0:
            return 0j
        with np.errstate(over="ignore"):
            mag = np.exp(np.log(abs(self.value)) + self.log_scale)
        if not np.isfinite(mag):
            return complex(np.inf, 0.0)
        return complex(mag * np.exp(1j * (np.angle(self.value) + self.phase)))


def _compat_kernel(profile):
    Ct = gauged_primitive(profile)
    star = int(np.argmin(Ct.imag))
    with np.errstate(under="ignore"):
        w = np.exp(1j * (Ct - Ct[star]))
    return w, star, Ct


def compat_integral(profile: ModeProfile, f) -> CompatIntegral:
    """Trapezoid rule for int_0^{2 pi} e^{iC(t)} f(t) dt at a resonant frequency."""
    if not profile.resonant:
        raise ValueError(f"compatibility integral is defined on resonant frequencies only, xi={profile.xi}")
    f = np.asarray(f, dtype=complex)
    w, star, Ct = _compat_kernel(profile)
    step = TWO_PI / profile.n_t
    integrand = w * f
    return CompatIntegral(
        xi=profile.xi,
        value=complex(step * integrand.sum()),
        log_scale=float(-Ct[star].imag),
        phase=float(Ct[star].real),
        l1=float(step * np.abs(integrand).sum()),
    )


def project_admissible(profile: ModeProfile, f):
    """L2-orthogonal projection of f onto {int e^{iC} f = 0}."""
    f = np.asarray(f, dtype=complex)
    w, _, _ = _compat_kernel(profile)
    denom = float(np.sum(np.abs(w) ** 2))
    return f - (np.sum(w * f) / denom) * np.conj(w)


# -- resonant modes ---------------------------------------------------------------


def _arc_lengths(n, p, clockwise=False):
    d = (np.arange(n) - p) % n if not clockwise else (p - np.arange(n)) % n
    return TWO_PI * d / n


def _resonant_spectral(profile, f, clockwise):
    n = profile.n_t
    p = profile.t_max_index
    Ct = gauged_primitive(profile)
    scaled = _scaled_exp(Ct)
    if scaled is None:
        return None
    h, ref = scaled
    h = h * f
    hat = np.fft.fft(h) / n
    g = _arc_kernel(n)
    per = np.fft.ifft(np.fft.fft(h) * np.fft.fft(g))  # sum_j h_j g[i - j]
    if not clockwise:
        arc = hat[0] * _arc_lengths(n, p) + per - per[p]
        pref = 1j
    else:
        arc = hat[0] * _arc_lengths(n, p, True) + per[p] - per
        pref = -1j
    return LogComplex.from_exponent(-1j * Ct - ref) * (pref * arc)


def _resonant_direct(profile, f, clockwise):
    n = profile.n_t
    p = profile.t_max_index
    Ct = gauged_primitive(profile)
    f = np.asarray(f, dtype=complex)
    g = _arc_kernel(n)
    L = _arc_lengths(n, p, clockwise)
    jj = np.arange(n)
    sgn = -1.0 if clockwise else 1.0
    pref = -1j if clockwise else 1j

    def expo(rows):
        return 1j * (Ct[None, :] - Ct[rows, None])

    def coef(rows):
        Q = L[rows, None] / n + sgn * (g[(rows[:, None] - jj[None, :]) % n] - g[(p - jj) % n][None, :])
        return pref * Q * f[None, :]

    return _log_rows(expo, coef, n)


def resonant_forms(profile: ModeProfile, f, method="auto"):
    """(anticlockwise from t_xi, clockwise to t_xi) evaluations.

    They agree when the compatibility integral vanishes. "spectral" and
    "direct" use the global arc weights, "sweep" the stepped solutions.
    """
    if method == "auto":
        method = "spectral" if _spectral_ok(profile) else "sweep"
    if method == "sweep":
        acw, cw, _, _ = _resonant_sweeps(profile, f)
        return acw, cw
    out = []
    for cw in (False, True):
        lc = _resonant_spectral(profile, f, cw) if method == "spectral" else None
        if lc is None:
            lc = _resonant_direct(profile, f, cw)
        out.append(lc)
    return tuple(out)


def solve_mode_resonant(
    profile: ModeProfile,
    f,
    method="auto",
    compat_tol=DEFAULT_COMPAT_TOL,
    self_check=False,
    check_compat=True,
) -> ModeSolution:
    """Particular solution with u(t_xi) = 0.

    "spectral" and "direct" integrate anticlockwise from t_xi. "sweep"
    steps both ways from t_xi and keeps, node by node, the arc along which
    B stays highest, so the kernel e^{B(t) - B(s)} never exceeds what the
    sublevel geometry forces. "auto" picks spectral for a small B range.
    """
    if not profile.resonant:
        raise ValueError(f"frequency {profile.xi} is not resonant; use solve_mode_nonresonant")
    f = np.asarray(f, dtype=complex)
    if not f.any():
        lc = LogComplex(np.full(profile.n_t, -np.inf), np.zeros(profile.n_t))
        return _finish(profile, lc, "resonant", "trivial")
    if check_compat:
        ci = compat_integral(profile, f)
        if ci.relative > compat_tol:
            raise ClosureError(
                f"compatibility integral {ci.value:.3e} (relative {ci.relative:.3e}) "
                f"exceeds tolerance at xi={profile.xi}",
                offenders=[(profile.xi, ci.relative)],
            )
    used = method
    if method == "auto":
        used = "spectral" if _spectral_ok(profile) else "sweep"
    extra = {}
    if used == "sweep":
        acw, cw, a_acw, a_cw = _resonant_sweeps(profile, f)
        pick = a_acw <= a_cw
        lc = LogComplex(np.where(pick, acw.log_mag, cw.log_mag), np.where(pick, acw.phase, cw.phase))
        extra["amplification"] = float(np.exp(min(np.minimum(a_acw, a_cw).max(), OVERFLOW_GUARD)))
        if self_check:
            extra["check_error"] = _lc_diff(acw, cw, np.maximum(a_acw, a_cw) <= 1.0)
        return _finish(profile, lc, "resonant", used, **extra)
    if used == "spectral":
        lc = _resonant_spectral(profile, f, False)
        if lc is None:
            raise ValueError(f"B range too wide for the FFT path at xi={profile.xi}; use method='sweep'")
        other = lambda: _resonant_spectral(profile, f, True)
    elif used == "direct":
        lc = _resonant_direct(profile, f, False)
        other = lambda: _resonant_direct(profile, f, True)
    else:
        raise ValueError(f"unknown method {method!r}")
    if self_check:
        extra["check_error"] = _lc_diff(lc, other())
    return _finish(profile, lc, "resonant", used, **extra)


def solve_mode(profile: ModeProfile, f, **kw) -> ModeSolution:
    if profile.resonant:
        kw.pop("quadrature", None)
        kw.pop("margin_floor", None)
        return solve_mode_resonant(profile, f, **kw)
    kw.pop("compat_tol", None)
    kw.pop("check_compat", None)
    return solve_mode_nonresonant(profile, f, **kw)


# -- global ---------------------------------------------------------------------


def _check_profiles(field: FourierField, profiles):
    if len(profiles) != len(field.box):
        raise ValueError(f"{len(profiles)} profiles for a box of {len(field.box)} frequencies")
    for p, xi in zip(profiles, field.box.frequencies):
        if p.xi != tuple(int(v) for v in xi):
            raise ValueError(f"profile order does not match the box at {tuple(xi)}")
        if p.n_t != field.grid.n_t:
            raise ValueError(f"profile at {p.xi} has n_t={p.n_t}, field has {field.grid.n_t}")


@dataclass
class ClosureReport:
    member: bool
    worst: tuple | None
    worst_relative: float
    integrals: list = field(repr=False)
    tolerance: float = DEFAULT_COMPAT_TOL

    @property
    def offenders(self):
        return [ci.xi for ci in self.integrals if ci.relative > self.tolerance]


def closure_membership(field: FourierField, profiles, tol=DEFAULT_COMPAT_TOL) -> ClosureReport:
    """f is in the closure of the range iff every resonant compatibility integral vanishes."""
    _check_profiles(field, profiles)
    ints = [compat_integral(p, field.data[:, k]) for k, p in enumerate(profiles) if p.resonant]
    if not ints:
        return ClosureReport(True, None, 0.0, [], tol)
    rel = np.array([ci.relative for ci in ints])
    w = int(np.argmax(rel))
    return ClosureReport(bool(rel.max() <= tol), ints[w].xi, float(rel[w]), ints, tol)


def project_field(field: FourierField, profiles) -> FourierField:
    """Project every resonant mode onto the compatible subspace."""
    _check_profiles(field, profiles)
    data = field.data.copy()
    for k, p in enumerate(profiles):
        if p.resonant:
            data[:, k] = project_admissible(p, data[:, k])
    return FourierField(field.grid, field.box, data)


def apply_P(u: FourierField, profiles) -> FourierField:
    """(D_t + c(t, xi)) u per frequency, D_t spectral."""
    _check_profiles(u, profiles)
    c = np.column_stack([p.c for p in profiles]) if profiles else np.zeros((u.grid.n_t, 0))
    with np.errstate(over="ignore", invalid="ignore"):
        Pu = D_t(u.data) + c * u.data
    if not np.isfinite(Pu).all():
        bad = np.flatnonzero(~np.isfinite(Pu).all(axis=0))
        raise OverflowError(f"P u overflows at {len(bad)} modes, first xi={tuple(int(v) for v in u.box.frequencies[bad[0]])}")
    return FourierField(u.grid, u.box, Pu)


def mode_residual(profile: ModeProfile, u, f):
    """sup_t |(D_t + c) u - f| for one mode."""
    return scaled_residual(profile, u, f)[0]


def scaled_residual(profile: ModeProfile, u, f):
    """(absolute, scaled) residual of one mode.

    The mode is divided by ``s = max(sup|u|, sup|f|)`` before differentiating,
    so modes near the float limit stay finite. ``scaled`` is the residual over
    ``s``; ``absolute`` is ``s`` times that, capped at the largest float.
    """
    u = np.asarray(u, dtype=complex)
    f = np.asarray(f, dtype=complex)
    s = max(float(np.abs(u).max(initial=0.0)), float(np.abs(f).max(initial=0.0)))
    if s == 0.0:
        return 0.0, 0.0
    r = float(np.abs(D_t(u / s) + profile.c * (u / s) - f / s).max())
    with np.errstate(over="ignore"):
        return float(min(r * s, np.finfo(float).max)), r


@dataclass
class GlobalSolution:
    u: FourierField
    modes: list = field(repr=False)
    saturated: list
    residual: float
    relative_residual: float
    scaled_residual: float = 0.0
    decay_u: object = None
    decay_u1: object = None
    decay_f: object = None
    small_divisors: list = field(default_factory=list)
    under_resolved: list = field(default_factory=list)


def solve_global(
    field: FourierField,
    profiles,
    compat_tol=DEFAULT_COMPAT_TOL,
    threads=1,
    method="auto",
    self_check=False,
    diagnostics=True,
) -> GlobalSolution:
    """Solve P u = f mode by mode.

    Raises :class:`ClosureError` listing every resonant frequency whose
    compatibility integral exceeds ``compat_tol``. Saturated modes are
    zeroed in ``u``, listed in ``saturated`` and left out of the residual.
    """
    _check_profiles(field, profiles)
    report = closure_membership(field, profiles, compat_tol)
    if not report.member:
        raise ClosureError(
            f"f is not in the closure of the range: {len(report.offenders)} resonant modes fail, "
            f"worst xi={report.worst} (relative {report.worst_relative:.3e})",
            offenders=report.offenders,
        )

    def one(k):
        return solve_mode(profiles[k], field.data[:, k], method=method, self_check=self_check,
                          check_compat=False, compat_tol=compat_tol)

    idx = range(len(profiles))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            modes = list(pool.map(one, idx))
    else:
        modes = [one(k) for k in idx]
    data = np.column_stack([m.u for m in modes]) if modes else np.zeros((field.grid.n_t, 0), complex)
    u = FourierField(field.grid, field.box, data)
    saturated = [m.xi for m in modes if m.saturated]
    ok = np.array([not m.saturated for m in modes], dtype=bool)
    fsup = float(np.abs(field.data[:, ok]).max()) if ok.any() and field.data.size else 0.0
    pairs = [scaled_residual(profiles[k], modes[k].u, field.data[:, k]) for k in np.flatnonzero(ok)]
    res = max((a for a, _ in pairs), default=0.0)
    sol = GlobalSolution(
        u=u,
        modes=modes,
        saturated=saturated,
        residual=res,
        relative_residual=min(res / fsup, np.finfo(float).max) if fsup > 0 else res,
        scaled_residual=max((r for _, r in pairs), default=0.0),
        small_divisors=[m.xi for m in modes if m.small_divisor],
        under_resolved=[m.xi for m in modes if m.under_resolved],
    )
    if diagnostics and (field.box.norms > 0).sum() >= 8:
        sol.decay_u = decay_fit(u, 0)
        sol.decay_u1 = decay_fit(u, 1)
        sol.decay_f = decay_fit(field, 0)
    return sol


__all__ = [
    "OVERFLOW_GUARD",
    "ClosureError",
    "LogComplex",
    "ModeSolution",
    "CompatIntegral",
    "ClosureReport",
    "GlobalSolution",
    "gauged_primitive",
    "quadrature_weights",
    "gregory_weights",
    "panel_weights",
    "sweep",
    "step_variation",
    "scaled_residual",
    "compat_integral",
    "project_admissible",
    "project_field",
    "nonresonant_forms",
    "resonant_forms",
    "solve_mode_nonresonant",
    "solve_mode_resonant",
    "solve_mode",
    "closure_membership",
    "apply_P",
    "mode_residual",
    "solve_global",
]
