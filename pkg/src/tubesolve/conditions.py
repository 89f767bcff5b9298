"""
Diophantine margins, the minimal oscillation constants for the (alpha)^+/-
and (beta) window conditions, and the aggregated verdict at a finite cutoff.

Window conditions are evaluated on grid nodes. A window of length
``delta = |xi|^(-m)`` becomes ``w = ceil(delta/step)`` grid steps, i.e. the
closed node range ``[s, s + w]``; longer intervals never need checking since
they contain such a window and the window maximum only grows with inclusion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, sparse

from .spectral import TWO_PI, CircleGrid, ResolutionError
from .symbol import ModeProfile
from .windows import running_min, sliding_max, sliding_min

DEFAULT_D_FLOOR = 2.0
DEFAULT_SLOPE_TOL = 0.05
DEFAULT_QUANTILE = 0.1
DEFAULT_OFFENDER_FACTOR = 100.0


# -- diophantine margins -------------------------------------------------------


def _log_abs_expm1(z):
    """log|exp(z) - 1| without overflow for large Re z."""
    z = complex(z)
    if z == 0:
        return -np.inf
    if z.real > 1.0:
        return z.real + float(np.log(abs(1.0 - np.exp(-z))))
    return float(np.log(abs(np.expm1(z))))


@dataclass(frozen=True)
class DioMargin:
    xi: tuple
    norm: float
    resonant: bool
    margin: float
    log_exp_margin1: float
    log_exp_margin2: float

    @property
    def exp_margin1(self):
        """|1 - exp(-2 pi i c0)|, capped at the largest finite double."""
        return float(np.exp(min(self.log_exp_margin1, 709.0)))

    @property
    def exp_margin2(self):
        """|exp(2 pi i c0) - 1|, capped at the largest finite double."""
        return float(np.exp(min(self.log_exp_margin2, 709.0)))


def dio_margin(profile: ModeProfile) -> DioMargin:
    """min over integers tau of |tau + c0(xi)|, plus the two exponential forms.

    The exponentials are evaluated from the reduced mean (c0 minus its nearest
    integer), which leaves them unchanged and keeps full relative accuracy
    near resonance.
    """
    cr = profile.c_reduced
    margin = float(np.hypot(cr.real, cr.imag))
    return DioMargin(
        xi=profile.xi,
        norm=profile.norm,
        resonant=profile.resonant,
        margin=margin,
        log_exp_margin1=_log_abs_expm1(-2j * np.pi * cr),
        log_exp_margin2=_log_abs_expm1(2j * np.pi * cr),
    )


def quantile_line(x, y, q=DEFAULT_QUANTILE):
    """Linear quantile regression y ~ b0 + b1 x at level q (Koenker-Bassett LP)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("no points to fit")
    if np.ptp(x) == 0:
        return float(np.quantile(y, q)), 0.0
    # variables: b0, b1, u+ (n), u- (n)
    cost = np.concatenate([[0.0, 0.0], np.full(n, q), np.full(n, 1.0 - q)])
    eye = sparse.identity(n, format="csr")
    A = sparse.hstack([sparse.csr_matrix(np.column_stack([np.ones(n), x])), eye, -eye], format="csr")
    bounds = [(None, None), (None, None)] + [(0, None)] * (2 * n)
    res = optimize.linprog(cost, A_eq=A, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"quantile regression failed: {res.message}")
    return float(res.x[0]), float(res.x[1])


@dataclass
class DioFit:
    """Lower-envelope fit ``margin >= C_hat (1+|xi|)^(-M_hat)`` over non-resonant xi."""

    C_hat: float
    M_hat: float
    slope: float
    offenders: list = field(default_factory=list)
    worst_offender: tuple | None = None
    vacuous: bool = False
    n_points: int = 0
    M_exp1: float = float("nan")
    M_exp2: float = float("nan")
    lemma_consistent: bool = True
    quantile: float = DEFAULT_QUANTILE
    offender_factor: float = DEFAULT_OFFENDER_FACTOR

    @property
    def clean(self):
        return not self.offenders


def dio_fit(margins, quantile=DEFAULT_QUANTILE, offender_factor=DEFAULT_OFFENDER_FACTOR) -> DioFit:
    """Fit the lower envelope of log margin against log(1 + |xi|).

    The envelope is the ``quantile`` regression line, so a sparse set of
    anomalously small margins cannot drag it down. Offenders are frequencies
    lying more than ``offender_factor`` below the envelope. The same fit on
    the two exponential margins must give exponents within 1 of ``M_hat``.
    """
    pts = [d for d in margins if not d.resonant]
    if not pts:
        return DioFit(C_hat=np.nan, M_hat=0.0, slope=0.0, vacuous=True,
                      quantile=quantile, offender_factor=offender_factor)
    if len(pts) < 8:
        raise ValueError(f"dio_fit needs at least 8 non-resonant frequencies, got {len(pts)}")
    x = np.log1p([d.norm for d in pts])
    y = np.log([d.margin for d in pts])
    b0, b1 = quantile_line(x, y, quantile)
    deficit = (b0 + b1 * x) - y
    bad = np.flatnonzero(deficit > np.log(offender_factor))
    offenders = [pts[i].xi for i in bad]
    worst = pts[int(bad[np.argmax(deficit[bad])])].xi if bad.size else None

    def exponent(vals):
        vals = np.clip(vals, -700.0, 700.0)
        return max(0.0, -quantile_line(x, vals, quantile)[1])

    M = max(0.0, -b1)
    M1 = exponent(np.array([d.log_exp_margin1 for d in pts]))
    M2 = exponent(np.array([d.log_exp_margin2 for d in pts]))
    return DioFit(
        C_hat=float(np.exp(b0)),
        M_hat=M,
        slope=b1,
        offenders=offenders,
        worst_offender=worst,
        n_points=len(pts),
        M_exp1=M1,
        M_exp2=M2,
        lemma_consistent=bool(abs(M1 - M) <= 1.0 and abs(M2 - M) <= 1.0),
        quantile=quantile,
        offender_factor=offender_factor,
    )


# -- window conditions ----------------------------------------------------------


def window_steps(norm: float, order: float, grid_n: int) -> tuple[float, int | None]:
    """Window length |xi|^(-m) and its size in whole grid steps (None if vacuous)."""
    delta = norm ** (-order)
    if delta > TWO_PI:
        return delta, None
    step = TWO_PI / grid_n
    w = int(np.ceil(delta / step * (1.0 - 1e-12)))
    if w < 4:
        need = CircleGrid.required_for_window(delta)
        raise ResolutionError(
            f"grid step {step:.3g} too coarse for window {delta:.3g} at |xi|={norm:.6g}; "
            f"use n_t >= {need}",
            required_nt=need,
        )
    return delta, min(w, grid_n)


def _check_norm(profile):
    if not profile.norm > 1.0:
        raise ValueError(f"window conditions need |xi| > 1, got |xi|={profile.norm} at xi={profile.xi}")
    return float(np.log(profile.norm))


@dataclass(frozen=True)
class AlphaScan:
    """Per-node gaps ``B(t) - min_window max B`` for one sign, with witnesses."""

    sign: int
    w: int
    delta: float
    gaps: np.ndarray
    window_start: np.ndarray  # lifted node index of the minimising window
    log_norm: float

    @property
    def dstar(self):
        g = self.gaps.max()
        return max(0.0, float(g)) / self.log_norm

    def witness(self):
        """(t index, lifted window start, lifted window end, gap) at the worst node."""
        i = int(np.argmax(self.gaps))
        s = int(self.window_start[i])
        return i, s, s + self.w, float(self.gaps[i])


def alpha_scan(profile: ModeProfile, sign: int, order: float) -> AlphaScan | None:
    """Scan every node for (alpha)^sign. Returns None when the window is vacuous."""
    log_norm = _check_norm(profile)
    n = profile.n_t
    delta, w = window_steps(profile.norm, order, n)
    if w is None:
        return None
    # lift B to [0, 4pi) for +, to [-2pi, 2pi) for -
    offset = 0 if sign > 0 else -n
    ext = profile.B_lift(np.arange(offset, offset + 2 * n))
    wmax, _ = sliding_max(ext, w + 1)  # wmax[s]: max over ext[s..s+w]
    # admissible starts for node i: s in [i, i + n - w] in ext coordinates
    mins, arg = sliding_min(wmax, n - w + 1)
    gaps = profile.B - mins[:n]
    return AlphaScan(sign, w, delta, gaps, arg[:n] + offset, log_norm)


def alpha_star(profile: ModeProfile, sign: int, order: float) -> float:
    """Minimal D with (alpha)_D^sign at xi (0 when the window is longer than 2 pi)."""
    scan = alpha_scan(profile, sign, order)
    return 0.0 if scan is None else scan.dstar


@dataclass(frozen=True)
class BetaScan:
    """Per-node gaps on both arcs joining t to t_xi, in rotated coordinates.

    Position ``u`` is node ``(p + u) mod n`` where ``p = t_max_index``. Arc
    (a) is [t, t_xi], arc (b) is [t_xi, t]; infinite gap entries are
    impossible, vacuous arcs carry ``-inf``.
    """

    w: int
    delta: float
    p: int
    gap_a: np.ndarray
    gap_b: np.ndarray
    start_a: np.ndarray
    start_b: np.ndarray
    log_norm: float

    def per_node(self):
        da = np.maximum(self.gap_a, 0.0) / self.log_norm
        db = np.maximum(self.gap_b, 0.0) / self.log_norm
        return np.minimum(da, db)

    @property
    def dstar(self):
        d = self.per_node()[1:]
        return float(d.max()) if d.size else 0.0

    def witness(self):
        """(t, I+ start, I- start, gap+, gap-) as node indices mod n_t at the worst node.

        I+ lies in [t, t_xi] and I- in [t_xi, t]; each spans ``w`` steps.
        """
        d = self.per_node()
        u = 1 + int(np.argmax(d[1:]))
        n = len(self.gap_a)
        return (
            (self.p + u) % n,
            (self.p + int(self.start_a[u])) % n,
            (self.p + int(self.start_b[u])) % n,
            float(self.gap_a[u]),
            float(self.gap_b[u]),
        )


def beta_scan(profile: ModeProfile, order: float) -> BetaScan | None:
    if not profile.resonant:
        raise ValueError(f"beta condition is defined only on resonant frequencies, xi={profile.xi}")
    log_norm = _check_norm(profile)
    n = profile.n_t
    delta, w = window_steps(profile.norm, order, n)
    if w is None:
        return None
    p = profile.t_max_index
    rot = profile.B[(p + np.arange(n + 1)) % n]  # periodic, rot[n] = rot[0]
    wmax, _ = sliding_max(rot, w + 1)  # starts 0..n-w
    suf, suf_arg = running_min(wmax, reverse=True)
    pre, pre_arg = running_min(wmax)
    u = np.arange(n)
    gap_a = np.full(n, -np.inf)
    gap_b = np.full(n, -np.inf)
    start_a = np.full(n, -1, dtype=np.int64)
    start_b = np.full(n, -1, dtype=np.int64)
    ok_a = u <= n - w  # arc [u, n] holds a window
    gap_a[ok_a] = rot[u[ok_a]] - suf[u[ok_a]]
    start_a[ok_a] = suf_arg[u[ok_a]]
    ok_b = u >= w  # arc [0, u] holds a window
    gap_b[ok_b] = rot[u[ok_b]] - pre[u[ok_b] - w]
    start_b[ok_b] = pre_arg[u[ok_b] - w]
    return BetaScan(w, delta, p, gap_a, gap_b, start_a, start_b, log_norm)


def beta_star(profile: ModeProfile, order: float) -> float:
    """Minimal D with (beta)_D at a resonant xi."""
    scan = beta_scan(profile, order)
    return 0.0 if scan is None else scan.dstar


def alpha_holds(profile: ModeProfile, sign: int, order: float, D: float) -> bool:
    """Direct check of (alpha)_D^sign on the grid, from the definition."""
    log_norm = _check_norm(profile)
    n = profile.n_t
    _, w = window_steps(profile.norm, order, n)
    if w is None:
        return True
    for i in range(n):
        lo, hi = (i, i + n) if sign > 0 else (i - n, i)
        seg = profile.B_lift(np.arange(lo, hi + 1))
        wins = np.lib.stride_tricks.sliding_window_view(seg, w + 1).max(axis=1)
        if np.any(profile.B[i] - wins > D * log_norm):
            return False
    return True


@dataclass(frozen=True)
class OscillationConstants:
    xi: tuple
    norm: float
    resonant: bool
    Dplus: float
    Dminus: float
    Dbeta: float | None
    vacuous: bool

    @property
    def governing(self):
        """min(D+, D-) off resonance, D_beta on it."""
        return self.Dbeta if self.resonant else min(self.Dplus, self.Dminus)


def oscillation_constants(profile: ModeProfile, order: float) -> OscillationConstants:
    plus = alpha_scan(profile, +1, order)
    if plus is None:
        return OscillationConstants(profile.xi, profile.norm, profile.resonant, 0.0, 0.0,
                                    0.0 if profile.resonant else None, True)
    minus = alpha_scan(profile, -1, order)
    dbeta = beta_star(profile, order) if profile.resonant else None
    return OscillationConstants(profile.xi, profile.norm, profile.resonant,
                                plus.dstar, minus.dstar, dbeta, False)


# -- verdict --------------------------------------------------------------------


def envelope_slope(norms, values):
    """Least-squares slope of the running maximum of ``values`` against log|xi|."""
    norms = np.asarray(norms, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(norms) < 2:
        return 0.0
    order = np.argsort(norms, kind="stable")
    x = np.log(norms[order])
    if np.ptp(x) == 0:
        return 0.0
    run = np.maximum.accumulate(values[order])
    return float(np.polyfit(x, run, 1)[0])


@dataclass
class Verdict:
    K: float
    order: float
    dio: DioFit | None
    supD: float
    envelope_slope: float
    solvable: bool
    reasons: list
    margins: list = field(repr=False)
    constants: list = field(repr=False)
    d_floor: float = DEFAULT_D_FLOOR

    def table(self):
        """Per-frequency rows in box order."""
        by_xi = {c.xi: c for c in self.constants}
        rows = []
        for d in self.margins:
            c = by_xi.get(d.xi)
            rows.append({
                "xi": d.xi,
                "norm": d.norm,
                "resonant": d.resonant,
                "margin": d.margin,
                "Dplus": None if c is None else c.Dplus,
                "Dminus": None if c is None else c.Dminus,
                "Dbeta": None if c is None else c.Dbeta,
                "vacuous": None if c is None else c.vacuous,
            })
        return rows


def aggregate(
    margins,
    constants,
    K,
    order,
    d_floor=DEFAULT_D_FLOOR,
    slope_tol=DEFAULT_SLOPE_TOL,
    quantile=DEFAULT_QUANTILE,
    offender_factor=DEFAULT_OFFENDER_FACTOR,
) -> Verdict:
    """Combine the diophantine fit and the oscillation constants into a verdict.

    Solvable at the cutoff iff the diophantine fit has no offenders and the
    governing constants over |xi| >= d_floor have a running-maximum envelope
    with slope at most ``slope_tol`` against log|xi|.
    """
    reasons = []
    nonres = [d for d in margins if not d.resonant]
    if 0 < len(nonres) < 8:
        dio = None
        reasons.append(f"diophantine fit skipped: only {len(nonres)} non-resonant frequencies")
    else:
        dio = dio_fit(margins, quantile, offender_factor)
        if dio.offenders:
            reasons.append(f"diophantine offenders, worst at xi={dio.worst_offender}")
    used = [c for c in constants if c.norm >= d_floor]
    vals = np.array([c.governing for c in used], dtype=float)
    supD = float(vals.max()) if vals.size else 0.0
    slope = envelope_slope([c.norm for c in used], vals) if vals.size else 0.0
    bounded = bool(np.isfinite(supD) and slope <= slope_tol)
    if not bounded:
        kinds = set()
        for c in used:
            if c.governing > 0:
                kinds.add("beta" if c.resonant else "alpha")
        reasons.append(f"oscillation constants grow ({'/'.join(sorted(kinds))}): "
                       f"envelope slope {slope:.3g} > {slope_tol}")
    solvable = (dio is None or dio.clean) and bounded
    return Verdict(K, order, dio, supD, slope, solvable, reasons, list(margins), list(used), d_floor)


def check_conditions(profiles, order, K, d_floor=DEFAULT_D_FLOOR, map_fn=map, **kw) -> Verdict:
    """Margins and constants for every profile, then :func:`aggregate`."""
    margins = [dio_margin(p) for p in profiles]
    targets = [p for p in profiles if p.norm >= d_floor]
    constants = list(map_fn(lambda p: oscillation_constants(p, order), targets))
    return aggregate(margins, constants, K, order, d_floor=d_floor, **kw)
