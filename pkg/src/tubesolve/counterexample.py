"""
Right-hand sides that witness non-solvability.

Each construction places a smooth bump phi_k, dressed with the integrating
factor, on one frequency xi_k of a chosen sequence. The forged f is smooth
(its modes decay super-polynomially along the sequence) and lies in the
closure of the range, yet the solution modes stay bounded below:

* ``dc``    : small divisors, |u(t_k, xi_k)| = int phi
* ``alpha`` : failing (alpha) windows, |u(t_k, xi_k)| >= |xi_k|^(-m)/4
* ``beta``  : failing (beta) windows, |int_[t_xi, t_k] ...| >= |xi_k|^(-m)/2

Partial sums over the available k replace the infinite series; the
measured bounds are recorded term by term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conditions import alpha_scan, beta_scan, dio_fit, dio_margin
from .spectral import TWO_PI, CircleGrid, FourierField, FrequencyBox, ResolutionError, power_law_fit
from .solver import closure_membership, gauged_primitive, solve_mode

DEFAULT_PLATEAU = 0.5


class NoWitnessError(ValueError):
    """The symbol shows no failing condition at this cutoff and resolution."""


# -- bumps ----------------------------------------------------------------------


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, flat to all orders at both ends."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
        out = a / (a + b)
    return np.where(x <= 0, 0.0, np.where(x >= 1, 1.0, out))


@dataclass(frozen=True)
class BumpSpec:
    """Bump supported on the open arc (start, stop), equal to 1 on the central plateau.

    ``start``/``stop`` are radians on the universal cover (``stop - start < 2 pi``).
    """

    n_t: int
    start: float
    stop: float
    plateau: float
    samples: np.ndarray = field(repr=False)

    @property
    def length(self):
        return self.stop - self.start

    @property
    def plateau_interval(self):
        pad = 0.5 * (1.0 - self.plateau) * self.length
        return self.start + pad, self.stop - pad

    @property
    def integral(self):
        """Trapezoid integral on the grid, spectrally accurate for a smooth bump."""
        return float(self.samples.sum() * TWO_PI / self.n_t)


def bump_profile(x, plateau=DEFAULT_PLATEAU):
    """Bump on [0, 1] in the normalised coordinate x; plateau is the flat fraction."""
    x = np.asarray(x, dtype=float)
    ramp = 0.5 * (1.0 - plateau)
    if ramp <= 0:
        return ((x > 0) & (x < 1)).astype(float)
    return smooth_step(x / ramp) * smooth_step((1.0 - x) / ramp)


def bump(grid: CircleGrid, start: float, stop: float, plateau: float = DEFAULT_PLATEAU) -> BumpSpec:
    """Sample a bump on the arc (start, stop) of the circle grid."""
    length = stop - start
    if not 0 < length < TWO_PI:
        raise ValueError(f"bump arc must have length in (0, 2 pi), got {length}")
    if not 0 <= plateau < 1:
        raise ValueError(f"plateau fraction must lie in [0, 1), got {plateau}")
    if length <= 4 * grid.step:
        need = CircleGrid.required_for_window(length, per_window=5)
        raise ResolutionError(f"bump of length {length:.3g} spans at most 4 grid steps; use n_t >= {need}", need)
    x = np.mod(grid.nodes - start, TWO_PI) / length
    phi = np.where(x < 1.0, bump_profile(x, plateau), 0.0)
    return BumpSpec(grid.n_t, float(start), float(stop), float(plateau), phi)


# -- forged fields --------------------------------------------------------------


@dataclass
class ModeRecord:
    """Construction data and measured bound for one term of a forged series."""

    xi: tuple
    k: int
    t_index: int
    support: tuple
    prefactor: complex = 1.0
    target: float = float("nan")
    measured: float | None = None
    holds: bool | None = None
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        d = {
            "xi": list(self.xi),
            "k": self.k,
            "t_index": self.t_index,
            "support": [list(s) if isinstance(s, tuple) else s for s in self.support],
            "prefactor": [self.prefactor.real, self.prefactor.imag],
            "target": self.target,
            "measured": self.measured,
            "holds": self.holds,
        }
        d.update(self.extra)
        return d


@dataclass
class ForgedRHS:
    tag: str
    field: FourierField
    modes: list
    order: float
    skipped: list = field(default_factory=list)

    @property
    def sequence(self):
        return [m.xi for m in self.modes]

    def metadata(self):
        return {
            "tag": self.tag,
            "order": self.order,
            "n_t": self.field.grid.n_t,
            "N": self.field.box.N,
            "K": self.field.box.K,
            "sequence": [list(x) for x in self.sequence],
            "skipped": [list(x) for x in self.skipped],
            "modes": [m.as_dict() for m in self.modes],
        }


def _by_xi(profiles):
    return {p.xi: p for p in profiles}


def _dyadic_sequence(box: FrequencyBox, K_terms=None):
    seq = []
    k = 1
    e1 = np.zeros(box.N, dtype=int)
    while 2**k <= box.K and (K_terms is None or len(seq) < K_terms):
        e1[0] = 2**k
        seq.append((k, tuple(int(v) for v in e1)))
        k += 1
    return seq


def _check_distinct(seq):
    xs = [xi for _, xi in seq]
    if len(set(xs)) != len(xs):
        raise ValueError("forging sequence repeats a frequency")


def _grid_of(profiles):
    return CircleGrid(profiles[0].n_t)


def _blank(profiles, box):
    grid = _grid_of(profiles)
    return grid, np.zeros((grid.n_t, len(box)), dtype=complex)


def dc_sequence(profiles, K_terms=None, **fit_kw):
    """Offenders of the diophantine fit, by increasing |xi|, numbered k = 1, 2, ..."""
    margins = [dio_margin(p) for p in profiles]
    fit = dio_fit(margins, **fit_kw)
    norm = {d.xi: d.norm for d in margins}
    offs = sorted(fit.offenders, key=lambda x: (norm[x], x))
    if K_terms is not None:
        offs = offs[:K_terms]
    return [(k + 1, xi) for k, xi in enumerate(offs)]


def forge_dc(profiles, box: FrequencyBox, sequence=None, interval=None, plateau=DEFAULT_PLATEAU,
             K_terms=None) -> ForgedRHS:
    """Small-divisor counterexample.

    ``sequence`` is a list of (k, xi) with xi non-resonant; by default the
    offenders of the diophantine fit. t_k is the first maximiser of the lifted
    B on [0, 2 pi]; the bump arc ``interval`` must avoid every t_k and lie on
    one side of all of them. Left ``None`` it is the larger of the two free
    arcs, trimmed by 10% at each end.
    """
    by = _by_xi(profiles)
    seq = dc_sequence(profiles, K_terms) if sequence is None else list(sequence)
    if not seq:
        raise NoWitnessError("no diophantine offenders at this cutoff")
    _check_distinct(seq)
    grid, data = _blank(profiles, box)
    n = grid.n_t
    tks = {}
    for k, xi in seq:
        p = by[xi]
        if p.resonant:
            raise ValueError(f"dc sequence must avoid resonant frequencies, xi={xi} is resonant")
        tks[xi] = int(np.argmax(p.B_lift(np.arange(n + 1))))
    t_lo = min(tks.values()) * grid.step
    t_hi = max(tks.values()) * grid.step
    if interval is None:
        left, right = (0.0, t_lo), (t_hi, TWO_PI)
        a, b = max(left, right, key=lambda ab: ab[1] - ab[0])
        pad = 0.1 * (b - a)
        interval = (a + pad, b - pad)
    alpha_, beta_ = map(float, interval)
    if not 0 <= alpha_ < beta_ <= TWO_PI:
        raise ValueError(f"interval must satisfy 0 <= alpha < beta <= 2 pi, got {interval}")
    if t_hi < alpha_:
        forward = True
    elif beta_ < t_lo:
        forward = False
    else:
        raise NoWitnessError(
            f"maximisers t_k span [{t_lo:.3f}, {t_hi:.3f}] and do not lie on one side of {interval}"
        )
    phi = bump(grid, alpha_, beta_, plateau)
    j = np.arange(n)
    modes = []
    for k, xi in seq:
        p = by[xi]
        tk = tks[xi]
        cr = p.c_reduced
        pref = np.expm1(2j * np.pi * cr) if forward else -np.expm1(-2j * np.pi * cr)
        expo = -1j * (p.C_lift(j) - p.C_lift(tk))
        live = phi.samples > 0
        col = np.zeros(n, dtype=complex)
        # |e^{-iC}| <= 1 by the choice of t_k
        col[live] = pref * np.exp(expo[live]) * phi.samples[live]
        data[:, box.index_of(xi)] = col
        modes.append(ModeRecord(
            xi=xi, k=k, t_index=tk % n, support=(alpha_, beta_), prefactor=complex(pref),
            target=phi.integral,
            extra={"variant": "forward" if forward else "backward", "margin": abs(cr),
                   "plant_bound": float((1 + p.norm) ** (-k)),
                   "kernel_sup": float(np.exp(expo.real[live].max())) if live.any() else 0.0},
        ))
    return ForgedRHS("dc", FourierField(grid, box, data), modes, float("nan"))


def _underflow(col, log_mag):
    """log sup|f_k| and whether the term vanished in floating point."""
    return {"f_log_sup": float(log_mag.max()), "underflow": not bool(np.any(col))}


def forge_alpha(profiles, box: FrequencyBox, order: float, sequence=None, K_terms=None,
                plateau=0.6) -> ForgedRHS:
    """(alpha) counterexample from the worst grid windows.

    ``sequence`` defaults to xi_k = 2^k e_1 inside the box. A term needs
    min(D+, D-) > k at xi_k; terms without such a witness are skipped and
    listed, and :class:`NoWitnessError` is raised when none remain.
    """
    by = _by_xi(profiles)
    seq = _dyadic_sequence(box, K_terms) if sequence is None else list(sequence)
    _check_distinct(seq)
    grid, data = _blank(profiles, box)
    n = grid.n_t
    modes, skipped = [], []
    for k, xi in seq:
        p = by[xi]
        if p.resonant or p.norm <= 1:
            skipped.append(xi)
            continue
        plus, minus = alpha_scan(p, +1, order), alpha_scan(p, -1, order)
        if plus is None or min(plus.dstar, minus.dstar) <= k:
            skipped.append(xi)
            continue
        scan = plus if p.b0 >= 0 else minus
        i, s0, s1, gap = scan.witness()
        a, b = s0 * grid.step, s1 * grid.step
        phi = bump(grid, a, b, plateau)
        # lift every node into [t_k, t_k + 2 pi) (+) or (t_k - 2 pi, t_k] (-)
        j = np.arange(n)
        lifted = i + (j - i) % n if scan.sign > 0 else i - (i - j) % n
        live = phi.samples > 0
        col = np.zeros(n, dtype=complex)
        expo = 1j * (p.C[i] - p.C_lift(lifted[live]))
        with np.errstate(under="ignore"):
            col[live] = np.exp(expo) * phi.samples[live]
        data[:, box.index_of(xi)] = col
        cr = p.c_reduced
        pref_den = np.expm1(2j * np.pi * cr) if scan.sign > 0 else -np.expm1(-2j * np.pi * cr)
        plateau_len = phi.plateau * phi.length
        modes.append(ModeRecord(
            xi=xi, k=k, t_index=i, support=(a, b), prefactor=complex(pref_den),
            target=float(p.norm ** (-order) / 4),
            extra={"side": "+" if scan.sign > 0 else "-", "gap": gap, "log_norm_k": k * float(np.log(p.norm)),
                   **_underflow(col, expo.real + np.log(phi.samples[live])),
                   "window_steps": scan.w, "plateau_length": plateau_len,
                   "D_plus": plus.dstar, "D_minus": minus.dstar,
                   "prefactor_bound_holds": bool(abs(pref_den) <= 2.0)},
        ))
    if not modes:
        raise NoWitnessError("symbol satisfies (alpha) at this scale: no failing windows on the sequence")
    return ForgedRHS("alpha", FourierField(grid, box, data), modes, float(order), skipped)


def forge_beta(profiles, box: FrequencyBox, order: float, sequence=None, K_terms=None,
               plateau=0.6) -> ForgedRHS:
    """(beta) counterexample: phi_k = phi_k^+ - phi_k^- with equal integrals.

    phi^+ sits in the failing window on the arc [t_k, t_xi], phi^- in the one
    on [t_xi, t_k]; both windows have the same number of grid steps and the
    same profile, so their grid integrals agree exactly and the compatibility
    integral vanishes.
    """
    by = _by_xi(profiles)
    seq = _dyadic_sequence(box, K_terms) if sequence is None else list(sequence)
    _check_distinct(seq)
    grid, data = _blank(profiles, box)
    n = grid.n_t
    modes, skipped = [], []
    for k, xi in seq:
        p = by[xi]
        if not p.resonant or p.norm <= 1:
            skipped.append(xi)
            continue
        scan = beta_scan(p, order)
        if scan is None or scan.dstar <= k:
            skipped.append(xi)
            continue
        t, sa, sb, gap_a, gap_b = scan.witness()
        w = scan.w
        plus = bump(grid, sa * grid.step, (sa + w) * grid.step, plateau)
        minus = bump(grid, sb * grid.step, (sb + w) * grid.step, plateau)
        phik = plus.samples - minus.samples
        Ct = gauged_primitive(p)
        live = phik != 0
        col = np.zeros(n, dtype=complex)
        expo = 1j * (Ct[t] - Ct[live])
        with np.errstate(under="ignore"):
            col[live] = np.exp(expo) * phik[live]
        data[:, box.index_of(xi)] = col
        modes.append(ModeRecord(
            xi=xi, k=k, t_index=t, support=((plus.start, plus.stop), (minus.start, minus.stop)),
            target=float(p.norm ** (-order) / 2),
            extra={"t_xi_index": p.t_max_index, "gap_plus": gap_a, "gap_minus": gap_b,
                   **_underflow(col, expo.real + np.log(np.abs(phik[live]))),
                   "log_norm_k": k * float(np.log(p.norm)), "window_steps": w,
                   "integral_plus": plus.integral, "integral_minus": minus.integral,
                   "D_beta": scan.dstar},
        ))
    if not modes:
        raise NoWitnessError("symbol satisfies (beta) at this scale: no failing windows on the sequence")
    return ForgedRHS("beta", FourierField(grid, box, data), modes, float(order), skipped)


# -- verification ---------------------------------------------------------------


def arc_trapezoid(values, start, stop):
    """Trapezoid integral of grid samples over the anticlockwise arc from node start to node stop."""
    values = np.asarray(values)
    n = values.shape[0]
    L = (stop - start) % n
    if L == 0:
        return 0.0 * values[0]
    idx = (start + np.arange(L + 1)) % n
    seg = values[idx]
    return (TWO_PI / n) * (seg.sum() - 0.5 * (seg[0] + seg[-1]))


@dataclass
class ForgeReport:
    tag: str
    all_hold: bool
    closure_member: bool
    closure_worst: float
    f_decay: object
    u_decay: object
    rows: list
    underflowed: list = field(default_factory=list)


def verify_forged(forged: ForgedRHS, profiles, rtol_dc=1e-8) -> ForgeReport:
    """Solve every forged mode and fill in the measured bound of each term.

    Terms whose samples all underflow (``log sup|f_k|`` below about -745)
    measure zero; they are listed in ``underflowed`` rather than hidden.
    """
    by = _by_xi(profiles)
    box = forged.field.box
    closure = closure_membership(forged.field, profiles)
    usup = []
    rows = []
    for m in forged.modes:
        p = by[m.xi]
        f = forged.field.data[:, box.index_of(m.xi)]
        sol = solve_mode(p, f, check_compat=False)
        uk = sol.u[m.t_index]
        usup.append(sol.sup_norm)
        if forged.tag == "dc":
            m.measured = float(abs(uk))
            m.holds = bool(abs(m.measured - m.target) <= rtol_dc * max(m.target, 1.0))
        elif forged.tag == "alpha":
            m.measured = float(abs(uk))
            m.holds = bool(m.measured >= m.target)
        else:
            Ct = gauged_primitive(p)
            integrand = np.exp(1j * (Ct - Ct[m.t_index])) * f
            arc = arc_trapezoid(integrand, p.t_max_index, m.t_index)
            m.measured = float(abs(arc))
            m.extra["u_at_t_k"] = float(abs(uk))
            m.holds = bool(m.measured >= m.target)
        m.extra["u_sup"] = sol.sup_norm
        rows.append(m.as_dict())
    norms = np.array([by[m.xi].norm for m in forged.modes])
    fsup = np.abs(forged.field.data[:, [box.index_of(m.xi) for m in forged.modes]]).max(axis=0)
    f_decay = power_law_fit(norms, fsup) if len(norms) >= 2 else None
    u_decay = power_law_fit(norms, np.array(usup)) if len(norms) >= 2 else None
    return ForgeReport(
        tag=forged.tag,
        all_hold=all(m.holds for m in forged.modes),
        closure_member=closure.member,
        closure_worst=closure.worst_relative,
        f_decay=f_decay,
        u_decay=u_decay,
        rows=rows,
        underflowed=[m.xi for m in forged.modes if m.extra.get("underflow")],
    )


def planted_dc_table(grid: CircleGrid, box: FrequencyBox, ks=range(1, 7), slope=None, amplitude=0.3,
                     scale=0.5):
    """Samples of a symbol violating (DC) on xi_k = 2^k e_1.

    Background c(t, xi) = slope*|xi| + i*amplitude*sin(t) with ``slope`` the
    golden-ratio conjugate; on the planted points the mean is moved to the
    nearest integer plus scale*(1+|xi_k|)^(-k).
    """
    if slope is None:
        slope = (np.sqrt(5.0) - 1.0) / 2.0
    t = grid.nodes
    norms = box.norms
    table = slope * norms[None, :] + 1j * amplitude * np.sin(t)[:, None]
    table = np.asarray(table, dtype=complex)
    e1 = np.zeros(box.N, dtype=int)
    for k in ks:
        e1[0] = 2**k
        if 2**k > box.K:
            break
        idx = box.index_of(e1)
        a0 = np.rint(slope * norms[idx]) + scale * (1.0 + norms[idx]) ** (-k)
        table[:, idx] = a0 + 1j * amplitude * np.sin(t)
    return table


__all__ = [
    "NoWitnessError",
    "smooth_step",
    "bump_profile",
    "BumpSpec",
    "bump",
    "ModeRecord",
    "ForgedRHS",
    "dc_sequence",
    "forge_dc",
    "forge_alpha",
    "forge_beta",
    "arc_trapezoid",
    "ForgeReport",
    "verify_forged",
    "planted_dc_table",
]
