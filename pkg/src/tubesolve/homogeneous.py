"""
Sign-change and sublevel-connectedness tests for positively homogeneous
symbols, and the resulting solvability characterisation at a cutoff.

For c(t, n xi) = n^m c(t, xi) with n > 0 the sign pattern of b(., n xi) and
the sublevel topology of B(., n xi) are those at the primitive direction xi,
so the scans only visit primitive frequencies.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .conditions import DEFAULT_OFFENDER_FACTOR, DEFAULT_QUANTILE, dio_fit, dio_margin
from .spectral import CircleGrid, FrequencyBox
from .symbol import DEFAULT_EPS_Z, HomogeneousPlusLower, HomogeneousSymbol, ModeProfile, evaluate, primitive_part

NEAR_DEGENERATE = 1e-2
QUANTUM_RTOL = 1e-12


@dataclass(frozen=True)
class SignChange:
    changes: bool
    near_degenerate: bool = False
    degenerate: bool = False
    note: str = ""

    def __bool__(self):
        return self.changes


def sign_change(b, tol=1e-9) -> SignChange:
    """Does ``b`` take both signs, beyond ``tol`` times its sup norm?

    A sign change whose smaller side is below 1% of the sup norm is flagged
    near-degenerate: grazing profiles such as cos t - 0.999 sit there.
    """
    b = np.asarray(b.b if isinstance(b, ModeProfile) else b, dtype=float)
    scale = float(np.abs(b).max())
    if scale == 0.0:
        return SignChange(False, degenerate=True, note="b vanishes identically")
    lo, hi = float(b.min()), float(b.max())
    changes = lo < -tol * scale and hi > tol * scale
    near = changes and min(-lo, hi) < NEAR_DEGENERATE * scale
    note = "near-degenerate sign change" if near else ""
    return SignChange(bool(changes), bool(near), False, note)


def quantize(B, rtol=QUANTUM_RTOL):
    """Snap samples to a grid of spacing ``rtol * max|B|`` so roundoff plateaus compare equal."""
    B = np.asarray(B, dtype=float)
    q = rtol * max(float(np.abs(B).max()), 1e-300)
    return np.round(B / q) * q


def sublevel_components(B, lam) -> int:
    """Number of connected components of {B < lam} on the discrete circle."""
    below = np.asarray(B) < lam
    if below.all():
        return 1
    # count run starts: below here, not below at the previous node (cyclically)
    return int(np.count_nonzero(below & ~np.roll(below, 1)))


def _component_counts(B):
    """Counts of {B < lam} at every midpoint of consecutive distinct values."""
    levels = np.unique(B)
    if levels.size < 2:
        return np.array([]), np.array([], dtype=int)
    mids = 0.5 * (levels[1:] + levels[:-1])
    prev = np.roll(B, 1)
    # node i starts a run for lam in (B[i], B[i-1]]
    lo = B[B < prev]
    hi = prev[B < prev]
    diff = np.zeros(mids.size + 1, dtype=int)
    np.add.at(diff, np.searchsorted(mids, lo, side="right"), 1)
    np.add.at(diff, np.searchsorted(mids, hi, side="right"), -1)
    counts = np.cumsum(diff)[:-1]
    return mids, counts


def local_maxima_count(B) -> int:
    """Strict local maxima of a cyclic sequence, with equal neighbours merged first."""
    B = np.asarray(B, dtype=float)
    keep = B != np.roll(B, 1)
    merged = B[keep]
    if merged.size < 2:
        return 0
    return int(np.count_nonzero((merged > np.roll(merged, 1)) & (merged > np.roll(merged, -1))))


@dataclass(frozen=True)
class SublevelScan:
    xi: tuple
    levels: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    max_components: int
    connected_all: bool

    @property
    def component_counts(self):
        return dict(zip(self.levels.tolist(), self.counts.tolist()))


def connected_all(profile: ModeProfile, rtol=QUANTUM_RTOL) -> SublevelScan:
    """Sweep lam over all midpoints of the sample values of B and count components."""
    if not profile.resonant:
        raise ValueError(f"sublevel scan needs a resonant frequency, xi={profile.xi}")
    B = quantize(profile.B, rtol)
    mids, counts = _component_counts(B)
    mx = int(counts.max()) if counts.size else (1 if B.size else 0)
    return SublevelScan(profile.xi, mids, counts, mx, mx <= 1)


@dataclass
class CorollaryVerdict:
    solvable: bool
    reasons: list
    dio: object
    rows: list = field(repr=False, default_factory=list)


def _check_integer_order(order):
    if not (order > 0 and float(order).is_integer()):
        raise ValueError(f"homogeneous characterisation needs a positive integer order, got {order}")


def corollary_verdict(
    spec: HomogeneousSymbol,
    grid: CircleGrid,
    box: FrequencyBox,
    eps_z=DEFAULT_EPS_Z,
    tol=1e-9,
    primitive_only=True,
    quantile=DEFAULT_QUANTILE,
    offender_factor=DEFAULT_OFFENDER_FACTOR,
) -> CorollaryVerdict:
    """Solvable at the cutoff iff (DC) is clean, b keeps its sign at every
    non-resonant xi and every sublevel of B is connected at every resonant xi.

    With ``primitive_only`` each primitive direction is scanned once and
    stands in for all of its multiples in the box; the resonance class is
    still read off each multiple, so a direction is tested for sign change
    if any multiple is non-resonant and for connectedness if any is resonant.
    """
    order = spec.order
    _check_integer_order(order)
    profiles = evaluate(spec, grid, box, eps_z)
    margins = [dio_margin(p) for p in profiles]
    nonres = sum(not d.resonant for d in margins)
    reasons = []
    dio = None
    if nonres >= 8 or nonres == 0:
        dio = dio_fit(margins, quantile, offender_factor)
        if dio.offenders:
            reasons.append(f"diophantine offenders, worst at xi={dio.worst_offender}")
    else:
        reasons.append(f"diophantine fit skipped: only {nonres} non-resonant frequencies")

    classes = {}
    by_xi = {}
    for p in profiles:
        if p.norm == 0:
            continue
        g, prim = primitive_part(p.xi)
        key = prim if primitive_only else p.xi
        classes.setdefault(key, set()).add(p.resonant)
        by_xi[p.xi] = p

    rows = []
    for key in sorted(classes):
        p = by_xi.get(key)
        if p is None:
            # primitive direction outside the box is impossible: |prim| <= |xi|
            raise AssertionError(f"primitive direction {key} missing from box")
        sc = sign_change(p.b, tol)
        row = {"xi": key, "signChange": sc.changes, "maxComponents": None, "corollaryReason": ""}
        if False in classes[key] and sc.changes:
            row["corollaryReason"] = "sign change at non-resonant xi"
            reasons.append(f"b changes sign at non-resonant xi={key}")
        if True in classes[key]:
            probe = p if p.resonant else _as_resonant(p)
            scan = connected_all(probe)
            row["maxComponents"] = scan.max_components
            if not scan.connected_all:
                row["corollaryReason"] = (row["corollaryReason"] + "; " if row["corollaryReason"] else "") + (
                    "sublevel disconnected at primitive xi" if primitive_only else "sublevel disconnected"
                )
                reasons.append(f"sublevel disconnected at xi={key} ({scan.max_components} components)")
        rows.append(row)
    solvable = (dio is None or dio.clean) and not any(
        r["corollaryReason"] for r in rows
    )
    return CorollaryVerdict(bool(solvable), reasons, dio, rows)


def _as_resonant(p: ModeProfile) -> ModeProfile:
    # a multiple n*xi is resonant: then b0(xi) = b0(n xi)/n^m = 0 and B is periodic
    return replace(p, resonant=True)


@dataclass
class PerturbedCheck:
    status: str  # "not_solvable" or "inconclusive"
    reasons: list
    witness: tuple | None = None


def perturbed_principal_check(
    spec: HomogeneousPlusLower, grid: CircleGrid, box: FrequencyBox, tol=1e-9, mean_tol=1e-12
) -> PerturbedCheck:
    """Flag non-solvability from the principal part alone.

    Some primitive xi0 with mean of b_m(., xi0) nonzero and b_m(., xi0)
    changing sign is enough. Otherwise nothing follows from the principal
    part and the general conditions have to decide.
    """
    if not spec.lower.order < spec.order:
        raise ValueError("lower-order part must have strictly smaller order")
    if not spec.order > 0:
        raise ValueError(f"principal order must be positive, got {spec.order}")
    mask = box.primitive_mask()
    sub = box.frequencies[mask]
    c = spec.principal.samples(grid, box)[:, mask]
    reasons = []
    for k, xi in enumerate(sub):
        bm = c[:, k].imag
        scale = max(float(np.abs(bm).max()), 1.0)
        bm0 = float(bm.mean())
        if abs(bm0) <= mean_tol * scale:
            continue
        if sign_change(bm, tol):
            xi = tuple(int(v) for v in xi)
            reasons.append(f"principal b_m has mean {bm0:.3g} and changes sign at xi={xi}")
            return PerturbedCheck("not_solvable", reasons, xi)
    reasons.append("no primitive xi with nonzero principal mean and sign change; use the general conditions")
    return PerturbedCheck("inconclusive", reasons)


def homogeneous_columns(spec, grid, box, eps_z=DEFAULT_EPS_Z, tol=1e-9):
    """Per-xi extra report columns (signChange, maxComponents, corollaryReason) over the whole box."""
    verdict = corollary_verdict(spec, grid, box, eps_z, tol, primitive_only=True)
    by_prim = {r["xi"]: r for r in verdict.rows}
    out = {}
    for xi in box.frequencies:
        xi = tuple(int(v) for v in xi)
        g, prim = primitive_part(xi)
        out[xi] = by_prim.get(prim, {"signChange": None, "maxComponents": None, "corollaryReason": ""}) if g else \
            {"signChange": None, "maxComponents": None, "corollaryReason": ""}
    return verdict, out


__all__ = [
    "SignChange",
    "sign_change",
    "sublevel_components",
    "local_maxima_count",
    "SublevelScan",
    "connected_all",
    "CorollaryVerdict",
    "corollary_verdict",
    "PerturbedCheck",
    "perturbed_principal_check",
    "homogeneous_columns",
]
