import json

import numpy as np
import pytest

from tubesolve.conditions import ResolutionError
from tubesolve.counterexample import (
    NoWitnessError,
    arc_trapezoid,
    bump,
    forge_alpha,
    forge_beta,
    forge_dc,
    planted_dc_table,
    smooth_step,
    verify_forged,
)
from tubesolve.solver import closure_membership
from tubesolve.spectral import CircleGrid, FrequencyBox, analyze, circle_wavenumbers, power_law_fit
from tubesolve.symbol import SeparableSymbol, TabulatedSymbol, evaluate

GOLDEN = (np.sqrt(5) - 1) / 2
SEQ = [(k, (2**k,)) for k in range(1, 6)]


@pytest.fixture(scope="module")
def setting():
    return CircleGrid(1024), FrequencyBox(1, 32)


# -- bumps ------------------------------------------------------------------------------


def test_bump_half_circle():
    g = CircleGrid(1024)
    b = bump(g, 0.0, np.pi, 0.5)
    assert b.samples[256] == 1.0  # t = pi/2
    assert 0 < b.samples[1] < 1e-12
    assert b.samples[0] == 0 and not b.samples[512:].any()
    assert np.all((0 <= b.samples) & (b.samples <= 1))


def test_bump_integral_exceeds_plateau():
    b = bump(CircleGrid(1024), 0.0, np.pi, 0.5)
    lo, hi = b.plateau_interval
    assert b.integral >= hi - lo
    assert abs(b.integral - 0.75 * np.pi) < 1e-12  # symmetric taper: plateau + half of each ramp


def test_bump_spectrum_is_super_algebraic():
    b = bump(CircleGrid(1024), 0.0, np.pi, 0.5)
    coef = np.abs(analyze(b.samples))
    k = np.abs(circle_wavenumbers(1024))
    kk = np.arange(1, 513)
    tail = np.array([coef[k >= K].max() for K in kk])
    # fitted power on dyadic bands keeps growing, past 8 on the last resolved bands
    exps = [power_law_fit(kk[(kk >= lo) & (kk < 2 * lo)].astype(float), tail[(kk >= lo) & (kk < 2 * lo)]).exponent
            for lo in (32, 64, 128, 256)]
    assert all(a < b for a, b in zip(exps, exps[1:]))
    assert exps[-2] >= 8 and exps[-1] >= 8


def test_bump_wraps_the_seam():
    g = CircleGrid(256)
    b = bump(g, 1.5 * np.pi, 2.5 * np.pi, 0.5)
    assert b.samples[0] == 1.0 and b.samples[128] == 0.0
    assert abs(b.integral - 0.75 * np.pi) < 1e-12


def test_bump_under_resolved():
    with pytest.raises(ResolutionError) as err:
        bump(CircleGrid(64), 0.0, 0.3)
    assert err.value.required_nt >= 64 * 0.3 / (2 * np.pi)


@pytest.mark.parametrize("arc", [(0.0, 0.0), (1.0, 0.5), (0.0, 7.0)])
def test_bump_rejects_bad_arcs(arc):
    with pytest.raises(ValueError):
        bump(CircleGrid(64), *arc)


def test_smooth_step_is_flat_at_the_ends():
    x = np.array([-1.0, 0.0, 1e-3, 0.5, 1 - 1e-3, 1.0, 2.0])
    s = smooth_step(x)
    assert s[0] == s[1] == 0 and s[5] == s[6] == 1 and s[3] == 0.5
    assert s[2] < 1e-300 or s[2] < np.exp(-999)
    assert 1 - s[4] < 1e-300 or 1 - s[4] < np.exp(-999)


def test_arc_trapezoid_wraps():
    v = np.ones(8)
    assert arc_trapezoid(v, 6, 2) == pytest.approx(4 * 2 * np.pi / 8)
    assert arc_trapezoid(v, 3, 3) == 0


# -- small divisors ------------------------------------------------------------------------


def _planted(setting):
    g, box = setting
    return evaluate(TabulatedSymbol(1, g, box, planted_dc_table(g, box, range(1, 6))), g, box, eps_z=1e-14)


def test_planted_table_margins(setting):
    ps = {p.xi: p for p in _planted(setting)}
    for k, xi in SEQ:
        assert abs(abs(ps[xi].c_reduced) - 0.5 * (1 + 2**k) ** -k) < 1e-13  # roundoff of a mean near 2^k * 0.618


def test_forge_dc_identity(setting):
    g, box = setting
    ps = _planted(setting)
    forged = forge_dc(ps, box, sequence=SEQ)
    rep = verify_forged(forged, ps)
    assert rep.all_hold and rep.closure_member
    for m in forged.modes:
        assert abs(m.measured - m.target) <= 1e-8
        assert m.extra["kernel_sup"] <= 1 + 1e-12
    # f is smooth while u does not decay
    assert rep.f_decay.exponent >= 5
    assert rep.u_decay.exponent <= 0.1


def test_forge_dc_default_sequence_is_the_offenders(setting):
    g, box = setting
    ps = _planted(setting)
    forged = forge_dc(ps, box)
    assert set(forged.sequence) >= {(16,), (32,)}


def test_forge_dc_zero_off_sequence(setting):
    g, box = setting
    ps = _planted(setting)
    forged = forge_dc(ps, box, sequence=SEQ)
    on = {box.index_of(xi) for _, xi in SEQ}
    off = [k for k in range(len(box)) if k not in on]
    assert not forged.field.data[:, off].any()


def test_forge_dc_rejects_repeats(setting):
    g, box = setting
    with pytest.raises(ValueError, match="repeats"):
        forge_dc(_planted(setting), box, sequence=[(1, (2,)), (2, (2,))])


def test_forge_dc_interval_must_avoid_maximisers(setting):
    g, box = setting
    with pytest.raises(NoWitnessError):
        forge_dc(_planted(setting), box, sequence=SEQ, interval=(0.0, 2 * np.pi))


# -- alpha ---------------------------------------------------------------------------------


def test_forge_alpha_bounds(setting):
    g, box = setting
    ps = evaluate(SeparableSymbol(1, lambda t: GOLDEN + 1j * np.cos(t)), g, box)
    forged = forge_alpha(ps, box, 1)
    rep = verify_forged(forged, ps)
    assert rep.all_hold and rep.closure_member and not rep.underflowed
    for m in forged.modes:
        assert m.measured >= m.xi[0] ** -1 / 4
        assert m.extra["prefactor_bound_holds"]
        assert m.extra["gap"] > m.extra["log_norm_k"]
        lo, hi = m.support
        assert hi - lo >= (1 / m.xi[0]) / 2  # window covers |J_k| >= |xi_k|^-m / 2
    assert rep.f_decay.exponent >= 8


def test_forge_alpha_zero_on_resonant_modes(setting):
    g, box = setting
    ps = evaluate(SeparableSymbol(1, lambda t: GOLDEN + 1j * np.cos(t)), g, box)
    forged = forge_alpha(ps, box, 1)
    res = [k for k, p in enumerate(ps) if p.resonant]
    assert res and not forged.field.data[:, res].any()


def test_forge_alpha_no_witness_for_solvable(setting):
    g, box = setting
    ps = evaluate(SeparableSymbol(1, lambda t: GOLDEN + 1j * (1 + 0.5 * np.cos(t))), g, box)
    with pytest.raises(NoWitnessError, match="alpha"):
        forge_alpha(ps, box, 1)


def test_forge_alpha_flags_underflow():
    g, box = CircleGrid(1024), FrequencyBox(1, 32)
    ps = evaluate(SeparableSymbol(1, lambda t: 0.3 + 2000j * np.sin(t) / (1.5 + np.sin(t))), g, box)
    forged = forge_alpha(ps, box, 1)
    rep = verify_forged(forged, ps)
    assert rep.underflowed and not rep.all_hold
    assert np.isfinite(forged.field.data).all()
    for m in forged.modes:
        if m.xi in rep.underflowed:
            assert m.extra["f_log_sup"] < -700


# -- beta ----------------------------------------------------------------------------------


def test_forge_beta_bounds(setting):
    g, box = setting
    ps = evaluate(SeparableSymbol(1, lambda t: 1j * np.cos(2 * t)), g, box)
    forged = forge_beta(ps, box, 1)
    rep = verify_forged(forged, ps)
    assert rep.all_hold and rep.closure_member and rep.closure_worst < 1e-12
    for m in forged.modes:
        assert abs(m.extra["integral_plus"] - m.extra["integral_minus"]) < 1e-13
        # the arc picks up exactly the phi^- piece
        assert abs(m.measured - m.extra["integral_minus"]) <= 1e-9
        assert m.measured >= m.xi[0] ** -1 / 2
    assert rep.f_decay.exponent >= 8
    # u decays no faster than |xi|^-m, far slower than f
    assert rep.u_decay.exponent <= 1.2


def test_forge_beta_needs_resonant_sequence(setting):
    g, box = setting
    ps = evaluate(SeparableSymbol(1, lambda t: GOLDEN + 1j * np.cos(t)), g, box)
    with pytest.raises(NoWitnessError, match="beta"):
        forge_beta(ps, box, 1)


def test_forge_beta_no_witness_for_unimodal(setting):
    g, box = setting
    ps = evaluate(SeparableSymbol(1, lambda t: 1j * np.sin(t)), g, box)
    with pytest.raises(NoWitnessError):
        forge_beta(ps, box, 1)


def test_forged_metadata_is_json(setting):
    g, box = setting
    ps = evaluate(SeparableSymbol(1, lambda t: 1j * np.cos(2 * t)), g, box)
    forged = forge_beta(ps, box, 1)
    verify_forged(forged, ps)
    meta = json.loads(json.dumps(forged.metadata()))
    assert meta["tag"] == "beta" and meta["sequence"] == [list(x) for x in forged.sequence]
    assert all(m["holds"] for m in meta["modes"])


def test_forged_fields_pass_closure(setting):
    g, box = setting
    ps = evaluate(SeparableSymbol(1, lambda t: 1j * np.cos(2 * t)), g, box)
    assert closure_membership(forge_beta(ps, box, 1).field, ps).member
