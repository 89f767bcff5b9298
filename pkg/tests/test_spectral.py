import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import exact_primitive, trig_samples
from tubesolve.spectral import (
    TWO_PI,
    CircleGrid,
    FourierField,
    FrequencyBox,
    D_t,
    analyze,
    circle_wavenumbers,
    decay_fit,
    power_law_fit,
    spectral_derivative,
    spectral_primitive,
    synthesize,
    trapezoid_primitive,
)


# -- grids and boxes ------------------------------------------------------------


@pytest.mark.parametrize("n", [7, 6, 9, 12.5])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        CircleGrid(n)


def test_grid_step_times_size_is_two_pi():
    for n in (8, 512, 4096):
        g = CircleGrid(n)
        assert abs(g.step * g.n_t - TWO_PI) < 1e-14
        assert g.nodes[0] == 0.0 and len(g.nodes) == n


def test_box_is_lexicographic_and_deduplicated():
    box = FrequencyBox(2, 2.5)
    freqs = [tuple(x) for x in box.frequencies]
    assert freqs == sorted(freqs)
    assert len(set(freqs)) == len(freqs)
    assert (0, 0) in freqs and (2, 1) in freqs and (2, 2) not in freqs
    assert np.all(box.norms <= 2.5)


def test_box_euclidean_norm_boundary():
    box = FrequencyBox(2, 5)
    assert box.index_of((3, 4)) >= 0
    with pytest.raises(KeyError):
        FrequencyBox(2, 4.99).index_of((3, 4))


def test_box_primitive_mask():
    box = FrequencyBox(1, 6)
    prim = {int(x[0]) for x, m in zip(box.frequencies, box.primitive_mask()) if m}
    assert prim == {-1, 1}


def test_field_rejects_nonfinite_and_bad_shape(grid512):
    box = FrequencyBox(1, 2)
    data = np.zeros((512, len(box)), complex)
    data[3, 1] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        FourierField(grid512, box, data)
    with pytest.raises(ValueError, match="shape"):
        FourierField(grid512, box, np.zeros((512, 2)))


# -- analysis and synthesis -----------------------------------------------------


def test_analyze_pure_mode():
    g = CircleGrid(16)
    h = np.exp(1j * g.nodes)
    coef = analyze(h)
    kappa = circle_wavenumbers(16)
    assert abs(coef[kappa == 1][0] - 1) < 1e-13
    assert np.abs(coef[kappa != 1]).max() < 1e-13


def test_analyze_constant():
    coef = analyze(np.ones(16))
    kappa = circle_wavenumbers(16)
    assert abs(coef[kappa == 0][0] - 1) < 1e-13
    assert np.abs(coef[kappa != 0]).max() < 1e-13


def test_analyze_rejects_nonfinite():
    h = np.ones(16)
    h[4] = np.inf
    with pytest.raises(ValueError, match="non-finite"):
        analyze(h)


def test_round_trip_and_parseval(rng):
    n = 256
    h = trig_samples(rng, n, 20) + 1j * trig_samples(rng, n, 20)
    coef = analyze(h)
    assert np.abs(synthesize(coef) - h).max() <= 1e-12 * np.abs(h).max()
    # discrete Parseval with the mean normalisation: mean |h|^2 = sum |hhat|^2
    lhs = np.mean(np.abs(h) ** 2)
    rhs = np.sum(np.abs(coef) ** 2)
    assert abs(lhs - rhs) <= 1e-12 * lhs


def test_analyze_columnwise(rng):
    h = rng.normal(size=(64, 3))
    coef = analyze(h)
    for k in range(3):
        assert np.allclose(coef[:, k], analyze(h[:, k]), atol=1e-15)


# -- primitives -----------------------------------------------------------------


def test_primitive_of_cos_is_sin():
    g = CircleGrid(64)
    H = spectral_primitive(np.cos(g.nodes))
    assert np.abs(H - np.sin(g.nodes)).max() < 1e-13


def test_primitive_of_one_is_ramp():
    g = CircleGrid(64)
    assert np.abs(spectral_primitive(np.ones(64)) - g.nodes).max() < 1e-13


def test_primitive_mean_value_identity():
    g = CircleGrid(64)
    h = np.sin(g.nodes) + 1
    H = spectral_primitive(h)
    # H(2 pi) = H(0) + 2 pi mean(h), the periodic part cancels
    H_2pi = H[0] + TWO_PI * h.mean()
    assert abs(H_2pi - H[0] - TWO_PI) < 1e-12


@given(st.integers(0, 63), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_primitive_matches_termwise_oracle(basepoint, seed):
    rng = np.random.default_rng(seed)
    h = trig_samples(rng, 64, 10, mean=rng.normal())
    H = spectral_primitive(h, basepoint)
    assert H[basepoint] == 0.0
    assert np.abs(H - exact_primitive(h, basepoint)).max() < 1e-12


def test_primitive_then_derivative_recovers(rng):
    h = trig_samples(rng, 128, 30, mean=0.7)
    H = spectral_primitive(h)
    periodic = H - h.mean() * CircleGrid(128).nodes
    assert np.abs(spectral_derivative(periodic) + h.mean() - h).max() < 1e-10


def test_ramp_law_on_shifted_grid(rng):
    # integrate the same band-limited h from two grids offset by half a period
    n = 128
    h = trig_samples(rng, n, 8, mean=0.37)
    shifted = np.roll(h, -n // 2)
    H = spectral_primitive(h)
    Hs = spectral_primitive(shifted)
    # H(t + pi) - H(pi) = Hs(t); then H(t + 2pi) - H(t) = 2 pi mean
    full = H[n // 2] + Hs[n // 2]
    assert abs(full - TWO_PI * h.mean()) < 1e-12


def test_trapezoid_oracle_is_second_order(rng):
    errs = []
    for n in (64, 128, 256):
        t = TWO_PI * np.arange(n) / n
        h = np.exp(np.cos(t))
        errs.append(np.abs(trapezoid_primitive(h) - spectral_primitive(h)).max())
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_primitive_rejects_bad_basepoint():
    with pytest.raises(ValueError):
        spectral_primitive(np.ones(16), basepoint=16)


def test_D_t_convention():
    g = CircleGrid(32)
    u = np.exp(3j * g.nodes)
    assert np.abs(D_t(u) - 3 * u).max() < 1e-12


# -- decay fits -----------------------------------------------------------------


def test_decay_fit_planted_exponent():
    g, box = CircleGrid(32), FrequencyBox(1, 64)
    data = ((1 + box.norms) ** -5)[None, :] * np.exp(1j * g.nodes)[:, None]
    fit = decay_fit(FourierField(g, box, data), 0)
    assert abs(fit.exponent - 5) <= 0.05
    assert fit.residual < 1e-10


def test_decay_fit_zero_derivative_sentinel():
    g, box = CircleGrid(32), FrequencyBox(1, 64)
    data = np.broadcast_to((1 + box.norms) ** -2, (32, len(box)))
    fit = decay_fit(FourierField(g, box, data), 1)
    assert fit.identically_zero and fit.exponent == np.inf


def test_decay_fit_needs_eight_frequencies():
    g = CircleGrid(16)
    with pytest.raises(ValueError, match="8 nonzero"):
        decay_fit(FourierField.zeros(g, FrequencyBox(1, 3)))


def test_decay_fit_identically_zero():
    fit = decay_fit(FourierField.zeros(CircleGrid(16), FrequencyBox(1, 10)))
    assert fit.identically_zero and fit.exponent == np.inf


def test_decay_fit_survives_huge_columns():
    g, box = CircleGrid(32), FrequencyBox(1, 10)
    data = 1e307 * (1 + box.norms)[None, :] ** -1.0 * np.exp(5j * g.nodes)[:, None]
    fit = decay_fit(FourierField(g, box, data), 1)
    assert np.isfinite(fit.exponent) and np.isfinite(fit.constant)
    assert fit.log_constant > 700


def test_power_law_fit_reports_residual():
    r = np.arange(1.0, 20.0)
    vals = (1 + r) ** -3 * np.exp(0.1 * np.sin(r))
    fit = power_law_fit(r, vals)
    assert abs(fit.exponent - 3) < 0.2
    assert fit.residual > 0
