import json
import subprocess
import sys

import numpy as np
import pytest

from oracles import trig_samples
from tubesolve import io
from tubesolve.cli import main
from tubesolve.config import ConfigError, RunConfig, build_symbol, resolve_config, symbol_from_config
from tubesolve.counterexample import planted_dc_table
from tubesolve.expr import Expression, ExpressionError
from tubesolve.solver import apply_P
from tubesolve.spectral import CircleGrid, FourierField, FrequencyBox
from tubesolve.symbol import ConstantSymbol, HomogeneousPlusLower, HomogeneousSymbol, SeparableSymbol, evaluate

SINE = """
[run]
nt = 512
K = 16

[symbol]
variant = "homogeneous"
order = 1
b = "sin(t)"
"""

COS2 = SINE.replace("sin(t)", "cos(2*t)")

GOLDEN_SEP = """
[run]
nt = 256
K = 16

[symbol]
variant = "separable"
order = 1
a = "golden"
b = "1 + 0.5*cos(t)"
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _field(rng, n=64, K=4, N=1):
    g, box = CircleGrid(n), FrequencyBox(N, K)
    data = rng.normal(size=(n, len(box))) + 1j * rng.normal(size=(n, len(box)))
    return FourierField(g, box, data)


# -- field files ------------------------------------------------------------------------


@pytest.mark.parametrize("fmt", ["csv", "binary"])
@pytest.mark.parametrize("N", [1, 2])
def test_field_round_trip_is_exact(tmp_path, rng, fmt, N):
    f = _field(rng, N=N, K=3)
    path = io.write_field(tmp_path / ("f" + io.field_suffix(fmt)), f, fmt)
    g = io.read_field(path)
    assert g.box.N == N and g.grid.n_t == 64 and np.array_equal(g.data, f.data)


def test_field_header_line(tmp_path, rng):
    path = io.write_field(tmp_path / "f.csv", _field(rng))
    first = path.read_text().splitlines()[0]
    assert first == "# tubesolve-field v1 format=csv N=1 n_t=64 K=4"


def test_binary_is_little_endian_float64(tmp_path, rng):
    f = _field(rng, n=8, K=1)
    path = io.write_field(tmp_path / "f.bin", f, "binary")
    raw = path.read_bytes()
    payload = raw[raw.index(b"\n") + 1:]
    rec = np.frombuffer(payload, dtype="<f8").reshape(-1, 4)
    assert rec.shape == (8 * 3, 4)
    assert rec[0, 2] == f.data[0, 0].real and rec[0, 3] == f.data[0, 0].imag


@pytest.mark.parametrize("bad, match", [
    ("hello\n", "header"),
    ("# tubesolve-field v9 format=csv N=1 n_t=8 K=1\n", "version"),
    ("# tubesolve-field v1 format=csv N=1 n_t=8 K=1\nj,xi_1,re\n", "columns"),
    ("# tubesolve-field v1 format=csv N=1 n_t=8 K=1\nj,xi_1,re,im\n0,0,1.0,0.0\n", "missing"),
    ("# tubesolve-field v1 format=csv N=1 n_t=8 K=1\nj,xi_1,re,im\n0,5,1.0,0.0\n", "outside"),
    ("# tubesolve-field v1 format=csv N=1 n_t=8 K=1\nj,xi_1,re,im\n0,0,x,0.0\n", ":3"),
])
def test_field_format_errors(tmp_path, bad, match):
    p = tmp_path / "bad.csv"
    p.write_text(bad)
    with pytest.raises(io.FieldFormatError, match=match):
        io.read_field(p)


def test_json_is_strict(tmp_path):
    path = io.write_json(tmp_path / "r.json", {"a": np.nan, "b": [np.inf, 1.5], "c": np.float64(2), "d": (1, 2)})
    text = path.read_text()
    assert "NaN" not in text and "Infinity" not in text
    assert json.loads(text) == {"a": None, "b": [None, 1.5], "c": 2.0, "d": [1, 2]}


def test_table_splits_xi(tmp_path):
    rows = [{"xi": (1, -2), "norm": 2.23, "resonant": True}]
    io.write_table(tmp_path / "t.csv", rows, ["xi", "norm", "resonant"])
    back = io.read_table(tmp_path / "t.csv")
    assert back == [{"xi_1": "1", "xi_2": "-2", "norm": "2.23", "resonant": "true"}]


# -- expressions and config ----------------------------------------------------------------


def test_expression_evaluates_on_arrays():
    e = Expression("golden + 0.5*cos(t)**2 - sqrt(abs(t))")
    t = np.linspace(0, 6, 7)
    assert np.allclose(e(t=t), (np.sqrt(5) - 1) / 2 + 0.5 * np.cos(t) ** 2 - np.sqrt(t))


@pytest.mark.parametrize("src", ["__import__('os')", "t.real", "q + 1", "t if t else 0", "'s'", "t[0]"])
def test_expression_rejects_unsafe(src):
    with pytest.raises(ExpressionError):
        Expression(src)


def test_config_precedence(tmp_path):
    path = _write(tmp_path, SINE)
    cfg, _ = resolve_config(path, environ={})
    assert (cfg.nt, cfg.K) == (512, 16.0)
    cfg, _ = resolve_config(path, environ={"TUBESOLVE_NT": "2048", "TUBESOLVE_K": "8"})
    assert (cfg.nt, cfg.K) == (2048, 8.0)
    cfg, _ = resolve_config(path, flags={"nt": 1024, "K": None}, environ={"TUBESOLVE_NT": "2048"})
    assert (cfg.nt, cfg.K) == (1024, 16.0)
    assert RunConfig().nt == 512 and resolve_config(None, environ={})[0].nt == 512


@pytest.mark.parametrize("run, match", [
    ({"nt": 7}, "run.nt"),
    ({"K": -1}, "run.K"),
    ({"d_floor": 1.0}, "run.d_floor"),
    ({"format": "xml"}, "run.format"),
    ({"threads": -2}, "run.threads"),
])
def test_run_validation(run, match):
    cfg = RunConfig(**run)
    with pytest.raises(ConfigError, match=match):
        cfg.validate()


def test_resolution_rule():
    with pytest.raises(ConfigError, match="n_t >= "):
        RunConfig(nt=256, K=64).validate(order=1)
    RunConfig(nt=2048, K=64).validate(order=1)
    RunConfig(nt=16, K=64).validate(order=-1)  # windows cover the circle


def test_unknown_setting_and_bad_cast(tmp_path):
    with pytest.raises(ConfigError, match="run.bogus"):
        resolve_config(_write(tmp_path, "[run]\nbogus = 1\n"), environ={})
    with pytest.raises(ConfigError, match="run.nt"):
        resolve_config(_write(tmp_path, "[run]\nnt = 12.5\n"), environ={})


@pytest.mark.parametrize("table, kind", [
    ({"variant": "constant", "order": 1, "a": "r"}, ConstantSymbol),
    ({"variant": "separable", "order": 1, "b": "sin(t)"}, SeparableSymbol),
    ({"variant": "homogeneous", "order": 2, "b": "cos(t + x1)"}, HomogeneousSymbol),
    ({"variant": "homogeneous_plus_lower",
      "principal": {"variant": "homogeneous", "order": 1, "b": "sin(t)"},
      "lower": {"variant": "constant", "order": 0, "a": "0.1"}}, HomogeneousPlusLower),
])
def test_symbol_variants(table, kind):
    spec = build_symbol(table, 1)
    assert isinstance(spec, kind)
    g, box = CircleGrid(32), FrequencyBox(1, 3)
    assert np.isfinite(spec.samples(g, box)).all()


def test_separable_config_matches_python():
    spec = build_symbol({"variant": "separable", "order": 1, "a": "golden", "b": "1 + 0.5*cos(t)"}, 1)
    ref = SeparableSymbol(1, lambda t: (np.sqrt(5) - 1) / 2 + 1j * (1 + 0.5 * np.cos(t)))
    g, box = CircleGrid(64), FrequencyBox(1, 8)
    assert np.allclose(spec.samples(g, box), ref.samples(g, box), rtol=0, atol=1e-14)


def test_tabulated_config(tmp_path):
    g, box = CircleGrid(64), FrequencyBox(1, 8)
    io.write_field(tmp_path / "c.csv", FourierField(g, box, planted_dc_table(g, box, range(1, 4))))
    raw = {"symbol": {"variant": "tabulated", "order": 1, "table": "c.csv"}}
    spec, N = symbol_from_config(raw, tmp_path / "cfg.toml")
    assert N == 1 and spec.variant == "tabulated"


@pytest.mark.parametrize("table, match", [
    ({"variant": "cubic", "order": 1}, "symbol.variant"),
    ({"variant": "separable"}, "symbol.order"),
    ({"variant": "separable", "order": 1, "b": "sin(q)"}, "symbol.b"),
    ({"variant": "homogeneous_plus_lower", "principal": {}}, "symbol.lower"),
    ({"variant": "tabulated", "order": 1}, "symbol.table"),
])
def test_symbol_errors_name_the_field(table, match):
    with pytest.raises(ConfigError, match=match):
        build_symbol(table, 1)


# -- cli: analyze ---------------------------------------------------------------------------


def test_analyze_sine_solvable(tmp_path, capsys):
    cfg = _write(tmp_path, SINE)
    out = tmp_path / "out"
    assert main(["analyze", "--symbol", str(cfg), "--out", str(out)]) == 0
    assert "solvable_at_cutoff=true" in capsys.readouterr().out
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["solvable_at_cutoff"] is True and verdict["corollary"]["agrees_with_conditions"]
    rows = io.read_table(out / "conditions.csv")
    assert len(rows) == 33 and {"signChange", "maxComponents", "Dplus"} <= set(rows[0])
    assert (out / "plot_margin.csv").exists() and (out / "plot_dstar.csv").exists()


def test_analyze_cos2_not_solvable_is_exit_zero(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["analyze", "--symbol", str(_write(tmp_path, COS2)), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "solvable_at_cutoff=false" in text and "reason:" in text
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["solvable_at_cutoff"] is False and verdict["reasons"]
    assert verdict["corollary"]["solvable"] is False


def test_analyze_perturbed_principal(tmp_path):
    text = """
[run]
nt = 512
K = 16
[symbol]
variant = "homogeneous_plus_lower"
[symbol.principal]
variant = "homogeneous"
order = 1
b = "0.2 + sin(t)"
[symbol.lower]
variant = "separable"
order = 0
b = "cos(t)"
weight = "1"
"""
    out = tmp_path / "out"
    assert main(["analyze", "--symbol", str(_write(tmp_path, text)), "--out", str(out)]) == 0
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["principal_part"]["status"] == "not_solvable"


def test_malformed_config_exit_two(tmp_path, capsys):
    bad = _write(tmp_path, "[run]\nnt = \n")
    assert main(["analyze", "--symbol", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_bad_field_exit_two(tmp_path, capsys):
    cfg = _write(tmp_path, SINE.replace('b = "sin(t)"', 'b = "sin(t"'))
    assert main(["analyze", "--symbol", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "symbol.b" in capsys.readouterr().err


def test_resolution_error_exit_two(tmp_path, capsys):
    cfg = _write(tmp_path, SINE)
    assert main(["analyze", "--symbol", str(cfg), "--nt", "64", "--K", "64", "--out", str(tmp_path / "o")]) == 2
    assert "n_t >=" in capsys.readouterr().err


def test_missing_symbol_flag_exit_two():
    assert main(["analyze"]) == 2


def test_outputs_are_bit_stable(tmp_path):
    cfg = _write(tmp_path, COS2)
    for d, threads in (("a", "1"), ("b", "4")):
        assert main(["analyze", "--symbol", str(cfg), "--out", str(tmp_path / d), "--threads", threads]) == 0
    for name in ("conditions.csv", "verdict.json", "plot_dstar.csv", "plot_margin.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# -- cli: solve -----------------------------------------------------------------------------


def _golden_profiles(n=256, K=16):
    spec = build_symbol({"variant": "separable", "order": 1, "a": "golden", "b": "1 + 0.5*cos(t)"}, 1)
    g, box = CircleGrid(n), FrequencyBox(1, K)
    return g, box, evaluate(spec, g, box)


def test_solve_planted(tmp_path, rng, capsys):
    g, box, ps = _golden_profiles()
    u0 = FourierField(g, box, np.column_stack([(1 + r) ** -4 * trig_samples(rng, 256, 5) for r in box.norms]))
    io.write_field(tmp_path / "f.bin", apply_P(u0, ps), "binary")
    out = tmp_path / "out"
    code = main(["solve", "--symbol", str(_write(tmp_path, GOLDEN_SEP)), "--rhs", str(tmp_path / "f.bin"),
                 "--out", str(out), "--format", "binary"])
    assert code == 0 and "residual=" in capsys.readouterr().out
    rep = json.loads((out / "solve_report.json").read_text())
    assert rep["relative_residual"] <= 1e-8 and rep["saturated"] == []
    u = io.read_field(out / "u.bin")
    nonres = [k for k, p in enumerate(ps) if not p.resonant]
    assert np.abs(u.data[:, nonres] - u0.data[:, nonres]).max() <= 1e-8


def test_solve_zero(tmp_path):
    g, box, _ = _golden_profiles()
    io.write_field(tmp_path / "f.csv", FourierField.zeros(g, box))
    out = tmp_path / "out"
    assert main(["solve", "--symbol", str(_write(tmp_path, GOLDEN_SEP)), "--rhs", str(tmp_path / "f.csv"),
                 "--out", str(out)]) == 0
    assert not io.read_field(out / "u.csv").data.any()


def test_solve_closure_violation_exit_three(tmp_path, capsys):
    g, box = CircleGrid(256), FrequencyBox(1, 16)
    data = np.zeros((256, len(box)), complex)
    data[:, box.index_of(3)] = 1.0
    io.write_field(tmp_path / "f.csv", FourierField(g, box, data))
    out = tmp_path / "out"
    args = ["solve", "--symbol", str(_write(tmp_path, SINE)), "--rhs", str(tmp_path / "f.csv"), "--out", str(out)]
    assert main(args) == 3
    err = capsys.readouterr().err
    assert "offender: xi=(3,)" in err
    assert json.loads((out / "closure_report.json").read_text())["offenders"] == [[3]]
    assert main(args + ["--project"]) == 0


def test_solve_needs_rhs(tmp_path, capsys):
    assert main(["solve", "--symbol", str(_write(tmp_path, SINE)), "--out", str(tmp_path / "o")]) == 2
    assert "solve.rhs" in capsys.readouterr().err


def test_solve_unreadable_rhs_exit_two(tmp_path, capsys):
    args = ["solve", "--symbol", str(_write(tmp_path, SINE)), "--rhs", str(tmp_path / "nope.csv"),
            "--out", str(tmp_path / "o")]
    assert main(args) == 2
    assert "cannot read" in capsys.readouterr().err


# -- cli: forge ----------------------------------------------------------------------------


def test_forge_beta(tmp_path, capsys):
    cfg = _write(tmp_path, COS2.replace("nt = 512", "nt = 1024").replace("K = 16", "K = 32"))
    out = tmp_path / "out"
    assert main(["forge", "--symbol", str(cfg), "--tag", "beta", "--out", str(out)]) == 0
    assert "all_hold=true" in capsys.readouterr().out
    meta = json.loads((out / "forged_beta.json").read_text())
    assert meta["closure_member"] and meta["sequence"] == [[2], [4], [8], [16], [32]]
    assert io.read_field(out / "forged_beta.csv").box.K == 32
    assert len(io.read_table(out / "bounds_beta.csv")) == 5


def test_forge_alpha(tmp_path):
    text = GOLDEN_SEP.replace("1 + 0.5*cos(t)", "cos(t)").replace("nt = 256", "nt = 1024").replace("K = 16", "K = 32")
    out = tmp_path / "out"
    assert main(["forge", "--symbol", str(_write(tmp_path, text)), "--tag", "alpha", "--out", str(out)]) == 0
    assert json.loads((out / "forged_alpha.json").read_text())["all_hold"] is True


def test_forge_dc_from_table(tmp_path):
    g, box = CircleGrid(1024), FrequencyBox(1, 32)
    io.write_field(tmp_path / "c.bin", FourierField(g, box, planted_dc_table(g, box, range(1, 6))), "binary")
    text = '[run]\nnt = 1024\nK = 32\neps_z = 1e-14\n[symbol]\nvariant = "tabulated"\norder = 1\ntable = "c.bin"\n'
    out = tmp_path / "out"
    code = main(["forge", "--symbol", str(_write(tmp_path, text)), "--tag", "dc", "--out", str(out),
                 "--sequence", "2;4;8;16;32"])
    assert code == 0
    meta = json.loads((out / "forged_dc.json").read_text())
    assert meta["all_hold"] and all(abs(m["measured"] - m["target"]) <= 1e-8 for m in meta["modes"])


def test_forge_no_witness_exit_four(tmp_path, capsys):
    assert main(["forge", "--symbol", str(_write(tmp_path, SINE)), "--tag", "beta", "--out", str(tmp_path / "o")]) == 4
    assert "no witnesses" in capsys.readouterr().err


def test_forge_bad_tag(tmp_path):
    assert main(["forge", "--symbol", str(_write(tmp_path, SINE)), "--out", str(tmp_path / "o")]) == 2


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, SINE)
    res = subprocess.run([sys.executable, "-m", "tubesolve", "analyze", "--symbol", str(cfg),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True, timeout=120)
    assert res.returncode == 0 and "solvable_at_cutoff=true" in res.stdout
