"""
Run configuration and symbol definitions read from TOML.

Precedence, lowest first: built-in defaults, the config file's ``[run]``
table, ``TUBESOLVE_*`` environment variables, command-line flags.

Symbol tables
-------------
``[symbol]`` needs ``variant`` and ``order``. Expressions are strings over
``t`` (time), ``r`` (= |xi|) and ``x1 .. xN`` (components of xi), with
sin, cos, exp, log, sqrt, abs, pi, e and golden::

    variant = "constant"                 # a, b in r, x1..xN
    variant = "separable"                # a, b in t; optional weight in r, x1..xN (default r**order)
    variant = "homogeneous"              # a, b in t, r, x1..xN on primitive directions
    variant = "homogeneous_plus_lower"   # [symbol.principal] homogeneous, [symbol.lower] any other variant
    variant = "tabulated"                # table = path to a field file of samples c(t_j, xi)
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .expr import Expression, ExpressionError
from .spectral import CircleGrid, FrequencyBox
from .symbol import (
    DEFAULT_EPS_Z,
    ConstantSymbol,
    HomogeneousPlusLower,
    HomogeneousSymbol,
    SeparableSymbol,
    TabulatedSymbol,
)

ENV_PREFIX = "TUBESOLVE_"
VARIANTS = ("constant", "separable", "homogeneous", "homogeneous_plus_lower", "tabulated")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    symbol: str | None = None
    nt: int = 512
    K: float = 32.0
    eps_z: float = DEFAULT_EPS_Z
    d_floor: float = 2.0
    out: str = "out"
    threads: int = 0  # 0 = available parallelism
    format: str = "csv"
    compat_tol: float = 1e-9
    slope_tol: float = 0.05
    quantile: float = 0.1
    offender_factor: float = 100.0

    def validate(self, order=None):
        if self.nt < 8 or self.nt % 2:
            raise ConfigError(f"run.nt: must be an even integer >= 8, got {self.nt}")
        if not self.K > 0:
            raise ConfigError(f"run.K: must be positive, got {self.K}")
        if not self.eps_z >= 0:
            raise ConfigError(f"run.eps_z: must be nonnegative, got {self.eps_z}")
        if not self.d_floor > 1:
            raise ConfigError(f"run.d_floor: must exceed 1 (log|xi| > 0), got {self.d_floor}")
        if self.format not in ("csv", "binary"):
            raise ConfigError(f"run.format: must be 'csv' or 'binary', got {self.format!r}")
        if self.threads < 0:
            raise ConfigError(f"run.threads: must be nonnegative, got {self.threads}")
        if order is not None and order > 0:
            delta = self.K ** (-order)
            if delta <= 2 * np.pi:
                need = CircleGrid.required_for_window(delta)
                if self.nt < need:
                    raise ConfigError(
                        f"run.nt: windows |xi|^-m at |xi|={self.K:g}, m={order:g} need n_t >= {need} "
                        f"(step <= window/4), got {self.nt}"
                    )
        return self

    @property
    def workers(self):
        return self.threads or (os.cpu_count() or 1)

    @property
    def grid(self):
        return CircleGrid(self.nt)

    def box(self, N):
        return FrequencyBox(N, self.K)


_CASTS = {f.name: f.type for f in fields(RunConfig)}


def _cast(name, value, where):
    kind = {"symbol": str, "out": str, "format": str, "nt": int, "threads": int}.get(name, float)
    try:
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: cannot read {value!r} as {kind.__name__}") from None


def merge_run(base: RunConfig, table: dict, where="run") -> RunConfig:
    updates = {}
    for key, value in table.items():
        name = key.replace("-", "_")
        if name not in _CASTS:
            raise ConfigError(f"{where}.{key}: unknown setting")
        updates[name] = _cast(name, value, f"{where}.{key}")
    return replace(base, **updates)


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name in _CASTS:
        key = ENV_PREFIX + name.upper()
        if key in environ:
            out[name] = environ[key]
    return out


def load_toml(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def resolve_config(config_path=None, flags=None, environ=None):
    """Return (RunConfig, raw config dict) with precedence defaults < file < env < flags."""
    cfg = RunConfig()
    raw = {}
    if config_path:
        raw = load_toml(config_path)
        cfg = merge_run(cfg, raw.get("run", {}))
        cfg.symbol = str(config_path)
    cfg = merge_run(cfg, env_overrides(environ), where="env")
    if flags:
        cfg = merge_run(cfg, {k: v for k, v in flags.items() if v is not None}, where="flag")
    return cfg, raw


# -- symbols --------------------------------------------------------------------


def _expr(table, key, variables, where, default=None):
    src = table.get(key, default)
    if src is None:
        raise ConfigError(f"{where}.{key}: missing")
    if isinstance(src, (int, float)) and not isinstance(src, bool):
        src = repr(float(src))
    if not isinstance(src, str):
        raise ConfigError(f"{where}.{key}: expected an expression string")
    try:
        return Expression(src, variables)
    except ExpressionError as exc:
        raise ConfigError(f"{where}.{key}: {exc}") from None


def _freq_env(xi):
    xi = np.asarray(xi, dtype=float)
    env = {"r": np.sqrt((xi**2).sum(axis=-1))}
    for d in range(xi.shape[-1]):
        env[f"x{d + 1}"] = xi[..., d]
    return env


def _weight(w):
    def weight(xi):
        return np.asarray(w(**_freq_env(xi)), dtype=float)

    return weight


def _order(table, where):
    if "order" not in table:
        raise ConfigError(f"{where}.order: missing")
    try:
        return float(table["order"])
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.order: expected a number, got {table['order']!r}") from None


def build_symbol(table: dict, N: int, grid=None, box=None, base_dir=".", where="symbol"):
    """Turn a ``[symbol]`` table into a :class:`SymbolSpec`."""
    variant = table.get("variant")
    if variant not in VARIANTS:
        raise ConfigError(f"{where}.variant: expected one of {', '.join(VARIANTS)}, got {variant!r}")
    xs = tuple(f"x{d + 1}" for d in range(N))
    if variant == "homogeneous_plus_lower":
        for sub in ("principal", "lower"):
            if not isinstance(table.get(sub), dict):
                raise ConfigError(f"{where}.{sub}: missing table")
        principal = build_symbol(table["principal"], N, grid, box, base_dir, f"{where}.principal")
        if not isinstance(principal, HomogeneousSymbol):
            raise ConfigError(f"{where}.principal.variant: must be 'homogeneous'")
        lower = build_symbol(table["lower"], N, grid, box, base_dir, f"{where}.lower")
        try:
            return HomogeneousPlusLower(principal, lower)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    order = _order(table, where)
    if variant == "constant":
        a = _expr(table, "a", ("r",) + xs, where, "0")
        b = _expr(table, "b", ("r",) + xs, where, "0")

        def value(xi):
            env = _freq_env(xi)
            return np.asarray(a(**env), dtype=float) + 1j * np.asarray(b(**env), dtype=float)

        return ConstantSymbol(order, value)
    if variant == "separable":
        a = _expr(table, "a", ("t",), where, "0")
        b = _expr(table, "b", ("t",), where, "0")
        weight_fn = _weight(_expr(table, "weight", ("r",) + xs, where)) if "weight" in table else None
        return SeparableSymbol(order, lambda t: a(t=t) + 1j * np.asarray(b(t=t)), weight_fn)
    if variant == "homogeneous":
        a = _expr(table, "a", ("t", "r") + xs, where, "0")
        b = _expr(table, "b", ("t", "r") + xs, where, "0")

        def base(t, prim):
            env = _freq_env(np.asarray(prim))
            env = {k: float(v) for k, v in env.items()}
            return np.asarray(a(t=t, **env), dtype=float) + 1j * np.asarray(b(t=t, **env), dtype=float)

        return HomogeneousSymbol(order, base)
    # tabulated
    if "table" not in table:
        raise ConfigError(f"{where}.table: missing path to a field file")
    from .io import FieldFormatError, read_field

    path = Path(base_dir) / table["table"]
    try:
        fld = read_field(path)
    except (OSError, FieldFormatError) as exc:
        raise ConfigError(f"{where}.table: {exc}") from None
    if fld.box.N != N:
        raise ConfigError(f"{where}.table: table has N={fld.box.N}, config says N={N}")
    return TabulatedSymbol(order, fld.grid, fld.box, fld.data)


def symbol_from_config(raw: dict, config_path=None):
    """(spec, N) from a parsed config file."""
    if "symbol" not in raw or not isinstance(raw["symbol"], dict):
        raise ConfigError("symbol: missing [symbol] table")
    table = raw["symbol"]
    try:
        N = int(table.get("N", 1))
    except (TypeError, ValueError):
        raise ConfigError(f"symbol.N: expected an integer, got {table.get('N')!r}") from None
    if N < 1:
        raise ConfigError(f"symbol.N: must be positive, got {N}")
    base_dir = Path(config_path).parent if config_path else Path(".")
    return build_symbol(table, N, base_dir=base_dir), N


def section(raw: dict, name: str) -> dict:
    val = raw.get(name, {})
    if not isinstance(val, dict):
        raise ConfigError(f"{name}: expected a table")
    return val


__all__ = [
    "ENV_PREFIX",
    "ConfigError",
    "RunConfig",
    "resolve_config",
    "env_overrides",
    "merge_run",
    "load_toml",
    "build_symbol",
    "symbol_from_config",
    "section",
]
