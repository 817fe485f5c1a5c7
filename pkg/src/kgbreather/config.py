"""Solver configuration: flat ``key = value`` text with environment overrides.

Grammar, one entry per line::

    # comment            (also after a value)
    key = value          (whitespace around '=' ignored)
    alphas = 1e-3, -1e-3 (comma-separated list)
    tau_3 = 2.356        (phase override for mode 3)

Keys are case-insensitive.  Environment variables ``BREATHER_<KEY>`` override
the file, and explicit ``KEY=VALUE`` overrides win over both.
"""
from __future__ import annotations

import json
import math
import os
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .bifurcation import spacing_limit
from .radial import RadialGrid, make_grid

ENV_PREFIX = "BREATHER_"
DEFAULT_ALPHAS = (1e-3, -1e-3, 2e-3, -2e-3, 1e-2, -1e-2)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    m: float = 1.0
    omega: float = 2.0
    gamma0: float = 1.0
    gamma_profile: str | None = None     # CSV (r, value); replaces gamma0 when set
    s: int = 1
    K: int = 8
    r_max: float = 100.0
    n: int = 4096
    grading: float = 1.0
    newton_tol: float = 1e-10
    residual_tol: float = 1e-4
    phase_tol: float = 1e-6
    kernel_tol: float = 1e-6
    alphas: tuple = DEFAULT_ALPHAS
    out: str = "out"
    svd_r_max: float = 30.0              # coarse grid for the singular spectrum
    svd_n: int = 1280
    t_count: int = 33
    taus: dict = field(default_factory=dict)

    def __post_init__(self):
        validate(self)

    def grid(self) -> RadialGrid:
        return make_grid(self.r_max, self.n, self.grading)

    def svd_grid(self) -> RadialGrid:
        return make_grid(self.svd_r_max, self.svd_n, self.grading)

    def gamma(self):
        """Constant Gamma or an interpolated radial profile."""
        if self.gamma_profile is None:
            return self.gamma0
        import numpy as np
        data = np.loadtxt(self.gamma_profile, delimiter=",", skiprows=1)
        r, g = data[:, 0], data[:, 1]
        return lambda x: np.interp(np.asarray(x, dtype=float), r, g)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alphas"] = list(self.alphas)
        d["taus"] = {str(k): v for k, v in sorted(self.taus.items())}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


_FIELDS = {f.name.lower(): f for f in fields(SolverConfig) if f.name != "taus"}
_TAU = re.compile(r"^tau_(\d+)$")


def validate(cfg: SolverConfig) -> None:
    if not cfg.m > 0:
        raise ConfigError(f"m: requires m > 0 (got {cfg.m})")
    if not cfg.omega > cfg.m:
        raise ConfigError(f"omega: requires omega > m (got omega={cfg.omega}, m={cfg.m})")
    if cfg.s < 1:
        raise ConfigError(f"s: requires s >= 1 (got {cfg.s})")
    if cfg.K < 3 * cfg.s:
        raise ConfigError(f"K: requires K ≥ 3s (got K={cfg.K}, s={cfg.s})")
    if cfg.n < 16 or not cfg.r_max > 0 or not cfg.grading >= 1:
        raise ConfigError("grid: requires n >= 16, r_max > 0, grading >= 1")
    h = cfg.grid().spacing
    limit = spacing_limit(cfg.omega, cfg.m, cfg.K)
    if h > limit:
        raise ConfigError(f"n: grid spacing {h:.4g} exceeds {limit:.4g} needed to resolve mode K={cfg.K}")
    for name in ("newton_tol", "residual_tol", "phase_tol", "kernel_tol"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name}: tolerance must be positive")
    if not cfg.alphas:
        raise ConfigError("alphas: need at least one amplitude")
    if cfg.t_count < 2:
        raise ConfigError("t_count: need at least two time samples")
    for k, t in cfg.taus.items():
        if not 1 <= k <= cfg.K:
            raise ConfigError(f"tau_{k}: mode index outside 1..K")
        if math.isclose(math.sin(t), 0.0, abs_tol=1e-12):
            raise ConfigError(f"tau_{k}: phase must not be a multiple of pi")


def _convert(key: str, raw: str):
    raw = raw.strip()
    f = _FIELDS[key]
    try:
        if key == "alphas":
            return tuple(float(x) for x in raw.split(",") if x.strip())
        if key == "gamma_profile":
            return raw or None
        if key == "out":
            return raw
        if f.type in ("int", int):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from None


def _parse_lines(text: str) -> list[tuple[str, str]]:
    items = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        items.append((key.strip().lower(), value.strip()))
    return items


def _apply(values: dict, taus: dict, items) -> None:
    for key, raw in items:
        m = _TAU.match(key)
        if m:
            try:
                taus[int(m.group(1))] = float(raw)
            except ValueError:
                raise ConfigError(f"{key}: cannot parse value {raw!r}") from None
        elif key in _FIELDS:
            values[_FIELDS[key].name] = _convert(key, raw)
        else:
            raise ConfigError(f"{key}: unknown configuration key")


def parse_config(source: str = "", env: dict | None = None, overrides=()) -> SolverConfig:
    """Validated config from text; ``env`` defaults to os.environ, ``overrides`` are KEY=VALUE strings."""
    env = os.environ if env is None else env
    values: dict = {}
    taus: dict = {}
    _apply(values, taus, _parse_lines(source))
    env_items = [(k[len(ENV_PREFIX):].lower(), v) for k, v in sorted(env.items())
                 if k.startswith(ENV_PREFIX)]
    _apply(values, taus, env_items)
    _apply(values, taus, _parse_lines("\n".join(overrides)))
    return SolverConfig(**values, taus=taus)


def load_config(path=None, env: dict | None = None, overrides=()) -> SolverConfig:
    text = Path(path).read_text(encoding="utf-8") if path else ""
    return parse_config(text, env, overrides)


def with_updates(cfg: SolverConfig, **kw) -> SolverConfig:
    return replace(cfg, **kw)
