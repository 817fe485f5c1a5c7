import json
from dataclasses import fields

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgbreather.config import ConfigError, SolverConfig, load_config, parse_config, with_updates

NO_ENV: dict = {}


def test_empty_document_gives_defaults():
    cfg = parse_config("", env=NO_ENV)
    assert cfg == SolverConfig()
    assert (cfg.m, cfg.omega, cfg.gamma0, cfg.s, cfg.K, cfg.grading) == (1.0, 2.0, 1.0, 1, 8, 1.0)


def test_omega_below_mass():
    with pytest.raises(ConfigError, match="requires omega > m"):
        parse_config("omega = 0.5\nm = 1", env=NO_ENV)


def test_truncation_too_short():
    with pytest.raises(ConfigError, match="requires K ≥ 3s"):
        parse_config("K = 2\ns = 1", env=NO_ENV)


@pytest.mark.parametrize("text,field", [
    ("m = -1", "m:"), ("s = 0", "s:"), ("n = 512", "n:"), ("newton_tol = 0", "newton_tol:"),
    ("alphas = ", "alphas:"), ("t_count = 1", "t_count:"), ("tau_9 = 1.0", "tau_9:"),
    ("tau_2 = 0", "tau_2:"), ("colour = red", "colour:"), ("K = eight", "k:"),
])
def test_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, env=NO_ENV)
    assert str(exc.value).lower().startswith(field.lower())


def test_grammar():
    text = """
    # a comment line
    OMEGA = 2.5      # trailing comment
    alphas = 1e-3, -1e-3,
    tau_3 = 2.0
    out=results
    n = 8192
    """
    cfg = parse_config(text, env=NO_ENV)
    assert cfg.omega == 2.5 and cfg.alphas == (1e-3, -1e-3)
    assert cfg.taus == {3: 2.0} and cfg.out == "results"


def test_malformed_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("m = 1\njust words", env=NO_ENV)


def test_precedence_file_env_override():
    env = {"BREATHER_OMEGA": "2.5", "BREATHER_K": "9", "OTHER_OMEGA": "7"}
    cfg = parse_config("omega = 3\nK = 10\nn = 16384", env=env, overrides=["K=12"])
    assert cfg.omega == 2.5 and cfg.K == 12


def test_bad_env_value():
    with pytest.raises(ConfigError, match="requires K"):
        parse_config("", env={"BREATHER_K": "2"})


def test_load_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("s = 2\nK = 8\n", encoding="utf-8")
    assert load_config(p, env=NO_ENV).s == 2
    assert load_config(None, env=NO_ENV) == SolverConfig()


def test_json_key_order_and_roundtrip():
    cfg = parse_config("tau_2 = 1.0", env=NO_ENV)
    d = json.loads(cfg.to_json())
    assert list(d) == [f.name for f in fields(SolverConfig)]
    assert d["taus"] == {"2": 1.0}


def test_with_updates_revalidates():
    cfg = SolverConfig()
    assert with_updates(cfg, omega=3.0, n=8192).omega == 3.0
    with pytest.raises(ConfigError):
        with_updates(cfg, omega=0.5)


def test_gamma_profile(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("r,value\n0,2\n10,1\n200,1\n", encoding="utf-8")
    cfg = parse_config(f"gamma_profile = {p}", env=NO_ENV)
    g = cfg.gamma()
    assert g(0.0) == pytest.approx(2.0) and g(5.0) == pytest.approx(1.5)
    assert SolverConfig().gamma() == 1.0


@given(st.floats(1.01, 4.0), st.integers(1, 3))
def test_valid_configs_roundtrip_through_text(omega, s):
    text = f"omega = {omega!r}\ns = {s}\nK = {3 * s}\nn = 8192"
    cfg = parse_config(text, env=NO_ENV)
    assert cfg.omega == omega and cfg.K == 3 * s
