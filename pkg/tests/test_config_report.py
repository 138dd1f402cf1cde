import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from weylcalc.config import (DEFAULTS, Config, config_hash, from_dict, load_config, normalize,
                             serialize)
from weylcalc.errors import ConfigError
from weylcalc.report import (EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS, LOCK_NAME, ReportEnvelope,
                             dumps, locked, sigma_rows, to_jsonable, write_csv)


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("")
    c = load_config(p)
    assert c == Config()
    assert (c.N_x, c.L_x, c.seed) == (256, 8.0, 42)
    p.write_text("{}")
    assert load_config(p) == Config()


def test_non_power_of_two_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"grid": {"N_x": 100}}')
    with pytest.raises(ConfigError, match="grid.N_x"):
        load_config(p)


@pytest.mark.parametrize("raw,field", [
    ({"grid": {"N_x": 32}}, "grid.N_x"),
    ({"grid": {"N_x": 4096}}, "grid.N_x"),
    ({"grid": {"L_x": -1}}, "grid.L_x"),
    ({"tolerances": {"residual_tol": 0}}, "residual_tol"),
    ({"tolerances": {"rank_tol": -1e-8}}, "rank_tol"),
    ({"metric": "hyperbolic"}, "metric"),
    ({"weights": {"M": "nope"}}, "weights.M"),
    ({"seed": -1}, "seed"),
    ({"seed": True}, "seed"),
    ({"fast_delta": "yes"}, "fast_delta"),
    ({"truncations": [128, 100]}, "truncations"),
    ({"colour": 1}, "colour"),
    ({"grid": {"Nx": 64}}, "grid"),
])
def test_violations_name_the_field(raw, field):
    with pytest.raises(ConfigError, match=field):
        from_dict(raw)


def test_parse_error_has_line_info(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "seed": 1,\n  "metric": \n}\n')
    with pytest.raises(ConfigError, match=r"c\.json:4:1:"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_round_trip_full_file(tmp_path):
    raw = {"grid": {"L_x": 6, "L_xi": None, "N_x": 128}, "metric": "euclidean",
           "weights": {"M": "japanese2", "M1": "japanese"},
           "tolerances": {"rank_tol": 1e-9, "residual_tol": 1e-6}, "seed": 7,
           "out": "r", "fast_delta": True, "truncations": [64, 128]}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(raw))
    assert json.loads(serialize(load_config(p))) == normalize(raw)


config_dicts = st.fixed_dictionaries({}, optional={
    "grid": st.fixed_dictionaries({}, optional={
        "L_x": st.floats(1, 20), "N_x": st.sampled_from([64, 128, 256, 512])}),
    "metric": st.sampled_from(["euclidean", "shubin", "sg"]),
    "seed": st.integers(0, 2 ** 64 - 1),
    "fast_delta": st.booleans(),
    "out": st.text(min_size=1, max_size=8),
})


@settings(max_examples=100, deadline=None)
@given(config_dicts)
def test_serialize_is_idempotent(raw):
    c = from_dict(raw)
    assert from_dict(json.loads(serialize(c))) == c
    assert serialize(from_dict(json.loads(serialize(c)))) == serialize(c)


@settings(max_examples=100, deadline=None)
@given(config_dicts, st.text(min_size=1, max_size=8))
def test_hash_deterministic_and_ignores_out(raw, out):
    c = from_dict(raw)
    assert config_hash(c) == config_hash(from_dict(normalize(raw)))
    assert config_hash(c) == config_hash(c.replace(out=out))


def test_hash_sees_semantic_changes():
    c = Config()
    assert config_hash(c) != config_hash(c.replace(N_x=512))
    # 8 and 8.0 are the same configuration
    assert config_hash(from_dict({"grid": {"L_x": 8}})) == config_hash(c)


def test_defaults_table_matches_dataclass():
    assert from_dict({}) == Config()
    assert normalize({}) == {**DEFAULTS, "truncations": list(DEFAULTS["truncations"])}


# ---------------------------------------------------------------- reports

def test_jsonable_sanitizes_non_finite():
    obj = {"a": np.float64("nan"), "b": [math.inf, -np.inf], "c": np.int64(3),
           "d": 1 + 2j, "e": np.array([1.0, 2.0]), "f": np.bool_(True)}
    out = to_jsonable(obj)
    assert out == {"a": "nan", "b": ["inf", "-inf"], "c": 3, "d": {"re": 1.0, "im": 2.0},
                   "e": [1.0, 2.0], "f": True}
    json.loads(dumps(obj))


def test_envelope_fields():
    env = ReportEnvelope("index", "abc", {"x": 1}, EXIT_INCONCLUSIVE)
    d = env.to_dict()
    assert set(d) == {"tool", "version", "config_hash", "command", "timestamp", "body", "summary"}
    assert d["summary"] == {"status": "inconclusive", "exit_code": 3}
    assert ReportEnvelope("a", "h", {}, EXIT_PASS).status == "pass"
    assert ReportEnvelope("a", "h", {}, EXIT_FAIL).status == "fail"
    assert env.body_json() == ReportEnvelope("index", "abc", {"x": 1}, 3, "t0").body_json()


def test_csv_and_sigma_rows(tmp_path):
    rows = list(sigma_rows({256: [3.0, 1.0], 128: [2.0]}))
    assert rows == [(128, 1, 2.0), (256, 1, 3.0), (256, 2, 1.0)]
    p = write_csv(tmp_path / "s.csv", ["truncation", "k", "sigma"], rows)
    lines = p.read_text().splitlines()
    assert lines[0] == "truncation,k,sigma" and lines[1] == "128,1,2.0"


def test_lockfile(tmp_path):
    with locked(tmp_path / "o") as d:
        assert (d / LOCK_NAME).exists()
        with pytest.raises(ConfigError, match="locked"):
            with locked(d):
                pass
    assert not (tmp_path / "o" / LOCK_NAME).exists()
