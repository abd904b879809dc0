import os

import numpy as np
import pytest

from nfkit import ParseError, ValidationError, parse_scenario
from nfkit.scenario import (
    TimeFunction,
    build_scenario,
    parse_scenario_text,
    serialize,
)

MINIMAL = """
name: minimal
kappa: 1.0
drift:
  basis:
    - {coefficient: -1.0, function: x}
time: {t0: 0.0, t_end: 1.0, n_points: 11}
input_model:
  mean_x0: 0.5
  var_x0: 0.2
  mean_xi: {form: zero}
  kernel: {family: exponential, sigma2: 1.0, tau: 1.0}
  cross: {form: zero}
"""

FULL = """
name: full
kappa: 0.5
drift:
  basis:
    - {coefficient: -1.0, function: x}
    - {coefficient: -0.5, function: x^3}
time: {t0: 0.0, t_end: 2.0, n_points: 21}
input_model:
  mean_x0: 0.1
  var_x0: 0.3
  mean_xi: {form: sinusoid, amplitude: 0.5, frequency: 2.0, phase: 0.1}
  kernel: {family: squared_exponential, sigma2: 0.8, tau: 0.4}
  cross: {form: expdecay, amplitude: 0.2, rate: 1.5}
pdf_grid: {x_min: -4.0, x_max: 4.0, n_x: 128}
solver:
  closure_order: 3
  output_times: [1.0, 2.0]
  tolerances: {l1: 0.05, variational: 0.001}
mc: {n_paths: 5000, seed: 7, estimator: histogram}
"""


def test_minimal_scenario_defaults():
    cfg = parse_scenario_text(MINIMAL)
    assert cfg.name == "minimal"
    assert cfg.kappa == 1.0
    assert cfg.drift.is_linear
    assert cfg.pdf_grid is None
    assert cfg.closure_order == 2
    assert cfg.output_times == (1.0,)
    assert cfg.tolerances == {}
    assert cfg.n_paths == 10000
    assert cfg.seed == 0
    assert cfg.estimator == "gaussian_kde"
    assert cfg.time_grid.n_points == 11
    assert cfg.model is cfg.input_model


def test_full_scenario_fields():
    cfg = parse_scenario_text(FULL)
    assert cfg.drift.n_basis == 2
    assert cfg.drift.eta == -1.0
    assert cfg.pdf_grid.n_x == 128
    assert cfg.closure_order == 3
    assert cfg.output_times == (1.0, 2.0)
    assert cfg.tolerances == {"l1": 0.05, "variational": 0.001}
    assert cfg.estimator == "histogram"
    assert cfg.input_model.kernel.family == "squared_exponential"
    assert cfg.input_model.m_xi(0.0) == pytest.approx(0.5 * np.cos(0.1))


def test_round_trip_identity():
    for text in (MINIMAL, FULL):
        cfg = parse_scenario_text(text)
        text2 = serialize(cfg)
        cfg2 = parse_scenario_text(text2)
        assert cfg2 == cfg
        assert hash(cfg2) == hash(cfg)
        # serialization is idempotent, not merely equivalent
        assert serialize(cfg2) == text2


def test_parse_scenario_from_file(tmp_path):
    path = tmp_path / "case.yaml"
    path.write_text(MINIMAL)
    cfg = parse_scenario(str(path))
    assert cfg.name == "minimal"


def test_shipped_scenarios_parse():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    for name in ("linear-baseline.yaml", "cubic-closure.yaml"):
        cfg = parse_scenario(os.path.join(root, "scenarios", name))
        assert cfg.n_paths == 100000
        assert cfg.output_times[-1] == cfg.time_grid.t_end
        for t in cfg.output_times:
            assert cfg.time_grid.index_of(t) >= 0


def test_yaml_syntax_error():
    with pytest.raises(ParseError):
        parse_scenario_text("name: [unclosed")


def test_non_mapping_document():
    with pytest.raises(ParseError):
        parse_scenario_text("- just\n- a\n- list\n")


def test_missing_sections_are_structural():
    with pytest.raises(ParseError):
        parse_scenario_text(MINIMAL.replace("name: minimal", "label: minimal"))
    with pytest.raises(ParseError):
        parse_scenario_text(MINIMAL.replace("kappa: 1.0", ""))
    doc = {"name": "x", "kappa": 1.0}
    with pytest.raises(ParseError):
        build_scenario(doc)


def test_drift_structure_errors():
    with pytest.raises(ParseError):
        parse_scenario_text(MINIMAL.replace("basis:\n    - {coefficient: -1.0, function: x}", "basis: []"))
    bad_entry = MINIMAL.replace("{coefficient: -1.0, function: x}", "{function: x}")
    with pytest.raises(ParseError):
        parse_scenario_text(bad_entry)


def test_value_violations_name_their_fields():
    bad = MINIMAL.replace("tau: 1.0", "tau: -1.0")
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(bad)
    assert any(v.startswith("input_model.kernel.tau") for v in info.value.violations)


def test_all_violations_reported_together():
    bad = (
        FULL.replace("tau: 0.4", "tau: -2.0")
        .replace("var_x0: 0.3", "var_x0: -0.3")
        .replace("estimator: histogram", "estimator: splines")
        .replace("seed: 7", "seed: -7")
    )
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(bad)
    fields = {v.split(":")[0] for v in info.value.violations}
    assert {"input_model.kernel.tau", "input_model.var_x0", "mc.estimator", "mc.seed"} <= fields


def test_first_basis_function_must_be_linear():
    bad = FULL.replace(
        "- {coefficient: -1.0, function: x}\n    - {coefficient: -0.5, function: x^3}",
        "- {coefficient: -0.5, function: x^3}",
    )
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(bad)
    assert any("drift.basis[0].function" in v for v in info.value.violations)


def test_unknown_drift_function_is_a_violation():
    bad = FULL.replace("function: x^3", "function: log")
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(bad)
    assert any("drift.basis[1].function" in v for v in info.value.violations)


def test_output_times_must_be_grid_nodes():
    off_node = FULL.replace("output_times: [1.0, 2.0]", "output_times: [1.05, 2.0]")
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(off_node)
    assert any("coincide with a time grid node" in v for v in info.value.violations)
    outside = FULL.replace("output_times: [1.0, 2.0]", "output_times: [3.0]")
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(outside)
    assert any("must lie in" in v for v in info.value.violations)


def test_time_grid_violations():
    bad = MINIMAL.replace("t_end: 1.0", "t_end: 0.0")
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(bad)
    assert any(v.startswith("time.t_end") for v in info.value.violations)
    bad_n = MINIMAL.replace("n_points: 11", "n_points: 1")
    with pytest.raises(ValidationError):
        parse_scenario_text(bad_n)


def test_table_kernel_resolves_csv_relative_to_scenario(tmp_path):
    csv = tmp_path / "kern.csv"
    csv.write_text("s1,s2,value\n0.0,0.0,1.0\n0.0,1.0,0.4\n1.0,0.0,0.4\n1.0,1.0,1.0\n")
    text = MINIMAL.replace(
        "kernel: {family: exponential, sigma2: 1.0, tau: 1.0}",
        "kernel: {family: table, csv: kern.csv}",
    ).replace("n_points: 11", "n_points: 2")
    path = tmp_path / "case.yaml"
    path.write_text(text)
    cfg = parse_scenario(str(path))
    assert cfg.kernel_csv == "kern.csv"
    assert cfg.input_model.kernel.family == "table"
    # serialization keeps the relative path so the round trip works in place
    again = parse_scenario_text(serialize(cfg), base_dir=str(tmp_path))
    assert again.input_model.kernel.family == "table"


def test_table_kernel_missing_csv():
    text = MINIMAL.replace(
        "kernel: {family: exponential, sigma2: 1.0, tau: 1.0}",
        "kernel: {family: table, csv: nowhere.csv}",
    )
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(text, base_dir="/tmp")
    assert any("file not found" in v for v in info.value.violations)


def test_time_function_forms():
    assert TimeFunction("zero")(1.0) == 0.0
    assert TimeFunction("constant", value=2.5)(0.3) == 2.5
    s = TimeFunction("sinusoid", amplitude=2.0, frequency=3.0, phase=0.5)
    assert s(0.2) == pytest.approx(2.0 * np.cos(3.0 * 0.2 + 0.5))
    e = TimeFunction("expdecay", amplitude=1.5, rate=2.0)
    assert e(1.0) == pytest.approx(1.5 * np.exp(-2.0))
    arr = s(np.array([0.0, 0.1]))
    assert arr.shape == (2,)


def test_time_function_form_parameters_checked():
    bad = MINIMAL.replace("{form: zero}", "{form: zero, amplitude: 1.0}", 1)
    with pytest.raises(ValidationError) as info:
        parse_scenario_text(bad)
    assert any("not a parameter of form" in v for v in info.value.violations)
    unknown = MINIMAL.replace("{form: zero}", "{form: sawtooth}", 1)
    with pytest.raises(ValidationError):
        parse_scenario_text(unknown)
