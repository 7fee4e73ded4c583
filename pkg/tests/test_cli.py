import csv
import json
import math

import pytest

from kinetic_cocycles import cli, verify
from kinetic_cocycles.config import (
    ExperimentConfig,
    build_generator,
    load_config,
    parse_config,
    serialize_config,
)
from kinetic_cocycles.errors import ConfigurationError
from kinetic_cocycles.mat2 import TWO_PI


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SIM = """\
# stretch preset
generator = traceless
beta = -1
horizon = 2000
samples = 2
"""

PERTURB = """\
generator = schrodinger
potential = 0,0.5
energy = 4
horizon = 100000
samples = 2
"""


def test_config_roundtrip():
    c = ExperimentConfig(generator="schrodinger", potential=(0.1, 0.5, 1 / 3, 0.0), energy=math.pi,
                         r=0.01, enforce_budget=False, horizon=1234.5, seed=7)
    assert parse_config(serialize_config(c)) == c
    assert parse_config(serialize_config(ExperimentConfig())) == ExperimentConfig()


def test_config_defaults_and_comments():
    c = parse_config("# nothing\n\nseed = 3  # trailing\nr = auto\n")
    assert c.seed == 3 and c.r is None and c.p == 1.0


@pytest.mark.parametrize("text, key", [
    ("p = 0.5", "p"),
    ("eps = 0", "eps"),
    ("base = sphere", "base"),
    ("mc_samples = 10", "mc_samples"),
    ("horizon = abc", "horizon"),
    ("roof = cosine\nroof_amplitude = 1.5", "roof_h0"),
    ("generator = traceless\nalpha = 1", "alpha"),
    ("beta = 1,2,3,4,5", "beta"),
    ("enforce_budget = maybe", "enforce_budget"),
    ("box_value = spin\nbox_r = 0.1", "box_value"),
])
def test_config_field_errors(text, key):
    with pytest.raises(ConfigurationError) as info:
        parse_config(text)
    assert str(info.value).startswith(key)


def test_config_structural_errors(tmp_path):
    for text in ("seed", "colour = red", "seed = 1\nseed = 2"):
        with pytest.raises(ConfigurationError):
            parse_config(text)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.cfg")


def test_build_generator_presets():
    g = build_generator(parse_config("generator = schrodinger\npotential = 0.5\nenergy = 2"))
    m = g.value_at((0.3,), 1.0).matrix((0.3,), 1.0)
    assert (m.a21, m.a22) == (-1.5, 0.0)
    g = build_generator(parse_config(f"beta = 1\nbox_r = 0.2\nbox_a = 1\nbox_b = 2\nbox_value = rotation:{TWO_PI!r}"))
    assert len(g.overrides) == 1
    assert g.value_at((0.1,), 1.5).theta == TWO_PI


def test_simulate(tmp_path, capsys):
    out = tmp_path / "sim"
    cfg = write(tmp_path, "sim.cfg", SIM + f"out = {out}\n")
    assert cli.main(["simulate", "--config", cfg]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["spectrum"]["lambda1"] == pytest.approx(1.0, abs=1e-3)
    assert rep["spectrum"]["lambda2"] == pytest.approx(-1.0, abs=1e-3)
    assert rep["field_class"] == "traceless_kinetic"
    assert "wall_clock_seconds" in json.loads((out / "timing.json").read_text())
    rows = list(csv.reader(open(out / "finite_time.csv")))
    assert rows[0] == ["t", "lambda1_ft", "lambda2_ft", "logdet_avg"]
    assert len(rows) == 101
    assert float(rows[-1][0]) == pytest.approx(2000.0)
    assert "lambda1" in capsys.readouterr().out


def test_reports_byte_identical(tmp_path):
    out = tmp_path / "same"
    cfg = write(tmp_path, "sim.cfg", SIM + f"out = {out}\n")
    args = ["simulate", "--config", cfg, "--horizon", "500"]
    assert cli.main(args + ["--seed", "5"]) == 0
    first = (out / "report.json").read_bytes(), (out / "finite_time.csv").read_bytes()
    assert cli.main(args + ["--seed", "5"]) == 0
    assert ((out / "report.json").read_bytes(), (out / "finite_time.csv").read_bytes()) == first
    assert cli.main(args + ["--seed", "6"]) == 0
    assert (out / "report.json").read_bytes() != first[0]


def test_perturb_schrodinger(tmp_path):
    out = tmp_path / "pert"
    cfg = write(tmp_path, "p.cfg", PERTURB + f"out = {out}\n")
    assert cli.main(["perturb", "--config", cfg]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["simple"] and rep["passed"]
    assert rep["sigma_total"] < 0.1
    assert rep["output_field_class"] == "traceless_kinetic"
    assert rep["pipeline"]["potential"]["lp_estimate"] < 0.1


def test_perturb_budget_violation_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "beta = 1\nr = 0.2\nhorizon = 100\n" + f"out = {tmp_path / 'x'}\n")
    assert cli.main(["perturb", "--config", cfg]) == 2
    assert "error" in capsys.readouterr().err


def test_config_error_exit_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "p = 0.3\n")
    assert cli.main(["simulate", "--config", cfg]) == 2
    assert "p:" in capsys.readouterr().err


def test_numerical_failure_exit_3(tmp_path, capsys):
    cfg = write(tmp_path, "blow.cfg", "alpha = -1e9\nbeta = 0\nhorizon = 10\nsamples = 1\n"
                + f"out = {tmp_path / 'b'}\n")
    assert cli.main(["simulate", "--config", cfg]) == 3
    assert "numerical" in capsys.readouterr().err


def test_distance(tmp_path, capsys):
    a = write(tmp_path, "a.cfg", "beta = 1\n")
    b = write(tmp_path, "b.cfg", "beta = 1\nbox_r = 0.2\nbox_a = 1\nbox_b = 2\nbox_value = stretch\n")
    out = tmp_path / "d"
    assert cli.main(["distance", "--config", a, "--config", b, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    # ||S - kinetic(0, 1)|| = 2 on a box of measure 0.2/3
    assert rep["sigma_hat_p"] == pytest.approx(2 * 0.2 / 3, rel=1e-12)
    assert rep["sigma_p"] == pytest.approx(rep["sigma_hat_p"] / (1 + rep["sigma_hat_p"]))
    assert rep["method"] == "exact"
    assert "sigma_p" in capsys.readouterr().out


def test_distance_needs_two_configs(tmp_path):
    a = write(tmp_path, "a.cfg", "beta = 1\n")
    assert cli.main(["distance", "--config", a]) == 2
    c = write(tmp_path, "c.cfg", "base = cat_map\nbeta = 1\n")
    assert cli.main(["distance", "--config", a, "--config", c]) == 2


def test_verify_passes(capsys):
    assert cli.main(["verify"]) == 0
    text = capsys.readouterr().out
    assert len(verify.TOLERANCES) >= 20
    for name in verify.TOLERANCES:
        assert name in text


def test_verify_detects_corruption(monkeypatch, capsys):
    monkeypatch.setitem(verify.TOLERANCES, "cocycle.closed_form_agreement", -1.0)
    assert cli.main(["verify"]) == 1
    assert "cocycle.closed_form_agreement" in capsys.readouterr().err


def test_to_json_floats():
    assert cli.to_json({"x": 0.1, "y": [1.0, math.inf], "z": None}) == \
        '{\n  "x": 0.10000000000000001,\n  "y": [\n    1.0,\n    Infinity\n  ],\n  "z": null\n}'
