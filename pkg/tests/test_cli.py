import json
import math

import pytest

from sectorlab.cli import main
from sectorlab.config import ConfigError, parse_config
from sectorlab.plots import sector_plot
from sectorlab.runner import run, verdict_from_json, write_outputs

MINIMAL = """
# smallest useful scenario
domain = square
resolution = 4
tasks = numrange
"""


def test_minimal_config_defaults():
    sc = parse_config(MINIMAL)
    assert sc.coefficient == "identity" and sc.p == [2.0] and sc.flavors == ["support_away"]


@pytest.mark.parametrize(
    "extra, message",
    [
        ("robin = top:-1", "Robin coefficient must be nonnegative"),
        ("p = 1", "p must exceed 1"),
        ("p = 1.5", "conjugate exponent 3"),
        ("coefficient = 1 2 3; 4 5", "malformed matrix"),
        ("coefficient = 1 0; 0 -1", "not elliptic"),
        ("colour = blue", "unknown key"),
        ("domain = torus", "duplicate key"),
        ("geometry.delta = 0.4", "1/m"),
    ],
)
def test_config_errors_carry_line_numbers(extra, message):
    text = MINIMAL + extra + "\n"
    with pytest.raises(ConfigError, match=message) as info:
        parse_config(text)
    assert info.value.line == len(text.splitlines())


def test_missing_key_and_prerequisites():
    with pytest.raises(ConfigError, match="missing required key 'tasks'"):
        parse_config("domain = square\nresolution = 3\n")
    with pytest.raises(ConfigError, match="task robin requires"):
        parse_config("domain = square\nresolution = 3\ntasks = robin\n")
    with pytest.raises(ConfigError, match="hardy"):
        parse_config("domain = lshape\nresolution = 3\ntasks = hardy\n")
    with pytest.raises(ConfigError, match="Dirichlet and also"):
        parse_config(MINIMAL + "dirichlet = left\ndynamic = left\n")


def test_matrix_coefficient_round_trip():
    sc = parse_config(MINIMAL + "coefficient = 2 0.5; -0.5 1\n")
    assert sc.matrix == [[2.0, 0.5], [-0.5, 1.0]]
    rep = run(sc)
    assert rep.passed
    assert rep.runs[0].tasks[0].thetas[2.0] == pytest.approx(math.atan(0.5 / math.sqrt(2)))


def test_reference_scenario_passes_and_is_deterministic(tmp_path, capsys):
    cfg = "configs/reference.cfg"
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for f in sorted(p.name for p in (tmp_path / "a").iterdir()):
        if f != "timing.json":
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
    data = json.loads((tmp_path / "a" / "report.json").read_text())
    assert data["verdict"] == verdict_from_json(data) == "pass"
    assert "seconds" not in (tmp_path / "a" / "report.json").read_text()
    assert (tmp_path / "a" / "resolvent_probes.csv").read_text().count("\n") > 200


def test_seed_changes_samples(tmp_path):
    cfg = "configs/reference.cfg"
    main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--tasks", "numrange", "--no-plots"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--tasks", "numrange", "--no-plots", "--seed", "8"])
    assert (tmp_path / "a" / "report.json").read_text() != (tmp_path / "b" / "report.json").read_text()


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text(MINIMAL + "p = 0.5\n")
    assert main(["validate", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["run", "--config", "configs/reference.cfg", "--tasks", "bogus"]) == 2
    # an asserted slope window that excludes the square's -1 fails with exit code 1
    fail = tmp_path / "fail.cfg"
    fail.write_text(MINIMAL.replace("numrange", "ultra") + "ultra.slope_range = -3, -2\n")
    assert main(["run", "--config", str(fail), "--out", str(tmp_path / "o")]) == 1
    assert main(["list-presets"]) == 0


def test_task_errors_are_attributed(tmp_path):
    sc = parse_config(MINIMAL.replace("numrange", "ultra") + "ultra.t_min = 1e-6\nultra.t_max = 1e-5\n")
    rep = run(sc)
    assert rep.exit_code == 1
    assert "resolution" in rep.runs[0].tasks[0].error


def test_slit_disc_flavors_differ(tmp_path):
    sc = parse_config(
        "domain = slit_disc\nresolution = 4\ncoefficient = rot1\ndirichlet = outer\n"
        "flavor = both\np = 2, 4\ntasks = numrange\nsamples = 300\n"
    )
    rep = run(sc)
    assert [r.flavor for r in rep.runs] == ["support_away", "smooth_closure"]
    assert rep.runs[0].n_free != rep.runs[1].n_free
    assert rep.passed
    names = [p.name for p in write_outputs(rep, tmp_path, plots=False)]
    assert "support_away_numrange_sector.csv" in names and "smooth_closure_numrange_sector.csv" in names


def test_empty_sector_plot(tmp_path):
    path = sector_plot([], 0.3, tmp_path / "empty.svg")
    text = path.read_text()
    assert "<svg" in text and "dc:date" not in text


def test_symmetric_plot_points_on_real_axis(tmp_path):
    sc = parse_config(MINIMAL + "samples = 50\n")
    res = run(sc).runs[0].tasks[0]
    assert max(abs(v.imag) for v in res.samples[2.0]) < 1e-12
    assert min(v.real for v in res.samples[2.0]) >= 0
