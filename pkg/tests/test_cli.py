import textwrap

import pytest

from conftest import CONFIG_DIR
from plapsys.cli import ERROR, INCOMPLETE, OK, main
from plapsys.config import load_config
from plapsys.errors import ConfigError


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text).lstrip())
    return path


MINIMAL = """
    command = "solve"
    nonlinearity = "power(1, 3)"
    p = 2.0

    [domain]
    kind = "interval"
    bounds = [0.0, 1.0]
    resolution = 21

    [boundary]
    values = [2.0]
"""


def test_minimal_solve(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    out = tmp_path / "out"
    assert main(["solve", "--config", str(cfg), "--out", str(out)]) == OK
    names = {p.name for p in out.iterdir()}
    assert {"solution_1.csv", "energy_trace.csv", "summary.txt", "manifest.txt"} <= names
    assert "converged=True" in capsys.readouterr().out
    summary = (out / "summary.txt").read_text()
    assert "converged = true" in summary


def test_quiet_prints_nothing(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o"), "--quiet"]) == OK
    assert capsys.readouterr().out == ""


def test_unknown_key_reports_field_and_line(tmp_path, capsys):
    text = MINIMAL + "\n    [solver]\n    tolerence = 1e-9\n"
    cfg = write(tmp_path, text)
    with pytest.raises(ConfigError) as info:
        load_config(cfg)
    assert info.value.field == "solver.tolerence"
    lines = cfg.read_text().splitlines()
    expected = next(i for i, ln in enumerate(lines, 1) if ln.startswith("tolerence"))
    assert info.value.line == expected == 14
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == ERROR
    err = capsys.readouterr().err
    assert "solver.tolerence" in err and "line 14" in err


def test_command_mismatch(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    with pytest.raises(ConfigError):
        load_config(cfg, "blowup")


def test_missing_table(tmp_path):
    cfg = write(tmp_path, 'command = "solve"\nnonlinearity = "power(1, 3)"\np = 2.0\n')
    with pytest.raises(ConfigError, match="domain"):
        load_config(cfg)


def test_bad_toml(tmp_path):
    cfg = write(tmp_path, "command = \n")
    with pytest.raises(ConfigError):
        load_config(cfg)


def test_blowup_rejected_on_ko_boundary(tmp_path, capsys):
    # gamma = p - 1 fails the Keller-Osserman condition
    cfg = write(tmp_path, """
        command = "blowup"
        nonlinearity = "power(1, 1)"
        p = 2.0

        [domain]
        kind = "interval"
        bounds = [-1.0, 1.0]
        resolution = 101

        [schedule]
        base = 1.0
    """)
    with pytest.raises(ConfigError, match="Keller"):
        load_config(cfg)
    assert main(["blowup", "--config", str(cfg), "--out", str(tmp_path / "o")]) == ERROR


def test_mixed_indices_are_one_based():
    cfg = load_config(CONFIG_DIR / "mixed_coupled.toml")
    assert cfg.blowup_set == [0]
    assert cfg.fixed_boundary == {1: 1.0}


EXPECTED = {
    "ko_power.toml": OK,
    "solve_linear.toml": OK,
    "solve_coupled.toml": OK,
    "verify_psi.toml": OK,
    "verify_w_scaled.toml": INCOMPLETE,
    "entire_n3.toml": OK,
    "blowup_p2_g3.toml": OK,
    "mixed_coupled.toml": INCOMPLETE,
}


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_shipped_config_exit_status(name, tmp_path):
    cfg = load_config(CONFIG_DIR / name)
    status = main([cfg.command, "--config", str(CONFIG_DIR / name), "--out", str(tmp_path), "--quiet"])
    assert status == EXPECTED[name]
    assert (tmp_path / "manifest.txt").exists()


def test_repeat_runs_have_identical_manifests(tmp_path):
    cfg = CONFIG_DIR / "solve_coupled.toml"
    for run in ("a", "b"):
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / run), "--quiet"]) == OK
    assert (tmp_path / "a" / "manifest.txt").read_bytes() == (tmp_path / "b" / "manifest.txt").read_bytes()


SHORT_BLOWUP = """
    command = "blowup"
    nonlinearity = "power(1, 3)"
    p = 2.0

    [domain]
    kind = "interval"
    bounds = [-1.0, 1.0]
    resolution = 101

    [schedule]
    base = 1.0
    max_levels = {levels}
    stall_tol = 1e-12
"""


def test_unstabilized_blowup_exits_2_with_trace(tmp_path):
    cfg = write(tmp_path, SHORT_BLOWUP.format(levels=3))
    out = tmp_path / "o"
    assert main(["blowup", "--config", str(cfg), "--out", str(out), "--quiet"]) == INCOMPLETE
    summary = (out / "summary.txt").read_text()
    assert "levels = 3" in summary and "stabilized = false" in summary
    assert (out / "level_02_solution_1.csv").exists()


def test_two_level_schedule_rejected(tmp_path, capsys):
    cfg = write(tmp_path, SHORT_BLOWUP.format(levels=2))
    assert main(["blowup", "--config", str(cfg), "--out", str(tmp_path / "o")]) == ERROR
    assert "max_levels" in capsys.readouterr().err
