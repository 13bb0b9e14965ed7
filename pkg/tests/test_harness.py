import csv
import io
import subprocess
import sys

import pytest

from contactsens import cli, harness
from contactsens.harness import (
    HEADER,
    SENTINEL,
    Inconclusive,
    SweepSpec,
    critical_bracket,
    locate_transition,
    parse_grid,
    read_csv,
    run_sweep,
)
from contactsens.lattice import ValidationError


def test_parse_grid():
    assert parse_grid("1:2:0.5") == [1.0, 1.5, 2.0]
    assert parse_grid("0.1:0.3:0.1") == [0.1, 0.2, 0.3]
    assert parse_grid("3,1.5") == [3.0, 1.5]
    for bad in ("1:2", "2:1:0.5", "1:2:0"):
        with pytest.raises(ValidationError):
            parse_grid(bad)


@pytest.mark.parametrize("kw", [
    dict(mode="sensitivity", points=[]),
    dict(mode="sensitivity", points=[2.0, 1.0]),
    dict(mode="delta", points=[(2.0, 1.0)]),
    dict(mode="nope", points=[1.0]),
    dict(mode="delta", points=[(1.0, 1.4)], p=0.6, q=0.9, preset="theorem1"),
    dict(mode="sensitivity", points=[1.0], p=0.9, q=0.7),
])
def test_spec_validation(kw):
    with pytest.raises(ValidationError):
        SweepSpec(**kw).validate()


def test_zero_rate_row(tmp_path):
    out = tmp_path / "s.csv"
    rows = run_sweep(SweepSpec("sensitivity", [0.0], r=2, t=3.0, n=2000, out=str(out)))
    assert rows[0].mean == 0.0 and rows[0].stderr == 0.0
    data, complete = read_csv(out)
    assert complete and len(data) == 1
    assert list(data[0]) == HEADER
    assert data[0]["wall_s"] == ""


def test_rows_follow_grid_order_and_rerun_standalone():
    buf = io.StringIO()
    spec = SweepSpec("delta", [(1.0, 1.5), (2.0, 2.5)], r=2, t=4.0, n=3000)
    rows = run_sweep(spec, stream=buf)
    assert [(r.lambda1, r.lambda2) for r in rows] == spec.points
    single = run_sweep(SweepSpec("delta", [(2.0, 2.5)], r=2, t=4.0, n=3000))
    assert single[0].mean == rows[1].mean and single[0].stderr == rows[1].stderr
    text = buf.getvalue().splitlines()
    assert text[0] == ",".join(HEADER) and text[-1] == SENTINEL


def test_incomplete_file_lacks_sentinel(tmp_path, monkeypatch):
    out = tmp_path / "x.csv"
    calls = []

    def boom(spec, point):
        if calls:
            raise KeyboardInterrupt
        calls.append(point)
        return orig(spec, point)

    orig = harness._evaluate
    monkeypatch.setattr(harness, "_evaluate", boom)
    with pytest.raises(KeyboardInterrupt):
        run_sweep(SweepSpec("survival", [0.5, 1.0], t=2.0, n=100, out=str(out)))
    data, complete = read_csv(out)
    assert not complete and len(data) == 1


def test_record_wall_is_opt_in():
    rows = run_sweep(SweepSpec("survival", [0.5], t=2.0, n=100, record_wall=True))
    assert rows[0].wall_s is not None


def test_all_modes_produce_rows():
    for mode, pts in [("sensitivity", [1.0]), ("delta", [(1.0, 2.0)]), ("survival", [1.0]),
                      ("conditional", [1.0]), ("oracle-check", [1.0])]:
        rows = run_sweep(SweepSpec(mode, pts, r=2, t=1.5, n=500))
        assert len(rows) == 1 and rows[0].mode == mode


def test_critical_bracket_toy():
    br = critical_bracket([0.5, 4.0], 10.0, 2000, 1)
    assert (br.lo, br.hi) == (0.5, 4.0)
    with pytest.raises(Inconclusive):
        critical_bracket([3.0, 4.0], 10.0, 2000, 1)
    with pytest.raises(ValidationError):
        critical_bracket([1.0], 10.0, 10, 1)


def test_locate_rejects_degenerate_range():
    with pytest.raises(ValidationError):
        locate_transition(0.7, 0.9, 5, 30.0, (2.0, 2.0), 100, 1)


def test_locate_no_sign_change_subcritical():
    with pytest.raises(Inconclusive, match="no sign change"):
        locate_transition(0.7, 0.9, 5, 30.0, (0.2, 1.0), 5000, 1)


# command line -------------------------------------------------------------


def test_cli_sensitivity_stdout(capsys):
    assert cli.main(["sensitivity", "--lambda-grid", "0:1:1", "--r", "2", "--t", "2",
                     "--samples", "500"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(HEADER) and lines[-1] == SENTINEL and len(lines) == 4


def test_cli_validation_exit_code(capsys):
    assert cli.main(["sensitivity", "--lambda", "1", "--p", "0.9", "--q", "0.7"]) == 2
    assert cli.main(["sensitivity"]) == 2
    assert cli.main(["delta", "--lambda", "2", "--lambda2", "1"]) == 2
    assert cli.main(["locate-peak", "--lambda-grid", "2:2:0.5"]) == 2
    assert cli.main(["delta", "--preset", "theorem1", "--p", "0.6"]) == 2


def test_cli_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        cli.main(["bogus"])
    assert exc.value.code == 2


def test_cli_inconclusive_exit_code(capsys):
    # r far beyond reach: every replica contributes 0
    assert cli.main(["delta", "--lambda", "0.1", "--lambda2", "0.2", "--r", "40", "--t", "1",
                     "--samples", "200"]) == 3
    assert cli.main(["locate-peak", "--lambda-grid", "0.2:1.0:0.4", "--samples", "2000"]) == 3


def test_cli_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep\nlambda = 1.0\np = 0.8\nq = 0.95\nsamples = 300\nt = 2\nr = 1\n")
    assert cli.main(["sensitivity", "--config", str(cfg), "--q", "0.9"]) == 0
    row = next(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert (row["p"], row["q"], row["n"], row["t"]) == ("0.8", "0.9", "300", "2.0")
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert cli.main(["sensitivity", "--config", str(bad)]) == 2


def test_cli_survival_bracket(capsys):
    assert cli.main(["survival", "--lambda-grid", "0.5,4.0", "--t", "10", "--samples", "1000",
                     "--bracket"]) == 0
    assert "bracket 0.5 4.0" in capsys.readouterr().out


def test_cli_oracle_check(tmp_path, capsys):
    fx = tmp_path / "fx.txt"
    assert cli.main(["oracle-check", "--t", "1.5", "--samples", "20000",
                     "--fixtures", str(fx)]) == 0
    assert "name=occupation" in fx.read_text()


def test_module_entry_point(tmp_path):
    out = tmp_path / "a.csv"
    proc = subprocess.run([sys.executable, "-m", "contactsens", "conditional", "--lambda", "1",
                           "--r", "2", "--t", "3", "--samples", "300", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert read_csv(out)[1]
