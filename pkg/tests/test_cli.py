import csv
import json
import re

import pytest

from vonkarman.cli import ConfigError, RunConfig, main
from vonkarman.domains import square
from vonkarman.mesh import dump_mesh, refine_uniform

FULL = re.compile(r"^-?\d\.\d{17}e[+-]\d{2,3}$")


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def square_file(tmp_path):
    # eight triangles: the two-triangle square is too coarse for the first level to be asymptotic
    p = tmp_path / "square.tri"
    p.write_text(dump_mesh(refine_uniform(square())))
    return p


def assert_full_precision(rows, skip=()):
    for row in rows[1:]:
        for i, cell in enumerate(row):
            if i not in skip:
                assert FULL.match(cell), cell


def test_converge_example(tmp_path, square_file, capsys):
    out = tmp_path / "out"
    code = main(["converge", "--mesh", str(square_file), "--degree", "3", "--split", "ps", "--levels", "4",
                 "--out", str(out), "--svg"])
    assert code == 0
    errors = read(out / "errors.csv")
    assert errors[0] == ["level", "h", "n_free", "L2", "H1", "H2"]
    assert len(errors) == 5
    assert [int(r[0]) for r in errors[1:]] == [0, 1, 2, 3]
    assert_full_precision(errors, skip=(0, 2))
    rates = read(out / "rates.csv")
    assert rates[0] == ["norm", "rate_1", "rate_2", "rate_3", "ls_slope"]
    assert [r[0] for r in rates[1:]] == ["L2", "H1", "H2"]
    assert_full_precision(rates, skip=(0,))
    assert float(rates[1][-1]) == pytest.approx(4.0, abs=0.25)
    svg = (out / "convergence.svg").read_text()
    assert svg.startswith("<svg") and "slope" in svg
    summary = json.loads(capsys.readouterr().out)
    assert summary["L2"] == pytest.approx(float(rates[1][-1]), rel=1e-15)


def test_solve_zero_forcing(tmp_path):
    assert main(["solve", "--mesh", "square", "--degree", "2", "--forcing", "zero", "--out", str(tmp_path)]) == 0
    rows = read(tmp_path / "solution.csv")
    assert rows[0] == ["x", "y", "u", "v"]
    assert len(rows) > 1
    assert all(float(r[2]) == 0.0 and float(r[3]) == 0.0 for r in rows[1:])


def test_solve_start_level_defaults_to_zero(tmp_path, capsys):
    main(["solve", "--mesh", "square", "--degree", "3", "--forcing", "unit", "--out", str(tmp_path)])
    coarse = json.loads(capsys.readouterr().out)["n_free"]
    main(["solve", "--mesh", "square", "--degree", "3", "--forcing", "unit", "--start-level", "1",
          "--out", str(tmp_path)])
    assert json.loads(capsys.readouterr().out)["n_free"] > coarse


def test_compare_writes_ratio(tmp_path, capsys):
    code = main(["compare", "--mesh", "square", "--degree", "2", "--tol-change", "0.5", "--max-levels", "3",
                 "--out", str(tmp_path)])
    assert code == 0
    rows = dict((r[0], r[1]) for r in read(tmp_path / "compare.csv")[1:] if len(r) >= 2)
    summary = json.loads(capsys.readouterr().out)
    assert float(rows["ratio"]) == pytest.approx(summary["ratio"], rel=1e-15)
    assert float(rows["ratio"]) == pytest.approx(float(rows["max_u_mixed"]) / float(rows["max_u_c1"]), rel=1e-15)
    assert (tmp_path / "solution.csv").exists()


@pytest.mark.parametrize("threads", [1, 2])
def test_repeated_runs_are_bit_identical(tmp_path, threads):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["converge", "--mesh", "square", "--degree", "3", "--split", "ct", "--levels", "2",
                     "--threads", str(threads), "--out", str(out)]) == 0
        main(["solve", "--mesh", "lshape", "--degree", "3", "--forcing", "unit", "--threads", str(threads),
              "--out", str(out)])
        outs.append([(out / n).read_bytes() for n in ("errors.csv", "rates.csv", "solution.csv")])
    assert outs[0] == outs[1]


@pytest.mark.parametrize("argv", [
    ["solve", "--mesh", "nowhere.tri"],
    ["solve", "--mesh", "square", "--degree", "4"],
    ["solve", "--mesh", "square", "--degree", "2", "--split", "ct"],
    ["converge", "--mesh", "square", "--levels", "0"],
    ["solve", "--mesh", "square", "--threads", "0"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and err["message"]


def test_runtime_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.tri"
    bad.write_text("bad\n")
    assert main(["solve", "--mesh", str(bad), "--out", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "MeshError" and "line 1" in err["message"]


def test_argparse_rejects_unknown_choice():
    with pytest.raises(SystemExit):
        main(["solve", "--mesh", "square", "--split", "hex"])


def test_run_config_validation():
    assert RunConfig("solve", "square").validate().degree == 3
    with pytest.raises(ConfigError):
        RunConfig("solve", "square", formulation="hybrid").validate()
    with pytest.raises(ConfigError):
        RunConfig("solve", "square", forcing="gravity").validate()
    with pytest.raises(ConfigError):
        RunConfig("solve", "square", quadrature=0).validate()
    RunConfig("solve", "square", degree=2, split="ct", formulation="mixed").validate()
