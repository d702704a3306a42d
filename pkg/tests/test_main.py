# --------------------------------------------------
# test_main.py
# --------------------------------------------------
# Purpose:
#   Validate the command-line front end, called in
#   process through main(argv):
#       • adapt writes its run files and a summary
#       • verify writes report.json and its exit status
#         reflects the assertions
#       • rates prints slopes and their difference
#
# Expectations:
#   - exit 0 on success (also at the iteration cap)
#   - exit 1 on invalid parameters or unusable input,
#     including files the OS refuses
#   - exit 3 when the linear algebra fails
# --------------------------------------------------

import json
import logging

import pytest
from scipy.linalg import LinAlgError

from amfem.main import main
from amfem.mesh import builtin_domain
from amfem.storage import save_mesh


@pytest.fixture(autouse=True)
def _restore_root_logger():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers = handlers
    root.setLevel(level)


def _history_csv(path, exponent):
    dofs = [100, 400, 1600, 6400]
    rows = ["dofs_sigma,error_sq"] + [f"{n},{n ** (2 * exponent)!r}" for n in dofs]
    path.write_text("\n".join(rows) + "\n")
    return str(path)


# --------------------------------------------------
# adapt
# --------------------------------------------------


def test_adapt_single_iteration(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["adapt", "--domain", "square", "--f", "sinsin", "--eps", "1e9", "--out", str(out)])
    assert code == 0

    history = (out / "history.csv").read_text().splitlines()
    assert len(history) == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["iterations"] == 1
    assert manifest["converged"] is True
    assert manifest["final_cells"] == 2
    assert manifest["parameters"]["f"] == "sinsin"
    for name in ("mesh.json", "indicators.csv", "metrics.prom"):
        assert (out / name).is_file()
    assert 'amfem_solves_total{method="splu"}' in (out / "metrics.prom").read_text()

    stdout = capsys.readouterr().out
    assert stdout.startswith("iterations 1  cells 2")
    assert "error n/a" in stdout


def test_adapt_iteration_cap_is_a_warning(tmp_path, capsys):
    out = tmp_path / "capped"
    code = main(["adapt", "--domain", "lshape", "--eps", "1e-12", "--max-iterations", "3",
                 "--reference-depth", "1", "--out", str(out)])
    assert code == 0
    assert len((out / "history.csv").read_text().splitlines()) == 4
    assert json.loads((out / "manifest.json").read_text())["converged"] is False
    assert "iteration cap 3 reached" in capsys.readouterr().err


def test_adapt_from_mesh_file_with_operator_export(tmp_path):
    mesh_path = tmp_path / "square.json"
    save_mesh(builtin_domain("square"), mesh_path)
    out = tmp_path / "ops"
    code = main(["adapt", "--mesh", str(mesh_path), "--f", "linex", "--eps", "1e9",
                 "--export-operators", "--out", str(out)])
    assert code == 0
    d1 = (out / "D1.coo").read_text().splitlines()
    assert len(d1) == 6
    assert (out / "M1.coo").is_file() and (out / "D0.coo").is_file()
    assert json.loads((out / "manifest.json").read_text())["domain"] == str(mesh_path)


@pytest.mark.parametrize(
    "argv",
    [
        ["adapt", "--theta", "1.5"],
        ["adapt", "--eps", "-1"],
        ["adapt", "--domain", "circle"],
        ["adapt", "--f", "cosine"],
        ["adapt", "--strategy", "greedy"],
        ["verify", "--levels", "1"],
        ["adapt", "--mesh", "missing.json"],
    ],
)
def test_invalid_parameters_exit_1(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err


# --------------------------------------------------
# verify
# --------------------------------------------------


def test_verify_marking_suite(tmp_path, capsys):
    code = main(["verify", "--suite", "marking", "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["assert.marking.minimal"] is True
    assert report["marking.mismatches"] == 0
    assert (tmp_path / "metrics.prom").is_file()
    assert "all assertions passed" in capsys.readouterr().out


def test_verify_harmonics_writes_basis(tmp_path):
    assert main(["verify", "--suite", "harmonics", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "harmonics_square_one_hole.csv").read_text().splitlines()
    assert lines[0] == "edge,v0,v1,h0"
    assert len(lines) == 1 + 32


# --------------------------------------------------
# rates
# --------------------------------------------------


def test_rates_single_file(tmp_path, capsys):
    path = _history_csv(tmp_path / "h.csv", -0.5)
    assert main(["rates", path]) == 0
    row = capsys.readouterr().out.splitlines()[1]
    assert row.split()[-2:] == ["-0.50", "n/a"]


def test_rates_difference(tmp_path, capsys):
    first = _history_csv(tmp_path / "a.csv", -0.5)
    second = _history_csv(tmp_path / "b.csv", -1.0)
    assert main(["rates", first, second]) == 0
    last = capsys.readouterr().out.splitlines()[-1]
    assert last.startswith("difference")
    assert last.split()[-2:] == ["-0.50", "n/a"]


def test_rates_rejects_empty_and_short_files(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["rates", str(empty)]) == 1
    assert "empty.csv" in capsys.readouterr().err

    short = tmp_path / "short.csv"
    short.write_text("dofs_sigma,error_sq\n10,1.0\n20,0.5\n")
    assert main(["rates", str(short)]) == 1
    assert "short.csv" in capsys.readouterr().err


# --------------------------------------------------
# failures outside the amfem error hierarchy
# --------------------------------------------------


def test_linear_algebra_failure_exits_3(tmp_path, monkeypatch, capsys):
    def singular(*args, **kwargs):
        raise LinAlgError("Singular matrix")

    monkeypatch.setattr("amfem.main.amfem", singular)
    code = main(["adapt", "--domain", "square", "--eps", "1e9", "--out", str(tmp_path)])
    assert code == 3
    assert "Singular matrix" in capsys.readouterr().err


def test_os_error_exits_1_naming_the_file(tmp_path, monkeypatch, capsys):
    def denied(*args, **kwargs):
        raise PermissionError(13, "Permission denied", "history.csv")

    monkeypatch.setattr("amfem.main.write_history", denied)
    code = main(["adapt", "--domain", "square", "--eps", "1e9", "--out", str(tmp_path)])
    assert code == 1
    err = capsys.readouterr().err
    assert "history.csv" in err and "Permission denied" in err
