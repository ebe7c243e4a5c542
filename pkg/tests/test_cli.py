import subprocess
import sys

import pytest

from netdg.analysis import read_reports_csv
from netdg.cli import EXIT_OK, EXIT_SOLVER, EXIT_SPEC, main
from netdg.geometry import load_topology


def run(tmp_path, *args, name="out.csv"):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, (out.read_text() if out.exists() else "")


def test_convergence_writes_csv(tmp_path):
    code, text = run(tmp_path, "convergence", "--case", "edge-mms", "--levels", "3")
    assert code == EXIT_OK
    assert text.startswith("# netdg-convergence v1\n")
    rows = read_reports_csv(text)
    assert [r.level for r in rows] == [0, 1, 2]
    assert rows[0].rate_dg is None and rows[2].rate_l2 > 1.5


def test_convergence_output_is_deterministic(tmp_path):
    args = ("convergence", "--case", "edge-mms", "--levels", "2", "--p", "2")
    _, a = run(tmp_path, *args, name="a.csv")
    _, b = run(tmp_path, *args, name="b.csv")
    assert a == b


def test_single_level_convergence_is_a_spec_error(tmp_path, capsys):
    code, _ = run(tmp_path, "convergence", "--levels", "1")
    assert code == EXIT_SPEC
    assert "levels" in capsys.readouterr().err


@pytest.mark.parametrize("args", [["--case", "nope"], ["--p", "0"], ["--tol", "2"],
                                  ["--coarse-h", "-1"], ["--eta-f", "0"],
                                  ["--case", "low-reg:s=1.5"]])
def test_invalid_arguments_exit_2(tmp_path, args):
    code, _ = run(tmp_path, "convergence", "--levels", "2", *args)
    assert code == EXIT_SPEC


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("# study\ncase = edge-mms\nlevels = 2\np = 2\nvariant = nipg\n")
    code, text = run(tmp_path, "convergence", "--config", str(cfg), "--p", "1")
    assert code == EXIT_OK
    assert "# p=1\n" in text and "# variant=nipg\n" in text
    assert len(read_reports_csv(text)) == 2


def test_unknown_config_key_is_a_spec_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["convergence", "--config", str(cfg)]) == EXIT_SPEC


def test_solver_budget_failure_exits_1(tmp_path):
    code, _ = run(tmp_path, "solve", "--case", "edge-mms", "--level", "2", "--solver", "cg",
                  "--tol", "1e-18")
    assert code == EXIT_SOLVER


def test_solve_exports_matrix(tmp_path):
    mtx = tmp_path / "A.mtx"
    code, text = run(tmp_path, "solve", "--case", "edge-mms", "--export-matrix", str(mtx))
    assert code == EXIT_OK
    assert mtx.read_text().startswith("%%MatrixMarket matrix coordinate real")
    assert read_reports_csv(text)[0].dofs == 88


def test_solve_without_exact_solution(tmp_path):
    code, text = run(tmp_path, "solve", "--case", "cube-net")
    assert code == EXIT_OK
    assert text.startswith("# netdg-solve v1\n")


def test_compare_reference_against_itself(tmp_path):
    code, text = run(tmp_path, "compare-reference", "--case", "edge-mms", "--levels", "2",
                     "--reference-level", "1")
    assert code == EXIT_OK
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    assert lines[0] == "level,h,dofs,rel_l2_diff,iterations"
    # level 1 is the reference itself
    assert float(lines[2].split(",")[3]) < 1e-10
    assert float(lines[1].split(",")[3]) > 1e-4


def test_compare_reference_rejects_coarser_reference(tmp_path):
    code, _ = run(tmp_path, "compare-reference", "--levels", "3", "--reference-level", "1")
    assert code == EXIT_SPEC


def test_check_theory(tmp_path):
    code, text = run(tmp_path, "check-theory", "--case", "edge-mms", "--levels", "2",
                     "--samples", "5")
    assert code == EXIT_OK
    assert text.startswith("# netdg-theory v1\n")
    header = [ln for ln in text.splitlines() if not ln.startswith("#")][0]
    assert header.split(",")[-2:] == ["min_eig", "asymmetry"]


def test_check_theory_with_tiny_bifurcation_penalty(tmp_path):
    code, text = run(tmp_path, "check-theory", "--case", "edge-mms", "--levels", "1",
                     "--samples", "2", "--eta-gamma", "1e-6")
    assert code in (EXIT_OK, EXIT_SOLVER)
    row = [ln for ln in text.splitlines() if not ln.startswith("#")][1].split(",")
    assert float(row[-2]) < float("inf")


def test_gen_cube_net(tmp_path):
    code, text = run(tmp_path, "gen", "cube-net", name="cube.topo")
    assert code == EXIT_OK
    topo = load_topology(text)
    assert len(topo.domains) == 54 and len(topo.bifurcations) == 36
    assert main(["gen", "cube-net", "--n", "1"]) == EXIT_SPEC


def test_topology_file_case(tmp_path):
    topo = tmp_path / "cube.topo"
    assert main(["gen", "cube-net", "--n", "2", "--out", str(topo)]) == EXIT_OK
    code, text = run(tmp_path, "solve", "--case", f"file:{topo}", "--coarse-h", "0.5")
    assert code == EXIT_OK


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "netdg", "--version"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("netdg ")
