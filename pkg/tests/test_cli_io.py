import csv
import math
import os

import numpy as np
import pytest

from dgadapt.basis import get_basis
from dgadapt.cli import main
from dgadapt.config import ConfigError, load_config, parse_config_file
from dgadapt.fields import DofLayout
from dgadapt.mesh import QuadForest, uniform_refine
from dgadapt.vtk import cell_means, write_vtk


# -- config parsing ----------------------------------------------------------


def test_parse_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# comment line\n"
        "problem = example1\n"
        "epsilon = 0.01  # trailing comment\n"
        "p = 2\n"
        "gamma = 100\n"
        "\n"
        "coar_pct = 30\n"
    )
    values = parse_config_file(str(cfg))
    assert values == {"problem": "example1", "epsilon": 0.01, "p": 2,
                      "gamma": 100.0, "coar_pct": 30.0}


def test_defaults_applied(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("")
    rc = load_config(str(cfg), {"problem": "example1", "epsilon": 1.0, "p": 1})
    assert rc["gamma"] == 10.0
    assert rc["mesh0"] == 8
    assert rc["ref_pct"] == 6.25
    assert rc["coar_pct"] == 10.0
    assert rc["stola"] == math.inf
    ac = rc.adapt_config()
    assert ac.stolb_eff == math.inf


def test_stolb_defaults_to_fifth_of_stola():
    rc = load_config(None, {"problem": "example1", "epsilon": 1.0, "p": 1,
                            "stola": 0.5})
    assert rc.adapt_config().stolb_eff == pytest.approx(0.1)


def test_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("gamm = 10\n")
    with pytest.raises(ConfigError):
        parse_config_file(str(cfg))


def test_malformed_value_rejected(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("epsilon = one\n")
    with pytest.raises(ConfigError):
        parse_config_file(str(cfg))


def test_missing_required_keys_rejected():
    with pytest.raises(ConfigError):
        load_config(None, {"problem": "example1"})


def test_temporal_study_configuration_accepted():
    rc = load_config(None, {"problem": "example1", "epsilon": 1e-2, "p": 10,
                            "gamma": 100.0})
    assert rc["gamma"] == 100.0 and rc["p"] == 10


# -- VTK ---------------------------------------------------------------------


def minimal_vtk_parse(path):
    """Tiny reference reader for the legacy ASCII layout we emit."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    i = 4
    npts = int(lines[i].split()[1])
    pts = [tuple(map(float, lines[i + 1 + k].split())) for k in range(npts)]
    i += 1 + npts
    ncells = int(lines[i].split()[1])
    cells = [list(map(int, lines[i + 1 + k].split()))[1:] for k in range(ncells)]
    i += 1 + ncells
    assert lines[i].startswith("CELL_TYPES")
    types = [int(lines[i + 1 + k]) for k in range(ncells)]
    i += 1 + ncells
    assert lines[i] == "CELL_DATA %d" % ncells
    data = {}
    i += 1
    while i < len(lines) and lines[i]:
        name = lines[i].split()[1]
        vals = [float(lines[i + 2 + k]) for k in range(ncells)]
        data[name] = vals
        i += 2 + ncells
    return pts, cells, types, data


def test_vtk_single_cell(tmp_path):
    forest = QuadForest((0.0, 1.0, 0.0, 1.0))
    mesh = forest.root_view()
    path = str(tmp_path / "one.vtk")
    write_vtk(mesh, None, {mesh.cells[0]: 3.25}, path)
    pts, cells, types, data = minimal_vtk_parse(path)
    assert len(pts) == 4 and len(cells) == 1 and types == [9]
    assert data["indicator"] == [3.25]
    assert data["solution_mean"] == [0.0]


def test_vtk_roundtrip_cell_means(tmp_path):
    from dgadapt.assembly import l2_project

    forest = QuadForest((0.0, 1.0, 0.0, 1.0))
    mesh = uniform_refine(forest.root_view(), 2)
    layout = DofLayout(mesh, 2)
    field = l2_project(layout, get_basis(2), lambda x, y: x + 2 * y)
    path = str(tmp_path / "grid.vtk")
    write_vtk(mesh, field, None, path)
    pts, cells, types, data = minimal_vtk_parse(path)
    assert len(cells) == 16
    assert all(t == 9 for t in types)
    r = mesh.cell_rects()
    want = 0.5 * (r[:, 0] + r[:, 1]) + 2 * 0.5 * (r[:, 2] + r[:, 3])
    assert np.allclose(data["solution_mean"], want, atol=1e-8)


def test_cell_means_exact():
    from dgadapt.assembly import l2_project

    forest = QuadForest((0.0, 2.0, 0.0, 2.0))
    mesh = uniform_refine(forest.root_view(), 1)
    layout = DofLayout(mesh, 3)
    field = l2_project(layout, get_basis(3), lambda x, y: x**2 * y)
    means = cell_means(field)
    # cell (0,1)x(0,1): mean of x^2 y = (1/3)*(1/2)
    assert means[0] == pytest.approx(1.0 / 6.0, rel=1e-12)


# -- CLI ---------------------------------------------------------------------


def run_cli(args):
    return main(args)


def test_cli_run_and_outputs(tmp_path, capsys):
    code = run_cli(["run", "--problem", "example1", "--epsilon", "1",
                    "--p", "1", "--mesh0", "2", "--n-steps", "3",
                    "--T", "0.5", "--track-error"])
    assert code == 0
    out = capsys.readouterr().out
    assert "estimator=" in out and "effectivity=" in out


def test_cli_convergence_csv_schema(tmp_path, capsys):
    outdir = str(tmp_path)
    code = run_cli(["convergence", "--problem", "example1", "--epsilon", "1",
                    "--p", "1", "--mesh0", "2", "--n-steps", "2",
                    "--T", "0.5", "--levels", "2", "--outdir", outdir,
                    "--track-error"])
    assert code == 0
    with open(os.path.join(outdir, "convergence.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["timesteps", "total_dofs", "estimator", "est_ratio",
                       "error", "err_ratio"]
    assert rows[1][3] == ""  # first level has no ratio
    assert float(rows[2][3]) > 0


def test_cli_adapt_reports_and_determinism(tmp_path, capsys):
    args = ["adapt", "--problem", "example1", "--epsilon", "1", "--p", "1",
            "--mesh0", "4", "--n-steps", "3", "--T", "0.5",
            "--ttol", "0.05", "--outdir"]
    d1 = str(tmp_path / "a")
    d2 = str(tmp_path / "b")
    assert run_cli(args + [d1]) == 0
    assert run_cli(args + [d2]) == 0
    for name in ("adapt_steps.csv", "adapt_summary.csv"):
        with open(os.path.join(d1, name)) as f1, \
                open(os.path.join(d2, name)) as f2:
            assert f1.read() == f2.read()


def test_cli_adapt_total_dofs_consistent(tmp_path, capsys):
    outdir = str(tmp_path)
    assert run_cli(["adapt", "--problem", "example1", "--epsilon", "1",
                    "--p", "1", "--mesh0", "4", "--n-steps", "4",
                    "--T", "0.5", "--outdir", outdir]) == 0
    with open(os.path.join(outdir, "adapt_steps.csv")) as fh:
        rows = list(csv.DictReader(fh))
    recomputed = sum(float(r["tau"]) * int(r["lam"]) for r in rows)
    with open(os.path.join(outdir, "adapt_summary.csv")) as fh:
        summary = next(csv.DictReader(fh))
    assert float(summary["total_dofs"]) == pytest.approx(recomputed, rel=1e-9)


def test_cli_stationary(capsys):
    assert run_cli(["stationary", "--problem", "example1", "--epsilon", "1",
                    "--p", "2", "--mesh0", "4"]) == 0
    assert "estimator=" in capsys.readouterr().out


def test_cli_bad_config_returns_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nope = 1\n")
    code = run_cli(["run", "--config", str(bad), "--problem", "example1",
                    "--epsilon", "1", "--p", "1"])
    assert code == 2
