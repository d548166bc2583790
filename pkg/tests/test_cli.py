"""Config parsing, CLI subcommands, and file output."""

import json

import numpy as np
import pytest

from lsfitdg.cli import cli_main
from lsfitdg.config import (
    OptConfig,
    config_from_text,
    config_to_text,
    traction_from_string,
)
from lsfitdg.dg_space import DGField
from lsfitdg.errors import ConfigError
from lsfitdg.polymesh import load_mesh, make_grid_mesh
from lsfitdg.vtkio import write_vtk

MINI_CFG = """
# toy cantilever on a coarse mesh
domain = rect 0 2 0 1
mesh = generate 60 11 30
dirichlet = x=0
neumann = x=2
traction = [0, -1*I[0.4,0.6](y)]
phi0 = hole 1 0.5 0.3
E0 = 1.0
nu0 = 0.3
alpha = 0.5
tau = 0.5
dt = 0.05
kmax = 3
kcut = 2
"""


# -- config ------------------------------------------------------------------


def test_config_defaults_applied():
    cfg = config_from_text(MINI_CFG)
    assert cfg.gamma == 1e-3
    assert cfg.ctol == 1e-4
    assert cfg.sigma0_mu == 10.0 and cfg.sigma0_lambda == 10.0 and cfg.sigma0_tau == 10.0
    assert cfg.p1 == 4.0 and cfg.p2 == -0.02
    assert cfg.kmax == 3


def test_config_round_trip():
    cfg = config_from_text(MINI_CFG)
    again = config_from_text(config_to_text(cfg))
    assert again == cfg


def test_empty_config_names_first_missing_key():
    with pytest.raises(ConfigError) as exc:
        config_from_text("")
    assert exc.value.key == "domain"


def test_bad_range_names_key():
    with pytest.raises(ConfigError) as exc:
        config_from_text(MINI_CFG + "nu0 = 0.7\n")
    assert exc.value.key == "nu0"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        config_from_text(MINI_CFG + "polish = maximum\n")


def test_traction_indicator_expression():
    g = traction_from_string("[0, -6*(1.5-y)*(y-2.5)*I[1.5,2.5](y)]")
    pts = np.array([[10.0, 2.0], [10.0, 1.5], [10.0, 3.0], [10.0, 0.0]])
    vals = g(pts)
    np.testing.assert_allclose(vals[:, 0], 0.0)
    y = pts[:, 1]
    inside = (y >= 1.5) & (y <= 2.5)
    np.testing.assert_allclose(vals[inside, 1], -6 * (1.5 - y[inside]) * (y[inside] - 2.5))
    np.testing.assert_allclose(vals[~inside, 1], 0.0)


def test_traction_parse_error_names_key():
    with pytest.raises(ConfigError) as exc:
        traction_from_string("[0, 1) + (]")
    assert exc.value.key == "traction"


# -- exit codes --------------------------------------------------------------


def test_unknown_subcommand_is_usage_error(capsys):
    assert cli_main(["frobnicate"]) == 2
    capsys.readouterr()


def test_config_error_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("domain = rect 0 1 0 1\n")
    assert cli_main(["solve", str(bad)]) == 3
    err = capsys.readouterr().err
    assert "mesh" in err


def test_missing_file_is_plain_failure(tmp_path, capsys):
    assert cli_main(["optimize", str(tmp_path / "nope.cfg")]) == 1
    capsys.readouterr()


# -- subcommands -------------------------------------------------------------


def test_mesh_gen_fit_roundtrip(tmp_path, capsys):
    mesh_path = tmp_path / "m.txt"
    assert cli_main([
        "mesh-gen", "--domain", "rect 0 1 0 1", "--n", "40",
        "--seed", "7", "--lloyd", "20", "-o", str(mesh_path),
    ]) == 0
    mesh = load_mesh(mesh_path)
    assert mesh.n_elements == 40

    fitted_path = tmp_path / "f.txt"
    cut_path = tmp_path / "cut.csv"
    assert cli_main([
        "fit", "--mesh", str(mesh_path), "--phi", "plane 1 0 -0.5",
        "--cut-csv", str(cut_path), "-o", str(fitted_path),
    ]) == 0
    fitted = load_mesh(fitted_path)
    assert fitted.n_elements > mesh.n_elements
    rows = cut_path.read_text().strip().splitlines()
    assert rows[0] == "x0,y0,x1,y1,parent"
    seg = np.array([[float(v) for v in r.split(",")[:4]] for r in rows[1:]])
    # every cut segment lies on the line x = 0.5
    np.testing.assert_allclose(seg[:, [0, 2]], 0.5, atol=1e-9)
    capsys.readouterr()


def test_solve_zero_traction_prints_zero(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(MINI_CFG.replace("[0, -1*I[0.4,0.6](y)]", "[0, 0]"))
    monkeypatch.setenv("LSFITDG_OUTPUT_DIR", str(tmp_path / "out"))
    assert cli_main(["solve", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "compliance = 0.0" in out
    assert (tmp_path / "out" / "solution.vtk").exists()
    manifest = json.loads((tmp_path / "out" / "run-manifest.json").read_text())
    assert manifest["config"]["mesh"] == ["generate", 60, 11, 30]
    assert manifest["compliance"] == 0.0


def test_optimize_smoke_writes_artifacts(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(MINI_CFG + "dump_every = 2\n")
    monkeypatch.setenv("LSFITDG_OUTPUT_DIR", str(tmp_path / "out"))
    assert cli_main(["optimize", str(cfg)]) == 0
    out_dir = tmp_path / "out"
    history = (out_dir / "history.csv").read_text().strip().splitlines()
    assert history[0] == "k,compliance,volume_fraction,errComp,n_elements_el"
    assert len(history) == 4  # kmax = 3 iterations plus header
    assert (out_dir / "final_mesh.txt").exists()
    assert (out_dir / "final.vtk").exists()
    assert any(out_dir.glob("phi_*.vtk"))
    manifest = json.loads((out_dir / "run-manifest.json").read_text())
    assert manifest["iterations"] == 3
    assert 0.0 < manifest["volume_fraction"] <= 1.0
    capsys.readouterr()


def test_validate_lshape_smoke(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LSFITDG_OUTPUT_DIR", str(tmp_path / "out"))
    assert cli_main([
        "validate-lshape", "--n-coarse", "150", "--skip-fine",
        "--gammas", "1e-2,1e-6", "--lloyd", "20", "--seed", "3",
    ]) == 0
    rows = (tmp_path / "out" / "table_coarse.csv").read_text().strip().splitlines()
    assert rows[0] == "gamma,embedded,fitted"
    assert len(rows) == 3
    first = [float(v) for v in rows[1].split(",")]
    assert first[0] == 1e-2
    capsys.readouterr()


# -- VTK output --------------------------------------------------------------


def test_vtk_golden_bytes(tmp_path):
    """Byte-identical output for a fixed mesh and field."""
    from pathlib import Path

    mesh = make_grid_mesh(2, 2)
    f = DGField.zeros(mesh, ncomp=2)
    f.coeffs[:, 0, 0] = np.arange(mesh.n_elements)
    f.coeffs[:, 1, 1] = 0.5
    path = tmp_path / "g.vtk"
    write_vtk(path, mesh, point_fields={"u": f}, cell_fields={"chi": np.ones(4)})
    golden = Path(__file__).parent / "data" / "golden_grid2.vtk"
    assert path.read_bytes() == golden.read_bytes()


def test_vtk_header_structure(tmp_path):
    mesh = make_grid_mesh(2, 2)
    f = DGField.zeros(mesh, ncomp=1)
    path = tmp_path / "h.vtk"
    write_vtk(path, mesh, point_fields={"phi": f})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile Version")
    assert "ASCII" in lines[:5]
    assert any(l.startswith("DATASET UNSTRUCTURED_GRID") for l in lines[:6])
    assert any(l.startswith("POINT_DATA") for l in lines)
