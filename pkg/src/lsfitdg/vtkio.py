"""File output: legacy VTK, CSV tables, and run manifests.

VTK cells are the sub-triangulation of each polygon with points duplicated
per triangle, so element-boundary jumps of DG fields stay visible.  All
numbers print with repr-faithful %.17g formatting, which keeps output
byte-stable for fixed inputs.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from typing import Dict, Optional

import numpy as np
from scipy.spatial import cKDTree

from .dg_space import DGField
from .geometry import point_in_polygon
from .levelset_fit import CutResult
from .polymesh import PolyMesh


def _fmt(v: float) -> str:
    return "%.17g" % float(v)


def write_vtk(
    path,
    mesh: PolyMesh,
    point_fields: Optional[Dict[str, DGField]] = None,
    cell_fields: Optional[Dict[str, np.ndarray]] = None,
    title: str = "lsfitdg output",
) -> None:
    """Write the sub-triangulated mesh with DG point data and per-element
    cell data as legacy ASCII VTK."""
    tri_elem, _, tri_coords = mesh.triangulation
    T = len(tri_elem)
    pts = tri_coords.reshape(-1, 2)
    owner = np.repeat(tri_elem, 3)

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(pts)} double",
    ]
    lines.extend(f"{_fmt(x)} {_fmt(y)} 0" for x, y in pts)
    lines.append(f"CELLS {T} {4 * T}")
    idx = np.arange(3 * T).reshape(-1, 3)
    lines.extend(f"3 {a} {b} {c}" for a, b, c in idx)
    lines.append(f"CELL_TYPES {T}")
    lines.extend("5" for _ in range(T))

    if point_fields:
        lines.append(f"POINT_DATA {len(pts)}")
        for name, field in point_fields.items():
            vals = field.eval(owner, pts)
            if vals.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(_fmt(v) for v in vals)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(f"{_fmt(v[0])} {_fmt(v[1])} 0" for v in vals)

    if cell_fields:
        lines.append(f"CELL_DATA {T}")
        for name, arr in cell_fields.items():
            per_tri = np.asarray(arr, dtype=float)[tri_elem]
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in per_tri)

    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_history_csv(path, state) -> None:
    """Per-iteration optimization history."""
    with open(path, "w") as fh:
        fh.write("k,compliance,volume_fraction,errComp,n_elements_el\n")
        for k in range(len(state.compliance_history)):
            fh.write(
                "%d,%s,%s,%s,%d\n"
                % (
                    k,
                    _fmt(state.compliance_history[k]),
                    _fmt(state.volume_history[k] / state.vol0),
                    _fmt(state.errcomp_history[k]),
                    state.n_el_history[k],
                )
            )


def write_cut_csv(path, cut: CutResult) -> None:
    """Zero-isoline segments of a fitted mesh: one row per segment."""
    seg = cut.cut_polyline  # (m, 2, 2)
    with open(path, "w") as fh:
        fh.write("x0,y0,x1,y1,parent\n")
        for s, p in zip(seg, cut.cut_segment_parent):
            fh.write(
                f"{_fmt(s[0, 0])},{_fmt(s[0, 1])},{_fmt(s[1, 0])},{_fmt(s[1, 1])},{int(p)}\n"
            )


def locate_elements(mesh: PolyMesh, pts: np.ndarray, k_nearest: int = 12) -> np.ndarray:
    """Element containing each point, or -1 when outside the mesh.

    Nearest centroids are tried first; containment uses the mesh geometric
    tolerance so points on shared edges resolve to one of the neighbors.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    tree = cKDTree(mesh.centroids)
    k = min(k_nearest, mesh.n_elements)
    _, near = tree.query(pts, k=k)
    near = near.reshape(len(pts), -1)
    out = np.full(len(pts), -1, dtype=np.int64)
    for i, (p, cand) in enumerate(zip(pts, near)):
        for e in cand:
            if point_in_polygon(p, mesh.element_coords(int(e)), tol=mesh.eps_geo):
                out[i] = e
                break
    return out


def sample_cut_line(
    mesh: PolyMesh,
    u: DGField,
    svm: np.ndarray,
    p0,
    p1,
    n_samples: int,
) -> np.ndarray:
    """Sample displacement and von Mises stress along a segment.

    Returns rows (x, y, ux, uy, svm); samples outside the mesh get NaN data.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    t = np.linspace(0.0, 1.0, n_samples)
    pts = p0 + t[:, None] * (p1 - p0)
    elems = locate_elements(mesh, pts)
    rows = np.full((n_samples, 5), np.nan)
    rows[:, :2] = pts
    inside = elems >= 0
    if np.any(inside):
        vals = u.eval(elems[inside], pts[inside])
        rows[inside, 2:4] = vals.reshape(-1, 2)
        rows[inside, 4] = np.asarray(svm, dtype=float)[elems[inside]]
    return rows


def write_cut_line_csv(path, rows: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,ux,uy,svm\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def write_validation_csv(path, gammas, table: Dict[str, list]) -> None:
    """Compliance-error table: one row per gamma, one column per scenario."""
    names = list(table.keys())
    with open(path, "w") as fh:
        fh.write("gamma," + ",".join(names) + "\n")
        for i, g in enumerate(gammas):
            fh.write(_fmt(g) + "," + ",".join(_fmt(table[n][i]) for n in names) + "\n")


def write_manifest(path, config, **extra) -> None:
    """Everything needed to reproduce a run: full config plus environment."""
    import numpy
    import scipy

    payload = {
        "config": asdict(config) if config is not None else None,
        "versions": {"numpy": numpy.__version__, "scipy": scipy.__version__},
    }
    payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
