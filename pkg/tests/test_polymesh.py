import numpy as np
import pytest

from lsfitdg.errors import MeshFormatError, MeshValidationError
from lsfitdg.geometry import polygon_area, polygon_centroid
from lsfitdg.polymesh import (
    BoundaryPredicate,
    LShapeDomain,
    Marker,
    PolyMesh,
    RectDomain,
    classify_boundary,
    element_geometry,
    generate_voronoi_mesh,
    load_mesh,
    make_grid_mesh,
    save_mesh,
)

# L-shaped hexagon used in several oracles below; area and centroid derived by
# decomposing into [0,4]x[0,3] minus [0,1]x[1,3]:
#   area = 12 - 2 = 10, centroid = (12*(2,1.5) - 2*(0.5,2)) / 10 = (2.3, 1.4)
L_HEX = np.array([[0, 0], [4, 0], [4, 3], [1, 3], [1, 1], [0, 1]], dtype=float)


def test_polygon_area_oracle():
    assert polygon_area(L_HEX) == pytest.approx(10.0, abs=1e-14)
    assert polygon_area(L_HEX[::-1]) == pytest.approx(-10.0, abs=1e-14)


def test_polygon_centroid_oracle():
    np.testing.assert_allclose(polygon_centroid(L_HEX), [2.3, 1.4], atol=1e-14)
    # orientation must not matter
    np.testing.assert_allclose(polygon_centroid(L_HEX[::-1]), [2.3, 1.4], atol=1e-14)


def test_grid_mesh_counts(grid44):
    m = grid44
    assert m.n_elements == 16
    assert m.n_vertices == 25
    assert m.n_faces == 40
    assert int(m.interior_mask.sum()) == 24
    assert int(m.boundary_mask.sum()) == 16
    np.testing.assert_allclose(m.areas, 1.0 / 16.0, atol=1e-15)
    assert m.domain_area == pytest.approx(1.0, abs=1e-14)


def test_grid_face_geometry(grid44):
    m = grid44
    np.testing.assert_allclose(m.face_lengths, 0.25, atol=1e-15)
    # normals are unit and point out of the plus element
    np.testing.assert_allclose(np.hypot(m.face_normals[:, 0], m.face_normals[:, 1]), 1.0)
    for f in np.nonzero(m.boundary_mask)[0]:
        mid = m.face_midpoints[f]
        n = m.face_normals[f]
        outside = mid + 0.01 * n
        assert not (0 <= outside[0] <= 1 and 0 <= outside[1] <= 1)


def test_element_geometry_dict(grid44):
    g = element_geometry(grid44, 0)
    assert g["area"] == pytest.approx(1.0 / 16.0)
    np.testing.assert_allclose(g["centroid"], [0.125, 0.125], atol=1e-15)
    (bxmin, bymin), (bxmax, bymax) = g["bounding_box"]
    assert (bxmin, bymin, bxmax, bymax) == pytest.approx((0, 0, 0.25, 0.25))
    assert g["diameter"] == pytest.approx(0.25 * np.sqrt(2.0))


def test_voronoi_rect_partition(rect_voronoi_small):
    m = rect_voronoi_small
    assert m.n_elements == 150
    assert abs(m.domain_area - 1.0) < 1e-9
    assert m.areas.min() > 0
    PolyMesh(m.vertices, m.elements, validate="full")  # simple, CCW, conforming


def test_voronoi_boundary_faces_on_domain(rect_voronoi_small):
    m = rect_voronoi_small
    for f in np.nonzero(m.boundary_mask)[0]:
        x, y = m.face_midpoints[f]
        on = min(abs(x), abs(x - 1), abs(y), abs(y - 1))
        assert on < 1e-9


def test_voronoi_deterministic():
    dom = RectDomain(0, 1, 0, 1)
    a = generate_voronoi_mesh(dom, 40, lloyd_iters=15, rng_seed=5)
    b = generate_voronoi_mesh(dom, 40, lloyd_iters=15, rng_seed=5)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    assert all(np.array_equal(x, y) for x, y in zip(a.elements, b.elements))


def test_voronoi_lshape(lshape_voronoi_small):
    m = lshape_voronoi_small
    assert abs(m.domain_area - 64.0) < 1e-7
    # no cell centroid may sit inside the notch [4,10]x[4,10]
    c = m.centroids
    inside_notch = (c[:, 0] > 4) & (c[:, 1] > 4)
    assert not inside_notch.any()


def test_lshape_domain_contains():
    dom = LShapeDomain(0, 10, 0, 10, 4, 4)
    assert dom.area == pytest.approx(64.0)
    pts = np.array([[2, 2], [5, 2], [2, 5], [5, 5], [9, 9]])
    np.testing.assert_array_equal(dom.contains(pts), [True, True, True, False, False])


def test_classify_boundary(grid44):
    preds = [
        BoundaryPredicate("D", axis="x", value=0.0),
        BoundaryPredicate("N", axis="x", value=1.0, span=(0.25, 0.75)),
    ]
    m = classify_boundary(grid44, preds)
    counts = np.bincount(m.face_markers, minlength=4)
    assert counts[Marker.DIRICHLET] == 4
    assert counts[Marker.NEUMANN] == 2
    assert counts[Marker.FREE] == 10
    assert counts[Marker.INTERIOR] == 24


def test_classify_conflict_raises(grid44):
    preds = [
        BoundaryPredicate("D", axis="x", value=0.0),
        BoundaryPredicate("N", axis="x", value=0.0),
    ]
    with pytest.raises(MeshValidationError):
        classify_boundary(grid44, preds)


def test_save_load_roundtrip(tmp_path, rect_voronoi_small):
    preds = [BoundaryPredicate("D", axis="x", value=0.0)]
    m = classify_boundary(rect_voronoi_small, preds)
    path = tmp_path / "mesh.txt"
    save_mesh(m, path)
    m2 = load_mesh(path)
    np.testing.assert_array_equal(m.vertices, m2.vertices)  # %.17g is lossless
    assert all(np.array_equal(a, b) for a, b in zip(m.elements, m2.elements))
    np.testing.assert_array_equal(m.face_markers, m2.face_markers)


def test_load_reports_line_numbers(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("POLYMESH 2\n")
    with pytest.raises(MeshFormatError) as exc:
        load_mesh(p)
    assert exc.value.line == 1

    p.write_text("POLYMESH 1\nV 4\n0 0\n1 0\n1 1\nnot-a-number 1\n")
    with pytest.raises(MeshFormatError) as exc:
        load_mesh(p)
    assert exc.value.line == 6
    assert "line 6" in str(exc.value)


def test_load_rejects_bad_marker_char(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text(
        "POLYMESH 1\nV 4\n0 0\n1 0\n1 1\n0 1\nE 1\n4 0 1 2 3\nB 1\n0 1 Q\n"
    )
    with pytest.raises(MeshFormatError) as exc:
        load_mesh(p)
    assert exc.value.line == 10


def test_load_rejects_marker_on_interior_edge(tmp_path):
    # two triangles sharing edge (1,3); marking it must fail
    p = tmp_path / "bad.txt"
    p.write_text(
        "POLYMESH 1\nV 4\n0 0\n1 0\n1 1\n0 1\nE 2\n3 0 1 3\n3 1 2 3\nB 1\n1 3 D\n"
    )
    with pytest.raises(MeshValidationError):
        load_mesh(p)


def test_reject_nonconforming_meshes():
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1]], dtype=float)
    # same edge traversed twice in the same direction (second element is CW)
    with pytest.raises(MeshValidationError):
        PolyMesh(verts, [[0, 1, 2, 3], [1, 4, 5, 2][::-1]])
    # edge used by three elements
    with pytest.raises(MeshValidationError):
        PolyMesh(
            np.array([[0, 0], [1, 0], [0.5, 1], [0.5, -1], [1.5, 1]], dtype=float),
            [[0, 1, 2], [1, 0, 3], [0, 1, 4]],
        )


def test_reject_degenerate_elements():
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    with pytest.raises(MeshValidationError):
        PolyMesh(verts, [[0, 1, 1, 2]])  # repeated vertex
    with pytest.raises(MeshValidationError):
        PolyMesh(verts, [[0, 1]])  # too short
    with pytest.raises(MeshValidationError):
        PolyMesh(verts, [[0, 3, 2, 1]])  # negative area (CW)


def test_full_validation_catches_self_intersection():
    verts = np.array([[0, 0], [2, 0], [2, 1], [1, -1], [0, 1]], dtype=float)
    # bow-tie style loop: edges cross
    with pytest.raises(MeshValidationError):
        PolyMesh(verts, [[0, 1, 2, 3, 4]], validate="full")


def test_with_markers_shares_geometry(grid44):
    markers = np.where(grid44.boundary_mask, Marker.FREE, Marker.INTERIOR)
    m2 = grid44.with_markers(markers)
    assert m2.vertices is grid44.vertices
    np.testing.assert_array_equal(m2.areas, grid44.areas)
