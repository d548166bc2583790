"""Polygonal mesh data model, Voronoi/Lloyd generation, text I/O, boundary markers.

A mesh is a conforming tiling of a rectangle or an L-shaped (rectangle minus
corner rectangle) domain by simple, counter-clockwise polygons. Faces are the
shared edges; every interior face is traversed once in each direction by its
two adjacent elements. Hanging points created by mesh fitting are inserted
into all adjacent element loops, so conformity is preserved with collinear
loop vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .errors import MeshFormatError, MeshValidationError
from .geometry import (
    ear_clip,
    fan_triangles,
    is_simple_polygon,
    point_in_polygon,
    polygon_area,
    polygon_centroid,
    split_halfplane,
)


class Marker(IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2
    FREE = 3


MARKER_TO_CHAR = {Marker.DIRICHLET: "D", Marker.NEUMANN: "N", Marker.FREE: "F"}
CHAR_TO_MARKER = {v: k for k, v in MARKER_TO_CHAR.items()}


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class RectDomain:
    """Axis-aligned rectangle (x0, x1) x (y0, y1)."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("rectangle has non-positive extent")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def diameter(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def polygon(self) -> np.ndarray:
        return np.array(
            [[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]]
        )

    def contains(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        return (
            (p[:, 0] >= self.x0)
            & (p[:, 0] <= self.x1)
            & (p[:, 1] >= self.y0)
            & (p[:, 1] <= self.y1)
        )


@dataclass(frozen=True)
class LShapeDomain:
    """Rectangle (x0, x1) x (y0, y1) minus the open corner [nx, x1] x [ny, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: float
    ny: float

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("rectangle has non-positive extent")
        if not (self.x0 < self.nx < self.x1 and self.y0 < self.ny < self.y1):
            raise ValueError("notch corner must lie strictly inside the rectangle")

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0) - (self.x1 - self.nx) * (
            self.y1 - self.ny
        )

    @property
    def diameter(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def polygon(self) -> np.ndarray:
        return np.array(
            [
                [self.x0, self.y0],
                [self.x1, self.y0],
                [self.x1, self.ny],
                [self.nx, self.ny],
                [self.nx, self.y1],
                [self.x0, self.y1],
            ]
        )

    def contains(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        in_rect = (
            (p[:, 0] >= self.x0)
            & (p[:, 0] <= self.x1)
            & (p[:, 1] >= self.y0)
            & (p[:, 1] <= self.y1)
        )
        in_notch = (p[:, 0] > self.nx) & (p[:, 1] > self.ny)
        return in_rect & ~in_notch


# ---------------------------------------------------------------------------
# boundary predicates


@dataclass(frozen=True)
class BoundaryPredicate:
    """Axis-aligned line piece used to classify boundary faces by midpoint.

    marker is one of 'D', 'N', 'F'; the predicate matches faces whose midpoint
    lies on {axis == value}, optionally restricted to a span in the other
    coordinate.
    """

    marker: str
    axis: str
    value: float
    span: Optional[tuple] = None

    def __post_init__(self):
        if self.marker not in ("D", "N", "F"):
            raise ValueError(f"unknown marker {self.marker!r}")
        if self.axis not in ("x", "y"):
            raise ValueError(f"unknown axis {self.axis!r}")

    def matches(self, midpoints: np.ndarray, tol: float) -> np.ndarray:
        i = 0 if self.axis == "x" else 1
        m = np.abs(midpoints[:, i] - self.value) <= tol
        if self.span is not None:
            lo, hi = self.span
            other = midpoints[:, 1 - i]
            m &= (other >= lo - tol) & (other <= hi + tol)
        return m


# ---------------------------------------------------------------------------
# face view


@dataclass(frozen=True)
class Face:
    """Single-face view; heavyweight loops should use the mesh arrays instead."""

    vertex_ids: tuple
    endpoints: np.ndarray
    length: float
    normal: np.ndarray
    elem_plus: int
    elem_minus: Optional[int]
    marker: Marker


# ---------------------------------------------------------------------------
# mesh


class PolyMesh:
    """Conforming polygonal mesh. Treat instances as immutable after creation.

    Parameters
    ----------
    vertices : (n_vertices, 2) float array
    elements : sequence of integer index loops, counter-clockwise
    boundary_markers : optional dict mapping sorted vertex pairs to Marker
    validate : 'light' checks orientation/conformity, 'full' adds per-element
        simplicity tests (used on load and generation).
    """

    def __init__(self, vertices, elements, boundary_markers=None, validate="light"):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshValidationError("vertices must be an (n, 2) array")
        self.elements = [np.asarray(e, dtype=np.int64) for e in elements]
        if not self.elements:
            raise MeshValidationError("mesh has no elements")
        nv = len(self.vertices)
        for k, loop in enumerate(self.elements):
            if len(loop) < 3:
                raise MeshValidationError(f"element {k} has fewer than 3 vertices")
            if loop.min() < 0 or loop.max() >= nv:
                raise MeshValidationError(f"element {k} references a vertex out of range")
            if len(np.unique(loop)) != len(loop):
                raise MeshValidationError(f"element {k} repeats a vertex")
        self._build_faces(boundary_markers or {})
        self._validate(validate)

    # -- construction helpers

    def _build_faces(self, boundary_markers):
        edge_map = {}
        for e, loop in enumerate(self.elements):
            n = len(loop)
            for i in range(n):
                a, b = int(loop[i]), int(loop[(i + 1) % n])
                key = (a, b) if a < b else (b, a)
                edge_map.setdefault(key, []).append((e, a, b))
        fv, fp, fm, mk = [], [], [], []
        for key, users in edge_map.items():
            if len(users) > 2:
                raise MeshValidationError(
                    f"edge {key} is shared by {len(users)} elements (non-conforming mesh)"
                )
            if len(users) == 2:
                (e1, a1, b1), (e2, a2, b2) = users
                if a1 == a2:
                    raise MeshValidationError(
                        f"edge {key} traversed twice in the same direction (orientation clash)"
                    )
                if e1 == e2:
                    raise MeshValidationError(f"element {e1} uses edge {key} twice")
                plus, minus = (e1, e2) if e1 < e2 else (e2, e1)
                a, b = (a1, b1) if plus == e1 else (a2, b2)
                fv.append((a, b))
                fp.append(plus)
                fm.append(minus)
                mk.append(Marker.INTERIOR)
            else:
                (e1, a1, b1) = users[0]
                fv.append((a1, b1))
                fp.append(e1)
                fm.append(-1)
                mk.append(boundary_markers.get(key, Marker.FREE))
        self.face_vertices = np.array(fv, dtype=np.int64)
        self.face_elem_plus = np.array(fp, dtype=np.int64)
        self.face_elem_minus = np.array(fm, dtype=np.int64)
        self.face_markers = np.array(mk, dtype=np.int64)
        for key in boundary_markers:
            users = edge_map.get(tuple(sorted(key)))
            if users is None or len(users) != 1:
                raise MeshValidationError(
                    f"boundary marker given for edge {tuple(key)} which is not a boundary face"
                )

    def _validate(self, level):
        areas = self.areas
        if np.any(areas <= 0.0):
            k = int(np.argmin(areas))
            raise MeshValidationError(
                f"element {k} has non-positive area {areas[k]:g} (must be simple and CCW)"
            )
        if level == "full":
            for k, loop in enumerate(self.elements):
                if not is_simple_polygon(self.vertices[loop]):
                    raise MeshValidationError(f"element {k} is not a simple polygon")

    # -- derived arrays (cached)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @cached_property
    def loop_offsets(self) -> np.ndarray:
        lens = np.array([len(l) for l in self.elements], dtype=np.int64)
        return np.concatenate([[0], np.cumsum(lens)])

    @cached_property
    def loop_vertex(self) -> np.ndarray:
        return np.concatenate(self.elements)

    @cached_property
    def loop_elem(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_elements), np.diff(self.loop_offsets))

    @cached_property
    def areas(self) -> np.ndarray:
        x = self.vertices[:, 0][self.loop_vertex]
        y = self.vertices[:, 1][self.loop_vertex]
        nxt = self._loop_next_index
        cross = x * y[nxt] - x[nxt] * y
        return 0.5 * np.bincount(self.loop_elem, weights=cross, minlength=self.n_elements)

    @cached_property
    def _loop_next_index(self) -> np.ndarray:
        idx = np.arange(len(self.loop_vertex)) + 1
        ends = self.loop_offsets[1:] - 1
        idx[ends] = self.loop_offsets[:-1]
        return idx

    @cached_property
    def centroids(self) -> np.ndarray:
        x = self.vertices[:, 0][self.loop_vertex]
        y = self.vertices[:, 1][self.loop_vertex]
        nxt = self._loop_next_index
        w = x * y[nxt] - x[nxt] * y
        cx = np.bincount(self.loop_elem, weights=(x + x[nxt]) * w, minlength=self.n_elements)
        cy = np.bincount(self.loop_elem, weights=(y + y[nxt]) * w, minlength=self.n_elements)
        return np.column_stack([cx, cy]) / (6.0 * self.areas[:, None])

    @cached_property
    def bbox_min(self) -> np.ndarray:
        out = np.full((self.n_elements, 2), np.inf)
        np.minimum.at(out, self.loop_elem, self.vertices[self.loop_vertex])
        return out

    @cached_property
    def bbox_max(self) -> np.ndarray:
        out = np.full((self.n_elements, 2), -np.inf)
        np.maximum.at(out, self.loop_elem, self.vertices[self.loop_vertex])
        return out

    @cached_property
    def bbox_center(self) -> np.ndarray:
        return 0.5 * (self.bbox_min + self.bbox_max)

    @cached_property
    def bbox_half(self) -> np.ndarray:
        return 0.5 * (self.bbox_max - self.bbox_min)

    @cached_property
    def diameters(self) -> np.ndarray:
        # bbox diagonal bounds the true diameter within a factor sqrt(2); exact
        # enough for the tolerance scales derived from it
        return np.hypot(*(2.0 * self.bbox_half).T)

    @cached_property
    def domain_area(self) -> float:
        return float(np.sum(self.areas))

    @cached_property
    def eps_geo(self) -> float:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return 1e-10 * float(np.hypot(*(hi - lo)))

    @cached_property
    def face_endpoints(self) -> np.ndarray:
        return self.vertices[self.face_vertices]

    @cached_property
    def face_lengths(self) -> np.ndarray:
        d = self.face_endpoints[:, 1] - self.face_endpoints[:, 0]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals pointing out of the plus element."""
        d = self.face_endpoints[:, 1] - self.face_endpoints[:, 0]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / self.face_lengths[:, None]

    @cached_property
    def face_midpoints(self) -> np.ndarray:
        return self.face_endpoints.mean(axis=1)

    @cached_property
    def interior_mask(self) -> np.ndarray:
        return self.face_elem_minus >= 0

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return self.face_elem_minus < 0

    @cached_property
    def triangulation(self):
        """Sub-triangulation shared by quadrature and the continuous interpolant.

        Returns (tri_elem, tri_nodes, tri_coords): element id per triangle,
        corner vertex ids with -1 denoting the element centroid, and corner
        coordinates. Fan triangles from the centroid where the element is
        star-shaped w.r.t. it, ear clipping otherwise.
        """
        tri_elem, tri_nodes, tri_coords = [], [], []
        for e, loop in enumerate(self.elements):
            coords = self.vertices[loop]
            c = self.centroids[e]
            fan = fan_triangles(coords, center=c)
            if fan is not None:
                n = len(loop)
                for i in range(n):
                    j = (i + 1) % n
                    tri_elem.append(e)
                    tri_nodes.append((-1, int(loop[i]), int(loop[j])))
                    tri_coords.append((c, coords[i], coords[j]))
            else:
                for (i, j, k) in ear_clip(coords):
                    tri_elem.append(e)
                    tri_nodes.append((int(loop[i]), int(loop[j]), int(loop[k])))
                    tri_coords.append((coords[i], coords[j], coords[k]))
        return (
            np.array(tri_elem, dtype=np.int64),
            np.array(tri_nodes, dtype=np.int64),
            np.array(tri_coords, dtype=float),
        )

    # -- single-item views

    def face(self, f: int) -> Face:
        minus = int(self.face_elem_minus[f])
        return Face(
            vertex_ids=tuple(int(v) for v in self.face_vertices[f]),
            endpoints=self.face_endpoints[f],
            length=float(self.face_lengths[f]),
            normal=self.face_normals[f],
            elem_plus=int(self.face_elem_plus[f]),
            elem_minus=None if minus < 0 else minus,
            marker=Marker(int(self.face_markers[f])),
        )

    @property
    def interior_faces(self):
        return [self.face(f) for f in np.nonzero(self.interior_mask)[0]]

    @property
    def boundary_faces(self):
        return [self.face(f) for f in np.nonzero(self.boundary_mask)[0]]

    def element_coords(self, e: int) -> np.ndarray:
        return self.vertices[self.elements[e]]

    def with_markers(self, face_markers: np.ndarray) -> "PolyMesh":
        """Copy sharing geometry but with new face markers."""
        out = object.__new__(PolyMesh)
        out.__dict__.update(self.__dict__)
        # drop caches that a fresh instance would not have; geometry caches are safe
        out.face_markers = np.asarray(face_markers, dtype=np.int64).copy()
        return out


def element_geometry(mesh: PolyMesh, e: int) -> dict:
    """Area, centroid, bounding box and diameter of one element."""
    return {
        "area": float(mesh.areas[e]),
        "centroid": mesh.centroids[e].copy(),
        "bounding_box": (mesh.bbox_min[e].copy(), mesh.bbox_max[e].copy()),
        "diameter": float(mesh.diameters[e]),
    }


def classify_boundary(mesh: PolyMesh, predicates: Sequence[BoundaryPredicate]) -> PolyMesh:
    """Assign D/N/F markers to boundary faces by midpoint membership.

    Predicates must be mutually exclusive per face (conflicting matches raise);
    unmatched boundary faces become Free.
    """
    markers = mesh.face_markers.copy()
    bidx = np.nonzero(mesh.boundary_mask)[0]
    mids = mesh.face_midpoints[bidx]
    assigned = np.full(len(bidx), -1, dtype=np.int64)
    for pred in predicates:
        m = pred.matches(mids, mesh.eps_geo)
        code = int(CHAR_TO_MARKER[pred.marker])
        clash = m & (assigned >= 0) & (assigned != code)
        if np.any(clash):
            f = bidx[np.nonzero(clash)[0][0]]
            raise MeshValidationError(
                f"boundary predicates conflict at face midpoint {mesh.face_midpoints[f]}"
            )
        assigned[m] = code
    assigned[assigned < 0] = int(Marker.FREE)
    markers[bidx] = assigned
    return mesh.with_markers(markers)


# ---------------------------------------------------------------------------
# structured helper (tests and small experiments)


def make_grid_mesh(nx: int, ny: int, x0=0.0, x1=1.0, y0=0.0, y1=1.0) -> PolyMesh:
    """Structured quad mesh with nx x ny elements."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    elements = []
    for j in range(ny):
        for i in range(nx):
            v0 = j * (nx + 1) + i
            elements.append([v0, v0 + 1, v0 + nx + 2, v0 + nx + 1])
    return PolyMesh(vertices, elements, validate="full")


# ---------------------------------------------------------------------------
# Voronoi generation


def generate_voronoi_mesh(domain, n_elements: int, lloyd_iters: int = 100, rng_seed: int = 0) -> PolyMesh:
    """Centroidal-Voronoi polygonal mesh of a rectangle or L-shaped domain.

    Seeds are drawn uniformly in the domain from a seeded generator, relaxed by
    the given number of Lloyd iterations of the domain-clipped Voronoi diagram,
    and the final cells are welded into a conforming mesh. Deterministic for a
    fixed (domain, n_elements, lloyd_iters, rng_seed).
    """
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    if domain.area <= 0.0:
        raise ValueError("domain has non-positive area")
    rng = np.random.default_rng(rng_seed)
    seeds = _sample_seeds(domain, n_elements, rng)
    for _ in range(lloyd_iters):
        seeds = _lloyd_step(seeds, domain)
    cells = _clipped_cells(seeds, domain)
    weld_tol = 1e-6 * math.sqrt(domain.area / n_elements)
    vertices, elements = _weld_cells(cells, weld_tol)
    mesh = PolyMesh(vertices, elements, validate="full")
    if abs(mesh.domain_area - domain.area) > 1e-9 * domain.area:
        raise MeshValidationError(
            f"cells do not tile the domain: area {mesh.domain_area:.15g} vs {domain.area:.15g}"
        )
    if np.min(mesh.areas) < 1e-12 * domain.area:
        raise MeshValidationError("Lloyd relaxation produced a degenerate element")
    return mesh


def _sample_seeds(domain, n, rng):
    lo = np.array([getattr(domain, "x0"), getattr(domain, "y0")])
    hi = np.array([getattr(domain, "x1"), getattr(domain, "y1")])
    out = np.empty((n, 2))
    have = 0
    while have < n:
        batch = rng.uniform(lo, hi, size=(max(n - have, 64), 2))
        keep = batch[domain.contains(batch)]
        take = min(len(keep), n - have)
        out[have : have + take] = keep[:take]
        have += take
    return out


def _bisector_clip_cell(i, seeds, order, dists, domain_poly):
    """Clip the domain polygon by perpendicular bisectors of nearby seeds.

    order/dists list neighbor candidates of seed i sorted by distance; a
    bisector at distance d cannot cut a cell whose vertices stay within R of
    the seed once d >= 2R, which gives the early exit.
    """
    sx, sy = seeds[i]
    xs = [float(v) for v in domain_poly[:, 0]]
    ys = [float(v) for v in domain_poly[:, 1]]
    span = max(max(xs) - min(xs), max(ys) - min(ys))
    eps_line = 1e-12 * span
    r2 = 0.0
    for x, y in zip(xs, ys):
        d2 = (x - sx) ** 2 + (y - sy) ** 2
        if d2 > r2:
            r2 = d2
    for j, dj in zip(order, dists):
        if dj * dj >= 4.0 * r2:
            break
        ox, oy = seeds[j]
        a, b = ox - sx, oy - sy
        c = 0.5 * (ox * ox + oy * oy - sx * sx - sy * sy)
        nrm = math.hypot(a, b)
        pieces = split_halfplane(xs, ys, a, b, c, eps_line * nrm)
        if not pieces:
            return [], []
        if len(pieces) == 1:
            xs, ys = pieces[0]
        else:
            # a non-convex subject can fall apart; the cell is the seed's piece
            xs, ys = _seed_piece(pieces, sx, sy)
        r2 = 0.0
        for x, y in zip(xs, ys):
            d2 = (x - sx) ** 2 + (y - sy) ** 2
            if d2 > r2:
                r2 = d2
    return xs, ys


def _seed_piece(pieces, sx, sy):
    for px, py in pieces:
        if point_in_polygon((sx, sy), np.column_stack([px, py])):
            return px, py
    # seed on a piece boundary: take the largest piece
    best, best_area = pieces[0], -1.0
    for px, py in pieces:
        ar = abs(polygon_area(np.column_stack([px, py])))
        if ar > best_area:
            best, best_area = (px, py), ar
    return best


def _neighbor_table(seeds, k):
    n = len(seeds)
    k = min(k, n)
    tree = cKDTree(seeds)
    dists, idxs = tree.query(seeds, k=k)
    if k == 1:
        dists = dists[:, None]
        idxs = idxs[:, None]
    return tree, dists[:, 1:], idxs[:, 1:]


def _cell_polygon(i, seeds, dists, idxs, tree, domain_poly):
    order, dd = idxs[i], dists[i]
    xs, ys = _bisector_clip_cell(i, seeds, order, dd, domain_poly)
    if xs and len(order) and len(order) < len(seeds) - 1:
        # verify the early exit actually triggered; re-query wider if not
        sx, sy = seeds[i]
        r2 = max((x - sx) ** 2 + (y - sy) ** 2 for x, y in zip(xs, ys))
        if dd[-1] * dd[-1] < 4.0 * r2:
            k = min(len(seeds), 4 * (len(order) + 1))
            d2, i2 = tree.query(seeds[i], k=k)
            xs, ys = _bisector_clip_cell(i, seeds, i2[1:], d2[1:], domain_poly)
    return xs, ys


def _clipped_cells(seeds, domain):
    domain_poly = domain.polygon()
    tree, dists, idxs = _neighbor_table(seeds, k=25)
    cells = []
    for i in range(len(seeds)):
        xs, ys = _cell_polygon(i, seeds, dists, idxs, tree, domain_poly)
        if len(xs) < 3:
            raise MeshValidationError(f"empty Voronoi cell for seed {i}")
        cells.append(np.column_stack([xs, ys]))
    return cells


def _lloyd_step(seeds, domain):
    n = len(seeds)
    domain_poly = domain.polygon()
    new_seeds = seeds.copy()
    slow = []
    if n >= 8:
        vor = Voronoi(seeds)
        inside = domain.contains(vor.vertices)
        notch = isinstance(domain, LShapeDomain)
        for i in range(n):
            region = vor.regions[vor.point_region[i]]
            ok = len(region) >= 3 and -1 not in region and bool(np.all(inside[region]))
            if ok and notch:
                pts = vor.vertices[region]
                ok = not (
                    pts[:, 0].max() > domain.nx and pts[:, 1].max() > domain.ny
                )
            if ok:
                new_seeds[i] = polygon_centroid(vor.vertices[region])
            else:
                slow.append(i)
    else:
        slow = list(range(n))
    if slow:
        tree, dists, idxs = _neighbor_table(seeds, k=25)
        for i in slow:
            xs, ys = _cell_polygon(i, seeds, dists, idxs, tree, domain_poly)
            if len(xs) >= 3:
                new_seeds[i] = polygon_centroid(np.column_stack([xs, ys]))
    # centroids can leave a non-convex domain near the reentrant corner;
    # bisect back toward the previous (interior) seed
    bad = ~domain.contains(new_seeds)
    guard = 0
    while np.any(bad):
        new_seeds[bad] = 0.5 * (new_seeds[bad] + seeds[bad])
        bad = ~domain.contains(new_seeds)
        guard += 1
        if guard > 80:
            new_seeds[bad] = seeds[bad]
            break
    return new_seeds


def _weld_cells(cells, tol):
    """Merge near-coincident cell vertices and emit index loops."""
    grid = {}
    coords = []

    def lookup(x, y):
        gx, gy = math.floor(x / tol), math.floor(y / tol)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for idx in grid.get((gx + dx, gy + dy), ()):
                    px, py = coords[idx]
                    if (px - x) ** 2 + (py - y) ** 2 <= tol * tol:
                        return idx
        idx = len(coords)
        coords.append((x, y))
        grid.setdefault((gx, gy), []).append(idx)
        return idx

    elements = []
    for cell in cells:
        loop = []
        for x, y in cell:
            idx = lookup(float(x), float(y))
            if not loop or idx != loop[-1]:
                loop.append(idx)
        while len(loop) > 1 and loop[0] == loop[-1]:
            loop.pop()
        # drop immediate backtracks (zero-width spikes from degenerate clips)
        changed = True
        while changed and len(loop) >= 3:
            changed = False
            for i in range(len(loop)):
                if loop[i - 2] == loop[i]:
                    del loop[i - 1 if i - 1 >= 0 else len(loop) - 1]
                    del loop[i - 1 if i - 1 < len(loop) else 0]
                    changed = True
                    break
        if len(loop) < 3:
            raise MeshValidationError("degenerate Voronoi cell after welding")
        elements.append(loop)
    return np.array(coords, dtype=float), elements


# ---------------------------------------------------------------------------
# text format


def save_mesh(mesh: PolyMesh, path) -> None:
    """Write the mesh in the plain-text format (17 significant digits)."""
    lines = ["POLYMESH 1"]
    lines.append(f"V {mesh.n_vertices}")
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g}")
    lines.append(f"E {mesh.n_elements}")
    for loop in mesh.elements:
        lines.append(" ".join([str(len(loop))] + [str(int(v)) for v in loop]))
    bidx = np.nonzero(mesh.boundary_mask)[0]
    lines.append(f"B {len(bidx)}")
    for f in bidx:
        a, b = mesh.face_vertices[f]
        ch = MARKER_TO_CHAR[Marker(int(mesh.face_markers[f]))]
        lines.append(f"{int(a)} {int(b)} {ch}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> PolyMesh:
    """Parse a mesh file; raises MeshFormatError naming the offending line."""
    with open(path) as fh:
        raw = fh.read().splitlines()

    def tokens(lineno):
        if lineno > len(raw):
            raise MeshFormatError("unexpected end of file", line=len(raw))
        return raw[lineno - 1].split()

    if not raw or raw[0].strip() != "POLYMESH 1":
        raise MeshFormatError("expected header 'POLYMESH 1'", line=1)
    ln = 2

    def read_count(tag):
        nonlocal ln
        t = tokens(ln)
        if len(t) != 2 or t[0] != tag:
            raise MeshFormatError(f"expected '{tag} <count>'", line=ln)
        try:
            cnt = int(t[1])
        except ValueError:
            raise MeshFormatError(f"bad count {t[1]!r}", line=ln) from None
        if cnt < 0:
            raise MeshFormatError("negative count", line=ln)
        ln += 1
        return cnt

    nv = read_count("V")
    vertices = np.empty((nv, 2))
    for i in range(nv):
        t = tokens(ln)
        if len(t) != 2:
            raise MeshFormatError("expected 'x y'", line=ln)
        try:
            vertices[i] = (float(t[0]), float(t[1]))
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {t!r}", line=ln) from None
        ln += 1
    ne = read_count("E")
    elements = []
    for _ in range(ne):
        t = tokens(ln)
        try:
            vals = [int(v) for v in t]
        except ValueError:
            raise MeshFormatError(f"bad element line {raw[ln-1]!r}", line=ln) from None
        if len(vals) < 1 or len(vals) != vals[0] + 1:
            raise MeshFormatError("element line length does not match its count", line=ln)
        idx = vals[1:]
        if any(v < 0 or v >= nv for v in idx):
            raise MeshFormatError("vertex index out of range", line=ln)
        elements.append(idx)
        ln += 1
    nb = read_count("B")
    markers = {}
    for _ in range(nb):
        t = tokens(ln)
        if len(t) != 3 or t[2] not in CHAR_TO_MARKER:
            raise MeshFormatError("expected 'iv1 iv2 <D|N|F>'", line=ln)
        try:
            a, b = int(t[0]), int(t[1])
        except ValueError:
            raise MeshFormatError("bad vertex index", line=ln) from None
        if not (0 <= a < nv and 0 <= b < nv):
            raise MeshFormatError("vertex index out of range", line=ln)
        markers[(a, b) if a < b else (b, a)] = CHAR_TO_MARKER[t[2]]
        ln += 1
    return PolyMesh(vertices, elements, boundary_markers=markers, validate="full")
