"""Fitting a polygonal mesh to the zero isoline of a discrete level-set field.

The DG level-set field is first turned into a globally continuous interpolant:
vertex values are the arithmetic mean of the element traces meeting at the
vertex, the element center keeps the element's own trace, and the interpolant
is linear on each sub-triangle of the element triangulation. Elements crossed
by the zero isoline of that interpolant are split along it; the resulting
children tile the parent exactly and every new mesh is conforming (cut points
on shared edges are inserted into both neighbors).

The isoline inside one element is a polyline (one segment per crossed
sub-triangle), so an element can produce more than two children.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .dg_space import DGField
from .errors import MeshValidationError
from .geometry import ear_clip, fan_triangles, point_in_polygon, polygon_area, polygon_centroid
from .polymesh import CHAR_TO_MARKER, Marker, PolyMesh

_SNAP_REL = 1e-8  # endpoint snap tolerance, relative to the carrying edge


# ---------------------------------------------------------------------------
# continuous interpolant


@dataclass
class ContinuousLevelSet:
    """Continuous piecewise-linear interpolant of a DG level-set field."""

    mesh: PolyMesh
    vertex_values: np.ndarray
    centroid_values: np.ndarray

    @cached_property
    def eps_val(self) -> float:
        m = max(
            float(np.max(np.abs(self.vertex_values), initial=0.0)),
            float(np.max(np.abs(self.centroid_values), initial=0.0)),
        )
        return 1e-12 * m if m > 0.0 else 1e-300

    @cached_property
    def _tri_offsets(self) -> np.ndarray:
        tri_elem = self.mesh.triangulation[0]
        return np.searchsorted(tri_elem, np.arange(self.mesh.n_elements + 1))

    def _node_value(self, node_id: int, elem: int) -> float:
        if node_id < 0:
            return float(self.centroid_values[elem])
        return float(self.vertex_values[node_id])

    def element_tris(self, e: int):
        """(tri_nodes, tri_coords, tri_values) of one element."""
        lo, hi = self._tri_offsets[e], self._tri_offsets[e + 1]
        _, tri_nodes, tri_coords = self.mesh.triangulation
        nodes = tri_nodes[lo:hi]
        vals = np.where(
            nodes >= 0,
            self.vertex_values[np.maximum(nodes, 0)],
            self.centroid_values[e],
        )
        return nodes, tri_coords[lo:hi], vals

    def eval_in_element(self, e: int, pts) -> np.ndarray:
        """Evaluate inside element e (nearest sub-triangle in barycentric terms)."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        _, coords, vals = self.element_tris(e)
        a, b, c = coords[:, 0], coords[:, 1], coords[:, 2]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
            c[:, 0] - a[:, 0]
        )
        d = p[:, None, :] - a[None, :, :]
        l2 = (d[..., 0] * (c[:, 1] - a[:, 1]) - d[..., 1] * (c[:, 0] - a[:, 0])) / det
        l3 = (d[..., 1] * (b[:, 0] - a[:, 0]) - d[..., 0] * (b[:, 1] - a[:, 1])) / det
        l1 = 1.0 - l2 - l3
        bary = np.stack([l1, l2, l3], axis=-1)  # (m, T, 3)
        best = np.argmax(bary.min(axis=-1), axis=1)
        rows = np.arange(len(p))
        return np.einsum("mk,mk->m", bary[rows, best], vals[best])

    def eval(self, elem_ids, pts) -> np.ndarray:
        e = np.asarray(elem_ids, dtype=np.int64)
        p = np.asarray(pts, dtype=float).reshape(-1, 2)
        out = np.empty(len(p))
        for u in np.unique(e):
            m = e == u
            out[m] = self.eval_in_element(int(u), p[m])
        return out


def project_continuous(phi: DGField) -> ContinuousLevelSet:
    """Vertex-averaged continuous interpolant of a scalar DG field."""
    if phi.ncomp != 1:
        raise ValueError("level-set fields are scalar")
    mesh = phi.mesh
    traces = phi.eval(mesh.loop_elem, mesh.vertices[mesh.loop_vertex])
    sums = np.bincount(mesh.loop_vertex, weights=traces, minlength=mesh.n_vertices)
    counts = np.bincount(mesh.loop_vertex, minlength=mesh.n_vertices)
    if np.any(counts == 0):
        raise MeshValidationError("mesh has vertices not referenced by any element")
    vertex_values = sums / counts
    centroid_values = phi.eval(np.arange(mesh.n_elements), mesh.centroids)
    return ContinuousLevelSet(mesh, vertex_values, centroid_values)


def transfer_to_mesh(cls: ContinuousLevelSet, cut: "CutResult") -> ContinuousLevelSet:
    """Carry the interpolant over to a fitted mesh by pointwise evaluation.

    Unlike project_continuous this does not re-average DG traces, so the zero
    isoline is preserved exactly (cut vertices keep value ~0) and refitting the
    fitted mesh inserts nothing.
    """
    fm = cut.fitted_mesh
    parents = cut.parent_of[fm.loop_elem]
    traces = cls.eval(parents, fm.vertices[fm.loop_vertex])
    sums = np.bincount(fm.loop_vertex, weights=traces, minlength=fm.n_vertices)
    counts = np.bincount(fm.loop_vertex, minlength=fm.n_vertices)
    vertex_values = sums / counts
    centroid_values = cls.eval(cut.parent_of, fm.centroids)
    return ContinuousLevelSet(fm, vertex_values, centroid_values)


# ---------------------------------------------------------------------------
# marching on the sub-triangulation

# node keys:
#   ('v', vid)        mesh vertex
#   ('c', e)          element center node
#   ('e', a, b)       crossing on mesh edge (a < b)
#   ('f', e, vid)     crossing on fan edge center->vid
#   ('g', e, a, b)    crossing on an ear-clip chord (a < b)
#   ('x', k)          auxiliary chord intersection (created during splitting)


def _edge_crossings(cls: ContinuousLevelSet, forced=None):
    """Crossing node per mesh edge: key -> (node, coord or None)."""
    mesh = cls.mesh
    forced = forced or {}
    vv = cls.vertex_values
    eps = cls.eps_val
    fa = mesh.face_vertices[:, 0]
    fb = mesh.face_vertices[:, 1]
    lo = np.minimum(fa, fb)
    hi = np.maximum(fa, fb)
    va, vb = vv[lo], vv[hi]
    za = np.abs(va) <= eps
    zb = np.abs(vb) <= eps
    crossing = (~za) & (~zb) & ((va > 0) != (vb > 0))
    out = {}
    idx = np.nonzero(crossing)[0]
    t = va[idx] / (va[idx] - vb[idx])
    for f, tf in zip(idx, t):
        a, b = int(lo[f]), int(hi[f])
        key = (a, b)
        if key in forced:
            out[key] = (forced[key], None)
        elif tf < _SNAP_REL:
            out[key] = (("v", a), None)
        elif tf > 1.0 - _SNAP_REL:
            out[key] = (("v", b), None)
        else:
            pa, pb = mesh.vertices[a], mesh.vertices[b]
            out[key] = (("e", a, b), pa + tf * (pb - pa))
    return out


def _march_element(cls, e, edge_cross, forced_local):
    """Zero-isoline segments of the interpolant on one element.

    Returns (segments, nodes): segments as a set of canonical node-key pairs,
    nodes mapping keys to coordinates. Segments lying along element boundary
    edges are excluded (they insert no new face).
    """
    mesh = cls.mesh
    loop = [int(v) for v in mesh.elements[e]]
    nloop = len(loop)
    consecutive = set()
    for i in range(nloop):
        a, b = loop[i], loop[(i + 1) % nloop]
        consecutive.add((a, b) if a < b else (b, a))
    eps = cls.eps_val
    tri_nodes, tri_coords, tri_vals = cls.element_tris(e)
    nodes = {}
    for vid in loop:
        nodes[("v", vid)] = mesh.vertices[vid]
    nodes[("c", e)] = mesh.centroids[e]

    def node_key(nid):
        return ("c", e) if nid < 0 else ("v", int(nid))

    def crossing(n0, v0, p0, n1, v1, p1):
        """Crossing node on the sub-triangle edge (n0, n1); v0, v1 straddle 0."""
        k0, k1 = node_key(n0), node_key(n1)
        if k0[0] == "v" and k1[0] == "v":
            a, b = (k0[1], k1[1]) if k0[1] < k1[1] else (k1[1], k0[1])
            if (a, b) in consecutive:
                hit = edge_cross.get((a, b))
                if hit is None:
                    return None
                node, coord = hit
                if coord is not None:
                    nodes[node] = coord
                return node
            key = ("g", e, a, b)
        elif k0[0] == "c" or k1[0] == "c":
            vk = k1 if k0[0] == "c" else k0
            key = ("f", e, vk[1])
        else:  # unreachable; sub-triangle corners are vertices or the center
            raise AssertionError
        if key in forced_local:
            node = forced_local[key]
            if node not in nodes:
                raise AssertionError("forced snap to unknown node")
            return node
        t = v0 / (v0 - v1)
        if t < _SNAP_REL:
            return k0
        if t > 1.0 - _SNAP_REL:
            return k1
        nodes[key] = p0 + t * (p1 - p0)
        return key

    segments = set()
    zero_sides = {}  # zero-valued sub-triangle edge -> signs of the third corners

    def add_segment(na, nb):
        if na is None or nb is None or na == nb:
            return
        if na[0] == "v" and nb[0] == "v":
            a, b = (na[1], nb[1]) if na[1] < nb[1] else (nb[1], na[1])
            if (a, b) in consecutive:
                return  # runs along an existing edge; nothing to insert
        segments.add((na, nb) if na <= nb else (nb, na))

    for tn, tc, tv in zip(tri_nodes, tri_coords, tri_vals):
        s = np.where(np.abs(tv) <= eps, 0, np.sign(tv)).astype(int)
        nz = [i for i in range(3) if s[i] == 0]
        if len(nz) == 3:
            continue  # flat zero patch; neighbors resolve the interface
        if len(nz) == 2:
            # a zero line is an interface only if the sign flips across it;
            # both triangles sharing the line report their third corner here
            ka, kb = node_key(tn[nz[0]]), node_key(tn[nz[1]])
            if ka != kb:
                pair = (ka, kb) if ka <= kb else (kb, ka)
                zero_sides.setdefault(pair, set()).add(int(s[3 - nz[0] - nz[1]]))
            continue
        if len(nz) == 1:
            i = nz[0]
            j, k = (i + 1) % 3, (i + 2) % 3
            if s[j] == s[k]:
                continue  # touches the corner only
            cr = crossing(tn[j], tv[j], tc[j], tn[k], tv[k], tc[k])
            add_segment(node_key(tn[i]), cr)
            continue
        if s[0] == s[1] == s[2]:
            continue
        # one corner differs from the other two
        odd = 0 if s[1] == s[2] else (1 if s[0] == s[2] else 2)
        j, k = (odd + 1) % 3, (odd + 2) % 3
        c1 = crossing(tn[odd], tv[odd], tc[odd], tn[j], tv[j], tc[j])
        c2 = crossing(tn[odd], tv[odd], tc[odd], tn[k], tv[k], tc[k])
        add_segment(c1, c2)
    for (ka, kb), sides in zero_sides.items():
        if 1 in sides and -1 in sides:
            add_segment(ka, kb)
    return segments, nodes


# ---------------------------------------------------------------------------
# planar face extraction


def _extract_faces(nodes, edges):
    """Bounded faces of the planar subdivision as CCW node cycles.

    Returns (positive_cycles, negative_cycles); each cycle is a node-key list.
    """
    adj = {}
    for (a, b) in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    order = {}
    for u, nbrs in adj.items():
        x0, y0 = nodes[u]
        ang = sorted(
            range(len(nbrs)),
            key=lambda i: math.atan2(nodes[nbrs[i]][1] - y0, nodes[nbrs[i]][0] - x0),
        )
        ordered = [nbrs[i] for i in ang]
        order[u] = (ordered, {v: i for i, v in enumerate(ordered)})
    visited = set()
    pos, neg = [], []
    for a in adj:
        for b in adj[a]:
            if (a, b) in visited:
                continue
            cycle = []
            u, v = a, b
            while (u, v) not in visited:
                visited.add((u, v))
                cycle.append(u)
                ordered, index = order[v]
                i = index[u]
                w = ordered[(i - 1) % len(ordered)]
                u, v = v, w
            coords = np.array([nodes[k] for k in cycle])
            area = polygon_area(coords)
            (pos if area > 0 else neg).append((cycle, area))
    return pos, neg


def _add_aux_chords(nodes, edges, parent_coords, floating, elem, counter, eps_len):
    """Connect floating isoline loops to the rest with straight horizontal chords."""
    for cycle, _ in floating:
        ys = [nodes[k][1] for k in cycle]
        ylo, yhi = min(ys), max(ys)
        span = yhi - ylo
        all_y = [nodes[k][1] for k in nodes]
        Y = None
        for frac in (0.5, 0.471, 0.533, 0.417, 0.581):
            cand = ylo + frac * span
            if all(abs(cand - y) > 1e-9 * max(span, eps_len) for y in all_y):
                Y = cand
                break
        if Y is None:
            Y = ylo + 0.5 * span
        hits = []
        for pair in list(edges):
            a, b = tuple(pair)
            pa, pb = nodes[a], nodes[b]
            if (pa[1] - Y) * (pb[1] - Y) < 0.0:
                t = (Y - pa[1]) / (pb[1] - pa[1])
                x = pa[0] + t * (pb[0] - pa[0])
                nk = ("x", elem, counter[0])
                counter[0] += 1
                nodes[nk] = np.array([x, Y])
                kind = edges.pop(pair)
                edges[frozenset((a, nk))] = kind
                edges[frozenset((nk, b))] = kind
                hits.append((x, nk))
        hits.sort(key=lambda h: h[0])
        for (x1, n1), (x2, n2) in zip(hits[:-1], hits[1:]):
            mid = (0.5 * (x1 + x2), Y)
            if point_in_polygon(mid, parent_coords):
                edges[frozenset((n1, n2))] = "aux"


def _cut_one(cls, e, edge_cross, forced_local):
    """Split one element along its isoline.

    Returns None when there is nothing to cut, a list of snap requests when a
    sliver child was produced, or (children, nodes, cut_pairs) on success.
    """
    segments, nodes = _march_element(cls, e, edge_cross, forced_local)
    if not segments:
        return None
    mesh = cls.mesh
    loop = [int(v) for v in mesh.elements[e]]
    parent_coords = mesh.vertices[loop]
    parent_area = float(mesh.areas[e])

    # boundary cycle with edge crossings inserted
    boundary = []
    for i in range(len(loop)):
        a, b = loop[i], loop[(i + 1) % len(loop)]
        boundary.append(("v", a))
        hit = edge_cross.get((a, b) if a < b else (b, a))
        if hit is not None and hit[0][0] == "e":
            boundary.append(hit[0])
            if hit[1] is not None:
                nodes[hit[0]] = hit[1]
    edges = {}
    for i in range(len(boundary)):
        pair = frozenset((boundary[i], boundary[(i + 1) % len(boundary)]))
        edges[pair] = "bnd"
    n_cut = 0
    for (na, nb) in segments:
        pair = frozenset((na, nb))
        if pair in edges:
            continue  # coincides with a boundary sub-edge
        edges[pair] = "cut"
        n_cut += 1
    if n_cut == 0:
        return None

    # prune dangling cut chains (isoline touching but not separating)
    while True:
        deg = {}
        for pair in edges:
            for k in pair:
                deg[k] = deg.get(k, 0) + 1
        drop = [p for p, kind in edges.items() if kind == "cut" and any(deg[k] == 1 for k in p)]
        if not drop:
            break
        for p in drop:
            del edges[p]
    if not any(kind == "cut" for kind in edges.values()):
        return None

    counter = [0]
    for _ in range(4):
        pos, neg = _extract_faces(nodes, edges)
        area_sum = sum(a for _, a in pos)
        if abs(area_sum - parent_area) <= 1e-9 * parent_area and len(neg) == 1:
            break
        floating = sorted(neg, key=lambda c: c[1])[1:]  # keep the outermost
        if not floating:
            raise MeshValidationError(
                f"inconsistent subdivision of element {e}: areas {area_sum} vs {parent_area}"
            )
        _add_aux_chords(nodes, edges, parent_coords, floating, e, counter, math.sqrt(parent_area))
    else:
        raise MeshValidationError(f"could not resolve isoline islands in element {e}")

    # sliver guard
    requests = []
    for cycle, area in pos:
        if area < 1e-12 * parent_area:
            for k in cycle:
                if k[0] == "e":
                    a, b = k[1], k[2]
                    pa, pb = mesh.vertices[a], mesh.vertices[b]
                    p = nodes[k]
                    tgt = a if np.hypot(*(p - pa)) <= np.hypot(*(p - pb)) else b
                    requests.append(("global", (a, b), ("v", tgt)))
                elif k[0] == "f":
                    vid = k[2]
                    p = nodes[k]
                    dc = np.hypot(*(p - mesh.centroids[e]))
                    dv = np.hypot(*(p - mesh.vertices[vid]))
                    tgt = ("c", e) if dc <= dv else ("v", vid)
                    requests.append(("local", k, tgt))
                elif k[0] == "g":
                    a, b = k[2], k[3]
                    p = nodes[k]
                    tgt = a if np.hypot(*(p - mesh.vertices[a])) <= np.hypot(*(p - mesh.vertices[b])) else b
                    requests.append(("local", k, ("v", tgt)))
    if requests:
        return requests

    children = [cycle for cycle, _ in pos]
    if len(children) < 2:
        return None
    cut_pairs = [tuple(pair) for pair, kind in edges.items() if kind == "cut"]
    return children, nodes, cut_pairs


# ---------------------------------------------------------------------------
# whole-mesh fitting


@dataclass
class CutResult:
    """Fitted mesh plus the bookkeeping linking it back to its parent mesh."""

    fitted_mesh: PolyMesh
    parent_of: np.ndarray
    child_sign: np.ndarray
    cut_segment_vertices: np.ndarray  # (m, 2) vertex ids in the fitted mesh
    cut_segment_parent: np.ndarray

    @property
    def cut_polyline(self) -> np.ndarray:
        """Cut segments as coordinates, shape (m, 2, 2)."""
        if len(self.cut_segment_vertices) == 0:
            return np.zeros((0, 2, 2))
        return self.fitted_mesh.vertices[self.cut_segment_vertices]

    @property
    def n_cut_parents(self) -> int:
        # parents that produced more than one child
        counts = np.bincount(self.parent_of)
        return int(np.sum(counts > 1))


def _region_sign(cls, parent, coords) -> int:
    # the area centroid of a nonconvex child can lie outside it, so sample
    # points that are interior by construction: sub-triangle midpoints
    c = polygon_centroid(coords)
    tris = fan_triangles(coords, center=c)
    if tris is None:
        tris = np.array([[coords[i], coords[j], coords[k]] for i, j, k in ear_clip(coords)])
    vals = cls.eval_in_element(parent, tris.mean(axis=1))
    i = int(np.argmax(np.abs(vals)))
    return 1 if vals[i] >= 0 else -1


def element_isoline(cls: ContinuousLevelSet, e: int):
    """Zero-isoline segments of the interpolant inside element e.

    Returns a list of (2, 2) coordinate arrays; empty when the interpolant has
    one strict sign on the element. Segments running along existing element
    edges are omitted (they would insert nothing).
    """
    edge_cross = _edge_crossings(cls)
    segments, nodes = _march_element(cls, e, edge_cross, {})
    return [np.array([nodes[a], nodes[b]]) for a, b in sorted(segments)]


def cut_element(cls: ContinuousLevelSet, e: int):
    """Split a single element along its isoline.

    Returns (children, signs): child polygons (coordinate arrays, CCW) and the
    material sign of each. An uncrossed element returns itself with its sign.
    """
    forced_global = {}
    forced_local = {}
    result = None
    for _ in range(4):
        edge_cross = _edge_crossings(cls, forced=forced_global)
        result = _cut_one(cls, e, edge_cross, forced_local)
        if result is None or not (isinstance(result[0], tuple) and result[0][0] in ("global", "local")):
            break
        for scope, key, tgt in result:
            if scope == "global":
                forced_global[key] = tgt
            else:
                forced_local[key] = tgt
        result = None
    if result is None:
        coords = cls.mesh.vertices[cls.mesh.elements[e]]
        return [coords], [_region_sign(cls, e, coords)]
    children, nodes, _ = result
    polys = [np.array([nodes[k] for k in cyc]) for cyc in children]
    signs = [_region_sign(cls, e, p) for p in polys]
    return polys, signs


def fit_mesh(mesh: PolyMesh, cls: ContinuousLevelSet, max_rounds: int = 4) -> CutResult:
    """Cut every element crossed by the zero isoline and rebuild a conforming mesh."""
    if cls.mesh is not mesh:
        raise ValueError("the interpolant was built on a different mesh")
    eps = cls.eps_val
    vv, cv = cls.vertex_values, cls.centroid_values

    # candidate elements: mixed or zero values among vertex traces + center
    vmin = np.full(mesh.n_elements, np.inf)
    vmax = np.full(mesh.n_elements, -np.inf)
    np.minimum.at(vmin, mesh.loop_elem, vv[mesh.loop_vertex])
    np.maximum.at(vmax, mesh.loop_elem, vv[mesh.loop_vertex])
    vmin = np.minimum(vmin, cv)
    vmax = np.maximum(vmax, cv)
    candidates = np.nonzero(~((vmin > eps) | (vmax < -eps)))[0]

    forced_global = {}
    forced_local = {}
    results = {}
    for _ in range(max_rounds + 1):
        edge_cross = _edge_crossings(cls, forced=forced_global)
        results = {}
        requests = []
        for e in candidates:
            r = _cut_one(cls, int(e), edge_cross, forced_local)
            if r is None:
                continue
            if isinstance(r[0], tuple) and r[0][0] in ("global", "local"):
                requests.extend(r)
            else:
                results[int(e)] = r
        if not requests:
            break
        for scope, key, tgt in requests:
            if scope == "global":
                forced_global[key] = tgt
            else:
                forced_local[key] = tgt
    else:
        # stubborn slivers: give their elements up as uncut
        edge_cross = _edge_crossings(cls, forced=forced_global)
        results = {}
        for e in candidates:
            r = _cut_one(cls, int(e), edge_cross, forced_local)
            if r is not None and not (isinstance(r[0], tuple) and r[0][0] in ("global", "local")):
                results[int(e)] = r

    # global node numbering
    n_orig = mesh.n_vertices
    coords_new = []
    node_ids = {}

    def node_id(key, coord):
        if key[0] == "v":
            return key[1]
        if key in node_ids:
            return node_ids[key]
        i = n_orig + len(coords_new)
        coords_new.append(np.asarray(coord, dtype=float))
        node_ids[key] = i
        return i

    new_elements = []
    parent_of = []
    cut_seg_ids = []
    cut_seg_parent = []
    for e in range(mesh.n_elements):
        if e in results:
            children, nodes, cut_pairs = results[e]
            for cyc in children:
                new_elements.append([node_id(k, nodes[k]) for k in cyc])
                parent_of.append(e)
            for (a, b) in cut_pairs:
                cut_seg_ids.append((node_id(a, nodes[a]), node_id(b, nodes[b])))
                cut_seg_parent.append(e)
        else:
            loop = [int(v) for v in mesh.elements[e]]
            out = []
            for i in range(len(loop)):
                a, b = loop[i], loop[(i + 1) % len(loop)]
                out.append(a)
                hit = edge_cross.get((a, b) if a < b else (b, a))
                if hit is not None and hit[0][0] == "e":
                    out.append(node_id(hit[0], hit[1]))
            new_elements.append(out)
            parent_of.append(e)
    vertices = (
        np.vstack([mesh.vertices, np.array(coords_new)]) if coords_new else mesh.vertices.copy()
    )
    parent_of = np.array(parent_of, dtype=np.int64)

    # boundary markers: sub-edges inherit the marker of the original face
    markers = {}
    for f in np.nonzero(mesh.boundary_mask)[0]:
        a, b = (int(v) for v in mesh.face_vertices[f])
        e = int(mesh.face_elem_plus[f])
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        d = pb - pa
        L2 = float(d @ d)
        on = [(0.0, a), (1.0, b)]
        children_of_e = np.nonzero(parent_of == e)[0]
        seen = {a, b}
        for ce in children_of_e:
            for vid in new_elements[ce]:
                if vid in seen:
                    continue
                p = vertices[vid]
                t = float((p - pa) @ d) / L2
                if -1e-12 < t < 1.0 + 1e-12:
                    off = p - (pa + t * d)
                    if math.hypot(off[0], off[1]) <= mesh.eps_geo:
                        on.append((t, vid))
                        seen.add(vid)
        on.sort()
        mk = Marker(int(mesh.face_markers[f]))
        for (_, u), (_, w) in zip(on[:-1], on[1:]):
            markers[(u, w) if u < w else (w, u)] = mk

    fitted = PolyMesh(vertices, new_elements, boundary_markers=markers, validate="light")

    candidate_set = set(int(c) for c in candidates)
    child_sign = np.empty(len(new_elements), dtype=np.int64)
    for i, e in enumerate(parent_of):
        if int(e) in candidate_set:
            child_sign[i] = _region_sign(cls, int(e), fitted.element_coords(i))
        else:
            # strictly one sign on the whole element; the center trace has it
            child_sign[i] = 1 if cv[e] > 0 else -1

    return CutResult(
        fitted_mesh=fitted,
        parent_of=parent_of,
        child_sign=child_sign,
        cut_segment_vertices=np.array(cut_seg_ids, dtype=np.int64).reshape(-1, 2),
        cut_segment_parent=np.array(cut_seg_parent, dtype=np.int64),
    )
