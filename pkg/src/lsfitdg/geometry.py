"""Small polygon primitives used by the mesh and cutting code.

All polygons are simple, given as (n, 2) float arrays or coordinate lists,
counter-clockwise unless stated otherwise. Consecutive collinear vertices are
allowed (they appear after conforming insertion of cut points).
"""

from __future__ import annotations

import math

import numpy as np


def polygon_area(coords) -> float:
    """Signed shoelace area; positive for counter-clockwise loops."""
    c = np.asarray(coords, dtype=float)
    x, y = c[:, 0], c[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(coords):
    """Area centroid. Works for either orientation (signs cancel)."""
    c = np.asarray(coords, dtype=float)
    x, y = c[:, 0], c[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    w = x * yn - xn * y
    a = 0.5 * float(np.sum(w))
    if abs(a) < 1e-300:
        return np.array([float(np.mean(x)), float(np.mean(y))])
    cx = float(np.sum((x + xn) * w)) / (6.0 * a)
    cy = float(np.sum((y + yn) * w)) / (6.0 * a)
    return np.array([cx, cy])


def polygon_diameter(coords) -> float:
    """Largest vertex-to-vertex distance."""
    c = np.asarray(coords, dtype=float)
    d2 = np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=-1)
    return math.sqrt(float(d2.max()))


def polygon_bbox(coords):
    c = np.asarray(coords, dtype=float)
    return c.min(axis=0), c.max(axis=0)


def point_in_polygon(pt, coords, tol=0.0) -> bool:
    """Crossing-number test; points within tol of an edge count as inside."""
    c = np.asarray(coords, dtype=float)
    x, y = float(pt[0]), float(pt[1])
    n = len(c)
    if tol > 0.0:
        for i in range(n):
            if _dist_point_segment(x, y, c[i], c[(i + 1) % n]) <= tol:
                return True
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = c[i]
        xj, yj = c[j]
        if (yi > y) != (yj > y):
            xc = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < xc:
                inside = not inside
        j = i
    return inside


def _dist_point_segment(x, y, a, b) -> float:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return math.hypot(x - ax, y - ay)
    t = ((x - ax) * dx + (y - ay) * dy) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(x - (ax + t * dx), y - (ay + t * dy))


def split_halfplane(xs, ys, a, b, c, eps):
    """All pieces of a simple polygon on the side a*x + b*y <= c.

    A plain Sutherland-Hodgman step is wrong for non-convex subjects whose kept
    side is disconnected: it joins the pieces with zero-width bridges along the
    cut line. Here the kept boundary chains are stitched through the in-polygon
    intervals of the line instead, so every piece comes out as a genuine simple
    polygon (CCW). eps is the vertex-on-line tolerance; the line is nudged
    toward the discarded side until no vertex sits on it, which moves the cut
    by at most a few eps.
    """
    n = len(xs)
    if n == 0:
        return []
    s = [a * xs[i] + b * ys[i] - c for i in range(n)]
    if max(s) <= eps:
        return [(list(xs), list(ys))]
    if min(s) >= -eps:
        return []
    bump = 0
    while any(abs(v) <= eps for v in s) and bump < 12:
        c += 2.0 * eps
        s = [a * xs[i] + b * ys[i] - c for i in range(n)]
        bump += 1
    start = next(i for i in range(n) if s[i] > 0)
    chains = []  # kept boundary runs; first and last point lie on the line
    events = []  # (position along the line, chain id, 0=chain start 1=chain end)
    cur = None
    for k in range(n):
        i = (start + k) % n
        j = (start + k + 1) % n
        si, sj = s[i], s[j]
        if si > 0.0 and sj > 0.0:
            continue
        if si > 0.0:
            t = si / (si - sj)
            p = (xs[i] + t * (xs[j] - xs[i]), ys[i] + t * (ys[j] - ys[i]))
            cur = [p, (xs[j], ys[j])]
            events.append((-b * p[0] + a * p[1], len(chains), 0))
        elif sj > 0.0:
            t = si / (si - sj)
            p = (xs[i] + t * (xs[j] - xs[i]), ys[i] + t * (ys[j] - ys[i]))
            cur.append(p)
            events.append((-b * p[0] + a * p[1], len(chains), 1))
            chains.append(cur)
            cur = None
        else:
            cur.append((xs[j], ys[j]))
    # crossings sorted along the line alternate enter/leave of the polygon, so
    # consecutive pairs bound the in-polygon intervals that close the pieces
    events.sort()
    partner = {}
    for k in range(0, len(events), 2):
        _, ca, ra = events[k]
        _, cb, rb = events[k + 1]
        partner[(ca, ra)] = (cb, rb)
        partner[(cb, rb)] = (ca, ra)
    pieces = []
    seen = set()
    for c0 in range(len(chains)):
        if (c0, True) in seen or (c0, False) in seen:
            continue
        poly = []
        ch, fwd = c0, True
        while (ch, fwd) not in seen:
            seen.add((ch, fwd))
            poly.extend(chains[ch] if fwd else chains[ch][::-1])
            nxt, role = partner[(ch, 1 if fwd else 0)]
            ch, fwd = nxt, role == 0
        px = [p[0] for p in poly]
        py = [p[1] for p in poly]
        ar = 0.0
        for i in range(len(px)):
            j = (i + 1) % len(px)
            ar += px[i] * py[j] - px[j] * py[i]
        if abs(ar) <= eps * eps:
            continue
        if ar < 0.0:
            px.reverse()
            py.reverse()
        pieces.append((px, py))
    return pieces


def segments_intersect(p1, p2, p3, p4, eps=0.0) -> bool:
    """True if open segments (p1,p2) and (p3,p4) properly cross."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    )


def is_simple_polygon(coords, rel_tol=1e-12) -> bool:
    """Check that no two non-adjacent edges cross and no edge degenerates.

    Consecutive collinear vertices pass; repeated consecutive vertices fail.
    """
    c = np.asarray(coords, dtype=float)
    n = len(c)
    if n < 3:
        return False
    scale = polygon_diameter(c)
    if scale == 0.0:
        return False
    tol = rel_tol * scale
    for i in range(n):
        if np.hypot(*(c[(i + 1) % n] - c[i])) <= tol:
            return False
    eps = rel_tol * scale * scale
    for i in range(n):
        a1, a2 = c[i], c[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if segments_intersect(a1, a2, c[j], c[(j + 1) % n], eps):
                return False
    return True


def fan_triangles(coords, center=None, rel_tol=1e-12):
    """Center-to-edge triangles if the polygon is star-shaped w.r.t. center.

    Returns an (n, 3, 2) array of triangles or None when some fan triangle is
    inverted or degenerate (then ear clipping should be used instead).
    """
    c = np.asarray(coords, dtype=float)
    if center is None:
        center = polygon_centroid(c)
    n = len(c)
    min_ok = rel_tol * abs(polygon_area(c))
    tris = np.empty((n, 3, 2))
    for i in range(n):
        a, b = c[i], c[(i + 1) % n]
        t_area = 0.5 * (
            (a[0] - center[0]) * (b[1] - center[1]) - (a[1] - center[1]) * (b[0] - center[0])
        )
        if t_area <= min_ok:
            return None
        tris[i, 0] = center
        tris[i, 1] = a
        tris[i, 2] = b
    return tris


def ear_clip(coords, rel_tol=1e-12):
    """Triangulate a simple CCW polygon by ear clipping.

    Returns a list of index triples into coords. Zero-area ears (collinear
    vertices) are discarded, so the triangle count can be below n - 2; the
    triangles still cover the polygon.
    """
    c = np.asarray(coords, dtype=float)
    n = len(c)
    area = polygon_area(c)
    if area <= 0.0:
        raise ValueError("ear_clip expects a CCW polygon with positive area")
    eps = rel_tol * area
    idx = list(range(n))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def in_tri(p, a, b, d):
        return cross(a, b, p) >= -eps and cross(b, d, p) >= -eps and cross(d, a, p) >= -eps

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 4 * n * n:
            raise ValueError("ear clipping failed; polygon may be non-simple")
        m = len(idx)
        clipped = False
        for k in range(m):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % m]
            a, b, d = c[i0], c[i1], c[i2]
            t_area = 0.5 * cross(a, b, d)
            if t_area <= eps:
                continue
            ok = True
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                if in_tri(c[j], a, b, d):
                    ok = False
                    break
            if ok:
                tris.append((i0, i1, i2))
                del idx[k]
                clipped = True
                break
        if not clipped:
            # only degenerate (collinear) ears remain somewhere; drop the
            # flattest vertex and continue
            best_k, best_area = 0, math.inf
            for k in range(m):
                a, b, d = c[idx[k - 1]], c[idx[k]], c[idx[(k + 1) % m]]
                t_area = abs(0.5 * cross(a, b, d))
                if t_area < best_area:
                    best_area, best_k = t_area, k
            del idx[best_k]
    a, b, d = c[idx[0]], c[idx[1]], c[idx[2]]
    if 0.5 * cross(a, b, d) > eps:
        tris.append((idx[0], idx[1], idx[2]))
    return tris
