"""Broken linear DG spaces on polygonal meshes.

Each element carries the three monomials {1, (x - cx)/hx, (y - cy)/hy} scaled
by its bounding box (center c, half-extents h), so local mass matrices stay
well conditioned on stretched cut elements. Volume quadrature composes a
degree-4 triangle rule over the element sub-triangulation; faces use 3-point
Gauss. Fields are stored as per-element coefficient blocks with no coupling
between elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .polymesh import PolyMesh

N_DOF_LOC = 3  # (p+1)(p+2)/2 scalar dofs per element at p=1

# degree-4 triangle rule (6 points, positive weights), barycentric coordinates
_A1, _B1 = 0.108103018168070227, 0.445948490915964886
_A2, _B2 = 0.816847572980458513, 0.091576213509770743
_TRI_BARY = np.array(
    [
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
_TRI_W = np.array(
    [
        0.223381589678011466,
        0.223381589678011466,
        0.223381589678011466,
        0.109951743655321868,
        0.109951743655321868,
        0.109951743655321868,
    ]
)
N_TRI_QP = 6

# 3-point Gauss on [0, 1]
_G = math.sqrt(3.0 / 5.0)
_GAUSS3_T = np.array([0.5 * (1.0 - _G), 0.5, 0.5 * (1.0 + _G)])
_GAUSS3_W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
N_FACE_QP = 3


@dataclass(frozen=True)
class ElementBasis:
    """Scaled monomial basis of one element."""

    center: np.ndarray
    half: np.ndarray

    def values(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty((len(p), N_DOF_LOC))
        out[:, 0] = 1.0
        out[:, 1] = (p[:, 0] - self.center[0]) / self.half[0]
        out[:, 2] = (p[:, 1] - self.center[1]) / self.half[1]
        return out

    def gradients(self) -> np.ndarray:
        g = np.zeros((N_DOF_LOC, 2))
        g[1, 0] = 1.0 / self.half[0]
        g[2, 1] = 1.0 / self.half[1]
        return g


def local_basis(mesh: PolyMesh, e: int) -> ElementBasis:
    return ElementBasis(center=mesh.bbox_center[e].copy(), half=mesh.bbox_half[e].copy())


def basis_values(mesh: PolyMesh, elem_ids, pts) -> np.ndarray:
    """Basis values of (possibly repeated) elements at matching points."""
    e = np.asarray(elem_ids, dtype=np.int64)
    p = np.asarray(pts, dtype=float).reshape(-1, 2)
    out = np.empty((len(p), N_DOF_LOC))
    out[:, 0] = 1.0
    out[:, 1:] = (p - mesh.bbox_center[e]) / mesh.bbox_half[e]
    return out


def basis_gradients(mesh: PolyMesh) -> np.ndarray:
    """Constant basis gradients per element, shape (n_elements, 3, 2)."""
    n = mesh.n_elements
    g = np.zeros((n, N_DOF_LOC, 2))
    g[:, 1, 0] = 1.0 / mesh.bbox_half[:, 0]
    g[:, 2, 1] = 1.0 / mesh.bbox_half[:, 1]
    return g


class QuadratureRule:
    """Volume and face quadrature plus cached basis traces for one mesh."""

    def __init__(self, mesh: PolyMesh):
        self.mesh = mesh
        tri_elem, _, tri_coords = mesh.triangulation
        a, b, c = tri_coords[:, 0], tri_coords[:, 1], tri_coords[:, 2]
        tri_area = 0.5 * (
            (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
            - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        )
        # points: (T, 6, 2) via barycentric combination
        pts = (
            _TRI_BARY[None, :, 0, None] * a[:, None, :]
            + _TRI_BARY[None, :, 1, None] * b[:, None, :]
            + _TRI_BARY[None, :, 2, None] * c[:, None, :]
        )
        self.points = pts.reshape(-1, 2)
        self.weights = (tri_area[:, None] * _TRI_W[None, :]).ravel()
        self.point_elem = np.repeat(tri_elem, N_TRI_QP)
        # triangles are emitted element by element, so qps are contiguous
        counts = np.bincount(self.point_elem, minlength=mesh.n_elements)
        self.elem_qp_offsets = np.concatenate([[0], np.cumsum(counts)])
        # face quadrature
        p0 = mesh.face_endpoints[:, 0]
        p1 = mesh.face_endpoints[:, 1]
        self.face_points = p0[:, None, :] + _GAUSS3_T[None, :, None] * (p1 - p0)[:, None, :]
        self.face_weights = mesh.face_lengths[:, None] * _GAUSS3_W[None, :]

    @cached_property
    def basis_at_points(self) -> np.ndarray:
        return basis_values(self.mesh, self.point_elem, self.points)

    @cached_property
    def face_basis_plus(self) -> np.ndarray:
        m = self.mesh
        e = np.repeat(m.face_elem_plus, N_FACE_QP)
        return basis_values(m, e, self.face_points.reshape(-1, 2)).reshape(-1, N_FACE_QP, N_DOF_LOC)

    @cached_property
    def face_basis_minus(self) -> np.ndarray:
        """Traces from the minus side; rows for boundary faces are unused."""
        m = self.mesh
        em = np.where(m.face_elem_minus >= 0, m.face_elem_minus, m.face_elem_plus)
        e = np.repeat(em, N_FACE_QP)
        return basis_values(m, e, self.face_points.reshape(-1, 2)).reshape(-1, N_FACE_QP, N_DOF_LOC)

    @cached_property
    def gradients(self) -> np.ndarray:
        return basis_gradients(self.mesh)

    @cached_property
    def mass_matrices(self) -> np.ndarray:
        """Local mass matrices, shape (n_elements, 3, 3)."""
        V = self.basis_at_points
        contrib = (self.weights[:, None, None] * V[:, :, None] * V[:, None, :]).reshape(-1, 9)
        sums = np.add.reduceat(contrib, self.elem_qp_offsets[:-1], axis=0)
        return sums.reshape(-1, N_DOF_LOC, N_DOF_LOC)

    def integrate_per_element(self, values: np.ndarray) -> np.ndarray:
        """Integral of point samples over each element."""
        contrib = self.weights * np.asarray(values, dtype=float)
        return np.add.reduceat(contrib, self.elem_qp_offsets[:-1])

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


@dataclass
class DGField:
    """Element-wise polynomial field; coeffs has shape (n_elements, ncomp, 3)."""

    mesh: PolyMesh
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        expect = (self.mesh.n_elements, self.ncomp, N_DOF_LOC)
        if self.coeffs.shape != expect:
            raise ValueError(f"coefficient array has shape {self.coeffs.shape}, expected {expect}")

    @classmethod
    def zeros(cls, mesh: PolyMesh, ncomp: int = 1) -> "DGField":
        return cls(mesh, np.zeros((mesh.n_elements, ncomp, N_DOF_LOC)))

    @classmethod
    def from_coeffs(cls, mesh: PolyMesh, coeffs) -> "DGField":
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 2:
            c = c[:, None, :]
        return cls(mesh, c)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[1] if self.coeffs.ndim == 3 else 1

    def copy(self) -> "DGField":
        return DGField(self.mesh, self.coeffs.copy())

    def eval(self, elem_ids, pts) -> np.ndarray:
        """Evaluate at points paired with element ids; scalar fields squeeze."""
        V = basis_values(self.mesh, elem_ids, pts)
        e = np.asarray(elem_ids, dtype=np.int64)
        out = np.einsum("mci,mi->mc", self.coeffs[e], V)
        return out[:, 0] if self.ncomp == 1 else out

    def element_gradients(self) -> np.ndarray:
        """Constant gradient per element, shape (n_elements, ncomp, 2)."""
        return np.einsum("eci,eix->ecx", self.coeffs, basis_gradients(self.mesh))


def l2_project(func, mesh: PolyMesh, quad: QuadratureRule = None, ncomp: int = 1) -> DGField:
    """Element-wise L2 projection of func(points) onto the broken linear space."""
    if quad is None:
        quad = QuadratureRule(mesh)
    vals = np.asarray(func(quad.points), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape != (len(quad.points), ncomp):
        raise ValueError(f"function returned shape {vals.shape}, expected ({len(quad.points)}, {ncomp})")
    V = quad.basis_at_points
    contrib = (quad.weights[:, None, None] * V[:, :, None] * vals[:, None, :]).reshape(
        -1, N_DOF_LOC * ncomp
    )
    rhs = np.add.reduceat(contrib, quad.elem_qp_offsets[:-1], axis=0).reshape(
        -1, N_DOF_LOC, ncomp
    )
    sol = np.linalg.solve(quad.mass_matrices, rhs)  # (n, 3, ncomp)
    return DGField(mesh, np.ascontiguousarray(sol.transpose(0, 2, 1)))


def penalty_scale(mesh: PolyMesh, p: int = 1) -> np.ndarray:
    """Per-face, per-side penalty scaling p^2 |F| / |elem|, shape (n_faces, 2).

    Column 0 is the plus side; column 1 the minus side (NaN on boundary faces).
    """
    L = mesh.face_lengths
    out = np.empty((mesh.n_faces, 2))
    out[:, 0] = L / mesh.areas[mesh.face_elem_plus]
    minus = mesh.face_elem_minus
    out[:, 1] = np.where(minus >= 0, L / mesh.areas[np.maximum(minus, 0)], np.nan)
    return (p * p) * out


# ---------------------------------------------------------------------------
# jump / average operators (value level; assembly has vectorized inlines)


def jump_scalar(v_plus, v_minus, normal):
    """[[psi]] = psi+ n+ + psi- n-; pass v_minus=None on boundary faces."""
    n = np.asarray(normal, dtype=float)
    if v_minus is None:
        return np.asarray(v_plus)[..., None] * n
    return (np.asarray(v_plus) - np.asarray(v_minus))[..., None] * n


def average_scalar(v_plus, v_minus):
    if v_minus is None:
        return np.asarray(v_plus, dtype=float)
    return 0.5 * (np.asarray(v_plus) + np.asarray(v_minus))


def jump_vector(v_plus, v_minus, normal):
    """[[v]] = v+ (x) n+ + v- (x) n-, an (..., 2, 2) tensor."""
    n = np.asarray(normal, dtype=float)
    d = np.asarray(v_plus, dtype=float)
    if v_minus is not None:
        d = d - np.asarray(v_minus)
    return d[..., :, None] * n[..., None, :]


def jump_vector_normal(v_plus, v_minus, normal):
    """[[v]]_n = v+ . n+ + v- . n-, scalar."""
    n = np.asarray(normal, dtype=float)
    d = np.asarray(v_plus, dtype=float)
    if v_minus is not None:
        d = d - np.asarray(v_minus)
    return np.einsum("...i,...i->...", d, n)


def average_vector(v_plus, v_minus):
    if v_minus is None:
        return np.asarray(v_plus, dtype=float)
    return 0.5 * (np.asarray(v_plus) + np.asarray(v_minus))


def average_tensor(t_plus, t_minus):
    if t_minus is None:
        return np.asarray(t_plus, dtype=float)
    return 0.5 * (np.asarray(t_plus) + np.asarray(t_minus))


def jump_tensor_normal(t_plus, t_minus, normal):
    """[[tau]]_n = tau+ . n+ + tau- . n-, a vector."""
    n = np.asarray(normal, dtype=float)
    d = np.asarray(t_plus, dtype=float)
    if t_minus is not None:
        d = d - np.asarray(t_minus)
    return np.einsum("...ij,...j->...i", d, n)
