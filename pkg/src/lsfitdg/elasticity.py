"""Symmetric interior-penalty DG discretization of linear elasticity.

Vector fields use 6 local dofs per element (2 components x 3 scalar basis
functions); the global dof of (element e, component c, basis i) is
6 e + 3 c + i. Strains are constant per element, so flux terms on faces need
only integrated basis traces.

Boundary conditions by face marker: Dirichlet faces get the full one-sided
penalty terms, Neumann faces contribute the traction to the load, Free faces
are natural (zero traction).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .dg_space import DGField, QuadratureRule, basis_gradients
from .errors import SolverError
from .polymesh import Marker, PolyMesh

N_DOF_VEC = 6


def lame_parameters(E: float, nu: float):
    """(lambda, mu) from Young's modulus and Poisson ratio."""
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


@dataclass
class MaterialModel:
    """Linear elastic material with optional ersatz-weakened void elements.

    chi is a per-element 0/1 material indicator; elements with chi == 0 keep
    the same Poisson ratio but have their moduli scaled by gamma.
    """

    E: float
    nu: float
    gamma: float = 1e-3
    chi: Optional[np.ndarray] = None

    def element_moduli(self, mesh: PolyMesh):
        lam, mu = lame_parameters(self.E, self.nu)
        if self.chi is None:
            ones = np.ones(mesh.n_elements)
            return mu * ones, lam * ones
        chi = np.asarray(self.chi, dtype=float)
        if chi.shape != (mesh.n_elements,):
            raise ValueError("chi must have one entry per element")
        scale = chi + self.gamma * (1.0 - chi)
        return mu * scale, lam * scale


def _strain_basis(grads: np.ndarray):
    """Per-element strain tensors and divergences of the 6 vector dofs."""
    n = grads.shape[0]
    eps = np.zeros((n, 6, 2, 2))
    div = np.zeros((n, 6))
    for c in range(2):
        for i in range(3):
            a = 3 * c + i
            eps[:, a, c, :] += 0.5 * grads[:, i, :]
            eps[:, a, :, c] += 0.5 * grads[:, i, :]
            div[:, a] = grads[:, i, c]
    return eps, div


class ElasticitySystem:
    """Assembled SIP elasticity operator on a marked mesh."""

    def __init__(
        self,
        mesh: PolyMesh,
        material: MaterialModel,
        sigma0_mu: float = 10.0,
        sigma0_lambda: float = 10.0,
        quad: Optional[QuadratureRule] = None,
    ):
        self.mesh = mesh
        self.material = material
        self.sigma0_mu = float(sigma0_mu)
        self.sigma0_lambda = float(sigma0_lambda)
        self.quad = quad if quad is not None else QuadratureRule(mesh)
        self.mu_e, self.lam_e = material.element_moduli(mesh)
        self._grads = basis_gradients(mesh)
        self._epsB, self._divB = _strain_basis(self._grads)
        self._lu = None
        self._norm_A = None
        self.matrix = self._assemble()

    # -- assembly -----------------------------------------------------------

    def _assemble(self) -> sparse.csr_matrix:
        mesh = self.mesh
        n = mesh.n_elements
        N = N_DOF_VEC * n
        rows, cols, vals = [], [], []

        # volume: area * (2 mu eps_a:eps_b + lambda div_a div_b)
        Kv = mesh.areas[:, None, None] * (
            2.0 * self.mu_e[:, None, None] * np.einsum("naij,nbij->nab", self._epsB, self._epsB)
            + self.lam_e[:, None, None] * self._divB[:, :, None] * self._divB[:, None, :]
        )
        base = N_DOF_VEC * np.arange(n)
        ab = np.arange(6)
        r = (base[:, None, None] + ab[:, None]).repeat(6, axis=2)
        c = (base[:, None, None] + ab[None, :]).repeat(6, axis=1).reshape(n, 6, 6)
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(Kv.ravel())

        interior = np.nonzero(mesh.interior_mask)[0]
        dirichlet = np.nonzero(mesh.face_markers == Marker.DIRICHLET)[0]
        for faces, is_int in ((interior, True), (dirichlet, False)):
            if len(faces) == 0:
                continue
            for rr, cc, vv in self._face_blocks(faces, is_int):
                rows.append(rr)
                cols.append(cc)
                vals.append(vv)

        A = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(N, N),
        )
        return A.tocsr()

    def _face_penalties(self, faces, is_interior):
        mesh = self.mesh
        ep = mesh.face_elem_plus[faces]
        Cp = mesh.face_lengths[faces] / mesh.areas[ep]
        eta_mu = self.mu_e[ep] * Cp
        eta_la = self.lam_e[ep] * Cp
        if is_interior:
            em = mesh.face_elem_minus[faces]
            Cm = mesh.face_lengths[faces] / mesh.areas[em]
            eta_mu = np.maximum(eta_mu, self.mu_e[em] * Cm)
            eta_la = np.maximum(eta_la, self.lam_e[em] * Cm)
        return self.sigma0_mu * eta_mu, self.sigma0_lambda * eta_la

    def _face_blocks(self, faces, is_interior):
        """COO triples of the four side-pair blocks over one face group."""
        mesh = self.mesh
        quad = self.quad
        nrm = mesh.face_normals[faces]  # (f, 2)
        wq = quad.face_weights[faces]  # (f, 3)
        ep = mesh.face_elem_plus[faces]
        em = mesh.face_elem_minus[faces] if is_interior else None
        eta_mu, eta_la = self._face_penalties(faces, is_interior)
        avg = 0.5 if is_interior else 1.0

        Vp = quad.face_basis_plus[faces]  # (f, 3q, 3)
        Vm = quad.face_basis_minus[faces] if is_interior else None
        sides = [(ep, Vp, 1.0)]
        if is_interior:
            sides.append((em, Vm, -1.0))

        # flux of dof b on side s: 2 mu eps_b n + lambda div_b n, shape (f, 6, 2)
        def flux(elems):
            f = 2.0 * self.mu_e[elems, None, None] * np.einsum(
                "faij,fj->fai", self._epsB[elems], nrm
            )
            f += self.lam_e[elems, None, None] * self._divB[elems][:, :, None] * nrm[:, None, :]
            return f

        out = []
        for ew, Vw, sw in sides:
            Iw = np.einsum("fq,fqi->fi", wq, Vw)  # integrated traces
            Fw = flux(ew)
            for ez, Vz, sz in sides:
                Iz = np.einsum("fq,fqi->fi", wq, Vz)
                Fz = flux(ez)
                Pphi = np.einsum("fq,fqi,fqj->fij", wq, Vw, Vz)
                B = np.zeros((len(faces), 2, 3, 2, 3))
                ss = sw * sz
                for cc in range(2):
                    B[:, cc, :, cc, :] += (ss * eta_mu)[:, None, None] * Pphi
                B += (ss * eta_la)[:, None, None, None, None] * (
                    nrm[:, :, None, None, None] * nrm[:, None, None, :, None] * Pphi[:, None, :, None, :]
                )
                # consistency: -avg sw [[w]] . (flux of z); symmetry: transpose
                B -= avg * sw * np.einsum("fi,fdjc->fcidj", Iw, Fz.reshape(-1, 2, 3, 2))
                B -= avg * sz * np.einsum("fj,fcid->fcidj", Iz, Fw.reshape(-1, 2, 3, 2))
                B = B.reshape(-1, 6, 6)
                ab = np.arange(6)
                rr = (N_DOF_VEC * ew)[:, None, None] + ab[:, None]
                cc_ = (N_DOF_VEC * ez)[:, None, None] + ab[None, :]
                out.append(
                    (
                        np.broadcast_to(rr, B.shape).ravel(),
                        np.broadcast_to(cc_, B.shape).ravel(),
                        B.ravel(),
                    )
                )
        return out

    # -- right-hand side ----------------------------------------------------

    def load_vector(
        self,
        traction: Optional[Callable] = None,
        dirichlet: Optional[Callable] = None,
        body_force: Optional[Callable] = None,
    ) -> np.ndarray:
        """Load from a Neumann traction g(x) -> (m, 2), optional Dirichlet data
        u_D(x) -> (m, 2) entering through the SIP boundary terms, and an
        optional volume force f(x) -> (m, 2)."""
        mesh = self.mesh
        quad = self.quad
        F = np.zeros(N_DOF_VEC * mesh.n_elements)
        if body_force is not None:
            fb = np.asarray(body_force(quad.points), dtype=float)
            contrib = (
                quad.weights[:, None, None] * fb[:, :, None] * quad.basis_at_points[:, None, :]
            )
            loc = np.add.reduceat(contrib.reshape(-1, 6), quad.elem_qp_offsets[:-1], axis=0)
            F += loc.ravel()
        if traction is not None:
            nf = np.nonzero(mesh.face_markers == Marker.NEUMANN)[0]
            if len(nf):
                pts = quad.face_points[nf].reshape(-1, 2)
                g = np.asarray(traction(pts), dtype=float).reshape(len(nf), 3, 2)
                wq = quad.face_weights[nf]
                V = quad.face_basis_plus[nf]
                loc = np.einsum("fq,fqc,fqi->fci", wq, g, V)  # (f, 2, 3)
                np.add.at(F, (N_DOF_VEC * mesh.face_elem_plus[nf])[:, None] + np.arange(6), loc.reshape(-1, 6))
        if dirichlet is not None:
            df = np.nonzero(mesh.face_markers == Marker.DIRICHLET)[0]
            if len(df):
                F += self._dirichlet_load(df, dirichlet)
        return F

    def _dirichlet_load(self, faces, data):
        mesh = self.mesh
        quad = self.quad
        nrm = mesh.face_normals[faces]
        wq = quad.face_weights[faces]
        ep = mesh.face_elem_plus[faces]
        V = quad.face_basis_plus[faces]
        eta_mu, eta_la = self._face_penalties(faces, False)
        pts = quad.face_points[faces].reshape(-1, 2)
        gD = np.asarray(data(pts), dtype=float).reshape(len(faces), 3, 2)

        # penalties: eta_mu (g, v) + eta_la (g.n)(v.n)
        loc = eta_mu[:, None, None] * np.einsum("fq,fqc,fqi->fci", wq, gD, V)
        gn = np.einsum("fqc,fc->fq", gD, nrm)
        loc += eta_la[:, None, None] * np.einsum("fq,fq,fc,fqi->fci", wq, gn, nrm, V)
        # symmetry term: -(flux of v) . g integrated
        Ig = np.einsum("fq,fqc->fc", wq, gD)
        f = 2.0 * self.mu_e[ep, None, None] * np.einsum("faij,fj->fai", self._epsB[ep], nrm)
        f += self.lam_e[ep, None, None] * self._divB[ep][:, :, None] * nrm[:, None, :]
        loc -= np.einsum("fc,fdjc->fdj", Ig, f.reshape(-1, 2, 3, 2))

        F = np.zeros(N_DOF_VEC * mesh.n_elements)
        np.add.at(F, (N_DOF_VEC * ep)[:, None] + np.arange(6), loc.reshape(-1, 6))
        return F

    # -- solve --------------------------------------------------------------

    def solve(self, F: np.ndarray) -> DGField:
        """Direct sparse solve with symmetric diagonal equilibration."""
        A = self.matrix
        d = A.diagonal()
        if np.any(d <= 0.0):
            bad = int(np.argmin(d))
            raise SolverError(
                f"non-positive diagonal at dof {bad} (element {bad // 6}); "
                "system is not coercive"
            )
        s = 1.0 / np.sqrt(d)
        try:
            if self._lu is None:
                D = sparse.diags(s)
                self._lu = splu(sparse.csc_matrix(D @ A @ D))
                self._norm_A = sparse.linalg.norm(A, np.inf)
            x = s * self._lu.solve(s * F)
        except RuntimeError as exc:
            raise SolverError(f"sparse factorization failed: {exc}") from exc
        # iterative refinement; backward error is robust to the wide modulus
        # range an ersatz material produces
        bnorm = np.linalg.norm(F)
        be = np.inf
        for _ in range(3):
            r = F - A @ x
            be = np.linalg.norm(r) / (self._norm_A * np.linalg.norm(x) + bnorm + 1e-300)
            if be <= 1e-13:
                break
            x = x + s * self._lu.solve(s * r)
        if not np.isfinite(be) or be > 1e-9:
            raise SolverError(f"direct solve backward error {be:.3e} exceeds 1e-9")
        # backward error alone cannot flag a singular system: a huge x makes
        # it small; the plain residual catches that case
        res = np.linalg.norm(F - A @ x) / max(bnorm, 1.0)
        if not np.isfinite(res) or res > 1e-6:
            raise SolverError(f"direct solve residual {res:.3e} exceeds 1e-6")
        return DGField(self.mesh, x.reshape(self.mesh.n_elements, 2, 3))


def compliance(u: DGField, traction: Callable, quad: Optional[QuadratureRule] = None) -> float:
    """l(u) = integral of g . u over the Neumann boundary."""
    mesh = u.mesh
    quad = quad if quad is not None else QuadratureRule(mesh)
    nf = np.nonzero(mesh.face_markers == Marker.NEUMANN)[0]
    if len(nf) == 0:
        return 0.0
    pts = quad.face_points[nf].reshape(-1, 2)
    g = np.asarray(traction(pts), dtype=float).reshape(len(nf), 3, 2)
    V = quad.face_basis_plus[nf]  # (f, 3q, 3)
    coef = u.coeffs[mesh.face_elem_plus[nf]]  # (f, 2, 3)
    uv = np.einsum("fqi,fci->fqc", V, coef)
    return float(np.einsum("fq,fqc,fqc->", quad.face_weights[nf], g, uv))


def compliance_percentage_error(l_test: float, l_ref: float) -> float:
    """Signed percentage deviation 100 (l_test - l_ref) / l_ref."""
    if l_ref == 0.0:
        raise ValueError("reference compliance is zero")
    return 100.0 * (l_test - l_ref) / l_ref


def strain_field(u: DGField) -> np.ndarray:
    """Per-element constant strain tensors, shape (n, 2, 2)."""
    G = u.element_gradients()  # (n, 2, 2), G[e, c, d] = d u_c / d x_d
    return 0.5 * (G + np.swapaxes(G, 1, 2))


def von_mises(u: DGField, material: MaterialModel) -> np.ndarray:
    """Per-element von Mises stress of the in-plane stress tensor."""
    mesh = u.mesh
    mu_e, lam_e = material.element_moduli(mesh)
    eps = strain_field(u)
    tr = eps[:, 0, 0] + eps[:, 1, 1]
    sxx = 2.0 * mu_e * eps[:, 0, 0] + lam_e * tr
    syy = 2.0 * mu_e * eps[:, 1, 1] + lam_e * tr
    sxy = 2.0 * mu_e * eps[:, 0, 1]
    return np.sqrt(sxx**2 - sxx * syy + syy**2 + 3.0 * sxy**2)
