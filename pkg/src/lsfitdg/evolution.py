"""Semi-implicit transport of the level-set field.

The descent direction enters as an explicit reaction source while an
interior-penalty discretization of the Laplacian, weighted by tau, smooths
the front.  Homogeneous Neumann conditions hold on the whole boundary, so
only interior faces are penalized and constants are exact steady states of
the unforced flow.  The level-set mesh never changes during an optimization,
which lets us factorize the implicit operator once and reuse it every step.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .dg_space import N_DOF_LOC, DGField, QuadratureRule, basis_gradients, basis_values
from .errors import SolverError
from .polymesh import PolyMesh


class EvolutionSystem:
    """Mass and diffusion operators of the level-set update, factorized once.

    The diffusion form scales linearly in tau with penalties included, so the
    unit-tau matrix is assembled a single time and multiplied afterwards.
    """

    def __init__(
        self,
        mesh: PolyMesh,
        tau: float,
        dt: float,
        sigma0_tau: float = 10.0,
        quad: Optional[QuadratureRule] = None,
    ):
        if tau <= 0.0:
            raise ValueError("tau must be positive")
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.mesh = mesh
        self.tau = float(tau)
        self.dt = float(dt)
        self.sigma0 = float(sigma0_tau)
        self.quad = quad if quad is not None else QuadratureRule(mesh)
        self.mass = self._assemble_mass()
        self.diffusion = (self.tau * self._assemble_unit_diffusion()).tocsr()
        self.implicit = (self.mass + self.dt * self.diffusion).tocsr()
        try:
            self._lu = splu(sparse.csc_matrix(self.implicit))
        except RuntimeError as exc:
            raise SolverError(f"evolution operator factorization failed: {exc}") from exc

    def _assemble_mass(self) -> sparse.csr_matrix:
        n = self.mesh.n_elements
        M = self.quad.mass_matrices
        base = N_DOF_LOC * np.arange(n)
        ab = np.arange(N_DOF_LOC)
        r = base[:, None, None] + ab[:, None]
        c = base[:, None, None] + ab[None, :]
        return sparse.coo_matrix(
            (
                M.ravel(),
                (
                    np.broadcast_to(r, M.shape).ravel(),
                    np.broadcast_to(c, M.shape).ravel(),
                ),
            ),
            shape=(N_DOF_LOC * n, N_DOF_LOC * n),
        ).tocsr()

    def _assemble_unit_diffusion(self) -> sparse.coo_matrix:
        mesh = self.mesh
        quad = self.quad
        n = mesh.n_elements
        N = N_DOF_LOC * n
        grads = quad.gradients  # (n, 3, 2), constant per element
        rows, cols, vals = [], [], []

        Kv = mesh.areas[:, None, None] * np.einsum("nad,nbd->nab", grads, grads)
        base = N_DOF_LOC * np.arange(n)
        ab = np.arange(N_DOF_LOC)
        r = base[:, None, None] + ab[:, None]
        c = base[:, None, None] + ab[None, :]
        rows.append(np.broadcast_to(r, Kv.shape).ravel())
        cols.append(np.broadcast_to(c, Kv.shape).ravel())
        vals.append(Kv.ravel())

        faces = np.nonzero(mesh.interior_mask)[0]
        if len(faces):
            nrm = mesh.face_normals[faces]
            wq = quad.face_weights[faces]
            ep = mesh.face_elem_plus[faces]
            em = mesh.face_elem_minus[faces]
            eta = (
                self.sigma0
                * mesh.face_lengths[faces]
                * np.maximum(1.0 / mesh.areas[ep], 1.0 / mesh.areas[em])
            )
            Vp = quad.face_basis_plus[faces]
            Vm = quad.face_basis_minus[faces]
            for ew, Vw, sw in ((ep, Vp, 1.0), (em, Vm, -1.0)):
                Iw = np.einsum("fq,fqi->fi", wq, Vw)
                Gw = np.einsum("fad,fd->fa", grads[ew], nrm)
                for ez, Vz, sz in ((ep, Vp, 1.0), (em, Vm, -1.0)):
                    Iz = np.einsum("fq,fqi->fi", wq, Vz)
                    Gz = np.einsum("fad,fd->fa", grads[ez], nrm)
                    P = np.einsum("fq,fqi,fqj->fij", wq, Vw, Vz)
                    B = (sw * sz) * eta[:, None, None] * P
                    B -= 0.5 * sw * Iw[:, :, None] * Gz[:, None, :]
                    B -= 0.5 * sz * Gw[:, :, None] * Iz[:, None, :]
                    rr = (N_DOF_LOC * ew)[:, None, None] + ab[:, None]
                    cc = (N_DOF_LOC * ez)[:, None, None] + ab[None, :]
                    rows.append(np.broadcast_to(rr, B.shape).ravel())
                    cols.append(np.broadcast_to(cc, B.shape).ravel())
                    vals.append(B.ravel())

        return sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(N, N),
        )

    def energy(self, phi: DGField) -> float:
        """Curvature energy of the diffusion form, tau included."""
        x = phi.coeffs.ravel()
        return float(x @ (self.diffusion @ x))


def assemble_evolution(
    mesh: PolyMesh,
    tau: float,
    dt: float,
    sigma0_tau: float = 10.0,
    quad: Optional[QuadratureRule] = None,
) -> EvolutionSystem:
    return EvolutionSystem(mesh, tau, dt, sigma0_tau=sigma0_tau, quad=quad)


def evolve_step(
    system: EvolutionSystem, phi: DGField, source: Optional[DGField] = None
) -> DGField:
    """One implicit-diffusion, explicit-source step of size dt."""
    mesh = system.mesh
    if phi.mesh is not mesh:
        raise ValueError("field lives on a different mesh than the system")
    x = phi.coeffs.reshape(-1).astype(float)
    if source is not None:
        if source.mesh is not mesh:
            raise ValueError("source lives on a different mesh than the system")
        x = x + system.dt * source.coeffs.reshape(-1)
    b = system.mass @ x
    y = system._lu.solve(b)
    res = np.linalg.norm(system.implicit @ y - b) / max(np.linalg.norm(b), 1.0)
    if not np.isfinite(res) or res > 1e-10:
        raise SolverError(f"evolution step residual {res:.3e} exceeds 1e-10")
    return DGField(mesh, y.reshape(mesh.n_elements, 1, N_DOF_LOC))


def threshold(phi: DGField) -> DGField:
    """Confine a scalar field to [-1, 1] while keeping it element-wise linear.

    A pointwise clamp of a linear polynomial is not a polynomial, so the
    vertex-trace samples are clamped and a per-element least-squares linear
    refit follows.  The refit can still overshoot at the extreme samples; an
    affine range correction brings the vertex traces back inside the bound,
    which also makes the operation idempotent.
    """
    mesh = phi.mesh
    n = mesh.n_elements
    el = mesh.loop_elem
    pts = mesh.vertices[mesh.loop_vertex]
    V = basis_values(mesh, el, pts)  # (L, 3) design rows
    traces = np.einsum("li,li->l", V, phi.coeffs[el, 0, :])
    clamped = np.clip(traces, -1.0, 1.0)

    G = np.zeros((n, N_DOF_LOC, N_DOF_LOC))
    rhs = np.zeros((n, N_DOF_LOC))
    np.add.at(G, el, V[:, :, None] * V[:, None, :])
    np.add.at(rhs, el, V * clamped[:, None])
    coeffs = np.linalg.solve(G, rhs[:, :, None])[:, :, 0]  # (n, 3)

    refit = np.einsum("li,li->l", V, coeffs[el])
    hi = np.full(n, -np.inf)
    lo = np.full(n, np.inf)
    np.maximum.at(hi, el, refit)
    np.minimum.at(lo, el, refit)

    width = hi - lo
    squeeze = width > 2.0
    if np.any(squeeze):
        s = 2.0 / width[squeeze]
        coeffs[squeeze] *= s[:, None]
        coeffs[squeeze, 0] += -1.0 - lo[squeeze] * s
    shift_up = ~squeeze & (lo < -1.0)
    coeffs[shift_up, 0] += -1.0 - lo[shift_up]
    shift_dn = ~squeeze & (hi > 1.0)
    coeffs[shift_dn, 0] -= hi[shift_dn] - 1.0

    return DGField(mesh, coeffs.reshape(n, 1, N_DOF_LOC))


def vertex_trace_range(phi: DGField) -> tuple:
    """Min and max of the field over all element-vertex traces."""
    mesh = phi.mesh
    V = basis_values(mesh, mesh.loop_elem, mesh.vertices[mesh.loop_vertex])
    t = np.einsum("li,li->l", V, phi.coeffs[mesh.loop_elem, 0, :])
    return float(t.min()), float(t.max())
