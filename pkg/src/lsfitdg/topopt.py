"""Compliance-driven topology optimization on a pair of meshes.

A fixed polygonal mesh carries the level-set evolution while the elasticity
state is solved on a mesh fitted to the current zero isoline.  The descent
direction is the topological derivative of the compliance Lagrangian; a
multiplicative multiplier update enforces the volume budget and a
normalization keeps the source magnitude mesh-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .dg_space import DGField, N_DOF_LOC, QuadratureRule, basis_values
from .elasticity import (
    ElasticitySystem,
    MaterialModel,
    compliance,
    lame_parameters,
    strain_field,
)
from .errors import StagnationError
from .evolution import EvolutionSystem, evolve_step, threshold
from .levelset_fit import (
    ContinuousLevelSet,
    CutResult,
    fit_mesh,
    project_continuous,
)
from .polymesh import PolyMesh


@dataclass(frozen=True)
class ModifiedModuli:
    """Moduli of the topological-derivative stress, from the base material.

    nu_bar can exceed 0.5 (it does for nu = 0.3), so the pair is reduced with
    the two-dimensional conversion lambda = E nu / (1 - nu^2).  The bulk
    conversion with 1 - 2 nu would turn negative there and make the
    derivative form indefinite, which breaks the volume-multiplier descent.
    """

    E_bar: float
    nu_bar: float
    lambda_bar: float
    mu_bar: float
    A1: float
    A2: float


def modified_moduli(E: float, nu: float) -> ModifiedModuli:
    if not E > 0.0:
        raise ValueError("E must be positive")
    if not 0.0 < nu < 0.5:
        raise ValueError("nu must lie in (0, 0.5)")
    A1 = -3.0 * E * (1.0 - nu) * (1.0 - 14.0 * nu + 15.0 * nu**2) / (
        2.0 * (1.0 + nu) * (7.0 - 5.0 * nu) * (1.0 - 2.0 * nu) ** 2
    )
    A2 = 15.0 * E * (1.0 - nu) / (2.0 * (1.0 + nu) * (7.0 - 5.0 * nu))
    den = A1 + 2.0 * A2
    if den == 0.0:
        raise ValueError("singular material parameters: A1 + 2 A2 = 0")
    E_bar = 4.0 * A2**2 / den
    nu_bar = A1 / den
    mu_bar = E_bar / (2.0 * (1.0 + nu_bar))
    lam_bar = E_bar * nu_bar / (1.0 - nu_bar**2)
    return ModifiedModuli(E_bar, nu_bar, lam_bar, mu_bar, A1, A2)


@dataclass
class DerivativeBundle:
    """Topological derivative of the compliance objective plus its multiplier
    and normalization, all on the elasticity mesh."""

    dtF: DGField
    theta: float
    upsilon: float
    dtFbar: DGField
    vol0: float

    @property
    def source(self) -> DGField:
        """Normalized descent field upsilon * (dtF - theta)."""
        return DGField(self.dtFbar.mesh, self.upsilon * self.dtFbar.coeffs)


def topological_derivative(
    u: DGField,
    material: MaterialModel,
    alpha: float,
    vol0: float,
    p1: float,
    p2: float,
    current_volume: float,
) -> DerivativeBundle:
    """Derivative bundle for the self-adjoint compliance objective.

    The modified moduli formulas take the solid-phase base pair (E, nu) and
    are degree-1 homogeneous in E, so the ersatz contrast enters as the same
    elementwise scale chi + gamma (1 - chi) used for the stiffness.  Without
    that scale the near-rigid-body strains of crushed void elements (thin
    closing gaps amplify strain like 1/gamma) would dominate the theta and
    upsilon integrals and destroy the descent.  With elementwise-linear
    displacements the derivative is constant per element.
    """
    mesh = u.mesh
    mm = modified_moduli(material.E, material.nu)
    eps = strain_field(u)  # (n, 2, 2)
    tr = eps[:, 0, 0] + eps[:, 1, 1]
    dtF_e = 2.0 * mm.mu_bar * np.einsum("nij,nij->n", eps, eps) + mm.lambda_bar * tr**2
    if material.chi is not None:
        chi = np.asarray(material.chi, dtype=np.float64)
        dtF_e = (chi + material.gamma * (1.0 - chi)) * dtF_e

    integral = float(mesh.areas @ dtF_e)
    expo = p1 * (current_volume - alpha * vol0) / (alpha * vol0) + p1 * p2
    theta = integral / vol0 * np.exp(expo)
    dtFbar_e = dtF_e - theta
    denom = float(mesh.areas @ np.abs(dtFbar_e))
    if not np.isfinite(denom) or denom <= 0.0:
        raise StagnationError(
            "topological derivative vanished; descent direction undefined"
        )
    upsilon = vol0 / denom

    dtF = DGField.zeros(mesh, ncomp=1)
    dtF.coeffs[:, 0, 0] = dtF_e
    dtFbar = DGField.zeros(mesh, ncomp=1)
    dtFbar.coeffs[:, 0, 0] = dtFbar_e
    return DerivativeBundle(dtF, theta, upsilon, dtFbar, vol0)


def normalization_residual(bundle: DerivativeBundle) -> float:
    """Relative defect of the identity integral |upsilon * dtFbar| = vol0."""
    mesh = bundle.dtFbar.mesh
    implied = float(mesh.areas @ np.abs(bundle.source.coeffs[:, 0, 0]))
    return abs(implied - bundle.vol0) / bundle.vol0


def restrict_to_children(field: DGField, fine_mesh: PolyMesh, parent_of) -> DGField:
    """Exact restriction of per-parent polynomials to child elements.

    Each child lies inside its parent, so rewriting the parent's linear
    polynomial in the child's box-scaled basis is lossless.
    """
    coarse = field.mesh
    p = np.asarray(parent_of, dtype=np.int64)
    c = field.coeffs[p]  # (nf, ncomp, 3)
    gx = c[:, :, 1] / coarse.bbox_half[p, None, 0]
    gy = c[:, :, 2] / coarse.bbox_half[p, None, 1]
    ctr = fine_mesh.bbox_center
    out = np.empty((fine_mesh.n_elements,) + c.shape[1:])
    d = ctr - coarse.bbox_center[p]
    out[:, :, 0] = c[:, :, 0] + gx * d[:, None, 0] + gy * d[:, None, 1]
    out[:, :, 1] = gx * fine_mesh.bbox_half[:, None, 0]
    out[:, :, 2] = gy * fine_mesh.bbox_half[:, None, 1]
    return DGField(fine_mesh, out)


def project_to_parents(
    field: DGField,
    coarse_mesh: PolyMesh,
    parent_of,
    quad: Optional[QuadratureRule] = None,
) -> DGField:
    """Per-parent L2 projection of a fine field onto the coarse mesh.

    Mass and load are both integrated with the fine-mesh quadrature, so the
    children of each parent form exactly the integration domain and constants
    project to themselves.
    """
    fine = field.mesh
    p = np.asarray(parent_of, dtype=np.int64)
    quad = quad if quad is not None else QuadratureRule(fine)
    qp_parent = p[quad.point_elem]
    V = basis_values(coarse_mesh, qp_parent, quad.points)  # (Q, 3)
    w = quad.weights
    vals = field.eval(quad.point_elem, quad.points)
    if vals.ndim == 1:
        vals = vals[:, None]  # eval squeezes single-component fields

    nc = coarse_mesh.n_elements
    M = np.zeros((nc, N_DOF_LOC, N_DOF_LOC))
    np.add.at(M, qp_parent, w[:, None, None] * V[:, :, None] * V[:, None, :])
    b = np.zeros((nc, vals.shape[1], N_DOF_LOC))
    np.add.at(b, qp_parent, w[:, None, None] * vals[:, :, None] * V[:, None, :])
    coeffs = np.linalg.solve(M[:, None], b[..., None])[..., 0]
    return DGField(coarse_mesh, coeffs)


def project_between_meshes(
    field: DGField,
    to_mesh: PolyMesh,
    parent_of,
    quad: Optional[QuadratureRule] = None,
) -> DGField:
    """Move a field across a parent-child mesh pair, either direction.

    parent_of maps fine elements to coarse ones; the direction is inferred
    from which mesh the field lives on.
    """
    if field.mesh is to_mesh:
        return DGField(to_mesh, field.coeffs.copy())
    p = np.asarray(parent_of, dtype=np.int64)
    if len(p) == field.mesh.n_elements and (len(p) == 0 or p.max() < to_mesh.n_elements):
        return project_to_parents(field, to_mesh, p, quad=quad)
    if len(p) == to_mesh.n_elements and (len(p) == 0 or p.max() < field.mesh.n_elements):
        return restrict_to_children(field, to_mesh, p)
    raise ValueError("meshes are not related by the given parent map")


def indicator_from_levelset(
    cls: ContinuousLevelSet,
    mesh_el: PolyMesh,
    parent_of=None,
    cut: Optional[CutResult] = None,
) -> np.ndarray:
    """Binary material indicator: 1 where the interpolant is >= 0.

    On a freshly fitted mesh the cut's single-sign classification is the
    authoritative answer (an area centroid can fall outside a nonconvex
    child); otherwise the interpolant sign at the element centroid decides.
    """
    if cut is not None:
        return (cut.child_sign > 0).astype(float)
    if parent_of is None:
        parent_of = np.arange(mesh_el.n_elements)
    vals = cls.eval(np.asarray(parent_of, dtype=np.int64), mesh_el.centroids)
    return (vals >= 0.0).astype(float)


def solid_volume(mesh: PolyMesh, chi: np.ndarray) -> float:
    return float(mesh.areas @ np.asarray(chi, dtype=float))


def solid_component_count(mesh: PolyMesh, chi: np.ndarray) -> int:
    """Number of face-connected components of the solid phase."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    solid = np.flatnonzero(np.asarray(chi) > 0.5)
    if solid.size == 0:
        return 0
    remap = -np.ones(mesh.n_elements, dtype=np.int64)
    remap[solid] = np.arange(solid.size)
    interior = mesh.face_elem_minus >= 0
    a = remap[mesh.face_elem_plus[interior]]
    b = remap[mesh.face_elem_minus[interior]]
    keep = (a >= 0) & (b >= 0)
    graph = coo_matrix(
        (np.ones(int(keep.sum())), (a[keep], b[keep])),
        shape=(solid.size, solid.size),
    )
    n, _ = connected_components(graph, directed=False)
    return int(n)


def convergence_error(l_k: float, l_km1: float) -> float:
    """Relative compliance change; infinite when the reference vanishes."""
    if l_km1 == 0.0:
        return np.inf
    return abs(l_k - l_km1) / abs(l_km1)


@dataclass
class OptState:
    """Driver state; histories have one entry per completed iteration."""

    k: int
    phi_ls: DGField
    mesh_ls: PolyMesh
    mesh_el: PolyMesh
    chi_el: np.ndarray
    u_k: Optional[DGField]
    phi_el: Optional[DGField]
    vol0: float
    compliance_history: List[float] = field(default_factory=list)
    volume_history: List[float] = field(default_factory=list)
    errcomp_history: List[float] = field(default_factory=list)
    theta_history: List[float] = field(default_factory=list)
    upsilon_history: List[float] = field(default_factory=list)
    n_el_history: List[int] = field(default_factory=list)
    normalization_residuals: List[float] = field(default_factory=list)
    roundtrip_errors: List[float] = field(default_factory=list)
    fit_iterations: List[int] = field(default_factory=list)
    errcomp: float = np.inf
    converged: bool = False

    @property
    def volume_fraction_history(self) -> np.ndarray:
        return np.asarray(self.volume_history) / self.vol0


def optimize(
    config,
    mesh_ls: Optional[PolyMesh] = None,
    callback: Optional[Callable] = None,
) -> OptState:
    """Run the level-set optimization loop until compliance stagnates.

    config is an OptConfig; a pre-built (marked) level-set mesh can be passed
    to skip generation.  callback, when given, is invoked as callback(state)
    after every completed iteration.
    """
    from .config import build_mesh, build_phi0, build_traction

    if mesh_ls is None:
        mesh_ls = build_mesh(config)
    traction = build_traction(config)
    phi_ls = build_phi0(config, mesh_ls)

    vol0 = float(mesh_ls.areas.sum())
    evo = EvolutionSystem(
        mesh_ls, tau=config.tau, dt=config.dt, sigma0_tau=config.sigma0_tau
    )
    quad_ls = evo.quad

    mesh_el = mesh_ls
    quad_el = quad_ls
    cut: Optional[CutResult] = None
    fresh_cut: Optional[CutResult] = None

    state = OptState(
        k=0,
        phi_ls=phi_ls,
        mesh_ls=mesh_ls,
        mesh_el=mesh_el,
        chi_el=np.ones(mesh_el.n_elements),
        u_k=None,
        phi_el=None,
        vol0=vol0,
    )

    k = 0
    errcomp = 1.0 + config.ctol
    # with a per-element binary indicator the compliance repeats bitwise
    # whenever no centroid changes side between refits, so stagnation is only
    # trusted once the volume constraint is met
    feasible = False
    while (errcomp > config.ctol or not feasible) and k < config.kmax:
        cls_k = project_continuous(phi_ls)

        # state projection and material indicator
        if mesh_el is mesh_ls:
            phi_el = phi_ls
            chi = indicator_from_levelset(cls_k, mesh_el)
        else:
            phi_el = restrict_to_children(phi_ls, mesh_el, cut.parent_of)
            chi = indicator_from_levelset(
                cls_k, mesh_el, parent_of=cut.parent_of, cut=fresh_cut
            )

        mat_k = MaterialModel(
            E=config.E0, nu=config.nu0, gamma=config.gamma, chi=chi
        )
        system = ElasticitySystem(
            mesh_el,
            mat_k,
            sigma0_mu=config.sigma0_mu,
            sigma0_lambda=config.sigma0_lambda,
            quad=quad_el,
        )
        try:
            u = system.solve(system.load_vector(traction=traction))
        except Exception as exc:
            raise type(exc)(f"iteration {k}: {exc}") from exc
        l_k = compliance(u, traction, quad=quad_el)
        vol_k = solid_volume(mesh_el, chi)
        feasible = vol_k <= config.alpha * vol0 * (1.0 + 1e-2)

        try:
            bundle = topological_derivative(
                u, mat_k, config.alpha, vol0, config.p1, config.p2, vol_k
            )
        except StagnationError as exc:
            raise StagnationError(f"iteration {k}: {exc}") from exc

        source_el = bundle.source
        if mesh_el is mesh_ls:
            source_ls = source_el
        else:
            source_ls = project_to_parents(
                source_el, mesh_ls, cut.parent_of, quad=quad_el
            )

        phi_next = threshold(evolve_step(evo, phi_ls, source_ls))

        # record before the mesh refit so histories describe iteration k
        state.compliance_history.append(l_k)
        state.volume_history.append(vol_k)
        state.theta_history.append(bundle.theta)
        state.upsilon_history.append(bundle.upsilon)
        state.n_el_history.append(mesh_el.n_elements)
        state.normalization_residuals.append(normalization_residual(bundle))

        fresh_cut = None
        if k >= config.kstart and k % config.kcut == 0:
            cls_next = project_continuous(phi_next)
            cut = fit_mesh(mesh_ls, cls_next)
            mesh_el = cut.fitted_mesh
            quad_el = QuadratureRule(mesh_el)
            fresh_cut = cut
            state.fit_iterations.append(k)
            down = project_to_parents(
                restrict_to_children(phi_next, mesh_el, cut.parent_of),
                mesh_ls,
                cut.parent_of,
                quad=quad_el,
            )
            rt = np.abs(down.coeffs - phi_next.coeffs).max()
            state.roundtrip_errors.append(rt / max(np.abs(phi_next.coeffs).max(), 1e-30))

        phi_ls = phi_next
        if len(state.compliance_history) >= 3:
            ls = state.compliance_history
            errcomp = max(
                convergence_error(ls[-1], ls[-2]),
                convergence_error(ls[-2], ls[-3]),
            )
        state.errcomp_history.append(errcomp)

        k += 1
        state.k = k
        state.phi_ls = phi_ls
        state.mesh_el = mesh_el
        state.chi_el = chi
        state.u_k = u
        state.errcomp = errcomp
        if callback is not None:
            callback(state)

    # final projection onto the last elasticity mesh
    cls_f = project_continuous(phi_ls)
    if mesh_el is mesh_ls:
        state.phi_el = phi_ls
        state.chi_el = indicator_from_levelset(cls_f, mesh_el)
    else:
        state.phi_el = restrict_to_children(phi_ls, mesh_el, cut.parent_of)
        state.chi_el = indicator_from_levelset(
            cls_f, mesh_el, parent_of=cut.parent_of, cut=fresh_cut
        )
    state.converged = errcomp <= config.ctol and feasible
    return state
