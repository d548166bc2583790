"""End-to-end acceptance gate.

One test per criterion; each prints a single PASS/FAIL line and the lines are
echoed after the summary (see conftest).  The two optimization benchmarks and
the two-resolution validation study run once and are shared across criteria.
"""

import time

import numpy as np
import pytest
import sympy as sp

import conftest
from lsfitdg.config import build_traction
from lsfitdg.dg_space import DGField, QuadratureRule, l2_project
from lsfitdg.elasticity import (
    ElasticitySystem,
    MaterialModel,
    compliance,
    lame_parameters,
)
from lsfitdg.evolution import (
    EvolutionSystem,
    evolve_step,
    threshold,
    vertex_trace_range,
)
from lsfitdg.experiments import (
    cantilever_config,
    lshape_config,
    run_lshape_validation,
)
from lsfitdg.levelset_fit import ContinuousLevelSet, fit_mesh, transfer_to_mesh
from lsfitdg.polymesh import (
    LShapeDomain,
    Marker,
    RectDomain,
    generate_voronoi_mesh,
    make_grid_mesh,
)
from lsfitdg.topopt import (
    modified_moduli,
    optimize,
    solid_component_count,
)

CANTILEVER_SEED = 17
LSHAPE_SEED = 17


def _record(n, ok, detail):
    line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _mark_all(mesh, marker):
    m = np.where(mesh.boundary_mask, int(marker), int(Marker.INTERIOR))
    return mesh.with_markers(m.astype(np.int64))


# -- shared runs -------------------------------------------------------------


@pytest.fixture(scope="module")
def cantilever_run():
    cfg = cantilever_config(rng_seed=CANTILEVER_SEED)
    t0 = time.perf_counter()
    state = optimize(cfg)
    return cfg, state, time.perf_counter() - t0


@pytest.fixture(scope="module")
def lshape_run():
    cfg = lshape_config(rng_seed=LSHAPE_SEED)
    t0 = time.perf_counter()
    state = optimize(cfg)
    return cfg, state, time.perf_counter() - t0


@pytest.fixture(scope="module")
def validation_coarse():
    return run_lshape_validation(3000, rng_seed=0)


@pytest.fixture(scope="module")
def validation_fine():
    return run_lshape_validation(10000, rng_seed=0)


def _full_solid_compliance(cfg, mesh):
    traction = build_traction(cfg)
    sys = ElasticitySystem(
        mesh,
        MaterialModel(E=cfg.E0, nu=cfg.nu0),
        sigma0_mu=cfg.sigma0_mu,
        sigma0_lambda=cfg.sigma0_lambda,
    )
    u = sys.solve(sys.load_vector(traction=traction))
    return compliance(u, traction, quad=sys.quad)


# -- criteria ----------------------------------------------------------------


def test_criterion_1_validation_study(validation_coarse, validation_fine):
    runs = {"coarse": validation_coarse, "fine": validation_fine}
    plateau, ordering, band, runtime = {}, True, True, 0.0
    for label, run in runs.items():
        g = np.asarray(run.gammas)
        fit = np.asarray(run.delta_fitted)
        emb = np.asarray(run.delta_embedded)
        i8 = int(np.argmin(np.abs(g - 1e-8)))
        i12 = int(np.argmin(np.abs(g - 1e-12)))
        plateau[label] = abs(fit[i8] - fit[i12])
        small = g <= 1e-6
        ordering &= bool(np.all(np.abs(fit[small]) < np.abs(emb[small])))
        runtime = max(runtime, max(run.seconds_per_gamma))
    fit_c = np.asarray(validation_coarse.delta_fitted)
    small_c = np.asarray(validation_coarse.gammas) <= 1e-6
    band = bool(np.all((fit_c[small_c] >= -2.0) & (fit_c[small_c] <= 0.0)))
    ok = (
        plateau["coarse"] < 0.01
        and plateau["fine"] < 0.01
        and ordering
        and band
        and runtime < 300.0
    )
    deltas = ", ".join(f"{v:+.4f}" for v in fit_c)
    _record(
        1,
        ok,
        f"fitted coarse deltas [{deltas}]%, plateau "
        f"{plateau['coarse']:.2e}/{plateau['fine']:.2e} pp, fitted below "
        f"non-fitted at small gamma: {ordering}, max {runtime:.0f}s per gamma",
    )


def test_criterion_2_cantilever(cantilever_run):
    cfg, state, elapsed = cantilever_run
    l_final = state.compliance_history[-1]
    vf = state.volume_history[-1] / state.vol0
    ncomp = solid_component_count(state.mesh_el, state.chi_el)
    full = _full_solid_compliance(cfg, state.mesh_ls)
    target, tol = 1.2021, 0.15
    in_band = abs(l_final - target) / target <= tol
    ok = state.converged and vf <= 0.501 and ncomp == 1 and in_band and elapsed < 900
    _record(
        2,
        ok,
        f"converged={state.converged} k={state.k} ({elapsed:.0f}s), volume "
        f"fraction {vf:.4f}, solid components {ncomp}, compliance "
        f"{l_final:.4f} vs band {target}+-15% (full-solid reference "
        f"{full:.4f}; the band sits below it, see notes/decisions)",
    )


def test_criterion_3_lshape(lshape_run):
    cfg, state, elapsed = lshape_run
    l_final = state.compliance_history[-1]
    vf = state.volume_history[-1] / state.vol0
    n_ls = state.mesh_ls.n_elements
    growth = max(state.n_el_history) / n_ls - 1.0
    target, tol = 219.3, 0.15
    in_band = abs(l_final - target) / target <= tol
    ok = state.converged and vf <= 0.301 and in_band and growth <= 0.25
    _record(
        3,
        ok,
        f"converged={state.converged} k={state.k} ({elapsed:.0f}s), volume "
        f"fraction {vf:.4f}, compliance {l_final:.4f} vs band {target}+-15%, "
        f"mesh growth {100 * growth:.1f}%",
    )


def _random_levelset(mesh, rng):
    a, b = rng.uniform(-2, 2, size=2)
    c = rng.uniform(-0.5, 0.5)
    k1, k2 = rng.integers(1, 4, size=2)
    s1, s2 = rng.uniform(0, 2 * np.pi, size=2)
    d = rng.uniform(-1, 1)
    lo = mesh.vertices.min(axis=0)
    span = mesh.vertices.max(axis=0) - lo

    def f(p):
        q = (p - lo) / span
        return (
            a * q[:, 0]
            + b * q[:, 1]
            + c
            + d * np.sin(np.pi * k1 * q[:, 0] + s1) * np.cos(np.pi * k2 * q[:, 1] + s2)
        )

    return ContinuousLevelSet(mesh, f(mesh.vertices), f(mesh.centroids))


def test_criterion_4_fitting_properties():
    rng = np.random.default_rng(2024)
    meshes = [
        generate_voronoi_mesh(RectDomain(0, 1, 0, 1), 60 + 15 * s, lloyd_iters=30, rng_seed=s)
        for s in range(4)
    ]
    meshes += [
        generate_voronoi_mesh(RectDomain(0, 3, 0, 1), 90, lloyd_iters=30, rng_seed=21),
        generate_voronoi_mesh(LShapeDomain(0, 1, 0, 1, 0.4, 0.6), 80, lloyd_iters=30, rng_seed=22),
        generate_voronoi_mesh(LShapeDomain(0, 10, 0, 10, 4, 4), 120, lloyd_iters=30, rng_seed=23),
        make_grid_mesh(7, 7),
        make_grid_mesh(9, 5),
        generate_voronoi_mesh(RectDomain(-1, 1, -1, 1), 100, lloyd_iters=30, rng_seed=24),
    ]
    n_pairs, n_cut, worst_area, worst_purity = 0, 0, 0.0, 0.0
    for mesh in meshes:
        quads = {}
        for _ in range(20):
            cls = _random_levelset(mesh, rng)
            cut = fit_mesh(mesh, cls)
            fm = cut.fitted_mesh
            n_pairs += 1
            n_cut += int(cut.n_cut_parents > 0)
            # area conservation per parent
            sums = np.bincount(cut.parent_of, weights=fm.areas, minlength=mesh.n_elements)
            rel = np.max(np.abs(sums - mesh.areas) / mesh.areas)
            worst_area = max(worst_area, rel)
            assert rel <= 1e-12
            # one sign per child at its quadrature points, up to the snap width
            q = QuadratureRule(fm)
            vals = cls.eval(cut.parent_of[q.point_elem], q.points)
            slack = float(np.min(vals * cut.child_sign[q.point_elem]))
            worst_purity = max(worst_purity, -slack)
            assert slack >= -cls.eps_val
            # refitting inserts nothing
            again = fit_mesh(fm, transfer_to_mesh(cls, cut))
            assert again.n_cut_parents == 0
            assert again.fitted_mesh.n_faces == fm.n_faces
            # interior isoline vertices have even segment degree
            if len(cut.cut_segment_vertices):
                on_b = set(fm.face_vertices[fm.boundary_mask].ravel().tolist())
                deg = np.bincount(cut.cut_segment_vertices.ravel())
                assert all(
                    deg[v] % 2 == 0 for v in np.nonzero(deg)[0] if v not in on_b
                )
    ok = n_pairs == 200
    _record(
        4,
        ok,
        f"{n_pairs} pairs ({n_cut} with cuts), worst parent-area defect "
        f"{worst_area:.2e}, worst sign slack {worst_purity:.2e}",
    )


def test_criterion_5_elasticity(rect_voronoi_small):
    import sympy

    mD = _mark_all(rect_voronoi_small, Marker.DIRICHLET)
    s = ElasticitySystem(mD, MaterialModel(E=200.0, nu=0.3))
    # affine displacement is in the space, so the SIP solution reproduces it
    gD = lambda p: np.column_stack(
        [0.3 * p[:, 0] + 0.7 * p[:, 1] + 1.0, -0.2 * p[:, 0] + 0.4 * p[:, 1] - 0.5]
    )
    u = s.solve(s.load_vector(dirichlet=gD))
    q = s.quad
    patch_err = float(np.abs(u.eval(q.point_elem, q.points) - gD(q.points)).max())

    sym = float(abs(s.matrix - s.matrix.T).max() / abs(s.matrix).max())

    x, y = sympy.symbols("x y")
    lam, mu = lame_parameters(10.0, 0.3)
    u1 = sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y)
    u2 = x * (1 - x) * y * (1 - y)
    exy = (sympy.diff(u1, y) + sympy.diff(u2, x)) / 2
    eps = sympy.Matrix([[sympy.diff(u1, x), exy], [exy, sympy.diff(u2, y)]])
    sig = 2 * mu * eps + lam * (eps[0, 0] + eps[1, 1]) * sympy.eye(2)
    f1 = -(sympy.diff(sig[0, 0], x) + sympy.diff(sig[0, 1], y))
    f2 = -(sympy.diff(sig[1, 0], x) + sympy.diff(sig[1, 1], y))
    fnum = sympy.lambdify((x, y), (f1, f2), "numpy")
    unum = sympy.lambdify((x, y), (u1, u2), "numpy")
    errs = []
    for nn in (8, 16, 32):
        m = _mark_all(make_grid_mesh(nn, nn), Marker.DIRICHLET)
        sys_n = ElasticitySystem(m, MaterialModel(E=10.0, nu=0.3))
        F = sys_n.load_vector(
            dirichlet=lambda p: np.column_stack(unum(p[:, 0], p[:, 1])),
            body_force=lambda p: np.column_stack(fnum(p[:, 0], p[:, 1])),
        )
        uh = sys_n.solve(F)
        qn = sys_n.quad
        d = uh.eval(qn.point_elem, qn.points) - np.column_stack(
            unum(qn.points[:, 0], qn.points[:, 1])
        )
        errs.append(float(np.sqrt(np.sum(qn.weights[:, None] * d**2))))
    rate = float(np.log2(errs[1] / errs[2]))

    # work identity with pure traction load
    mC = rect_voronoi_small
    markers = np.full(mC.n_faces, int(Marker.INTERIOR), dtype=np.int64)
    bnd = np.nonzero(mC.boundary_mask)[0]
    mid = mC.face_midpoints[bnd]
    markers[bnd] = int(Marker.FREE)
    markers[bnd[np.abs(mid[:, 0]) < 1e-9]] = int(Marker.DIRICHLET)
    markers[bnd[np.abs(mid[:, 0] - 1.0) < 1e-9]] = int(Marker.NEUMANN)
    mC = mC.with_markers(markers)
    sC = ElasticitySystem(mC, MaterialModel(E=100.0, nu=0.3))
    g = lambda p: np.column_stack([np.zeros(len(p)), -np.ones(len(p))])
    uC = sC.solve(sC.load_vector(traction=g))
    U = uC.coeffs.ravel()
    l_direct = compliance(uC, g, quad=sC.quad)
    work_err = abs(l_direct - float(U @ (sC.matrix @ U))) / abs(l_direct)

    ok = patch_err <= 1e-9 and rate >= 1.8 and sym <= 1e-12 and work_err <= 1e-9
    _record(
        5,
        ok,
        f"patch {patch_err:.2e}, L2 rate {rate:.3f}, symmetry {sym:.2e}, "
        f"work identity {work_err:.2e}",
    )


def test_criterion_6_evolution():
    mesh = make_grid_mesh(8, 8)
    sys_e = EvolutionSystem(mesh, tau=1.5, dt=0.05)
    const = DGField.zeros(mesh, ncomp=1)
    const.coeffs[:, 0, 0] = 0.75
    steady = evolve_step(sys_e, const)
    const_err = float(np.abs(steady.coeffs - const.coeffs).max())

    rng = np.random.default_rng(7)
    M = sys_e.mass
    dissipated = True
    for _ in range(50):
        phi = DGField(mesh, rng.standard_normal((mesh.n_elements, 1, 3)))
        out = evolve_step(sys_e, phi)
        n0 = phi.coeffs.ravel() @ (M @ phi.coeffs.ravel())
        n1 = out.coeffs.ravel() @ (M @ out.coeffs.ravel())
        dissipated &= bool(n1 <= n0 * (1.0 + 1e-12))

    lo_all, hi_all = 0.0, 0.0
    for _ in range(50):
        phi = DGField(mesh, 3.0 * rng.standard_normal((mesh.n_elements, 1, 3)))
        lo, hi = vertex_trace_range(threshold(phi))
        lo_all = min(lo_all, lo)
        hi_all = max(hi_all, hi)

    ok = (
        const_err <= 1e-12
        and dissipated
        and lo_all >= -1.0 - 1e-12
        and hi_all <= 1.0 + 1e-12
    )
    _record(
        6,
        ok,
        f"constant drift {const_err:.2e}, dissipation on 50 fields: "
        f"{dissipated}, trace range [{lo_all:.15f}, {hi_all:.15f}]",
    )


def test_criterion_7_derivative(cantilever_run, lshape_run):
    mm = modified_moduli(1.0, 0.3)
    E_bar = sp.Rational(2240, 3289)
    nu_bar = sp.Rational(37, 69)
    oracle_err = max(
        abs(mm.E_bar - float(E_bar)), abs(mm.nu_bar - float(nu_bar))
    )
    res = max(
        max(cantilever_run[1].normalization_residuals),
        max(lshape_run[1].normalization_residuals),
    )
    ok = oracle_err <= 1e-12 and res <= 1e-10
    _record(
        7,
        ok,
        f"moduli oracle error {oracle_err:.2e} (E_bar {mm.E_bar:.6f}, nu_bar "
        f"{mm.nu_bar:.6f}), worst normalization residual {res:.2e} over "
        f"{len(cantilever_run[1].normalization_residuals)}+"
        f"{len(lshape_run[1].normalization_residuals)} iterations",
    )


def test_criterion_8_lossless_projection(cantilever_run, lshape_run):
    errs = cantilever_run[1].roundtrip_errors + lshape_run[1].roundtrip_errors
    worst = max(errs) if errs else 0.0
    ok = bool(errs) and worst <= 1e-12
    _record(
        8,
        ok,
        f"round-trip coefficient error {worst:.2e} over {len(errs)} fitted meshes",
    )
