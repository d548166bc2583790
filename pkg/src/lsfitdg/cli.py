"""Command-line driver.

Subcommands: mesh-gen, fit, solve, optimize, validate-lshape.  Exit codes:
0 success, 2 usage error, 3 invalid configuration (the diagnostic names the
offending key), 1 any other failure.  The environment variable
LSFITDG_OUTPUT_DIR overrides the output directory of every subcommand.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .config import (
    _parse_domain,
    build_mesh,
    build_phi0,
    build_traction,
    parse_config,
)
from .elasticity import ElasticitySystem, MaterialModel, compliance, von_mises
from .errors import ConfigError
from .experiments import VALIDATION_GAMMAS, run_lshape_validation
from .levelset_fit import ContinuousLevelSet, fit_mesh, project_continuous
from .polymesh import (
    LShapeDomain,
    RectDomain,
    generate_voronoi_mesh,
    load_mesh,
    save_mesh,
)
from .topopt import indicator_from_levelset, optimize, solid_volume
from .vtkio import (
    write_cut_csv,
    write_history_csv,
    write_manifest,
    write_validation_csv,
    write_vtk,
)

_PHI_SPECS = """level-set spec grammar:
  plane A B C      A x + B y + C
  hole CX CY R     distance to the circle, negative inside
  corner NX NY     max(NX - x, NY - y), negative in the corner region x > NX, y > NY
"""


def _levelset_from_spec(mesh, spec: str) -> ContinuousLevelSet:
    t = spec.split()
    if t and t[0] == "plane" and len(t) == 4:
        a, b, c = (float(v) for v in t[1:])
        f = lambda p: a * p[:, 0] + b * p[:, 1] + c
    elif t and t[0] == "hole" and len(t) == 4:
        cx, cy, r = (float(v) for v in t[1:])
        f = lambda p: np.hypot(p[:, 0] - cx, p[:, 1] - cy) - r
    elif t and t[0] == "corner" and len(t) == 3:
        nx, ny = float(t[1]), float(t[2])
        f = lambda p: np.maximum(nx - p[:, 0], ny - p[:, 1])
    else:
        raise ConfigError(f"bad level-set spec {spec!r}", key="phi")
    return ContinuousLevelSet(mesh, f(mesh.vertices), f(mesh.centroids))


def _out_dir(arg: str) -> Path:
    d = Path(os.environ.get("LSFITDG_OUTPUT_DIR", arg))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _cmd_mesh_gen(args) -> int:
    spec = _parse_domain(args.domain)
    domain = RectDomain(*spec[1:]) if spec[0] == "rect" else LShapeDomain(*spec[1:])
    mesh = generate_voronoi_mesh(
        domain, args.n, lloyd_iters=args.lloyd, rng_seed=args.seed
    )
    save_mesh(mesh, args.output)
    print(f"wrote {args.output}: {mesh.n_elements} elements, {len(mesh.vertices)} vertices")
    return 0


def _cmd_fit(args) -> int:
    mesh = load_mesh(args.mesh)
    cls = _levelset_from_spec(mesh, args.phi)
    cut = fit_mesh(mesh, cls)
    save_mesh(cut.fitted_mesh, args.output)
    if args.cut_csv:
        write_cut_csv(args.cut_csv, cut)
    grew = cut.fitted_mesh.n_elements - mesh.n_elements
    print(
        f"wrote {args.output}: {cut.fitted_mesh.n_elements} elements "
        f"({grew:+d}), {len(cut.cut_segment_parent)} cut segments"
    )
    return 0


def _cmd_solve(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(cfg.output_dir)
    mesh = build_mesh(cfg)
    traction = build_traction(cfg)
    cls = project_continuous(build_phi0(cfg, mesh))
    chi = indicator_from_levelset(cls, mesh)
    material = MaterialModel(E=cfg.E0, nu=cfg.nu0, gamma=cfg.gamma, chi=chi)
    system = ElasticitySystem(
        mesh, material, sigma0_mu=cfg.sigma0_mu, sigma0_lambda=cfg.sigma0_lambda
    )
    u = system.solve(system.load_vector(traction=traction))
    l_val = compliance(u, traction, quad=system.quad)
    write_vtk(
        out / "solution.vtk",
        mesh,
        point_fields={"u": u},
        cell_fields={"chi": chi, "von_mises": von_mises(u, material)},
    )
    write_manifest(out / "run-manifest.json", cfg, compliance=l_val)
    print(f"compliance = {l_val!r}")
    return 0


def _cmd_optimize(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(cfg.output_dir)

    def dump(state):
        if cfg.dump_every and state.k % cfg.dump_every == 0:
            write_vtk(
                out / f"phi_{state.k:04d}.vtk",
                state.mesh_ls,
                point_fields={"phi": state.phi_ls},
            )

    state = optimize(cfg, callback=dump if cfg.dump_every else None)
    write_history_csv(out / "history.csv", state)
    save_mesh(state.mesh_el, out / "final_mesh.txt")
    fields = {"chi": state.chi_el}
    point_fields = {}
    if state.u_k is not None:
        point_fields["u"] = state.u_k
    if state.phi_el is not None:
        point_fields["phi"] = state.phi_el
    write_vtk(out / "final.vtk", state.mesh_el, point_fields=point_fields, cell_fields=fields)
    write_manifest(
        out / "run-manifest.json",
        cfg,
        iterations=state.k,
        converged=state.converged,
        compliance=state.compliance_history[-1],
        volume_fraction=state.volume_history[-1] / state.vol0,
    )
    print(
        f"k={state.k} converged={state.converged} "
        f"compliance={state.compliance_history[-1]!r} "
        f"volume_fraction={state.volume_history[-1] / state.vol0!r}"
    )
    return 0


def _cmd_validate_lshape(args) -> int:
    out = _out_dir(args.output_dir)
    gammas = tuple(float(g) for g in args.gammas.split(","))
    sizes = {"coarse": args.n_coarse, "fine": args.n_fine}
    if args.skip_fine:
        sizes.pop("fine")
    for label, n in sizes.items():
        run = run_lshape_validation(
            n, gammas=gammas, rng_seed=args.seed, lloyd_iters=args.lloyd
        )
        write_validation_csv(out / f"table_{label}.csv", gammas, run.table)
        print(f"{label}: {n} embedded elements, explicit compliance {run.l_explicit!r}")
        for i, g in enumerate(gammas):
            print(
                f"  gamma={g:g}  embedded {run.delta_embedded[i]:+.4f}%  "
                f"fitted {run.delta_fitted[i]:+.4f}%"
            )
    write_manifest(
        out / "run-manifest.json",
        None,
        gammas=list(gammas),
        sizes=sizes,
        seed=args.seed,
        lloyd_iters=args.lloyd,
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsfitdg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("mesh-gen", help="generate a relaxed Voronoi mesh")
    g.add_argument("--domain", required=True, help='e.g. "rect 0 1 0 1" or "lshape 0 10 0 10 4 4"')
    g.add_argument("--n", type=int, required=True, help="number of elements")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lloyd", type=int, default=100, help="relaxation iterations")
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=_cmd_mesh_gen)

    f = sub.add_parser(
        "fit",
        help="cut a mesh along a level-set zero isoline",
        epilog=_PHI_SPECS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    f.add_argument("--mesh", required=True)
    f.add_argument("--phi", required=True, help="level-set spec, see below")
    f.add_argument("--cut-csv", help="also write the isoline segments as CSV")
    f.add_argument("-o", "--output", required=True)
    f.set_defaults(func=_cmd_fit)

    s = sub.add_parser("solve", help="one elasticity solve from a config file")
    s.add_argument("config")
    s.set_defaults(func=_cmd_solve)

    o = sub.add_parser("optimize", help="run the optimization loop from a config file")
    o.add_argument("config")
    o.set_defaults(func=_cmd_optimize)

    v = sub.add_parser(
        "validate-lshape",
        help="embedded versus explicit L-bracket compliance study",
    )
    v.add_argument("--n-coarse", type=int, default=3000)
    v.add_argument("--n-fine", type=int, default=10000)
    v.add_argument("--skip-fine", action="store_true")
    v.add_argument("--gammas", default=",".join(f"{g:g}" for g in VALIDATION_GAMMAS))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--lloyd", type=int, default=100)
    v.add_argument("-o", "--output-dir", default="out")
    v.set_defaults(func=_cmd_validate_lshape)
    return p


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
