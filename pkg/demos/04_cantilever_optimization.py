"""Small compliance-minimization run on a cantilever.

A rectangular beam is clamped on the left edge and loaded by a downward
traction on a strip of the right edge.  Starting from a level set with
one seeded hole, the optimizer evolves the level set by a reaction
diffusion step driven by the topological derivative of the compliance,
refitting the elasticity mesh to the zero isoline every few iterations.

This is a reduced-size version of acceptance benchmark; the full runs
use 1000 and 2000 elements (see `lsfitdg optimize`).

Run:  python3 demos/04_cantilever_optimization.py
"""

from lsfitdg import cantilever_config, optimize, solid_component_count
from lsfitdg.vtkio import write_history_csv, write_vtk

cfg = cantilever_config(n_elements=400, rng_seed=3, kmax=120)


def report(state):
    if state.k % 10 == 0:
        print(f"k={state.k:3d}  compliance={state.compliance_history[-1]:9.4f}  "
              f"volume={100 * state.volume_history[-1] / state.vol0:5.1f}%  "
              f"elements={state.mesh_el.n_elements}")


state = optimize(cfg, callback=report)

vf = state.volume_history[-1] / state.vol0
print()
print(f"{'converged' if state.converged else 'stopped'} after {state.k} iterations: "
      f"compliance {state.compliance_history[-1]:.4f} at {100 * vf:.2f}% volume")
print(f"solid components: {solid_component_count(state.mesh_el, state.chi_el)}")
print(f"largest fitted mesh: {max(state.n_el_history)} elements "
      f"(level-set mesh has {state.mesh_ls.n_elements})")

write_history_csv("demo04_history.csv", state)
write_vtk(
    "demo04_final.vtk",
    state.mesh_el,
    point_fields={"u": state.u_k},
    cell_fields={"chi": state.chi_el.astype(float)},
)
print("wrote demo04_history.csv, demo04_final.vtk")
