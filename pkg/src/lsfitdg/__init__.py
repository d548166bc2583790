"""Level-set-fitted polygonal DG meshes, SIP elasticity, and
topological-derivative compliance optimization."""

from .config import (
    OptConfig,
    config_from_text,
    config_to_text,
    parse_config,
    traction_from_string,
)
from .dg_space import DGField, QuadratureRule, l2_project
from .elasticity import (
    ElasticitySystem,
    MaterialModel,
    compliance,
    compliance_percentage_error,
    lame_parameters,
    strain_field,
    von_mises,
)
from .errors import ConfigError, MeshValidationError, StagnationError
from .evolution import EvolutionSystem, evolve_step, threshold
from .experiments import (
    ValidationRun,
    build_validation_meshes,
    cantilever_config,
    lshape_config,
    lshape_levelset,
    run_lshape_validation,
)
from .levelset_fit import (
    ContinuousLevelSet,
    CutResult,
    fit_mesh,
    project_continuous,
    transfer_to_mesh,
)
from .polymesh import (
    BoundaryPredicate,
    LShapeDomain,
    PolyMesh,
    RectDomain,
    classify_boundary,
    generate_voronoi_mesh,
    load_mesh,
    make_grid_mesh,
    save_mesh,
)
from .topopt import (
    DerivativeBundle,
    ModifiedModuli,
    OptState,
    indicator_from_levelset,
    modified_moduli,
    optimize,
    restrict_to_children,
    project_to_parents,
    solid_component_count,
    solid_volume,
    topological_derivative,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
