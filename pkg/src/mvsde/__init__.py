"""Particle-system integrators for McKean-Vlasov equations with
superlinear coefficients, plus the experiment harness built on them.
"""

from .brownian import BrownianDriver, IncrementStream, gaussian, increment
from .experiments import (
    ConfigError,
    ResultRow,
    StudyConfig,
    chaos_cmd,
    converge_cmd,
    corrupt_cmd,
    fit_rate,
    load_config,
    moments_cmd,
    read_csv,
    sort_rows,
    validate_cmd,
    write_csv,
)
from .measure import (
    EmpiricalMeasure,
    from_particles,
    moment,
    wasserstein2_1d,
    wasserstein2_bruteforce,
)
from .model import (
    AssumptionConstants,
    AssumptionReport,
    ModelSpec,
    check_assumptions,
    diffusion,
    drift,
    drift_jacobian,
    make_example_4_1,
    make_example_4_2,
    make_model,
    max_step,
    with_constants,
)
from .schemes import (
    NewtonError,
    NewtonResult,
    SchemeConfig,
    StepWorkspace,
    bem_step,
    em_step,
    newton_solve,
    pem_step,
    project,
)
from .simulator import (
    BLOWUP_THRESHOLD,
    BlowupError,
    RunOutput,
    SimConfig,
    SimulationError,
    coupled_pair_run,
    mean_square_distance,
    rmse,
    run,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionConstants",
    "AssumptionReport",
    "BLOWUP_THRESHOLD",
    "BlowupError",
    "BrownianDriver",
    "ConfigError",
    "EmpiricalMeasure",
    "IncrementStream",
    "ModelSpec",
    "NewtonError",
    "NewtonResult",
    "ResultRow",
    "RunOutput",
    "SchemeConfig",
    "SimConfig",
    "SimulationError",
    "StepWorkspace",
    "StudyConfig",
    "bem_step",
    "chaos_cmd",
    "check_assumptions",
    "converge_cmd",
    "corrupt_cmd",
    "coupled_pair_run",
    "diffusion",
    "drift",
    "drift_jacobian",
    "em_step",
    "fit_rate",
    "from_particles",
    "gaussian",
    "increment",
    "load_config",
    "make_example_4_1",
    "make_example_4_2",
    "make_model",
    "max_step",
    "mean_square_distance",
    "moment",
    "moments_cmd",
    "newton_solve",
    "pem_step",
    "project",
    "read_csv",
    "rmse",
    "run",
    "sort_rows",
    "validate_cmd",
    "wasserstein2_1d",
    "wasserstein2_bruteforce",
    "with_constants",
    "write_csv",
]
