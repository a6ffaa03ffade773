"""Iterative forward-backward-sweep OPF for radial grids, with multiperiod
storage dispatch and sizing."""

from .grid import (
    BibcMatrix,
    Branch,
    Bus,
    NetworkError,
    RadialNetwork,
    build_bibc,
    cigre_lv,
    from_per_unit,
    incidence,
    load_grid,
    save_grid,
    to_per_unit,
    validate_network,
)
from .linearize import LinearGridModel, build_loss_planes, pwl_loss_eval, supporting_currents
from .lp import LpBuilder, LpProblem, LpSolution, solve_lp, warm_start, write_lp
from .opf import (
    ConvergenceError,
    DispatchSolution,
    GeneratorSpec,
    InfeasibleError,
    OperatingLimits,
    assemble_single_period,
    project_dispatch,
    run_fbs_opf,
)
from .powerflow import InjectionSet, PowerFlowError, PowerFlowResult, solve_power_flow
from .profiles import synth_profiles
from .scenario import Scenario, ScenarioError, load_scenario, save_scenario
from .storage import (
    Horizon,
    MultiperiodCase,
    SizingResult,
    StorageSpec,
    assemble_multiperiod,
    build_storage_dynamics,
    compute_revenue,
    placement_profile,
    solve_multiperiod,
    solve_sizing,
)
from .studies import ExperimentReport, benchmark_runtime, run_convergence_study, run_viability_study

__version__ = "0.1.0"
