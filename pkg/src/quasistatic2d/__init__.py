"""Quasi-static planar manipulation: pushing, grasping, and jamming as LCPs.

The package maps commanded manipulator velocities to object and manipulator
motion by assembling linear complementarity problems over contact forces.
Modeling the manipulator's velocity controller as finite feedback (gain
matrix B scaled by c) makes those problems solvable for every command,
including grasps and jams that have no solution under perfect velocity
control; the c = 0 limit is retained as a first-class model whose
infeasibility is itself an observable outcome.
"""

from .errors import (
    GeometryError,
    InfeasibleStartError,
    JamTerminationError,
    PivotLimitError,
    QuasistaticError,
    TheoremViolationError,
)
from .geometry import (
    Contact,
    ContactSet,
    ConvexPolygon,
    Disk,
    DistanceResult,
    Finger,
    HalfPlane,
    Manipulator,
    Point,
    Pose2,
    body_twist_transform,
    contact_candidates,
    contact_jacobians,
    rectangle,
    regular_polygon,
    signed_distance_pair,
)
from .lcp import (
    LcpProblem,
    LcpSolution,
    LcpStatus,
    SolverConfig,
    brute_force_solve,
    copositivity_certificate,
    dump_problem_json,
    solve_lemke,
    verify_solution,
)
from .model import (
    EllipsoidLimitSurface,
    FeedbackModel,
    FixedPointResult,
    GeneralLimitSurface,
    ModelSolution,
    VelocityLcp,
    assemble_velocity_lcp,
    check_force_bound,
    force_motion_matrix,
    internal_force_residual,
    nonellipsoid_fixed_point,
    solve_instantaneous,
)
from .scenes import (
    PiecewiseProfile,
    Scene,
    SceneFormatError,
    Segment,
    SemicircleProfile,
    SimDefaults,
    builtin_scene,
    load_scene_file,
    save_scene_file,
    scene_from_json,
    scene_hash,
    scene_to_json,
)
from .stepping import (
    PenetrationReport,
    StepResult,
    TimeStepConfig,
    Trajectory,
    assemble_timestep_lcp,
    check_penetration,
    simulate,
    step,
    trajectory_to_csv,
    trajectory_to_json,
)
from .studies import (
    ConvergenceReport,
    JammingReport,
    ReferenceInfeasibleError,
    run_convergence_study,
    run_jamming_study,
)
from .verification import run_suites

__version__ = "0.1.0"
