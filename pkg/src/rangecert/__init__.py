"""Continuous-time trajectory estimation from anchor range measurements,
with a linear-time certificate of global optimality.

The pipeline: load or simulate a dataset (:mod:`rangecert.problem`,
:mod:`rangecert.sim`), pick a motion prior (:mod:`rangecert.prior`), run the
sparse Gauss-Newton solver with restarts (:mod:`rangecert.solver`), and
check each stationary point against the closed-form dual certificate
(:mod:`rangecert.cert`). The :mod:`rangecert.cli` module ties the stages
into the ``rangecert`` command.
"""

from .cert import (
    CERTIFIED,
    MARGINAL,
    NOT_CERTIFIED,
    CertificateReport,
    DualVariables,
    PsdResult,
    certify,
    compute_duals,
    dense_min_eig_oracle,
    psd_arrowhead,
)
from .lift import LiftedMatrices, LiftedVector, build_matrices
from .model import TrajectoryEstimate, data_cost, total_cost
from .prior import (
    MotionPrior,
    assemble_R,
    interval_covariance,
    prior_energy,
    transition,
)
from .problem import (
    AnchorSet,
    DatasetError,
    MeasurementSet,
    NoiseModel,
    ProblemData,
    covariance_for,
    load_problem,
    save_problem,
)
from .sim import SimConfig, place_anchors, sample_trajectory, simulate, synthesize_measurements
from .solver import (
    BEST_COST,
    SUBOPTIMAL,
    RankDeficiencyError,
    SolveConfig,
    gn_step,
    label_by_best_cost,
    multi_restart,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorSet",
    "BEST_COST",
    "CERTIFIED",
    "CertificateReport",
    "DatasetError",
    "DualVariables",
    "LiftedMatrices",
    "LiftedVector",
    "MARGINAL",
    "MeasurementSet",
    "MotionPrior",
    "NOT_CERTIFIED",
    "NoiseModel",
    "ProblemData",
    "PsdResult",
    "RankDeficiencyError",
    "SUBOPTIMAL",
    "SimConfig",
    "SolveConfig",
    "TrajectoryEstimate",
    "assemble_R",
    "build_matrices",
    "certify",
    "compute_duals",
    "covariance_for",
    "data_cost",
    "dense_min_eig_oracle",
    "gn_step",
    "interval_covariance",
    "label_by_best_cost",
    "load_problem",
    "multi_restart",
    "place_anchors",
    "prior_energy",
    "psd_arrowhead",
    "sample_trajectory",
    "save_problem",
    "simulate",
    "solve",
    "synthesize_measurements",
    "total_cost",
    "transition",
    "__version__",
]
