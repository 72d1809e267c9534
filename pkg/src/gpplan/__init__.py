"""Continuous-time Gaussian process motion planning for planar robots.

Modules:
    gp_prior: Gauss-Markov trajectory priors and their sparse precision.
    gp_interp: GP interpolation and trajectory up-sampling.
    workspace: 2-D scenes, occupancy grids and signed distance fields.
    robot: planar arms and point robots with body-circle kinematics.
    obstacle_model: hinge obstacle costs and their Jacobians.
    gpmp: gradient-based planner with the constant-acceleration prior.
    gpmp2: factor-graph planner solved by Levenberg-Marquardt.
    igpmp2: incremental replanning on a chain Bayes tree.
    cli: command-line interface.
"""

from .errors import InvalidArgumentError, NumericalFailureError
from .gp_prior import GaussMarkovModel, PriorKind, Trajectory, TrajectoryPrior, build_prior
from .problem import PlannerParams, PlanningProblem, PlanResult, evaluate, load_problem
from .robot import PlanarArm, PointRobot
from .workspace import Box, Disk, Scene2D, SignedDistanceField2D, build_sdf, rasterize

__version__ = "0.1.0"

__all__ = [
    "InvalidArgumentError",
    "NumericalFailureError",
    "GaussMarkovModel",
    "PriorKind",
    "Trajectory",
    "TrajectoryPrior",
    "build_prior",
    "PlannerParams",
    "PlanningProblem",
    "PlanResult",
    "evaluate",
    "load_problem",
    "PlanarArm",
    "PointRobot",
    "Box",
    "Disk",
    "Scene2D",
    "SignedDistanceField2D",
    "build_sdf",
    "rasterize",
]
