"""Lagrangian mean field games: Pontryagin shooting, the best-reply map on moment paths,
fixed points, their stability, and structural perturbation probes."""

from .best_reply import (BestReplyConfig, BestReplyOutput, MultiplicityReport, apply_best_reply,
                         best_reply_batch, multiplicity_scan)
from .config import ExperimentConfig
from .errors import (BestReplyError, DivergenceError, DomainError, LagMFGError, NoCandidateError,
                     PreconditionError, SolverError)
from .fixed_point import FixedPointRun, PicardConfig, StabilityEvidence, classify_stability, picard_iterate
from .games import EXAMPLES, build_example, no_solution_certificates
from .model import (ControlAffineDynamics, ControlProblem, GameSpec, MomentKernelSet, MomentPath, PlayerEnsemble,
                    RunningCost, TerminalCost, TimeGrid, check_derivatives)
from .oracle import scan_terminal_scalar, solve_direct
from .pmp import (OCPSolution, PMPTrajectory, ShootingConfig, integrate_pmp_backward, pointwise_control,
                  shoot, solve_ocp)
from .spectral import SpectrumReport, analytic_spectrum_barycenter, compute_spectrum, eigen_bvp_scan, jacobian_dphi
from .structural import Bump, StructuralProbeReport, perturb_spec, probe_structural_stability

__version__ = "0.1.0"
