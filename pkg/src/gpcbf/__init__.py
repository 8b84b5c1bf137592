"""GP-based uncertainty-aware safety-critical control.

Learns model-error residuals of CLF/CBF derivatives with a structured
compound kernel, synthesizes min-norm controls through second-order cone
programs with confidence-bound chance constraints, and classifies
pointwise feasibility of the safety constraint exactly.
"""

from .dynamics import (ACC_NOMINAL, ACC_TRUE, AccParams, CertificateFunction,
                       PlantModel, acc_cbf, acc_clf, acc_plant,
                       certificate_rate, lie_derivatives, measure_residuals,
                       residual_truth)
from .feasibility import (FeasibilityReport, SocConstraint,
                          brute_force_feasible, classify,
                          necessary_condition, squared_constraint_matrix)
from .gp import AffinePrediction, AffineResidualGP, ResidualDataset
from .kernels import (AffineDotProductKernel, ConstantKernel,
                      SquaredExponentialKernel, augment_controls)
from .controllers import (ControlStep, build_clf_soc_constraint,
                          build_soc_constraint, cbf_clf_qp_step, clf_qp_step,
                          gp_cbf_clf_socp_step, gp_clf_socp_step)
from .simulation import (EpisodeConfig, EpisodeResult, RolloutLog,
                         episodic_learning, feasibility_map, integrate_step,
                         rollout)
from .socp import (SocConstraintRaw, SocProgram, SolveResult,
                   quadratic_objective_to_cone, solve)

__version__ = "0.1.0"

__all__ = [
    "ACC_NOMINAL", "ACC_TRUE", "AccParams", "CertificateFunction",
    "PlantModel", "acc_cbf", "acc_clf", "acc_plant", "certificate_rate",
    "lie_derivatives", "measure_residuals", "residual_truth",
    "FeasibilityReport", "SocConstraint", "brute_force_feasible", "classify",
    "necessary_condition", "squared_constraint_matrix",
    "AffinePrediction", "AffineResidualGP", "ResidualDataset",
    "AffineDotProductKernel", "ConstantKernel", "SquaredExponentialKernel",
    "augment_controls",
    "ControlStep", "build_clf_soc_constraint", "build_soc_constraint",
    "cbf_clf_qp_step", "clf_qp_step", "gp_cbf_clf_socp_step",
    "gp_clf_socp_step",
    "EpisodeConfig", "EpisodeResult", "RolloutLog", "episodic_learning",
    "feasibility_map", "integrate_step", "rollout",
    "SocConstraintRaw", "SocProgram", "SolveResult",
    "quadratic_objective_to_cone", "solve",
    "__version__",
]
