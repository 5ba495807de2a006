"""Local entropy search: local Bayesian optimization over descent sequences."""

from .acquisition import (AcquisitionConfig, AcquisitionRound, build_round, les_score,
                          local_thompson_select, qles_score, select_incumbent, select_query)
from .descent import DescentSequence, OptimizerConfig, OptimizerKind, descend, discretize
from .gp import (BoxDomain, Dataset, GpHyperparams, GpModel, LengthscalePrior, NumericalError,
                 augmented_variance, fit, gaussian_entropy, kernel_eval, log_marginal_likelihood,
                 map_fit, predict)
from .pathwise import (FeatureBasis, PathEnsemble, SamplePath, draw_basis, draw_path, draw_paths,
                       eval_path, eval_path_grad, matheron_coefficients)
from .stopping import StoppingConfig, StoppingState, local_regret_samples, stop_decision

__version__ = "0.1.0"
