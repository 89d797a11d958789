"""Sparse inverse Cholesky factors of kernel matrices by KL minimization,
with reverse-maximin ordering, supernodal aggregation and GP regression."""

from .factor import (FactorizationError, SparseFactor, factorize_aggregated, factorize_plain,
                     kl_column, kl_divergence_dense, kl_objective, log_likelihood)
from .kernels import FAMILIES, KernelError, KernelModel, assemble_block, evaluate
from .noise import (ConvergenceError, NoisyModel, build_noisy_model, ichol, noisy_log_likelihood,
                    solve_sigma)
from .ordering import (Ordering, PointSet, box_boundary, joint_ordering_prediction_first,
                       reverse_maximin, reverse_maximin_bruteforce)
from .predict import (PredictionResult, predict_first, predict_last_batched, predict_streaming,
                      predict_training_factor)
from .sparsity import (SparsityPattern, SupernodePartition, aggregate_supernodes, build_pattern,
                       implied_column_pattern)

__version__ = "0.1.0"
