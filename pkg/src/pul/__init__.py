"""Progressive unsupervised learning for transferring embeddings to an unlabelled domain.

The loop alternates k-means clustering of the current embeddings,
selection of samples close to their cluster center, and fine-tuning of
the embedder on the selected pseudo-labelled samples.
"""

__version__ = "0.1.0"

from .clustering import kmeans, kmeans_objective, kmeans_pp_init
from .embedder import (GradientSet, classify, embed, fine_tune, forward, init_model,
                       loss_and_grad, sgd_update)
from .errors import (EmptyTrainingSetError, FormatError, HistoryLockedError,
                     InternalInvariantError, InvalidInputError, PulError,
                     UnsupportedVersionError)
from .evaluation import EvalResult, average_precision, evaluate, extract_features, rank_gallery
from .loop import (PulResult, check_convergence, init_original_model, run_iteration, run_pul,
                   run_semi_supervised)
from .selection import l2_normalize, select_center_features, select_reliable, selected_fraction
from .synthetic import SyntheticSpec, benchmark_config, generate_synthetic, split_labeled
from .types import (ClusterState, Dataset, EmbedModel, IterationRecord, PulConfig,
                    PulRunState, SelectionMask, SGDConfig, ConvergenceConfig)
