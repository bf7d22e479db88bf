"""Task-agnostic exploration via k-NN state-entropy maximization.

Learns a single stochastic policy whose finite-horizon state distribution
has maximal entropy, estimated non-parametrically from nearest-neighbor
radii and optimized off-policy inside a KL trust region.
"""

__version__ = "0.1.0"

from .envs import EnvSpec, make_env
from .estimators import (EntropyReport, KlEstimate, entropy_knn,
                         entropy_knn_iw, iw_entropy_gradient, kl_knn_iw)
from .knn import NeighborIndex, NeighborResult, build_index, knn_query, sphere_volume
from .optimizer import (EpochRecord, TrainConfig, TrainLog, inner_step,
                        policy_spec_for, train)
from .policy import (GaussianPolicy, PolicySpec, load_checkpoint,
                     save_checkpoint, zero_mean_pretrain)
from .sampler import ParticleDataset, WeightVector, collect, log_ratios

__all__ = [
    "EnvSpec", "make_env",
    "EntropyReport", "KlEstimate", "entropy_knn", "entropy_knn_iw",
    "iw_entropy_gradient", "kl_knn_iw",
    "NeighborIndex", "NeighborResult", "build_index", "knn_query", "sphere_volume",
    "EpochRecord", "TrainConfig", "TrainLog", "inner_step",
    "policy_spec_for", "train",
    "GaussianPolicy", "PolicySpec", "load_checkpoint", "save_checkpoint",
    "zero_mean_pretrain",
    "ParticleDataset", "WeightVector", "collect", "log_ratios",
    "__version__",
]
