"""Basin identification for black-box Markov processes.

Identifies dynamically distinct basins from trajectory simulation alone: a
siamese pair classifier estimates how well endpoints from two candidate
initializations can be told apart, and candidates whose held-out
discrimination risk stays high are merged into one basin.
"""

from .core import (
    MarkovKernel,
    TrajectoryBatch,
    batch_to_csv,
    load_batch,
    save_batch,
    simulate_batch,
    simulate_group,
    simulate_trajectory,
)
from .energies import (
    AugmentedEnergy,
    DoubleRing,
    Energy,
    GaussianMixture,
    Helix,
    LinearEmbedding,
    ScaledEnergy,
    augment_energy,
    energy_from_spec,
    make_gaussian_mixture_2d,
    make_isotropic_gmm,
    random_embedding,
)
from .errors import (
    BasinIdError,
    InsufficientPairsError,
    NumericFailureError,
    SimulationDivergedError,
)
from .metrics import ari, nmi
from .net import (
    MlpParams,
    PairSample,
    TrainConfig,
    bce_loss,
    estimate_pair_risk,
    init_params,
    siamese_forward,
    train,
)
from .oracle import (
    FiniteChain,
    NonPrimitiveBlockError,
    bayes_risk,
    chain_from_json,
    conditional_mixing_gap,
    exit_probability,
    quasi_stationary,
    verify_theorem1,
)
from .pipeline import (
    CandidateSet,
    DiscoveryConfig,
    NbiConfig,
    PartitionResult,
    build_pair_dataset,
    discover_candidates,
    indicate,
    partition_from_risk,
    refine,
)
from .rng import derive_seed, mix64
from .samplers import MalaKernel, PhaseRetrievalKernel, kernel_from_spec

__version__ = "0.1.0"
