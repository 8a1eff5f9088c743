"""Zero-shot cross-task preference transfer.

Aligns trajectory sets from two tasks with an entropic Gromov-Wasserstein
solver, transfers pairwise preference labels through the solved coupling,
and trains a distributional (mean + variance) reward model robustly from
the transferred, possibly noisy labels.
"""

from .errors import (
    CoverageError,
    DatasetFormatError,
    DegenerateInputError,
    DimensionError,
    NumericalError,
    PearlError,
    SamplingError,
    TrainingError,
)
from .label_transfer import (
    CpaTransferResult,
    PairMatchMatrix,
    PreferenceDataset,
    PreferenceRecord,
    binarize,
    compute_cpa_labels,
    cpa_accuracy,
    normalize_labels,
    pair_match,
    transfer_label,
)
from .ot_align import (
    GwConfig,
    GwReport,
    TransportPlan,
    constant_offset,
    entropic_gw,
    gw_cost_matrix,
    gw_objective,
    init_plan,
    sinkhorn,
)
from .reward_model import (
    GaussianRewardSeq,
    RewardNet,
    RrlConfig,
    bt_probability,
    ce_loss,
    entropy_reg_loss,
    forward,
    grad,
    init_reward_net,
    load_reward_net,
    predict_rewards,
    reparameterize,
    robust_ce_loss,
    save_reward_net,
    total_loss,
    train,
)
from .synthetic_tasks import (
    GroundTruthReward,
    TaskPair,
    TaskSpec,
    brute_force_align,
    brute_force_transfer,
    flip_labels,
    generate_task_pair,
    scripted_labels,
)
from .trajectory import (
    ClusterAssignment,
    DistanceMatrix,
    TrajectorySegment,
    TrajectorySet,
    flatten,
    kmeans_cluster,
    load_dataset,
    pairwise_distance,
    sample_balanced,
    save_dataset,
    unflatten,
)

__version__ = "0.1.0"
