"""Distributional reward model and its robust preference-training objective.

The network maps each (state, action) step to a Gaussian reward: a shared
two-layer trunk produces an embedding whose first half feeds a mean branch
and whose second half feeds a log-variance branch. Training combines the
usual preference cross-entropy on mean rewards with the same loss averaged
over reparameterized samples (which penalizes noisy labels less brutally),
plus a hinge that keeps the per-step Gaussian entropy from collapsing.

Loss values are computed in numpy; gradients come from a torch float64
mirror of the same formulas, which the test suite checks against central
finite differences of the numpy path — two independent routes to the same
numbers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import DimensionError, NumericalError, TrainingError
from .label_transfer import PreferenceDataset
from .trajectory import TrajectorySegment, TrajectorySet

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0
LOG_CLAMP = 1e-12

_PARAM_NAMES = (
    "trunk_w1", "trunk_b1", "trunk_w2", "trunk_b2",
    "mean_w1", "mean_b1", "mean_w2", "mean_b2",
    "var_w1", "var_b1", "var_w2", "var_b2",
)


@dataclass
class RewardNet:
    """Parameter container: trunk plus mean/log-variance branches."""

    params: dict[str, np.ndarray]
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        missing = [name for name in _PARAM_NAMES if name not in self.params]
        if missing:
            raise ValueError(f"missing parameters: {missing}")
        for name in _PARAM_NAMES:
            self.params[name] = np.asarray(self.params[name], dtype=np.float64)
            if not np.isfinite(self.params[name]).all():
                raise NumericalError(f"parameter {name} contains non-finite values")
        if self.embed_dim % 2 != 0:
            raise ValueError("embedding dimension must be even")

    @property
    def input_dim(self) -> int:
        return self.params["trunk_w1"].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.params["trunk_w1"].shape[1]

    @property
    def embed_dim(self) -> int:
        return self.params["trunk_w2"].shape[1]

    def copy(self) -> "RewardNet":
        return RewardNet(
            params={k: v.copy() for k, v in self.params.items()},
            activation=self.activation,
        )


@dataclass
class GaussianRewardSeq:
    """Per-step reward means and variances for one segment."""

    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.means.shape != self.variances.shape:
            raise DimensionError("means and variances must have equal length")
        if (self.variances <= 0).any():
            raise NumericalError("variances must be strictly positive")


@dataclass
class RrlConfig:
    """Robust-training knobs.

    robust_weight scales the sampled cross-entropy term, reg_weight scales
    the entropy hinge, entropy_margin is the hinge target in nats, and
    num_samples is how many reparameterized draws average into the robust
    term. embed_dim/hidden_dim/activation size the network the pipeline
    builds.
    """

    robust_weight: float = 0.1
    reg_weight: float = 0.01
    entropy_margin: float = 100.0
    num_samples: int = 5
    learning_rate: float = 1e-4
    batch_size: int = 256
    epochs: int = 50
    weight_decay: float = 1e-4
    seed: int = 0
    embed_dim: int = 8
    hidden_dim: int = 16
    activation: str = "tanh"

    def __post_init__(self) -> None:
        if self.robust_weight < 0 or self.reg_weight < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self) -> dict:
        return {
            "robust_weight": self.robust_weight,
            "reg_weight": self.reg_weight,
            "entropy_margin": self.entropy_margin,
            "num_samples": self.num_samples,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "activation": self.activation,
        }


def init_reward_net(
    state_dim: int,
    action_dim: int,
    embed_dim: int = 8,
    hidden_dim: int = 16,
    seed: int = 0,
    activation: str = "tanh",
) -> RewardNet:
    """Random net: weights scaled by 1/sqrt(fan_in), biases zero."""
    if embed_dim % 2 != 0 or embed_dim < 2:
        raise ValueError("embed_dim must be an even integer >= 2")
    rng = np.random.default_rng(seed)
    half = embed_dim // 2
    in_dim = state_dim + action_dim

    def layer(fan_in: int, fan_out: int) -> np.ndarray:
        return rng.normal(scale=1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))

    params = {
        "trunk_w1": layer(in_dim, hidden_dim),
        "trunk_b1": np.zeros(hidden_dim),
        "trunk_w2": layer(hidden_dim, embed_dim),
        "trunk_b2": np.zeros(embed_dim),
        "mean_w1": layer(half, half),
        "mean_b1": np.zeros(half),
        "mean_w2": layer(half, 1),
        "mean_b2": np.zeros(1),
        "var_w1": layer(half, half),
        "var_b1": np.zeros(half),
        "var_w2": layer(half, 1),
        "var_b2": np.zeros(1),
    }
    return RewardNet(params=params, activation=activation)


def _act_np(name: str, x: np.ndarray) -> np.ndarray:
    return np.tanh(x) if name == "tanh" else np.maximum(x, 0.0)


def segment_input(segment: TrajectorySegment) -> np.ndarray:
    """(H, d_s + d_a) matrix of per-step network inputs."""
    return np.hstack([segment.states, segment.actions])


def forward(net: RewardNet, segment: TrajectorySegment) -> GaussianRewardSeq:
    """Per-step Gaussian rewards; every timestep is evaluated independently."""
    x = segment_input(segment)
    if x.shape[1] != net.input_dim:
        raise DimensionError(
            f"segment provides {x.shape[1]}-dim inputs, net expects {net.input_dim}"
        )
    p = net.params
    hidden = _act_np(net.activation, x @ p["trunk_w1"] + p["trunk_b1"])
    emb = hidden @ p["trunk_w2"] + p["trunk_b2"]
    half = net.embed_dim // 2
    mean_h = _act_np(net.activation, emb[:, :half] @ p["mean_w1"] + p["mean_b1"])
    means = (mean_h @ p["mean_w2"] + p["mean_b2"])[:, 0]
    var_h = _act_np(net.activation, emb[:, half:] @ p["var_w1"] + p["var_b1"])
    logvar = (var_h @ p["var_w2"] + p["var_b2"])[:, 0]
    variances = np.exp(np.clip(logvar, LOGVAR_MIN, LOGVAR_MAX))
    return GaussianRewardSeq(means=means, variances=variances)


def bt_probability(rewards0: np.ndarray, rewards1: np.ndarray) -> float:
    """Probability the first segment is preferred, from summed rewards.

    exp(sum0) / (exp(sum0) + exp(sum1)), computed with the larger sum
    subtracted first so extreme reward gaps cannot overflow.
    """
    s0 = float(np.sum(rewards0))
    s1 = float(np.sum(rewards1))
    if not (math.isfinite(s0) and math.isfinite(s1)):
        raise NumericalError("reward sums must be finite")
    m = max(s0, s1)
    e0 = math.exp(s0 - m)
    e1 = math.exp(s1 - m)
    return e0 / (e0 + e1)


def ce_loss(p: float, z: float) -> float:
    """Preference cross-entropy; z = 0 means the first segment is preferred."""
    return -((1.0 - z) * math.log(max(p, LOG_CLAMP)) + z * math.log(max(1.0 - p, LOG_CLAMP)))


def reparameterize(means: np.ndarray, variances: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Pathwise Gaussian sample: mean + std * noise, elementwise."""
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if means.shape != variances.shape or means.shape != eps.shape:
        raise DimensionError("means, variances, and eps must share a shape")
    return means + np.sqrt(variances) * eps


def entropy_reg_loss(variances: np.ndarray, entropy_margin: float) -> float:
    """Mean hinge on per-step Gaussian entropy: max(0, margin - entropy)."""
    variances = np.asarray(variances, dtype=np.float64)
    if (variances <= 0).any():
        raise ValueError("variances must be strictly positive")
    entropy = 0.5 * np.log(2.0 * np.pi * np.e * variances)
    return float(np.maximum(0.0, entropy_margin - entropy).mean())


def gaussian_entropy(variances: np.ndarray) -> np.ndarray:
    """Per-step differential entropy of the emitted Gaussians, in nats."""
    return 0.5 * np.log(2.0 * np.pi * np.e * np.asarray(variances, dtype=np.float64))


def _draw_pair_noise(
    rng: np.random.Generator, num_samples: int, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """One (num_samples, H) standard-normal block per segment, in a fixed
    order — every loss/gradient path must consume the generator identically."""
    eps0 = rng.standard_normal((num_samples, horizon))
    eps1 = rng.standard_normal((num_samples, horizon))
    return eps0, eps1


def _robust_terms(
    seq0: GaussianRewardSeq,
    seq1: GaussianRewardSeq,
    z: float,
    eps0: np.ndarray,
    eps1: np.ndarray,
) -> tuple[float, float]:
    """(cross-entropy on means, sampled cross-entropy averaged over draws)."""
    mean_term = ce_loss(bt_probability(seq0.means, seq1.means), z)
    sampled = 0.0
    for k in range(eps0.shape[0]):
        beta0 = reparameterize(seq0.means, seq0.variances, eps0[k])
        beta1 = reparameterize(seq1.means, seq1.variances, eps1[k])
        sampled += ce_loss(bt_probability(beta0, beta1), z)
    return mean_term, sampled / eps0.shape[0]


def robust_ce_loss(
    net: RewardNet,
    pair: tuple[TrajectorySegment, TrajectorySegment],
    z: float,
    cfg: RrlConfig,
    rng: np.random.Generator,
) -> float:
    """Mean-path cross-entropy plus the weighted sampled term for one pair.

    Noise is always drawn (even at robust_weight 0) so the generator advances
    identically across configurations; with robust_weight 0 the result equals
    the plain mean-path cross-entropy exactly.
    """
    seq0 = forward(net, pair[0])
    seq1 = forward(net, pair[1])
    eps0, eps1 = _draw_pair_noise(rng, cfg.num_samples, pair[0].length)
    mean_term, sampled = _robust_terms(seq0, seq1, z, eps0, eps1)
    return mean_term + cfg.robust_weight * sampled


def total_loss(
    net: RewardNet,
    batch: list[tuple[TrajectorySegment, TrajectorySegment, float]],
    cfg: RrlConfig,
    rng: np.random.Generator,
) -> float:
    """Batch objective: mean robust pair loss + reg_weight * entropy hinge.

    Consumes the generator in batch order, one noise block per segment per
    pair — the same contract as grad, so the two see identical samples when
    given identically seeded generators.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    robust_total = 0.0
    all_vars: list[np.ndarray] = []
    for seg0, seg1, z in batch:
        seq0 = forward(net, seg0)
        seq1 = forward(net, seg1)
        eps0, eps1 = _draw_pair_noise(rng, cfg.num_samples, seg0.length)
        mean_term, sampled = _robust_terms(seq0, seq1, z, eps0, eps1)
        robust_total += mean_term + cfg.robust_weight * sampled
        all_vars.append(seq0.variances)
        all_vars.append(seq1.variances)
    reg = entropy_reg_loss(np.concatenate(all_vars), cfg.entropy_margin)
    return robust_total / len(batch) + cfg.reg_weight * reg


# --- torch mirror (gradients and training) ---------------------------------


def _act_torch(name: str, x: torch.Tensor) -> torch.Tensor:
    return torch.tanh(x) if name == "tanh" else torch.clamp(x, min=0.0)


def _materialize(net: RewardNet) -> dict[str, torch.Tensor]:
    return {
        k: torch.tensor(v, dtype=torch.float64, requires_grad=True)
        for k, v in net.params.items()
    }


def _torch_forward(
    params: dict[str, torch.Tensor], x: torch.Tensor, activation: str
) -> tuple[torch.Tensor, torch.Tensor]:
    hidden = _act_torch(activation, x @ params["trunk_w1"] + params["trunk_b1"])
    emb = hidden @ params["trunk_w2"] + params["trunk_b2"]
    half = emb.shape[1] // 2
    mean_h = _act_torch(activation, emb[:, :half] @ params["mean_w1"] + params["mean_b1"])
    means = (mean_h @ params["mean_w2"] + params["mean_b2"])[:, 0]
    var_h = _act_torch(activation, emb[:, half:] @ params["var_w1"] + params["var_b1"])
    logvar = (var_h @ params["var_w2"] + params["var_b2"])[:, 0]
    variances = torch.exp(torch.clamp(logvar, LOGVAR_MIN, LOGVAR_MAX))
    return means, variances


def _torch_ce_from_sums(
    sum0: torch.Tensor, sum1: torch.Tensor, z: torch.Tensor
) -> torch.Tensor:
    """Elementwise preference cross-entropy from summed rewards."""
    m = torch.maximum(sum0, sum1)
    e0 = torch.exp(sum0 - m)
    e1 = torch.exp(sum1 - m)
    p = e0 / (e0 + e1)
    return -(
        (1.0 - z) * torch.log(torch.clamp(p, min=LOG_CLAMP))
        + z * torch.log(torch.clamp(1.0 - p, min=LOG_CLAMP))
    )


def _torch_batch_loss(
    params: dict[str, torch.Tensor],
    activation: str,
    inputs: list[tuple[torch.Tensor, torch.Tensor]],
    labels: list[float],
    noise: list[tuple[torch.Tensor, torch.Tensor]],
    cfg: RrlConfig,
) -> tuple[torch.Tensor, dict]:
    """Mirror of total_loss, vectorized over the batch; also returns
    detached pieces for logging."""
    b = len(inputs)
    horizon = inputs[0][0].shape[0]
    # One trunk pass for all 2b segments: rows [0, b) are first segments.
    stacked = torch.cat([x0 for x0, _ in inputs] + [x1 for _, x1 in inputs])
    means_flat, vars_flat = _torch_forward(params, stacked, activation)
    means = means_flat.reshape(2 * b, horizon)
    variances = vars_flat.reshape(2 * b, horizon)
    means0, means1 = means[:b], means[b:]
    vars0, vars1 = variances[:b], variances[b:]
    z = torch.tensor(labels, dtype=torch.float64)

    mean_ce = _torch_ce_from_sums(means0.sum(dim=1), means1.sum(dim=1), z)
    eps0 = torch.stack([pair[0] for pair in noise])  # (b, num_samples, H)
    eps1 = torch.stack([pair[1] for pair in noise])
    sum_beta0 = means0.sum(dim=1)[:, None] + (torch.sqrt(vars0)[:, None, :] * eps0).sum(dim=2)
    sum_beta1 = means1.sum(dim=1)[:, None] + (torch.sqrt(vars1)[:, None, :] * eps1).sum(dim=2)
    sampled_ce = _torch_ce_from_sums(sum_beta0, sum_beta1, z[:, None]).mean(dim=1)
    robust = (mean_ce + cfg.robust_weight * sampled_ce).mean()

    entropy = 0.5 * torch.log(2.0 * math.pi * math.e * vars_flat)
    reg = torch.clamp(cfg.entropy_margin - entropy, min=0.0).mean()
    loss = robust + cfg.reg_weight * reg
    with torch.no_grad():
        p_means = torch.sigmoid(means0.sum(dim=1) - means1.sum(dim=1))
    parts = {
        "ce_loss": float(mean_ce.detach().mean()),
        "reg_loss": float(reg.detach()),
        "mean_entropy": float(entropy.detach().mean()),
        "p_means": [float(p) for p in p_means],
    }
    return loss, parts


def grad(
    net: RewardNet,
    batch: list[tuple[TrajectorySegment, TrajectorySegment, float]],
    cfg: RrlConfig,
    rng: np.random.Generator,
) -> dict[str, np.ndarray]:
    """Gradients of total_loss with the sampled noises held fixed.

    Draws noise exactly as total_loss does, then differentiates the torch
    mirror. An identically seeded generator therefore yields the pathwise
    gradient of the numpy loss evaluation.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    params = _materialize(net)
    inputs = []
    labels = []
    noise = []
    for seg0, seg1, z in batch:
        inputs.append(
            (
                torch.tensor(segment_input(seg0), dtype=torch.float64),
                torch.tensor(segment_input(seg1), dtype=torch.float64),
            )
        )
        labels.append(float(z))
        eps0, eps1 = _draw_pair_noise(rng, cfg.num_samples, seg0.length)
        noise.append(
            (
                torch.tensor(eps0, dtype=torch.float64),
                torch.tensor(eps1, dtype=torch.float64),
            )
        )
    loss, _ = _torch_batch_loss(params, net.activation, inputs, labels, noise, cfg)
    loss.backward()
    out: dict[str, np.ndarray] = {}
    for name, tensor in params.items():
        g = np.zeros_like(net.params[name]) if tensor.grad is None else tensor.grad.numpy().copy()
        if not np.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for parameter {name}")
        out[name] = g
    return out


def train(
    net: RewardNet,
    dataset: PreferenceDataset,
    cfg: RrlConfig,
) -> tuple[RewardNet, list[dict]]:
    """Mini-batch training with decoupled weight decay and cosine decay.

    The input net provides the initial weights and is not modified. Batch
    order and all reparameterization noise come from a numpy generator seeded
    by cfg.seed, so runs are bit-reproducible. Returns the trained net and
    one log record per epoch.
    """
    if not dataset.records:
        raise ValueError("training dataset must be nonempty")
    torch.set_num_threads(1)  # keep reductions deterministic
    rng = np.random.default_rng(cfg.seed)
    segments = dataset.over.segments
    seg_inputs = [
        torch.tensor(segment_input(seg), dtype=torch.float64) for seg in segments
    ]
    records = dataset.records
    params = _materialize(net)
    ordered = [params[name] for name in _PARAM_NAMES]
    optimizer = torch.optim.AdamW(
        ordered,
        lr=cfg.learning_rate,
        betas=(0.9, 0.99),
        weight_decay=cfg.weight_decay,
    )
    batches_per_epoch = max(1, math.ceil(len(records) / cfg.batch_size))
    total_steps = max(1, cfg.epochs * batches_per_epoch)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=total_steps)
    log: list[dict] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(records))
        epoch_loss = 0.0
        epoch_ce = 0.0
        epoch_reg = 0.0
        epoch_entropy = 0.0
        correct = 0
        binary = 0
        count = 0
        for start in range(0, len(records), cfg.batch_size):
            chosen = order[start : start + cfg.batch_size]
            inputs = []
            labels = []
            noise = []
            for idx in chosen:
                rec = records[int(idx)]
                inputs.append((seg_inputs[rec.first], seg_inputs[rec.second]))
                labels.append(rec.label)
                eps0, eps1 = _draw_pair_noise(
                    rng, cfg.num_samples, segments[rec.first].length
                )
                noise.append(
                    (
                        torch.tensor(eps0, dtype=torch.float64),
                        torch.tensor(eps1, dtype=torch.float64),
                    )
                )
            loss, parts = _torch_batch_loss(
                params, net.activation, inputs, labels, noise, cfg
            )
            loss_value = float(loss.detach())
            if not math.isfinite(loss_value):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            b = len(chosen)
            epoch_loss += loss_value * b
            epoch_ce += parts["ce_loss"] * b
            epoch_reg += parts["reg_loss"] * b
            epoch_entropy += parts["mean_entropy"] * b
            count += b
            for p_mean, z in zip(parts["p_means"], labels):
                if z == 0.5:
                    continue
                binary += 1
                predicted = 0.0 if p_mean >= 0.5 else 1.0
                if predicted == z:
                    correct += 1
        log.append(
            {
                "epoch": epoch,
                "total_loss": epoch_loss / count,
                "ce_loss": epoch_ce / count,
                "reg_loss": epoch_reg / count,
                "mean_entropy": epoch_entropy / count,
                "train_label_accuracy": (correct / binary) if binary else None,
            }
        )
    trained = RewardNet(
        params={
            name: params[name].detach().numpy().copy() for name in _PARAM_NAMES
        },
        activation=net.activation,
    )
    return trained, log


def predict_rewards(net: RewardNet, traj_set: TrajectorySet) -> list[np.ndarray]:
    """Per-segment per-step mean rewards (the variance head is not used)."""
    return [forward(net, seg).means for seg in traj_set.segments]


def predicted_returns(net: RewardNet, traj_set: TrajectorySet) -> np.ndarray:
    """Summed mean reward per segment."""
    return np.array([float(means.sum()) for means in predict_rewards(net, traj_set)])


def preference_probability(
    net: RewardNet, seg0: TrajectorySegment, seg1: TrajectorySegment
) -> float:
    """Probability the first segment is preferred, from mean rewards."""
    return bt_probability(forward(net, seg0).means, forward(net, seg1).means)


def save_reward_net(path, net: RewardNet) -> None:
    """Text checkpoint: shapes plus row-major weight lists."""
    payload = {
        "activation": net.activation,
        "embed_dim": net.embed_dim,
        "params": {
            name: {"shape": list(value.shape), "data": value.ravel().tolist()}
            for name, value in net.params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_reward_net(path) -> RewardNet:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    params = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    return RewardNet(params=params, activation=payload["activation"])
