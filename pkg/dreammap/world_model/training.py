"""
Dreammap world model training module.

Training draws episodes: a training pair, a uniformly random measurement sequence of
length L in 1..max_sequence_len, and the observations x_0..x_L it produces. The
per-episode objective is

    mean_t SSE(D(z_t), Z_o) + kl_weight * mean_t KL(q(z_t | x_t) || N(0, I))
        + mean_t NLL(stopgrad(mean of q(z_{t+1} | x_{t+1})) | dynamics(stopgrad(z_t), a_t)) / d

with the squared error summed over cells and the NLL averaged over the d latent
dimensions. All three networks are optimised jointly with Adam on this sum; the encoder
learns from the first two terms only. Every random draw comes from
`rng.stream(cfg.seed, ...)`, so a run is a pure function of its inputs and config.
"""


import csv
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field

import bencodepy
import numpy as np
import torch

from .. import rng as rngs
from ..errors import ConfigError, DataError, NumericalError
from ..grid import MeasurementState, Unit, apply_measurement, make_observation, rmse
from .inference import ActionCoord, action_tensor, observation_tensor, reconstruct
from .networks import Architecture, WorldModel

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters. E is `epochs`, E_ep is `episodes_per_epoch`."""

    learning_rate: float = 1e-3
    kl_weight: float = 1e-3
    epochs: int = 200
    episodes_per_epoch: int = 50
    max_sequence_len: int = 20
    batch_size: int = 8
    holdout_budget: int = 10
    seed: int = 0

    def validate(self):
        if not self.learning_rate > 0.0:
            raise ConfigError("learning_rate must be positive")
        if self.kl_weight < 0.0:
            raise ConfigError("kl_weight must be non-negative")
        if self.epochs < 1 or self.episodes_per_epoch < 1:
            raise ConfigError("epochs and episodes_per_epoch must be at least 1")
        if self.max_sequence_len < 1 or self.batch_size < 1 or self.holdout_budget < 1:
            raise ConfigError("max_sequence_len, batch_size and holdout_budget must be at least 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

        return self

    def config_hash(self):
        """Hex digest of the config (floats by repr, bencode has no float type)."""

        data = {k: repr(v) if isinstance(v, float) else v for k, v in asdict(self).items()}

        return hashlib.sha256(bencodepy.encode(data)).hexdigest()


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    holdout_rmse: float


@dataclass
class LossTrace:
    """Per-epoch mean training loss and held-out RMSE (normalized units)."""

    records: list = field(default_factory=list)

    def append(self, record):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index):
        return self.records[index]

    def losses(self):
        return [r.mean_loss for r in self.records]

    def holdout_rmses(self):
        return [r.holdout_rmse for r in self.records]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "mean_loss", "holdout_rmse"])
            for record in self.records:
                writer.writerow([record.epoch, repr(record.mean_loss), repr(record.holdout_rmse)])


class TrainingDivergedError(NumericalError):
    """Raised on a non-finite loss; carries the trace of completed epochs."""

    def __init__(self, msg, trace, epoch):
        super().__init__(msg)
        self.trace = trace
        self.epoch = epoch

    @property
    def last_good_epoch(self):
        return self.trace[-1].epoch if len(self.trace) else 0


@dataclass(frozen=True, eq=False)
class Episode:
    """One training sequence: observations x_0..x_L, actions a_0..a_{L-1} and the target map."""

    observations: torch.Tensor
    actions: torch.Tensor
    target: torch.Tensor

    @property
    def length(self):
        return self.actions.shape[0]


def kl_divergence(mean, log_var):
    """KL(N(mean, exp(log_var)) || N(0, I)) summed over the last dimension."""

    return 0.5 * torch.sum(torch.exp(log_var) + mean**2 - 1.0 - log_var, dim=-1)


def gaussian_nll(target, mean, log_var):
    """Negative log density of `target` under a diagonal Gaussian, summed over the last dimension."""

    return 0.5 * torch.sum(log_var + (target - mean) ** 2 * torch.exp(-log_var) + LOG_2PI, dim=-1)


def make_episode(model, pair, cells):
    """Episode of measuring `cells` of `pair` in order."""

    state = MeasurementState.empty(pair.shape)
    observations = [make_observation(pair.empty, state)]
    for cell in cells:
        state = apply_measurement(state, cell, pair.occupied[cell])
        observations.append(make_observation(pair.empty, state))

    return Episode(
        observation_tensor(model, observations),
        action_tensor(model, [ActionCoord.from_cell(c, pair.shape) for c in cells]),
        torch.as_tensor(pair.occupied.values, dtype=model.dtype),
    )


def sample_episode(model, pairs, rng, max_sequence_len):
    """Random episode: uniform pair, uniform length, uniform cells without replacement."""

    pair = pairs[int(rng.integers(len(pairs)))]
    length = int(rng.integers(1, min(max_sequence_len, pair.empty.size) + 1))
    cells = rng.permutation(pair.empty.size)[:length]

    return make_episode(model, pair, cells.tolist())


def episode_loss(model, episode, noise, kl_weight, dynamics_latents=None):
    """
    Total training loss of one episode with explicit reparameterization noise of shape (L+1, d).

    The reconstruction error is summed over cells and the KL over latent dimensions; the
    dynamics NLL is averaged over latent dimensions. Each term is averaged over the steps.
    The dynamics model reads the detached latent samples and scores the detached encoder
    means, so only the reconstruction and KL terms reach the encoder. `dynamics_latents`
    replaces those (inputs, targets), each (L+1, d). Returns (total, components) where
    components holds the detached reconstruction, KL and dynamics terms.
    """

    height, width = episode.target.shape
    mean, log_var = model.encoder(episode.observations)
    z = mean + torch.exp(0.5 * log_var) * noise
    inputs, targets = (z.detach(), mean.detach()) if dynamics_latents is None else dynamics_latents

    recon = model.decoder(z)[:, :height, :width]
    recon_loss = torch.sum((recon - episode.target) ** 2, dim=(1, 2)).mean()
    kl_loss = kl_divergence(mean, log_var).mean()

    state = model.dynamics.initial_state(1, model.dtype)
    nlls = []
    for t in range(episode.length):
        pred_mean, pred_log_var, state = model.dynamics(inputs[t : t + 1], episode.actions[t : t + 1], state)
        nlls.append(gaussian_nll(targets[t + 1 : t + 2], pred_mean, pred_log_var) / mean.shape[-1])
    dyn_loss = torch.cat(nlls).mean()

    total = recon_loss + kl_weight * kl_loss + dyn_loss

    return total, {"recon": float(recon_loss), "kl": float(kl_loss), "dynamics": float(dyn_loss)}


def _holdout_states(pairs, cfg):
    states = []
    for index, pair in enumerate(pairs):
        rng = rngs.stream(cfg.seed, rngs.HOLDOUT, index)
        cells = rng.choice(pair.empty.size, size=min(cfg.holdout_budget, pair.empty.size), replace=False)
        state = MeasurementState.empty(pair.shape)
        for cell in cells.tolist():
            state = apply_measurement(state, cell, pair.occupied[cell])
        states.append(state)

    return states


def holdout_rmse(model, pairs, states):
    """Mean RMSE of reconstructions from fixed sparse measurements of each held-out pair."""

    return float(
        np.mean([rmse(reconstruct(model, make_observation(p.empty, s)), p.occupied) for p, s in zip(pairs, states)])
    )


def train(pairs, cfg, holdout=None, arch=None, model=None):
    """
    Train a world model on normalized pairs. Returns (model, loss trace).

    A fresh model is built from `arch` (default: full size, sized for the pairs' grid) and
    initialised from the config seed unless `model` is given. Held-out RMSE is measured on
    `holdout` (default: the training pairs).
    """

    cfg.validate()

    if not pairs:
        raise DataError("training needs at least one pair")
    if any(p.unit is not Unit.NORMALIZED for p in pairs):
        raise DataError("training pairs must be normalized")

    if model is None:
        arch = (arch or Architecture()).for_shape(pairs[0].shape)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            model = WorldModel(arch)

    holdout = holdout or pairs
    holdout_states = _holdout_states(holdout, cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    trace = LossTrace()

    for epoch in range(1, cfg.epochs + 1):
        rng = rngs.stream(cfg.seed, rngs.TRAIN, epoch)
        losses = []
        remaining = cfg.episodes_per_epoch

        model.train()
        while remaining > 0:
            size = min(cfg.batch_size, remaining)
            batch = [sample_episode(model, pairs, rng, cfg.max_sequence_len) for _ in range(size)]
            remaining -= len(batch)

            optimizer.zero_grad()
            episode_losses = []
            for episode in batch:
                noise = torch.as_tensor(
                    rng.standard_normal((episode.length + 1, model.arch.latent_dim)), dtype=model.dtype
                )
                episode_losses.append(episode_loss(model, episode, noise, cfg.kl_weight)[0])
            batch_loss = torch.stack(episode_losses).mean()

            if not torch.isfinite(batch_loss):
                raise TrainingDivergedError(f"non-finite loss in epoch {epoch}", trace, epoch)

            batch_loss.backward()
            optimizer.step()
            losses.extend(float(loss) for loss in episode_losses)

        model.eval()
        record = EpochRecord(epoch, float(np.mean(losses)), holdout_rmse(model, holdout, holdout_states))
        trace.append(record)

        logger.info("epoch %d/%d loss %.6f holdout rmse %.6f", epoch, cfg.epochs, record.mean_loss, record.holdout_rmse)

    model.provenance = {
        "config_hash": cfg.config_hash(),
        "epochs_completed": model.provenance.get("epochs_completed", 0) + cfg.epochs,
        "final_loss": trace[-1].mean_loss,
    }

    return model, trace
