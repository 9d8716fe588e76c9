"""
Dreammap world model inference module.

Pure functions over a `WorldModel`: encoding observations to latent beliefs, decoding
latents to maps, one dynamics step, and point reconstruction. None of them change the
model or their inputs; they run under `torch.no_grad` and may be called concurrently on
a shared model.
"""


import hashlib
from dataclasses import dataclass

import bencodepy
import numpy as np
import torch

from ..errors import DataError
from ..grid import GridMap, Unit, cell_coords


@dataclass(frozen=True, eq=False)
class LatentBelief:
    """Gaussian latent belief; `sample = mean + exp(log_var / 2) * noise`."""

    mean: torch.Tensor
    log_var: torch.Tensor
    sample: torch.Tensor
    noise: torch.Tensor


@dataclass(frozen=True, eq=False)
class DynamicsState:
    """Recurrent memory of the dynamics model."""

    hidden: torch.Tensor
    cell: torch.Tensor

    @classmethod
    def initial(cls, model):
        hidden, cell = model.dynamics.initial_state(1, model.dtype)

        return cls(hidden[0], cell[0])

    def state_digest(self):
        return hashlib.sha256(
            bencodepy.encode({"hidden": self.hidden.numpy().tobytes(), "cell": self.cell.numpy().tobytes()})
        ).digest()


@dataclass(frozen=True, order=True)
class ActionCoord:
    """A measurement action: a cell with its coordinates normalized to [0, 1]."""

    cell_index: int
    row: int
    col: int
    row_norm: float
    col_norm: float

    @classmethod
    def from_cell(cls, index, shape):
        height, width = shape
        row, col = cell_coords(int(index), width)

        return cls(
            int(index),
            row,
            col,
            row / (height - 1) if height > 1 else 0.0,
            col / (width - 1) if width > 1 else 0.0,
        )


def observation_tensor(model, observations):
    """(B, 3, Hp, Wp) padded model input for a list of observations."""

    shape = observations[0].shape
    if model.arch.for_shape(shape).padded_shape != model.arch.padded_shape:
        raise DataError(f"grid {shape} does not fit a model built for {model.arch.target_shape}")

    x = torch.as_tensor(np.stack([obs.channels() for obs in observations]), dtype=model.dtype)

    return model.pad(x)


def action_tensor(model, actions):
    return torch.tensor([[a.row_norm, a.col_norm] for a in actions], dtype=model.dtype)


def encode(model, obs, rng, noise=None):
    """Encode an observation to a belief; the sample draws its noise from `rng` unless `noise` is given."""

    with torch.no_grad():
        mean, log_var = model.encoder(observation_tensor(model, [obs]))

    mean, log_var = mean[0], log_var[0]
    if noise is None:
        noise = rng.standard_normal(mean.shape[0])
    noise = torch.as_tensor(noise, dtype=mean.dtype)

    return LatentBelief(mean, log_var, mean + torch.exp(0.5 * log_var) * noise, noise)


def decode_batch(model, zs, target_shape):
    """Decode a (K, d) batch of latents to a (K, H, W) float64 array cropped to `target_shape`."""

    height, width = target_shape

    with torch.no_grad():
        maps = model.decoder(torch.as_tensor(zs, dtype=model.dtype))

    return maps[:, :height, :width].double().numpy()


def decode(model, z, target_shape):
    """Decode one latent to a map (normalized units, unbounded)."""

    values = decode_batch(model, torch.as_tensor(z).reshape(1, -1), target_shape)[0]

    return GridMap(values, Unit.NORMALIZED, bounded=False)


def dynamics_step(model, z, action, state):
    """One step of p_ψ from latent `z` under `action`: (next_mean, next_log_var, next_state)."""

    with torch.no_grad():
        mean, log_var, (hidden, cell) = model.dynamics(
            torch.as_tensor(z, dtype=model.dtype).reshape(1, -1),
            action_tensor(model, [action]),
            (state.hidden.reshape(1, -1), state.cell.reshape(1, -1)),
        )

    return mean[0], log_var[0], DynamicsState(hidden[0], cell[0])


def reconstruct(model, obs):
    """Point reconstruction: decode the belief mean, not a sample."""

    with torch.no_grad():
        mean, _ = model.encoder(observation_tensor(model, [obs]))

    return decode(model, mean[0], obs.shape)
