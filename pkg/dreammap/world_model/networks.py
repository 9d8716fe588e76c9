"""
Dreammap world model networks module.

The vision model is a conditional convolutional VAE over the three channel observation
grid, the dynamics model an action-conditioned LSTM cell predicting a diagonal Gaussian
over the next latent. Grids are edge-replicated up to the next multiple of 4 in each
dimension before the encoder (two 2 x 2 pools) and decoder output is cropped back.
"""


from dataclasses import asdict, dataclass

import torch
from torch import nn

from ..errors import ConfigError

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


def _round_up4(n):
    return -(-n // 4) * 4


@dataclass(frozen=True)
class Architecture:
    """Layer sizes of a world model; the defaults are the full-size network."""

    target_shape: tuple = (9, 11)
    in_channels: int = 3
    enc_channels: tuple = (32, 32, 64, 64)
    dec_channels: tuple = (32, 32)
    kernel_size: int = 3
    fc_dim: int = 256
    latent_dim: int = 64
    hidden_dim: int = 128
    action_embed_dim: int = 32

    def validate(self):
        if len(self.target_shape) != 2 or min(self.target_shape) < 1:
            raise ConfigError(f"invalid target shape {self.target_shape}")
        if len(self.enc_channels) != 4 or len(self.dec_channels) != 2:
            raise ConfigError("encoder takes 4 channel counts, decoder 2")
        if self.kernel_size % 2 != 1:
            raise ConfigError("kernel size must be odd")
        if min(self.fc_dim, self.latent_dim, self.hidden_dim, self.action_embed_dim) < 1:
            raise ConfigError("layer widths must be positive")

        return self

    @property
    def padded_shape(self):
        return tuple(_round_up4(n) for n in self.target_shape)

    @property
    def reduced_shape(self):
        """Spatial shape after both pooling stages."""

        return tuple(n // 4 for n in self.padded_shape)

    def to_dict(self):
        data = asdict(self)

        return {k: list(v) if isinstance(v, tuple) else v for k, v in data.items()}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}).validate()
        except TypeError as exc:
            raise ConfigError(f"invalid architecture descriptor: {exc}") from exc

    def for_shape(self, shape):
        """The same network sized for another grid."""

        return type(self)(**{**asdict(self), "target_shape": tuple(shape)})


class Encoder(nn.Module):
    """E_φ: observation grid -> (mean, log_var) of the latent belief."""

    def __init__(self, arch):
        super().__init__()

        c1, c2, c3, c4 = arch.enc_channels
        k, pad = arch.kernel_size, arch.kernel_size // 2
        rows, cols = arch.reduced_shape

        self.features = nn.Sequential(
            nn.Conv2d(arch.in_channels, c1, k, padding=pad),
            nn.ReLU(),
            nn.Conv2d(c1, c2, k, padding=pad),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(c2, c3, k, padding=pad),
            nn.ReLU(),
            nn.Conv2d(c3, c4, k, padding=pad),
            nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Flatten(),
        )
        self.fc = nn.Linear(c4 * rows * cols, arch.fc_dim)
        self.mean_head = nn.Linear(arch.fc_dim, arch.latent_dim)
        self.log_var_head = nn.Linear(arch.fc_dim, arch.latent_dim)

    def forward(self, x):
        h = torch.relu(self.fc(self.features(x)))

        return self.mean_head(h), self.log_var_head(h)


class Decoder(nn.Module):
    """D_φ: latent -> padded single channel map (linear output head)."""

    def __init__(self, arch):
        super().__init__()

        c4 = arch.enc_channels[-1]
        d1, d2 = arch.dec_channels
        k, pad = arch.kernel_size, arch.kernel_size // 2
        self._reduced = (c4, *arch.reduced_shape)

        self.fc = nn.Linear(arch.latent_dim, c4 * arch.reduced_shape[0] * arch.reduced_shape[1])
        self.body = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(c4, d1, k, padding=pad),
            nn.ReLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(d1, d2, k, padding=pad),
            nn.ReLU(),
            nn.Conv2d(d2, 1, 1),
        )

    def forward(self, z):
        h = self.fc(z).view(-1, *self._reduced)

        return self.body(h)[:, 0]


class Dynamics(nn.Module):
    """p_ψ(z_{t+1} | z_t, a_t): action MLP, LSTM cell, Gaussian heads."""

    def __init__(self, arch):
        super().__init__()

        a = arch.action_embed_dim
        self.action_embed = nn.Sequential(nn.Linear(2, a), nn.ReLU(), nn.Linear(a, a), nn.ReLU())
        self.cell = nn.LSTMCell(arch.latent_dim + a, arch.hidden_dim)
        self.mean_head = nn.Linear(arch.hidden_dim, arch.latent_dim)
        self.log_var_head = nn.Linear(arch.hidden_dim, arch.latent_dim)
        self.hidden_dim = arch.hidden_dim

    def initial_state(self, batch=1, dtype=torch.float32):
        zeros = torch.zeros(batch, self.hidden_dim, dtype=dtype)

        return zeros, zeros.clone()

    def forward(self, z, action, state):
        hidden, cell = self.cell(torch.cat([z, self.action_embed(action)], dim=-1), state)
        log_var = torch.clamp(self.log_var_head(hidden), LOG_VAR_MIN, LOG_VAR_MAX)

        return self.mean_head(hidden), log_var, (hidden, cell)


class WorldModel(nn.Module):
    """Encoder, decoder and dynamics with their architecture and training provenance."""

    def __init__(self, arch=None):
        super().__init__()

        self.arch = (arch or Architecture()).validate()
        self.encoder = Encoder(self.arch)
        self.decoder = Decoder(self.arch)
        self.dynamics = Dynamics(self.arch)
        self.provenance = {"config_hash": None, "epochs_completed": 0, "final_loss": None}

    @property
    def dtype(self):
        return next(self.parameters()).dtype

    def pad(self, x):
        """Edge-replicate a (B, C, H, W) batch up to the padded shape."""

        rows, cols = self.arch.padded_shape
        height, width = x.shape[-2:]
        if (height, width) == (rows, cols):
            return x

        return nn.functional.pad(x, (0, cols - width, 0, rows - height), mode="replicate")
