"""Dreammap world model package: the conditional VAE, latent dynamics and their training."""


from .inference import (
    ActionCoord,
    DynamicsState,
    LatentBelief,
    decode,
    decode_batch,
    dynamics_step,
    encode,
    reconstruct,
)
from .networks import Architecture, WorldModel
from .serialize import load_model, save_model
from .training import LossTrace, TrainConfig, TrainingDivergedError, episode_loss, kl_divergence, train
