import pytest
import torch

from dreammap.synth import SynthConfig, make_dataset
from dreammap.world_model import Architecture, WorldModel

TINY = Architecture(
    target_shape=(5, 5),
    enc_channels=(2, 2, 4, 4),
    dec_channels=(2, 2),
    fc_dim=8,
    latent_dim=8,
    hidden_dim=16,
    action_embed_dim=4,
)
SMALL = Architecture(enc_channels=(4, 4, 8, 8), dec_channels=(4, 4), fc_dim=16, latent_dim=8, hidden_dim=16)


@pytest.fixture
def tiny_arch():
    return TINY


@pytest.fixture
def small_arch():
    return SMALL


@pytest.fixture
def tiny_pairs():
    """Three training pairs and one evaluation pair on a 5x5 grid."""

    return make_dataset(SynthConfig(base_h=5, base_w=5, ap_location=(2.0, 2.0), n_occupants=2, seed=3), 3, 1, 1)


@pytest.fixture
def small_pairs():
    """Three training pairs and one evaluation pair on the 9x11 grid."""

    return make_dataset(SynthConfig(seed=11), 3, 1, 1)


@pytest.fixture
def tiny_model(tiny_arch):
    torch.manual_seed(0)

    return WorldModel(tiny_arch).eval()


@pytest.fixture
def small_model(small_arch):
    torch.manual_seed(0)

    return WorldModel(small_arch).eval()
