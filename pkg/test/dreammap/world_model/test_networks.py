import numpy as np
import pytest
import torch

from dreammap.errors import ConfigError, DataError
from dreammap.grid import GridMap, MeasurementState, Unit, apply_measurement, make_observation
from dreammap.resample import SCALE_FACTORS
from dreammap.world_model import (
    ActionCoord,
    Architecture,
    DynamicsState,
    WorldModel,
    decode,
    decode_batch,
    dynamics_step,
    encode,
    reconstruct,
)
from dreammap.world_model.inference import observation_tensor


def zero_weights(module):
    with torch.no_grad():
        for parameter in module.parameters():
            parameter.zero_()


def observation(shape, cells=()):
    empty = GridMap(np.linspace(0.0, 1.0, shape[0] * shape[1]).reshape(shape))
    state = MeasurementState.empty(shape)
    for cell in cells:
        state = apply_measurement(state, cell, 0.5)

    return make_observation(empty, state)


def test_default_architecture():
    """Check the default network has a 64 dimensional latent and 128 dimensional memory."""

    model = WorldModel()
    belief = encode(model, observation((9, 11)), np.random.default_rng(0))
    mean, log_var, state = dynamics_step(
        model, belief.sample, ActionCoord.from_cell(0, (9, 11)), DynamicsState.initial(model)
    )

    assert belief.mean.shape == belief.log_var.shape == belief.sample.shape == (64,)
    assert mean.shape == log_var.shape == (64,)
    assert state.hidden.shape == state.cell.shape == (128,)


def test_padding(small_model):
    """Check a 9x11 grid is padded to 12x12 by edge replication."""

    x = observation_tensor(small_model, [observation((9, 11))])

    assert small_model.arch.padded_shape == (12, 12)
    assert x.shape == (1, 3, 12, 12)
    assert torch.equal(x[0, 0, :9, 11], x[0, 0, :9, 10])
    assert torch.equal(x[0, 0, 11, :11], x[0, 0, 8, :11])


def test_grid_must_fit_model(small_model):
    """Check an observation that pads to another shape is refused."""

    with pytest.raises(DataError):
        observation_tensor(small_model, [observation((5, 5))])


def test_architecture_validation():
    """Check malformed architectures raise."""

    with pytest.raises(ConfigError):
        Architecture(enc_channels=(1, 2)).validate()
    with pytest.raises(ConfigError):
        Architecture(kernel_size=2).validate()
    with pytest.raises(ConfigError):
        Architecture(latent_dim=0).validate()


def test_architecture_dict_round_trip(small_arch):
    """Check an architecture survives to_dict and from_dict."""

    assert Architecture.from_dict(small_arch.to_dict()) == small_arch


def test_zero_encoder(small_model):
    """Check a zeroed encoder gives mean 0, log-variance 0 and sample equal to the noise."""

    zero_weights(small_model.encoder)
    noise = np.random.default_rng(1).standard_normal(small_model.arch.latent_dim)
    belief = encode(small_model, observation((9, 11), [3, 50]), None, noise=noise)

    assert not belief.mean.any()
    assert not belief.log_var.any()
    assert np.allclose(belief.sample.numpy(), noise, atol=1e-6)


def test_zero_decoder(small_model):
    """Check a zeroed decoder gives an all-zero map."""

    zero_weights(small_model.decoder)
    grid_map = decode(small_model, torch.randn(small_model.arch.latent_dim), (9, 11))

    assert grid_map.shape == (9, 11)
    assert not grid_map.values.any()


def test_decoder_upsamples_then_convolves(small_model):
    """Check the decoder doubles resolution by nearest-neighbour upsampling and ends in a 1x1 conv."""

    layers = list(small_model.decoder.body)
    upsamples = [layer for layer in layers if isinstance(layer, torch.nn.Upsample)]

    assert len(upsamples) == 2
    assert all(layer.mode == "nearest" and layer.scale_factor == 2 for layer in upsamples)
    assert not any(isinstance(layer, torch.nn.ConvTranspose2d) for layer in small_model.decoder.modules())
    assert isinstance(layers[-1], torch.nn.Conv2d) and layers[-1].kernel_size == (1, 1)


def test_zero_dynamics(small_model):
    """Check zeroed dynamics predict mean 0 and log-variance 0."""

    zero_weights(small_model.dynamics)
    mean, log_var, _ = dynamics_step(
        small_model,
        torch.randn(small_model.arch.latent_dim),
        ActionCoord.from_cell(7, (9, 11)),
        DynamicsState.initial(small_model),
    )

    assert not mean.any()
    assert not log_var.any()


@pytest.mark.parametrize("scale", SCALE_FACTORS)
def test_decode_shape_per_scale(small_arch, scale):
    """Check decoding yields the target grid at every scale."""

    shape = (9 * scale, 11 * scale)
    torch.manual_seed(0)
    model = WorldModel(small_arch.for_shape(shape)).eval()

    maps = decode_batch(model, torch.randn(3, small_arch.latent_dim), shape)
    grid_map = reconstruct(model, observation(shape, [0]))

    assert maps.shape == (3, *shape)
    assert maps.dtype == np.float64
    assert grid_map.shape == shape
    assert grid_map.unit is Unit.NORMALIZED
    assert grid_map.bounded is False


def test_encode_deterministic(small_model):
    """Check equal generator seeds give bit-identical beliefs."""

    obs = observation((9, 11), [4])
    a = encode(small_model, obs, np.random.default_rng(9))
    b = encode(small_model, obs, np.random.default_rng(9))

    assert torch.equal(a.sample, b.sample)
    assert torch.equal(a.mean, b.mean)


def test_encode_leaves_model_untouched(small_model):
    """Check inference does not change the weights."""

    before = {k: v.clone() for k, v in small_model.state_dict().items()}
    encode(small_model, observation((9, 11)), np.random.default_rng(0))
    reconstruct(small_model, observation((9, 11), [1]))

    for name, tensor in small_model.state_dict().items():
        assert torch.equal(tensor, before[name])


def test_dynamics_memory_matters(small_model):
    """Check the recurrent state changes the prediction."""

    z = torch.randn(small_model.arch.latent_dim)
    action = ActionCoord.from_cell(12, (9, 11))
    start = DynamicsState.initial(small_model)

    _, _, after_one = dynamics_step(small_model, z, action, start)
    mean_fresh, _, _ = dynamics_step(small_model, z, action, start)
    mean_second, _, _ = dynamics_step(small_model, z, action, after_one)

    assert not torch.equal(mean_fresh, mean_second)
    assert start.state_digest() == DynamicsState.initial(small_model).state_digest()


def test_reparameterization_statistics(tiny_model):
    """Check samples have the belief's mean and variance."""

    obs = observation((5, 5), [6])
    rng = np.random.default_rng(0)
    n = 10000

    first = encode(tiny_model, obs, rng)
    samples = torch.stack([first.sample] + [encode(tiny_model, obs, rng).sample for _ in range(n - 1)]).double()
    mean = first.mean.double()
    var = torch.exp(first.log_var.double())

    assert torch.all(torch.abs(samples.mean(0) - mean) <= 5.0 * torch.sqrt(var / n))
    assert torch.all(torch.abs(samples.var(0) / var - 1.0) <= 5.0 * np.sqrt(2.0 / n))


def test_action_coord_normalization():
    """Check action coordinates are normalized to [0, 1] by grid extent."""

    corner = ActionCoord.from_cell(98, (9, 11))
    middle = ActionCoord.from_cell(27, (9, 11))
    single = ActionCoord.from_cell(2, (1, 5))

    assert (corner.row, corner.col, corner.row_norm, corner.col_norm) == (8, 10, 1.0, 1.0)
    assert (middle.row, middle.col) == (2, 5)
    assert middle.row_norm == pytest.approx(0.25)
    assert middle.col_norm == pytest.approx(0.5)
    assert (single.row_norm, single.col_norm) == (0.0, 0.5)
