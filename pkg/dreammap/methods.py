"""
Dreammap methods module. Provides the reconstruction method registry.

A method turns one benchmark cell (an evaluation pair, a measurement budget and a
repetition seed) into an estimate of the occupied map. Methods register by name when
their class is defined, so the harness and the CLI look them up from a string.
"""


from dataclasses import dataclass, field, replace

from . import rng as rngs
from .dreamer import AcquisitionConfig, run_acquisition, state_from_cells
from .errors import ConfigError
from .gp import empty_copy, gp_reconstruct

METHOD_ORDER = ("world_model", "gp_same_points", "gp_random_points", "empty_copy")


class MethodRegister(type):
    """Method metaclass."""

    methods = {}

    def __new__(meta_cls, name, bases, dct):
        cls = super().__new__(meta_cls, name, bases, dct)
        if dct.get("name") is not None:
            MethodRegister.methods[dct["name"]] = cls

        return cls

    @classmethod
    def lookup(cls, name):
        try:
            return MethodRegister.methods[name]
        except KeyError:
            raise ConfigError(f"unknown method {name!r}, expected one of {sorted(MethodRegister.methods)}") from None

    @classmethod
    def names(cls):
        return tuple(MethodRegister.methods)


@dataclass
class CellContext:
    """
    The inputs shared by every method of one (scale, budget, rep) cell.

    The dreamer trace is computed once on first use, so the world model and the GP on the
    same points consume identical measurement locations.
    """

    pair: object
    budget: int
    seed: int
    model: object = None
    kernel: object = None
    acquisition: AcquisitionConfig = AcquisitionConfig()
    threads: int = 1
    track_rmse: bool = False
    _trace: object = field(default=None, init=False, repr=False)

    def dreamer_trace(self):
        if self._trace is None:
            if self.model is None:
                raise ConfigError("the dreaming controller needs a world model")

            cfg = replace(self.acquisition, budget=self.budget, seed=self.seed, track_rmse=self.track_rmse)
            self._trace = run_acquisition(self.model, self.pair, cfg, threads=self.threads)

        return self._trace

    @property
    def trace(self):
        """The dreamer trace if one was computed, else None."""

        return self._trace

    def require_kernel(self):
        if self.kernel is None:
            raise ConfigError("the GP baselines need fitted kernel parameters")

        return self.kernel


@dataclass(frozen=True)
class MethodResult:
    """A normalized estimate plus the cells measured to produce it."""

    estimate: object
    cells: tuple
    queries: int


class Method(metaclass=MethodRegister):
    """Reconstruction method base class; subclasses set `name` and implement `reconstruct`."""

    name = None

    def reconstruct(self, ctx):
        raise NotImplementedError  # pragma: no cover


class WorldModelMethod(Method):
    name = "world_model"

    def reconstruct(self, ctx):
        trace = ctx.dreamer_trace()

        return MethodResult(trace.reconstruction, tuple(trace.chosen_cells()), trace.queries)


class GpSamePoints(Method):
    """GP conditioned on the cells the dreaming controller chose."""

    name = "gp_same_points"

    def reconstruct(self, ctx):
        cells = tuple(ctx.dreamer_trace().chosen_cells())
        posterior = gp_reconstruct(ctx.require_kernel(), ctx.pair.empty, state_from_cells(ctx.pair, cells))

        return MethodResult(posterior.mean, cells, len(cells))


class GpRandomPoints(Method):
    """GP conditioned on uniformly random distinct cells."""

    name = "gp_random_points"

    def reconstruct(self, ctx):
        rng = rngs.stream(ctx.seed, rngs.RANDOM_POINTS)
        cells = tuple(rng.choice(ctx.pair.empty.size, size=ctx.budget, replace=False).tolist())
        posterior = gp_reconstruct(ctx.require_kernel(), ctx.pair.empty, state_from_cells(ctx.pair, cells))

        return MethodResult(posterior.mean, cells, len(cells))


class EmptyCopy(Method):
    name = "empty_copy"

    def reconstruct(self, ctx):
        return MethodResult(empty_copy(ctx.pair), (), 0)


def reconstruct_with(name, ctx):
    """Run the method registered under `name` on a cell."""

    return MethodRegister.lookup(name)().reconstruct(ctx)
