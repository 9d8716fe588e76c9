"""
Dreammap dreamer module. Provides the dreaming measurement controller.

Each step encodes the current observation, samples a pool of unmeasured candidate cells,
scores every candidate by dreaming K next latents from the dynamics model and measuring
how much the decoded maps disagree (mean per-cell sample variance), picks a candidate by
the selection rule, queries the occupied environment there and updates the state. After
the budget is spent the final observation is reconstructed.

Scoring is read-only and its random draws are keyed on (step, candidate cell), so it may
run on a thread pool without changing any result.
"""


import enum
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import rng as rngs
from .config import worker_threads
from .errors import ConfigError, DataError
from .grid import MeasurementState, apply_measurement, cell_index, make_observation, rmse
from .mapio import load_map
from .world_model.inference import ActionCoord, DynamicsState, decode_batch, dynamics_step, encode, reconstruct

logger = logging.getLogger(__name__)


class SelectionRule(enum.Enum):
    ARGMIN_VARIANCE = "argmin_variance"
    ARGMAX_VARIANCE = "argmax_variance"
    RANDOM = "random"


@dataclass(frozen=True)
class AcquisitionConfig:
    """Candidate pool size P, dream samples K, budget N, selection rule and root seed."""

    pool_size: int = 40
    dream_samples: int = 12
    budget: int = 10
    selection_rule: SelectionRule = SelectionRule.ARGMIN_VARIANCE
    seed: int = 0
    track_rmse: bool = True

    def validate(self, n_cells=None):
        if self.pool_size < 1:
            raise ConfigError("pool_size must be at least 1")
        if self.dream_samples < 2:
            raise ConfigError("dream_samples must be at least 2 for a sample variance")
        if self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if n_cells is not None and self.budget > n_cells:
            raise ConfigError(f"budget {self.budget} exceeds the {n_cells} cells of the grid")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        try:
            SelectionRule(self.selection_rule)
        except ValueError as exc:
            raise ConfigError(f"unknown selection rule {self.selection_rule!r}") from exc

        return self


@dataclass(frozen=True)
class StepRecord:
    t: int
    action: ActionCoord
    value: float
    scores: tuple
    rmse_after: float = None


@dataclass
class AcquisitionTrace:
    """Step records, final reconstruction and the number of environment queries made."""

    shape: tuple
    steps: list = field(default_factory=list)
    reconstruction: object = None
    queries: int = 0

    def chosen_cells(self):
        return [step.action.cell_index for step in self.steps]


class OccupiedEnvironment:
    """The occupied map behind a query counter; the only way the controller reads Z_o."""

    def __init__(self, occupied):
        self._occupied = occupied
        self._lock = threading.Lock()
        self.queries = 0

    @property
    def shape(self):
        return self._occupied.shape

    @property
    def truth(self):
        """Ground truth, for trace metrics only."""

        return self._occupied

    def query(self, cell):
        with self._lock:
            self.queries += 1

        return self._occupied[int(cell)]


def sample_candidates(state, pool_size, rng):
    """Up to `pool_size` distinct unmeasured cells, drawn uniformly without replacement."""

    free = state.free_cells()
    if len(free) == 0:
        raise DataError("no unmeasured cells left to sample")

    chosen = rng.choice(free, size=min(pool_size, len(free)), replace=False)

    return [ActionCoord.from_cell(cell, state.shape) for cell in chosen.tolist()]


def sample_variance_score(maps):
    """Mean over cells of the unbiased per-cell variance of a (K, H, W) stack."""

    # shifting by the first sample keeps identical stacks at exactly zero
    shifted = maps - maps[0]

    return float(np.mean(np.var(shifted, axis=0, ddof=1)))


def score_candidate(model, belief, dyn_state, action, dream_samples, shape, rng, zero_variance=False):
    """
    Dream `dream_samples` next latents for `action` and score their decoded disagreement.

    The dynamics step runs from `belief.sample` and the committed `dyn_state`; its successor
    state is discarded. `zero_variance` forces the predicted variance to zero.
    """

    if dream_samples < 2:
        raise ConfigError("dream_samples must be at least 2")

    mean, log_var, _ = dynamics_step(model, belief.sample, action, dyn_state)
    eps = torch.as_tensor(rng.standard_normal((dream_samples, mean.shape[0])), dtype=mean.dtype)

    if zero_variance:
        latents = mean.expand(dream_samples, -1)
    else:
        latents = mean + torch.exp(0.5 * log_var) * eps

    return sample_variance_score(decode_batch(model, latents, shape))


def select_action(scores, rule, rng=None):
    """Choose from a {ActionCoord: score} mapping; ties go to the lowest cell index."""

    if not scores:
        raise DataError("no candidates to select from")

    rule = SelectionRule(rule)
    if rule is SelectionRule.ARGMIN_VARIANCE:
        return min(scores, key=lambda a: (scores[a], a.cell_index))
    if rule is SelectionRule.ARGMAX_VARIANCE:
        return min(scores, key=lambda a: (-scores[a], a.cell_index))

    if rng is None:
        raise ConfigError("random selection needs a random generator")
    ordered = sorted(scores, key=lambda a: a.cell_index)

    return ordered[int(rng.integers(len(ordered)))]


def run_acquisition(model, pair, cfg, environment=None, threads=None, zero_variance=False):
    """
    Run the dreaming controller on a normalized pair for `cfg.budget` steps.

    The occupied map is read only through `environment` (default: a fresh counting wrapper).
    `threads` sizes the scoring pool (default from DREAMMAP_THREADS); 1 scores serially.
    """

    cfg.validate(pair.empty.size)
    rule = SelectionRule(cfg.selection_rule)
    environment = environment or OccupiedEnvironment(pair.occupied)
    threads = worker_threads(threads)
    shape = pair.shape

    state = MeasurementState.empty(shape, pair.unit)
    dyn_state = DynamicsState.initial(model)
    trace = AcquisitionTrace(shape)

    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for t in range(cfg.budget):
            obs = make_observation(pair.empty, state)
            belief = encode(model, obs, rngs.stream(cfg.seed, rngs.ENCODE, t))
            candidates = sample_candidates(state, cfg.pool_size, rngs.stream(cfg.seed, rngs.CANDIDATES, t))

            if rule is SelectionRule.RANDOM:
                scored = {a: None for a in candidates}
            else:

                def score(action, t=t, belief=belief, dyn_state=dyn_state):
                    dream_rng = rngs.stream(cfg.seed, rngs.DREAM, t, action.cell_index)
                    return score_candidate(
                        model, belief, dyn_state, action, cfg.dream_samples, shape, dream_rng, zero_variance
                    )

                mapper = executor.map if executor is not None else map
                scored = dict(zip(candidates, mapper(score, candidates)))

            action = select_action(scored, rule, rngs.stream(cfg.seed, rngs.SELECT, t))
            value = environment.query(action.cell_index)
            state = apply_measurement(state, action.cell_index, value)
            _, _, dyn_state = dynamics_step(model, belief.sample, action, dyn_state)

            rmse_after = None
            if cfg.track_rmse:
                rmse_after = rmse(reconstruct(model, make_observation(pair.empty, state)), environment.truth)

            scores = tuple((a, u) for a, u in scored.items() if u is not None)
            trace.steps.append(StepRecord(t, action, float(value), scores, rmse_after))

            if scores:
                logger.debug("step %d scores: %s", t, [(a.cell_index, u) for a, u in scores])
            logger.info("step %d: chose cell %d of %d candidates", t, action.cell_index, len(candidates))
    finally:
        if executor is not None:
            executor.shutdown()

    trace.reconstruction = reconstruct(model, make_observation(pair.empty, state))
    trace.queries = environment.queries

    logger.info("acquisition finished: %d measurements, %d queries", len(trace.steps), trace.queries)

    return trace


def state_from_cells(pair, cells):
    """Measurement state of reading the occupied map of `pair` at `cells`, in order."""

    state = MeasurementState.empty(pair.shape, pair.unit)
    for cell in cells:
        state = apply_measurement(state, cell, pair.occupied[cell])

    return state


def save_trace(path, trace, reconstruction_path=None):
    """Write a trace as JSON lines: one object per step, then a final record."""

    lines = []
    for step in trace.steps:
        lines.append(
            json.dumps(
                {
                    "t": step.t,
                    "action": [step.action.row, step.action.col],
                    "value": step.value,
                    "scores": [[a.row, a.col, u] for a, u in step.scores],
                    "rmse_after": step.rmse_after,
                }
            )
        )
    lines.append(
        json.dumps(
            {
                "final": True,
                "shape": list(trace.shape),
                "queries": trace.queries,
                "reconstruction": None if reconstruction_path is None else str(reconstruction_path),
            }
        )
    )

    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_trace(path):
    """Read a JSON lines trace; the reconstruction map is loaded when the final record names one."""

    path = Path(path)

    try:
        records = [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        final = records.pop()
        if not final.get("final"):
            raise KeyError("final")
        shape = tuple(final["shape"])

        def coord(row, col):
            return ActionCoord.from_cell(cell_index(row, col, shape[1]), shape)

        steps = [
            StepRecord(
                r["t"],
                coord(*r["action"]),
                float(r["value"]),
                tuple((coord(row, col), u) for row, col, u in r["scores"]),
                r["rmse_after"],
            )
            for r in records
        ]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, IndexError) as exc:
        raise DataError(f"malformed trace file {path}: {exc}") from exc

    reconstruction = None
    if final["reconstruction"] is not None:
        reconstruction = load_map(path.parent / final["reconstruction"], bounded=False)

    return AcquisitionTrace(shape, steps, reconstruction, final["queries"]), final["reconstruction"]
