"""
Dreammap gp module. Provides the two comparison reconstructions: copying the empty map,
and Gaussian-process interpolation with a kernel learnt from the empty map.

The kernel is a constant term plus an RBF plus white noise over cell coordinates. Its
hyperparameters maximise the log marginal likelihood of the (mean centred) empty map,
found by a 5 x 5 x 5 log-grid followed by coordinate-wise bounded scalar refinement. For
reconstruction the empty map is the GP's mean function and the GP is conditioned on the
residuals `measured - empty` at the visited cells.
"""


import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError, NumericalError
from .grid import GridMap, cell_coords

logger = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
GRID_STEPS = 5
REFINE_SWEEPS = 2
REFINE_XATOL = 1e-3
INFEASIBLE_PENALTY = 1e6


class CholeskyError(NumericalError):
    """Raised when a Gram matrix stays indefinite after jitter escalation."""


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters of k(p, q) = const_var + rbf_var * exp(-|p - q|^2 / (2 rbf_len^2)) + noise_var * [p = q]."""

    const_var: float = 0.0
    rbf_var: float = 1.0
    rbf_len: float = 1.0
    noise_var: float = 1e-2

    def validate(self):
        values = asdict(self).values()
        if not all(math.isfinite(v) for v in values):
            raise ConfigError(f"non-finite kernel parameters {self}")
        if self.const_var < 0.0 or self.rbf_var <= 0.0 or self.rbf_len <= 0.0 or self.noise_var <= 0.0:
            raise ConfigError(f"invalid kernel parameters {self}")

        return self

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            return cls(**{k: float(v) for k, v in json.loads(text).items()}).validate()
        except (json.JSONDecodeError, TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed kernel parameters: {exc}") from exc

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class GpPosterior:
    """Pointwise posterior mean and variance over the whole grid."""

    mean: GridMap
    variance: GridMap


def empty_copy(pair):
    """The trivial reconstruction: the empty-environment map, whatever was measured."""

    return pair.empty


def kernel_eval(params, p, q):
    """k(p, q) for two cell coordinates."""

    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    sqdist = float(np.sum((p - q) ** 2))
    value = params.const_var + params.rbf_var * math.exp(-sqdist / (2.0 * params.rbf_len**2))

    if np.array_equal(p, q):
        value += params.noise_var

    return value


def kernel_matrix(params, x1, x2=None):
    """
    Kernel matrix between coordinate arrays of shape (n, 2) and (m, 2).

    With `x2` omitted the matrix is the Gram matrix of `x1` and carries the white-noise
    term on its diagonal; cross-covariances between distinct point sets never do.
    """

    same = x2 is None
    x2 = x1 if same else x2
    k = params.const_var + params.rbf_var * np.exp(-cdist(x1, x2, "sqeuclidean") / (2.0 * params.rbf_len**2))

    if same:
        k[np.diag_indices_from(k)] += params.noise_var

    return k


def _cholesky(gram):
    try:
        return cholesky(gram, lower=True)
    except LinAlgError:
        pass

    jitter = JITTER_START
    while jitter <= JITTER_MAX:
        logger.debug("cholesky failed, retrying with jitter %g", jitter)
        try:
            return cholesky(gram + jitter * np.eye(len(gram)), lower=True)
        except LinAlgError:
            jitter *= 10.0

    raise CholeskyError(f"Gram matrix of {len(gram)} points not positive definite with jitter up to {JITTER_MAX}")


def grid_coords(shape, cells=None):
    """(n, 2) float coordinates of the given cells (all cells when omitted)."""

    height, width = shape
    cells = np.arange(height * width) if cells is None else np.asarray(cells)
    rows, cols = cell_coords(cells, width)

    return np.stack([rows, cols], axis=1).astype(np.float64)


def log_marginal_likelihood(params, coords, y):
    """log p(y | X, θ) of a zero-mean GP."""

    chol = _cholesky(kernel_matrix(params, coords))
    alpha = cho_solve((chol, True), y)

    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * len(y) * math.log(2.0 * math.pi))


def candidate_grid(y_var, shape):
    """The initial 5 x 5 x 5 log-grid of (rbf_var, rbf_len, noise_var) candidates."""

    y_var = max(y_var, 1e-12)
    rbf_vars = np.geomspace(1e-2, 1e1, GRID_STEPS) * y_var
    rbf_lens = np.geomspace(0.5, max(max(shape), 1.0), GRID_STEPS)
    noise_vars = np.geomspace(1e-4, 1.0, GRID_STEPS) * y_var

    return [
        KernelParams(0.0, float(rv), float(rl), float(nv)) for rv in rbf_vars for rl in rbf_lens for nv in noise_vars
    ]


def _subsample(empty, max_points, seed):
    coords = grid_coords(empty.shape)
    y = empty.flat.copy()

    if len(y) > max_points:
        keep = np.sort(np.random.default_rng(seed).choice(len(y), size=max_points, replace=False))
        coords, y = coords[keep], y[keep]

    return coords, y - empty.flat.mean()


def fit_kernel(empty, max_points=1024, seed=0):
    """
    Fit kernel hyperparameters to the empty map by maximising the log marginal likelihood.

    The constant term is fixed at zero, the constant trend being the map mean removed
    before fitting. Maps with more than `max_points` cells are subsampled uniformly with
    the given seed.
    """

    if max_points < 16:
        raise ConfigError("max_points must be at least 16")

    coords, y = _subsample(empty, max_points, seed)
    y_var = float(np.var(y))

    def score(params):
        try:
            return log_marginal_likelihood(params, coords, y)
        except CholeskyError:
            return -math.inf

    candidates = candidate_grid(y_var, empty.shape)
    scores = [score(c) for c in candidates]
    best_idx = int(np.argmax(scores))
    best, best_score = candidates[best_idx], scores[best_idx]

    if not math.isfinite(best_score):
        raise CholeskyError("no kernel candidate admits a Cholesky factorisation")

    logger.debug("kernel grid search best %s (lml %.4f)", best, best_score)

    # half a grid step either side of the incumbent, per coordinate, in log space
    steps = {
        "rbf_var": math.log(10.0**3) / (GRID_STEPS - 1) / 2.0,
        "rbf_len": math.log(max(max(empty.shape), 1.0) / 0.5) / (GRID_STEPS - 1) / 2.0,
        "noise_var": math.log(10.0**4) / (GRID_STEPS - 1) / 2.0,
    }

    for _ in range(REFINE_SWEEPS):
        for name, half_width in steps.items():
            centre = math.log(getattr(best, name))

            def at(log_value, name=name):
                return replace(best, **{name: math.exp(log_value)})

            def objective(log_value, at=at, floor=best_score):
                value = score(at(log_value))
                return -value if math.isfinite(value) else -floor + INFEASIBLE_PENALTY

            found = minimize_scalar(
                objective,
                bounds=(centre - half_width, centre + half_width),
                method="bounded",
                options={"xatol": REFINE_XATOL},
            )
            candidate = at(float(found.x))
            candidate_score = score(candidate)
            if candidate_score > best_score:
                best, best_score = candidate, candidate_score

    logger.info("fitted kernel %s (lml %.4f)", best, best_score)

    return best.validate()


def gp_reconstruct(params, empty, state):
    """
    Posterior of the occupied map given the measurements in `state`.

    The mean function is the empty map. Means and variances are of the latent field, so
    the white-noise term enters only the Gram matrix of the visited cells.
    """

    if len(state) < 1:
        raise DataError("gp_reconstruct needs at least one measurement")

    visited = np.asarray(state.visited)
    train_x = grid_coords(empty.shape, visited)
    all_x = grid_coords(empty.shape)
    residual = state.measured_values() - empty.flat[visited]

    chol = _cholesky(kernel_matrix(params, train_x))
    cross = kernel_matrix(params, all_x, train_x)

    mean = empty.flat + cross @ cho_solve((chol, True), residual)
    v = solve_triangular(chol, cross.T, lower=True)
    prior_var = params.const_var + params.rbf_var
    variance = np.maximum(prior_var - np.sum(v * v, axis=0), 0.0)

    return GpPosterior(
        GridMap(mean.reshape(empty.shape), empty.unit, bounded=False),
        GridMap(variance.reshape(empty.shape), empty.unit, bounded=False),
    )
