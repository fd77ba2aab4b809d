"""Local cost models and their stochastic first-order oracles.

Two model kinds:

- ``LogisticModel``: binary logistic loss over a local shard with a bounded
  non-convex regularizer r(x) = reg * sum(x_k^2 / (1 + x_k^2)). Sampling is
  with replacement from the shard.
- ``QuadraticModel``: f(x) = x' Q x / 2 with additive Gaussian gradient noise
  N(0, noise_std^2 I), so the per-draw noise second moment is dim * noise_std^2.

Randomness is counter-based: every draw is a pure function of
(global_seed, node_id, iteration, position-within-call), so traces cannot
depend on thread scheduling. A paired call draws one sample and evaluates it
at two points; it counts as two queries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OracleError(ValueError):
    pass


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # stable piecewise logistic: never exponentiates a positive argument
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def regularizer_loss(reg_coeff: float, x: np.ndarray) -> float:
    xsq = x * x
    return float(reg_coeff * np.sum(xsq / (1.0 + xsq)))


def regularizer_gradient(reg_coeff: float, x: np.ndarray) -> np.ndarray:
    return 2.0 * reg_coeff * x / (1.0 + x * x) ** 2


@dataclass
class LogisticModel:
    """Local logistic cost (1/m) sum log(1 + exp(-label * <x, row>)) + r(x).

    Rows of ``features`` must have unit norm; labels must be exactly +-1.
    The smoothness constant is then 1/4 + 2 * reg_coeff.
    """

    features: np.ndarray
    labels: np.ndarray
    reg_coeff: float = 1e-4
    node_id: int = 0

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2:
            raise OracleError(f"features must be 2-d, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise OracleError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.features.shape[0]} feature rows"
            )
        if self.features.shape[0] < 1:
            raise OracleError("model needs at least one sample")
        if not np.isfinite(self.features).all():
            raise OracleError("features contain non-finite values")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise OracleError("labels must be exactly +1 or -1 (map them at load time)")
        norms = np.linalg.norm(self.features, axis=1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise OracleError(
                "feature rows must have unit norm (apply normalize_rows first); "
                f"worst deviation {np.abs(norms - 1.0).max():.3e}"
            )
        if self.reg_coeff < 0:
            raise OracleError("reg_coeff must be nonnegative")

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]


@dataclass
class QuadraticModel:
    """Local quadratic cost x' q_matrix x / 2 with Gaussian gradient noise."""

    q_matrix: np.ndarray
    noise_std: float = 0.0

    def __post_init__(self):
        self.q_matrix = np.ascontiguousarray(self.q_matrix, dtype=float)
        q = self.q_matrix
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise OracleError(f"q_matrix must be square, got shape {q.shape}")
        if not np.isfinite(q).all():
            raise OracleError("q_matrix contains non-finite values")
        if np.abs(q - q.T).max() > 1e-9:
            raise OracleError("q_matrix must be symmetric")
        if self.noise_std < 0:
            raise OracleError("noise_std must be nonnegative")

    @property
    def dim(self) -> int:
        return self.q_matrix.shape[0]


Model = LogisticModel | QuadraticModel


def _check_point(model: Model, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise OracleError(f"point has shape {x.shape}, model dimension is {model.dim}")
    if not np.isfinite(x).all():
        raise OracleError("point contains non-finite values")
    return x


def data_loss(model: Model, x: np.ndarray) -> float:
    """Local cost without the shared regularizer."""
    if isinstance(model, QuadraticModel):
        return float(0.5 * x @ (model.q_matrix @ x))
    margins = model.labels * (model.features @ x)
    return float(np.mean(np.logaddexp(0.0, -margins)))


def data_gradient(model: Model, x: np.ndarray) -> np.ndarray:
    """Gradient of the local cost without the shared regularizer."""
    if isinstance(model, QuadraticModel):
        return model.q_matrix @ x
    margins = model.labels * (model.features @ x)
    coefs = -model.labels * _sigmoid(-margins)
    return (model.features.T @ coefs) / model.num_samples


def exact_local_loss(model: Model, x: np.ndarray) -> float:
    x = _check_point(model, x)
    if isinstance(model, QuadraticModel):
        return data_loss(model, x)
    return data_loss(model, x) + regularizer_loss(model.reg_coeff, x)


def exact_local_gradient(model: Model, x: np.ndarray) -> np.ndarray:
    x = _check_point(model, x)
    if isinstance(model, QuadraticModel):
        return data_gradient(model, x)
    return data_gradient(model, x) + regularizer_gradient(model.reg_coeff, x)


def smoothness_bound(model: Model) -> float:
    """Lipschitz constant of the local gradient."""
    if isinstance(model, QuadraticModel):
        return float(np.linalg.norm(model.q_matrix, 2))
    return 0.25 + 2.0 * model.reg_coeff


class OracleHandle:
    """Stochastic gradient access for one node's model.

    Draws come from counter-based streams: the stream for iteration t is a
    Philox generator keyed by [global_seed, node_id << 32 | t], and the r-th
    value drawn within one call sits at position r of that stream. Two handles
    with the same (global_seed, node_id) therefore produce identical draws in
    any thread schedule. ``query_count`` tallies stochastic gradient queries:
    a size-b minibatch costs b, a paired call costs 2.
    """

    def __init__(self, model: Model, global_seed: int, node_id: int):
        if not 0 <= int(global_seed) < 2**64:
            raise OracleError(f"global_seed must be in [0, 2^64), got {global_seed}")
        if not 0 <= int(node_id) < 2**32:
            raise OracleError(f"node_id must be in [0, 2^32), got {node_id}")
        self.model = model
        self.global_seed = int(global_seed)
        self.node_id = int(node_id)
        self.query_count = 0
        self._bitgen = np.random.Philox(key=[self.global_seed, 0])
        self._gen = np.random.Generator(self._bitgen)
        self._template = self._bitgen.state

    def stream(self, iteration: int) -> np.random.Generator:
        """Generator positioned at the start of the (node, iteration) stream.

        Equivalent to Generator(Philox(key=[seed, node << 32 | iteration]))
        built fresh; the handle resets its own bit generator instead.
        """
        it = int(iteration)
        if not 0 <= it < 2**32:
            raise OracleError(f"iteration must be in [0, 2^32), got {iteration}")
        state = dict(self._template)
        state["state"] = {
            "counter": np.zeros(4, dtype=np.uint64),
            "key": np.array(
                [self.global_seed, (self.node_id << 32) | it], dtype=np.uint64
            ),
        }
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._bitgen.state = state
        return self._gen


def sample_gradient_draws(
    handle: OracleHandle, x: np.ndarray, iteration: int, count: int
) -> np.ndarray:
    """Matrix of ``count`` independent single-draw gradients at x (one row
    per draw, regularizer included). Costs ``count`` queries."""
    if count < 1:
        raise OracleError(f"count must be >= 1, got {count}")
    model = handle.model
    x = np.asarray(x, dtype=float)
    gen = handle.stream(iteration)
    handle.query_count += count
    if isinstance(model, QuadraticModel):
        mean_grad = model.q_matrix @ x
        noise = gen.standard_normal((count, model.dim)) * model.noise_std
        return mean_grad[None, :] + noise
    idx = gen.integers(0, model.num_samples, size=count)
    rows = model.features[idx]
    margins = model.labels[idx] * (rows @ x)
    coefs = -model.labels[idx] * _sigmoid(-margins)
    return coefs[:, None] * rows + regularizer_gradient(model.reg_coeff, x)[None, :]


def sample_gradient(
    handle: OracleHandle, x: np.ndarray, iteration: int, batch: int = 1
) -> np.ndarray:
    """Minibatch stochastic gradient: mean of ``batch`` single draws."""
    return sample_gradient_draws(handle, x, iteration, batch).mean(axis=0)


def paired_sample_gradient(
    handle: OracleHandle, x_now: np.ndarray, x_prev: np.ndarray, iteration: int
) -> tuple[np.ndarray, np.ndarray]:
    """One sample evaluated at two points (two queries, one draw).

    Returns (g(x_now, xi), g(x_prev, xi)) with the same xi; equal inputs give
    bitwise-identical outputs.
    """
    model = handle.model
    x_now = np.asarray(x_now, dtype=float)
    x_prev = np.asarray(x_prev, dtype=float)
    gen = handle.stream(iteration)
    handle.query_count += 2
    if isinstance(model, QuadraticModel):
        noise = gen.standard_normal(model.dim) * model.noise_std
        return model.q_matrix @ x_now + noise, model.q_matrix @ x_prev + noise
    j = int(gen.integers(0, model.num_samples))
    row = model.features[j]
    label = model.labels[j]

    def single(point: np.ndarray) -> np.ndarray:
        margin = label * (row @ point)
        coef = -label * _sigmoid(-margin)
        return coef * row + regularizer_gradient(model.reg_coeff, point)

    return single(x_now), single(x_prev)


def estimate_noise(
    handle: OracleHandle, x: np.ndarray, draws: int, iteration: int = 0
) -> float:
    """Monte-Carlo estimate of E ||g(x, xi) - grad f(x)||^2 over ``draws``
    samples (costs ``draws`` queries). Diagnostic; runs never call this."""
    if draws < 1:
        raise OracleError(f"draws must be >= 1, got {draws}")
    model = handle.model
    x = np.asarray(x, dtype=float)
    exact = exact_local_gradient(model, x)
    gen = handle.stream(iteration)
    handle.query_count += draws
    total = 0.0
    done = 0
    # chunked so large draw counts stay memory-bounded; positions within the
    # stream are unaffected by the chunking
    while done < draws:
        size = min(8192, draws - done)
        if isinstance(model, QuadraticModel):
            block = model.q_matrix @ x + gen.standard_normal((size, model.dim)) * model.noise_std
        else:
            idx = gen.integers(0, model.num_samples, size=size)
            rows = model.features[idx]
            margins = model.labels[idx] * (rows @ x)
            coefs = -model.labels[idx] * _sigmoid(-margins)
            block = coefs[:, None] * rows + regularizer_gradient(model.reg_coeff, x)[None, :]
        diffs = block - exact[None, :]
        total += float(np.sum(diffs * diffs))
        done += size
    return total / draws
