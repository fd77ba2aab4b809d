"""Decentralized optimization loops over a mixing topology.

The main loop (``gt_hsgd``) gives each node an iterate x, a gradient tracker
y, and a hybrid gradient estimator v. One initialization round takes a
size-b0 minibatch; every later iteration draws a single sample, evaluates it
at the current and previous iterates, and blends

    v_t = g(x_t, xi_t) + (1 - beta) * (v_{t-1} - g(x_{t-1}, xi_t)),

then mixes trackers and iterates through the doubly stochastic weights:
y_{t+1} = W (y_t + v_t - v_{t-1}) and x_{t+1} = W (x_t - alpha y_{t+1}).

beta = 1 forgets the past entirely (``gt_dsgd``, a tracked stochastic
gradient method, one query per iteration); beta = 0 never refreshes
(``gt_sarah_loop``, the recursive variance-reduced inner loop). ``dsgd`` is
the tracker-free baseline x_{t+1} = W (x_t - alpha g_t).

Two exact identities hold along every trajectory and are checked at runtime
when enabled: the tracker mean equals the estimator mean, and the iterate
mean follows mean(x_{t+1}) = mean(x_t) - alpha * mean(v_t). A violation
means the implementation or the mixing matrix is broken, so the run aborts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import metrics
from .dataio import load_dataset, normalize_rows, partition_uniform, synthesize_logistic
from .oracle import (
    Model,
    OracleHandle,
    QuadraticModel,
    paired_sample_gradient,
    sample_gradient,
    smoothness_bound,
)
from .topology import Topology, resolve_topology

GT_HSGD = "gt_hsgd"
GT_DSGD = "gt_dsgd"
GT_SARAH_LOOP = "gt_sarah_loop"
DSGD = "dsgd"
ALGORITHMS = (GT_HSGD, GT_DSGD, GT_SARAH_LOOP, DSGD)

TRACKING_TOL = 1e-10
MEAN_RECURSION_TOL = 1e-12


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    """An exact trajectory identity failed; the run must not continue."""

    def __init__(self, name: str, t: int, error: float):
        super().__init__(f"invariant {name!r} violated at t={t}: error={error:.3e}")
        self.name = name
        self.t = t
        self.error = error


@dataclass(frozen=True)
class Schedule:
    """Constant step size alpha, blend beta, init batch b0, horizon T."""

    alpha: float
    beta: float
    b0: int
    horizon: int

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ConfigError(f"alpha must be positive and finite, got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.b0 < 1:
            raise ConfigError(f"b0 must be >= 1, got {self.b0}")
        if self.horizon < 2:
            raise ConfigError(f"horizon must be >= 2, got {self.horizon}")


@dataclass
class SwarmState:
    """Per-node iterates stacked as rows: x and the previous x, tracker y,
    estimator v and the previous v, at iteration counter t."""

    x: np.ndarray
    x_prev: np.ndarray
    y: np.ndarray
    v: np.ndarray
    v_prev: np.ndarray
    t: int


def stepsize_cap(n: int, lam: float, smoothness: float) -> float:
    """Largest constant step size covered by the convergence guarantee:
    min{(1-lam^2)^2 / (90 lam^2), sqrt(n (1-lam)) / (26 lam), 1/(4 sqrt(3))} / L.
    The network branches are vacuous at lam = 0."""
    if not 0.0 <= lam < 1.0:
        raise ConfigError(f"lam must be in [0, 1), got {lam}")
    if smoothness <= 0:
        raise ConfigError(f"smoothness must be positive, got {smoothness}")
    branches = [1.0 / (4.0 * math.sqrt(3.0))]
    if lam > 0.0:
        branches.append((1.0 - lam**2) ** 2 / (90.0 * lam**2))
        branches.append(math.sqrt(n * (1.0 - lam)) / (26.0 * lam))
    return min(branches) / smoothness


def coupled_beta(alpha: float, n: int, smoothness: float) -> float:
    """Blend parameter matched to the step size: 48 L^2 alpha^2 / n.
    Stays below 1 whenever alpha is below the step-size cap."""
    return 48.0 * smoothness**2 * alpha**2 / n


def horizon_schedule(n: int, horizon: int, smoothness: float) -> Schedule:
    """Closed-form schedule from the horizon alone:
    alpha = n^{2/3} / (8 L T^{1/3}), beta = 3 n^{1/3} / (4 T^{2/3}) (clamped
    to 1), b0 = ceil(T^{1/3} / n^{2/3}). The ceiling is guarded against
    float noise at exact integers."""
    if horizon < 2:
        raise ConfigError(f"horizon must be >= 2, got {horizon}")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if smoothness <= 0:
        raise ConfigError(f"smoothness must be positive, got {smoothness}")
    alpha = n ** (2.0 / 3.0) / (8.0 * smoothness * horizon ** (1.0 / 3.0))
    beta = min(1.0, 3.0 * n ** (1.0 / 3.0) / (4.0 * horizon ** (2.0 / 3.0)))
    b0 = max(1, math.ceil(horizon ** (1.0 / 3.0) / n ** (2.0 / 3.0) - 1e-9))
    return Schedule(alpha=alpha, beta=beta, b0=b0, horizon=horizon)


def schedule_valid_horizon(n: int, lam: float) -> float:
    """Horizon above which the closed-form schedule's step size is covered by
    the guarantee: max{1424 lam^6 n^2 / (1-lam^2)^6, 35 lam^3 sqrt(n) / (1-lam)^{3/2}}."""
    if not 0.0 <= lam < 1.0:
        raise ConfigError(f"lam must be in [0, 1), got {lam}")
    if lam == 0.0:
        return 0.0
    return max(
        1424.0 * lam**6 * n**2 / (1.0 - lam**2) ** 6,
        35.0 * lam**3 * math.sqrt(n) / (1.0 - lam) ** 1.5,
    )


def _check_identity(name: str, lhs: np.ndarray, rhs: np.ndarray, tol: float, t: int) -> None:
    # relative with a unit floor; a NaN on either side fails the comparison
    # and aborts, so overflow cannot slip through
    error = float(np.linalg.norm(lhs - rhs))
    if not error <= tol * (1.0 + float(np.linalg.norm(rhs))):
        raise InvariantViolation(name, t, error)


def _check_state(state: SwarmState, alpha: float, x_before: np.ndarray) -> None:
    mean_v = state.v.mean(axis=0)
    _check_identity("tracker mean equals estimator mean", state.y.mean(axis=0), mean_v, TRACKING_TOL, state.t)
    _check_identity(
        "iterate mean recursion",
        state.x.mean(axis=0),
        x_before.mean(axis=0) - alpha * mean_v,
        MEAN_RECURSION_TOL,
        state.t,
    )


def init_gt_hsgd(
    topology: Topology,
    oracles: list[OracleHandle],
    x0: np.ndarray,
    schedule: Schedule,
    check: bool = True,
) -> SwarmState:
    """Initialization round: every node starts at the common point x0, takes
    a size-b0 minibatch estimate v0, and performs the first tracker and
    iterate mixing. Returns the state at t = 1."""
    n = topology.n
    if len(oracles) != n:
        raise ConfigError(f"{len(oracles)} oracles for {n} nodes")
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1:
        raise ConfigError(f"x0 must be a vector, got shape {x0.shape}")
    if not np.isfinite(x0).all():
        raise ConfigError("x0 contains non-finite values")
    w = topology.weights
    x_init = np.tile(x0, (n, 1))
    v0 = np.stack(
        [sample_gradient(oracles[i], x0, iteration=0, batch=schedule.b0) for i in range(n)]
    )
    # y0 and v_{-1} are zero, so the first tracker mix reduces to W v0
    y1 = w @ v0
    x1 = w @ (x_init - schedule.alpha * y1)
    state = SwarmState(
        x=x1, x_prev=x_init, y=y1, v=v0, v_prev=np.zeros_like(v0), t=1
    )
    if check:
        _check_state(state, schedule.alpha, x_init)
    return state


def step_gt_hsgd(
    state: SwarmState,
    topology: Topology,
    oracles: list[OracleHandle],
    schedule: Schedule,
    check: bool = True,
    fresh_gradient: bool = False,
) -> SwarmState:
    """One iteration t -> t+1. Each node makes one paired oracle call at
    (x_t, x_{t-1}) feeding the estimator blend. With ``fresh_gradient`` the
    blend's zero-weight history term is skipped (requires beta = 1), which
    halves the query cost without changing any iterate."""
    if state.t < 1:
        raise ConfigError(f"step requires an initialized state (t >= 1), got t={state.t}")
    if fresh_gradient and schedule.beta != 1.0:
        raise ConfigError("fresh_gradient requires beta = 1")
    w = topology.weights
    t = state.t
    keep = 1.0 - schedule.beta
    v_new = np.empty_like(state.v)
    for i in range(topology.n):
        if fresh_gradient:
            v_new[i] = sample_gradient(oracles[i], state.x[i], iteration=t, batch=1)
        else:
            g_now, g_prev = paired_sample_gradient(
                oracles[i], state.x[i], state.x_prev[i], iteration=t
            )
            v_new[i] = g_now + keep * (state.v[i] - g_prev)
    y_new = w @ (state.y + v_new - state.v)
    x_new = w @ (state.x - schedule.alpha * y_new)
    new_state = SwarmState(
        x=x_new, x_prev=state.x, y=y_new, v=v_new, v_prev=state.v, t=t + 1
    )
    if check:
        _check_state(new_state, schedule.alpha, state.x)
    return new_state


def step_dsgd(
    state: SwarmState,
    topology: Topology,
    oracles: list[OracleHandle],
    alpha: float,
) -> SwarmState:
    """Tracker-free baseline step: x_{t+1} = W (x_t - alpha g(x_t, xi_t)).
    One query per node; y and v stay zero."""
    t = state.t
    grads = np.stack(
        [
            sample_gradient(oracles[i], state.x[i], iteration=t, batch=1)
            for i in range(topology.n)
        ]
    )
    x_new = topology.weights @ (state.x - alpha * grads)
    return SwarmState(
        x=x_new, x_prev=state.x, y=state.y, v=state.v, v_prev=state.v_prev, t=t + 1
    )


_CONFIG_KEYS = {
    "name",
    "algorithm",
    "topology",
    "n",
    "model",
    "alpha",
    "beta",
    "b0",
    "T",
    "seed",
    "output_seed",
    "record_every",
    "x0_scale",
    "check_invariants",
    "epoch_samples",
}

_MODEL_KEYS = {
    "quadratic": {"kind", "dim", "noise_std", "eig_min", "eig_max", "data_seed"},
    "synthetic_logistic": {
        "kind",
        "samples_per_node",
        "dim",
        "separation",
        "reg",
        "data_seed",
    },
    "logistic_file": {"kind", "path", "format", "reg", "partition_seed"},
}


@dataclass
class RunConfig:
    """One experiment, as read from a JSON config (key "T" maps to horizon).

    ``alpha`` is a positive number or "auto", which fills alpha, beta, and b0
    from the closed-form horizon schedule; explicit beta/b0 override the
    filled values. ``gt_dsgd`` forces beta = 1, ``gt_sarah_loop`` forces
    beta = 0, ``dsgd`` accepts no beta or b0 at all.
    """

    algorithm: str
    topology: str
    n: int
    model: dict
    alpha: float | str
    horizon: int
    beta: float | None = None
    b0: int | None = None
    seed: int = 0
    output_seed: int | None = None
    record_every: int = 1
    name: str = "run"
    x0_scale: float = 0.0
    check_invariants: bool = True
    epoch_samples: int | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(
                f"unknown algorithm {self.algorithm!r}; expected one of {', '.join(ALGORITHMS)}"
            )
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n!r}")
        if not isinstance(self.horizon, int) or self.horizon < 2:
            raise ConfigError(f"T must be an integer >= 2, got {self.horizon!r}")
        if not isinstance(self.model, dict):
            raise ConfigError(f"model must be an object, got {type(self.model).__name__}")
        if isinstance(self.alpha, str):
            if self.alpha != "auto":
                raise ConfigError(f'alpha must be a positive number or "auto", got {self.alpha!r}')
        elif not (isinstance(self.alpha, (int, float)) and math.isfinite(self.alpha) and self.alpha > 0):
            raise ConfigError(f'alpha must be a positive number or "auto", got {self.alpha!r}')
        if self.beta is not None and not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.b0 is not None and (not isinstance(self.b0, int) or self.b0 < 1):
            raise ConfigError(f"b0 must be a positive integer, got {self.b0!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if self.output_seed is not None and (
            not isinstance(self.output_seed, int) or self.output_seed < 0
        ):
            raise ConfigError(f"output_seed must be a nonnegative integer, got {self.output_seed!r}")
        if not isinstance(self.record_every, int) or self.record_every < 1:
            raise ConfigError(f"record_every must be a positive integer, got {self.record_every!r}")
        if self.epoch_samples is not None and (
            not isinstance(self.epoch_samples, int) or self.epoch_samples < 1
        ):
            raise ConfigError(f"epoch_samples must be a positive integer, got {self.epoch_samples!r}")
        if self.algorithm == DSGD and (self.beta is not None or self.b0 is not None):
            raise ConfigError("dsgd takes neither beta nor b0")
        if self.algorithm == GT_DSGD and self.beta not in (None, 1.0):
            raise ConfigError(f"gt_dsgd forces beta = 1, got {self.beta}")
        if self.algorithm == GT_SARAH_LOOP and self.beta not in (None, 0.0):
            raise ConfigError(f"gt_sarah_loop forces beta = 0, got {self.beta}")


def config_from_dict(raw: dict, name: str | None = None) -> RunConfig:
    """Build a validated RunConfig from parsed JSON."""
    if not isinstance(raw, dict):
        raise ConfigError(f"run config must be an object, got {type(raw).__name__}")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    missing = {"algorithm", "topology", "n", "model", "alpha", "T"} - set(raw)
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(sorted(missing))}")
    kwargs = dict(raw)
    kwargs["horizon"] = kwargs.pop("T")
    if name is not None:
        kwargs["name"] = name
    return RunConfig(**kwargs)


def load_run_config(path: str) -> RunConfig:
    with open(path) as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}")
    return config_from_dict(raw)


def build_models(config: RunConfig) -> list[Model]:
    """Instantiate the n local models named by ``config.model``."""
    spec = config.model
    kind = spec.get("kind")
    if kind not in _MODEL_KEYS:
        raise ConfigError(
            f"unknown model kind {kind!r}; expected one of {', '.join(sorted(_MODEL_KEYS))}"
        )
    unknown = set(spec) - _MODEL_KEYS[kind]
    if unknown:
        raise ConfigError(f"unknown {kind} model keys: {', '.join(sorted(unknown))}")
    if kind == "quadratic":
        dim = int(spec.get("dim", 10))
        noise_std = float(spec.get("noise_std", 0.0))
        eig_min = float(spec.get("eig_min", 0.5))
        eig_max = float(spec.get("eig_max", 1.5))
        data_seed = int(spec.get("data_seed", 0))
        if dim < 1:
            raise ConfigError(f"quadratic dim must be >= 1, got {dim}")
        if not 0 < eig_min <= eig_max:
            raise ConfigError(f"need 0 < eig_min <= eig_max, got [{eig_min}, {eig_max}]")
        rng = np.random.default_rng(data_seed)
        if dim == 1:
            ladder = np.array([eig_max])
        else:
            ladder = np.linspace(eig_min, eig_max, dim)
        models: list[Model] = []
        for _ in range(config.n):
            basis, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
            q = basis @ np.diag(ladder) @ basis.T
            models.append(QuadraticModel((q + q.T) / 2, noise_std=noise_std))
        return models
    if kind == "synthetic_logistic":
        return synthesize_logistic(
            n=config.n,
            samples_per_node=int(spec.get("samples_per_node", 200)),
            dim=int(spec.get("dim", 20)),
            separation=float(spec.get("separation", 1.0)),
            seed=int(spec.get("data_seed", 0)),
            reg_coeff=float(spec.get("reg", 1e-4)),
        )
    path = spec.get("path")
    if not path:
        raise ConfigError("logistic_file model needs a 'path'")
    dataset = normalize_rows(load_dataset(path, fmt=spec.get("format", "libsvm")))
    return partition_uniform(
        dataset,
        config.n,
        seed=int(spec.get("partition_seed", 0)),
        reg_coeff=float(spec.get("reg", 1e-4)),
    )


def _resolve_schedule(config: RunConfig, smoothness: float) -> Schedule:
    auto = horizon_schedule(config.n, config.horizon, smoothness)
    if config.alpha == "auto":
        alpha, beta, b0 = auto.alpha, auto.beta, auto.b0
    else:
        alpha = float(config.alpha)
        beta = None
        b0 = 1
    if config.beta is not None:
        beta = config.beta
    if config.b0 is not None:
        b0 = config.b0
    if config.algorithm == GT_DSGD:
        beta = 1.0
    elif config.algorithm == GT_SARAH_LOOP:
        beta = 0.0
    if beta is None:
        raise ConfigError('gt_hsgd with numeric alpha needs an explicit beta (or alpha: "auto")')
    return Schedule(alpha=alpha, beta=beta, b0=b0, horizon=config.horizon)


@dataclass
class RunResult:
    config: RunConfig
    schedule: Schedule | None
    topology: Topology
    models: list[Model]
    oracles: list[OracleHandle]
    records: list[metrics.TraceRecord]
    selected_x: np.ndarray
    selected_t: int
    selected_node: int
    state: SwarmState
    per_node_gap: float
    epoch_samples: int
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        final = self.records[-1]
        out = {
            "name": self.config.name,
            "algorithm": self.config.algorithm,
            "topology": self.config.topology,
            "n": self.config.n,
            "lam": self.topology.lam,
            "T": self.config.horizon,
            "seed": self.config.seed,
            "output_seed": self.config.output_seed,
            "record_every": self.config.record_every,
            "epoch_samples": self.epoch_samples,
            "selected_t": self.selected_t,
            "selected_node": self.selected_node,
            "queries_per_node": final.queries,
            "final": {
                "t": final.t,
                "epoch": final.epoch,
                "loss": final.loss,
                "stat_gap": final.stat_gap,
                "consensus": final.consensus,
                "tracking": final.tracking,
            },
            "per_node_stat_gap": self.per_node_gap,
            "warnings": list(self.warnings),
        }
        if self.schedule is not None:
            out["alpha"] = self.schedule.alpha
            out["beta"] = self.schedule.beta
            out["b0"] = self.schedule.b0
        return out


def _default_epoch_samples(config: RunConfig, models: list[Model]) -> int:
    if config.epoch_samples is not None:
        return config.epoch_samples
    kind = config.model.get("kind")
    if kind == "quadratic":
        return 1000
    return min(m.num_samples for m in models)


def run(config: RunConfig) -> RunResult:
    """Execute one configured run and collect its trace.

    Records land at every t with t % record_every == 0 plus the final t = T,
    over t in 0..T, so a trace holds ceil(T / record_every) + 1 rows. The
    output iterate is drawn uniformly from all (t, node) pairs using
    output_seed (default seed + 1) and captured on the fly.
    """
    topology = resolve_topology(config.topology, config.n)
    models = build_models(config)
    oracles = [OracleHandle(models[i], config.seed, i) for i in range(config.n)]
    smoothness = max(smoothness_bound(m) for m in models)
    horizon = config.horizon
    warnings: list[str] = []

    if config.algorithm == DSGD:
        schedule = None
        if config.alpha == "auto":
            alpha = horizon_schedule(config.n, horizon, smoothness).alpha
        else:
            alpha = float(config.alpha)
    else:
        schedule = _resolve_schedule(config, smoothness)
        alpha = schedule.alpha

    cap = stepsize_cap(config.n, topology.lam, smoothness)
    if alpha > cap:
        warnings.append(
            f"alpha={alpha:.6g} exceeds the guarantee's step-size cap {cap:.6g} "
            f"(n={config.n}, lam={topology.lam:.4f}, L={smoothness:.4g}); proceeding"
        )

    dim = models[0].dim
    x0 = np.full(dim, config.x0_scale, dtype=float)
    output_seed = config.output_seed if config.output_seed is not None else config.seed + 1
    out_rng = np.random.default_rng(output_seed)
    selected_t = int(out_rng.integers(0, horizon + 1))
    selected_node = int(out_rng.integers(0, config.n))
    selected_x: np.ndarray | None = None

    epoch_samples = _default_epoch_samples(config, models)
    records: list[metrics.TraceRecord] = []

    def record(t: int, x_rows: np.ndarray, y_rows: np.ndarray) -> None:
        queries = oracles[0].query_count
        x_bar = x_rows.mean(axis=0)
        records.append(
            metrics.TraceRecord(
                t=t,
                epoch=queries / epoch_samples,
                loss=metrics.global_loss(models, x_bar),
                stat_gap=metrics.stationary_gap(models, x_bar),
                consensus=metrics.consensus_error(x_rows),
                tracking=metrics.tracking_error(y_rows),
                queries=queries,
            )
        )

    x_init = np.tile(x0, (config.n, 1))
    zeros = np.zeros_like(x_init)
    if selected_t == 0:
        selected_x = x0.copy()
    record(0, x_init, zeros)

    if config.algorithm == DSGD:
        state = SwarmState(
            x=x_init, x_prev=x_init.copy(), y=zeros, v=zeros, v_prev=zeros.copy(), t=0
        )
        while state.t < horizon:
            state = step_dsgd(state, topology, oracles, alpha)
            if state.t == selected_t:
                selected_x = state.x[selected_node].copy()
            if state.t % config.record_every == 0 or state.t == horizon:
                record(state.t, state.x, state.y)
        expected_queries = horizon
    else:
        fresh = config.algorithm == GT_DSGD
        state = init_gt_hsgd(
            topology, oracles, x0, schedule, check=config.check_invariants
        )
        if state.t == selected_t:
            selected_x = state.x[selected_node].copy()
        if state.t % config.record_every == 0 or state.t == horizon:
            record(state.t, state.x, state.y)
        while state.t < horizon:
            state = step_gt_hsgd(
                state,
                topology,
                oracles,
                schedule,
                check=config.check_invariants,
                fresh_gradient=fresh,
            )
            if state.t == selected_t:
                selected_x = state.x[selected_node].copy()
            if state.t % config.record_every == 0 or state.t == horizon:
                record(state.t, state.x, state.y)
        per_step = 1 if fresh else 2
        expected_queries = schedule.b0 + per_step * (horizon - 1)

    for handle in oracles:
        if handle.query_count != expected_queries:
            raise InvariantViolation(
                f"query accounting (node {handle.node_id}: "
                f"{handle.query_count} != {expected_queries})",
                state.t,
                float(abs(handle.query_count - expected_queries)),
            )
    if selected_x is None:
        raise InvariantViolation("output iterate never captured", state.t, float(selected_t))

    return RunResult(
        config=config,
        schedule=schedule,
        topology=topology,
        models=models,
        oracles=oracles,
        records=records,
        selected_x=selected_x,
        selected_t=selected_t,
        selected_node=selected_node,
        state=state,
        per_node_gap=metrics.stationary_gap_per_node(models, state.x),
        epoch_samples=epoch_samples,
        warnings=warnings,
    )


def rerun_with(config: RunConfig, **overrides) -> RunConfig:
    """Copy a config with replacements (convenience for sweeps)."""
    horizon = overrides.pop("T", None)
    if horizon is not None:
        overrides["horizon"] = horizon
    valid = {f.name for f in fields(RunConfig)}
    unknown = set(overrides) - valid
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
    return replace(config, **overrides)
