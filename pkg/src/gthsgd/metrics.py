"""Trace records and the measured quantities: global loss at the network
mean, squared stationarity gap, consensus and tracking errors, and the
steady-state error bound for the network mean gradient."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .oracle import (
    LogisticModel,
    Model,
    data_gradient,
    data_loss,
    regularizer_gradient,
    regularizer_loss,
)

CSV_COLUMNS = ("t", "epoch", "loss", "stat_gap", "consensus", "tracking", "queries")
CSV_HEADER = ",".join(CSV_COLUMNS)


@dataclass(frozen=True)
class TraceRecord:
    t: int
    epoch: float
    loss: float
    stat_gap: float
    consensus: float
    tracking: float
    queries: int

    def to_csv_row(self) -> str:
        return ",".join(
            (
                str(self.t),
                repr(float(self.epoch)),
                repr(float(self.loss)),
                repr(float(self.stat_gap)),
                repr(float(self.consensus)),
                repr(float(self.tracking)),
                str(self.queries),
            )
        )


def _shared_reg_coeff(models: Sequence[Model]) -> float | None:
    # the regularizer is a shared, global term: fold it in exactly once
    regs = {m.reg_coeff for m in models if isinstance(m, LogisticModel)}
    if not regs:
        return None
    if len(regs) > 1:
        raise ValueError(f"models disagree on reg_coeff: {sorted(regs)}")
    return regs.pop()


def global_loss(models: Sequence[Model], x_bar: np.ndarray) -> float:
    """Average of the local costs at the network mean, regularizer added once."""
    x_bar = np.asarray(x_bar, dtype=float)
    total = sum(data_loss(m, x_bar) for m in models) / len(models)
    reg = _shared_reg_coeff(models)
    if reg is not None:
        total += regularizer_loss(reg, x_bar)
    return float(total)


def global_gradient(models: Sequence[Model], x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    grad = sum(data_gradient(m, x) for m in models) / len(models)
    reg = _shared_reg_coeff(models)
    if reg is not None:
        grad = grad + regularizer_gradient(reg, x)
    return grad


def stationary_gap(models: Sequence[Model], x_bar: np.ndarray) -> float:
    """Squared norm of the global gradient at the network mean."""
    grad = global_gradient(models, x_bar)
    return float(grad @ grad)


def stationary_gap_per_node(models: Sequence[Model], x_rows: np.ndarray) -> float:
    """Average over nodes of the squared global-gradient norm at each node's
    own iterate. Costs n^2 local gradient evaluations."""
    x_rows = np.asarray(x_rows, dtype=float)
    return float(
        np.mean([stationary_gap(models, x_rows[i]) for i in range(x_rows.shape[0])])
    )


def consensus_error(x_rows: np.ndarray) -> float:
    """||x - mean||_F^2 / n over the node iterates."""
    x_rows = np.asarray(x_rows, dtype=float)
    dev = x_rows - x_rows.mean(axis=0, keepdims=True)
    return float(np.sum(dev * dev) / x_rows.shape[0])


def tracking_error(y_rows: np.ndarray) -> float:
    """||y - mean||_F^2 over the tracker iterates (not divided by n)."""
    y_rows = np.asarray(y_rows, dtype=float)
    dev = y_rows - y_rows.mean(axis=0, keepdims=True)
    return float(np.sum(dev * dev))


def steady_state_error_bound(schedule, lam: float, noise_sq_mean: float, n: int) -> float:
    """Upper bound on the limiting mean squared gradient norm at constant
    step size: 8 beta nu^2 / n + 256 lam^2 beta^2 nu^2 / (1 - lam^2)^3."""
    beta = schedule.beta
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lam must be in [0, 1), got {lam}")
    network = 256.0 * lam**2 * beta**2 * noise_sq_mean / (1.0 - lam**2) ** 3
    return 8.0 * beta * noise_sq_mean / n + network


def tail_average(values: Sequence[float], fraction: float = 0.2) -> float:
    """Mean of the trailing ``fraction`` of a sequence (at least one element)."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("tail_average needs at least one value")
    count = max(1, int(np.ceil(fraction * values.size)))
    return float(values[-count:].mean())
