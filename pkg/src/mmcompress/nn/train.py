from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .optim import Adam
from .tensor import NonFiniteError, Tensor, backward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Schedule:
    """Optimization budget shared by every network in a run."""

    batches: int = 2500
    batch_size: int = 128
    lr: float = 1e-3

    def __post_init__(self):
        if self.batches < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError(f"invalid schedule {self}")


@dataclass
class TrainHistory:
    label: str = ""
    losses: list[float] = field(default_factory=list)  # per-datapoint, one per batch

    @property
    def initial(self) -> float:
        return float(np.mean(self.losses[:10]))

    @property
    def final(self) -> float:
        return float(np.mean(self.losses[-10:]))


def train(
    params: list[Tensor],
    loss_fn: Callable[[Any], Tensor],
    batch_fn: Callable[[np.random.Generator, int], Any],
    schedule: Schedule,
    rng: np.random.Generator,
    label: str = "",
) -> TrainHistory:
    """Minimize ``loss_fn(batch_fn(rng, batch_size))`` with Adam.

    ``loss_fn`` returns the batch-summed loss; the history stores it divided
    by the batch size.  A non-finite loss aborts with the batch index.
    """
    opt = Adam(params, lr=schedule.lr)
    hist = TrainHistory(label=label)
    for i in range(schedule.batches):
        batch = batch_fn(rng, schedule.batch_size)
        loss = loss_fn(batch)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NonFiniteError(f"{label or 'training'}: non-finite loss {value} at batch {i}")
        opt.zero_grad()
        backward(loss)
        opt.step()
        hist.losses.append(value / schedule.batch_size)
    log.debug("%s: loss %.4f -> %.4f", label, hist.initial, hist.final)
    return hist
