"""Distributed SGD on a synthetic least-squares task.

Each client holds a private dataset and computes the mean per-sample
gradient of f(theta; x, y) = (x.theta - y)^2 / 2 at the current global
parameters.  The server averages the (quantized) client gradients and
takes one gradient step per round.  The task is linear regression with a
known generating parameter so convergence can be asserted exactly.

`run_training` drives the full loop in two modes: "secure" routes every
round through the masked aggregation protocol; "plaintext" sums the same
quantized digits directly.  Masking is information-lossless, so the two
trajectories are bit-identical - that equivalence is itself a test target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import rng
from .codec import QuantizationConfig, dequantize_mean, quantize
from .errors import DivergenceError, ShapeError

if TYPE_CHECKING:
    from .cli import ScenarioConfig


@dataclass(frozen=True)
class ModelState:
    """Global parameter vector at one iteration."""

    theta: np.ndarray
    iteration: int
    learning_rate: float


@dataclass(frozen=True)
class ClientDataset:
    """One client's private samples: features (n, d) and targets (n,)."""

    features: np.ndarray
    targets: np.ndarray
    owner: int

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise ShapeError("client dataset must hold at least one sample")
        if self.targets.shape != (self.features.shape[0],):
            raise ShapeError("features and targets disagree on sample count")

    @property
    def num_samples(self) -> int:
        return int(self.features.shape[0])


def make_synthetic_task(num_clients: int, dimension: int,
                        samples_per_client: int, seed: int,
                        noise: float = 0.0):
    """Gaussian features, targets from a hidden parameter vector.

    Returns (datasets, true_theta).  With noise=0 the generating parameter
    is the exact optimum, where every gradient vanishes.
    """
    gen = rng.keyed_generator(seed, rng.DATA_DOMAIN)
    true_theta = gen.standard_normal(dimension)
    datasets = []
    for s in range(num_clients):
        x = gen.standard_normal((samples_per_client, dimension))
        y = x @ true_theta
        if noise > 0:
            y = y + noise * gen.standard_normal(samples_per_client)
        datasets.append(ClientDataset(features=x, targets=y, owner=s))
    return datasets, true_theta


def compute_gradient(theta: np.ndarray, dataset: ClientDataset) -> np.ndarray:
    """Mean least-squares gradient over the client's samples."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (dataset.features.shape[1],):
        raise ShapeError(
            f"theta has shape {theta.shape}, features need ({dataset.features.shape[1]},)"
        )
    residual = dataset.features @ theta - dataset.targets
    return dataset.features.T @ residual / dataset.num_samples


def sample_loss(theta: np.ndarray, datasets) -> float:
    """Mean of (x.theta - y)^2 / 2 over every sample of every client."""
    total = 0.0
    count = 0
    for ds in datasets:
        residual = ds.features @ theta - ds.targets
        total += float(residual @ residual) / 2.0
        count += ds.num_samples
    return total / count


def sgd_update(theta: np.ndarray, mean_gradient: np.ndarray,
               eta: float) -> np.ndarray:
    """theta minus eta times the averaged gradient."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(mean_gradient, dtype=np.float64)
    if theta.shape != g.shape:
        raise ShapeError(f"theta {theta.shape} and gradient {g.shape} disagree")
    updated = theta - eta * g
    if not np.all(np.isfinite(updated)):
        raise DivergenceError("model update produced non-finite parameters")
    return updated


def quantized_digits(theta: np.ndarray, dataset: ClientDataset,
                     cfg: QuantizationConfig) -> np.ndarray:
    """The digit vector a client would transmit at the current parameters."""
    return quantize(compute_gradient(theta, dataset), cfg).digits


@dataclass
class HistoryRow:
    """Per-round metrics; loss and norms refer to the pre-update parameters."""

    round: int
    loss: float
    theta_norm: float
    phase_estimations: int
    uplink: int
    recoveries: int


@dataclass
class TrainingHistory:
    rows: list[HistoryRow] = field(default_factory=list)
    thetas: list[np.ndarray] = field(default_factory=list)
    transcripts: list = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.rows[0].loss

    @property
    def final_loss(self) -> float:
        return self.rows[-1].loss


def run_training(config: "ScenarioConfig", mode: str = "secure") -> TrainingHistory:
    """Run the full DSGD loop and record per-round metrics.

    mode "secure" uses the masked aggregation protocol; "plaintext" is the
    insecure baseline summing quantized digits directly.  Stops after
    config.rounds, or earlier once loss falls below config.loss_threshold.
    """
    if mode not in ("secure", "plaintext"):
        raise ValueError(f"unknown training mode {mode!r}")
    from . import protocol  # imported here: protocol composes on top of fl

    datasets, _ = make_synthetic_task(
        config.clients, config.dimension, config.samples_per_client, config.seed
    )
    assignment = config.build_assignment()
    cfg = config.quantization()
    state = ModelState(theta=np.zeros(config.dimension), iteration=0,
                       learning_rate=config.learning_rate)
    history = TrainingHistory()

    for t in range(config.rounds):
        loss = sample_loss(state.theta, datasets)
        if mode == "secure":
            transcript, new_state = protocol.run_iteration(
                state, config, datasets=datasets, assignment=assignment
            )
            history.transcripts.append(transcript)
            counters = transcript.counters
            row = HistoryRow(
                round=t, loss=loss, theta_norm=float(np.linalg.norm(state.theta)),
                phase_estimations=counters["phase_estimations"],
                uplink=counters["uplink_messages"],
                recoveries=counters["recovery_messages"],
            )
        else:
            dropped = set(config.dropouts_for_round(t))
            if config.delayed_client is not None:
                dropped.add(config.delayed_client)
            senders = [i for i in range(config.clients) if i not in dropped]
            digit_sum = np.sum(
                [quantized_digits(state.theta, datasets[i], cfg) for i in senders],
                axis=0, dtype=np.int64,
            )
            mean = dequantize_mean(digit_sum, len(senders), cfg)
            new_state = ModelState(
                theta=sgd_update(state.theta, mean, state.learning_rate),
                iteration=t + 1, learning_rate=state.learning_rate,
            )
            row = HistoryRow(round=t, loss=loss,
                             theta_norm=float(np.linalg.norm(state.theta)),
                             phase_estimations=0, uplink=len(senders), recoveries=0)
        history.rows.append(row)
        history.thetas.append(new_state.theta.copy())
        state = new_state
        if config.loss_threshold is not None and loss < config.loss_threshold:
            break
    return history
