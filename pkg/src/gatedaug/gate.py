"""Confidence gating between the two augmentation branches.

Scores are maximum softmax probabilities at a high temperature, computed with
the model being trained (or a frozen checkpoint).  Each mini-batch sets its
own threshold from the mild branch's score statistics, tau = mean - lambda *
population std, and every aggressively augmented sample whose score does not
strictly exceed tau is replaced by its mild counterpart.  A warm-up prefix of
training bypasses the gate entirely because early-model scores carry no
signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericError, ParameterError, ShapeError
from .model import ModelParams, TrainState, forward, load_checkpoint

DEFAULT_TEMPERATURE = 1000.0
DEFAULT_LAMBDA = 1.0
DEFAULT_WARMUP_FRACTION = 0.2


@dataclass
class GateConfig:
    temperature: float = DEFAULT_TEMPERATURE
    lam: float = DEFAULT_LAMBDA
    warmup_fraction: float = DEFAULT_WARMUP_FRACTION
    scorer: str = "online"  # "online" | "offline:<checkpoint path>"

    def __post_init__(self):
        if not (self.temperature > 0):
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if not (0.0 <= self.warmup_fraction < 1.0):
            raise ParameterError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.scorer != "online" and not self.scorer.startswith("offline:"):
            raise ParameterError(f"scorer must be 'online' or 'offline:<path>', got {self.scorer!r}")

    @property
    def offline_path(self) -> str | None:
        return self.scorer[len("offline:"):] if self.scorer.startswith("offline:") else None


@dataclass
class ScoreSet:
    values: np.ndarray
    branch: str  # "basic" | "heavy"


@dataclass
class GateDecision:
    """Per-sample outcome of one gating call.

    ``kept_heavy[i]`` is True when sample i kept its aggressive version.
    During warm-up every sample falls back and ``tau`` is NaN.
    """

    kept_heavy: np.ndarray
    tau: float
    replaced_fraction: float
    warmup: bool = False
    basic_scores: np.ndarray | None = None
    heavy_scores: np.ndarray | None = None


def msp_scores(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Maximum softmax probability per row, max-subtracted for overflow
    safety, computed in float64."""
    if not (temperature > 0):
        raise ParameterError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits in score computation")
    z = z / temperature
    z -= z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez.max(axis=-1) / ez.sum(axis=-1)


def msp_score(logits: np.ndarray, temperature: float) -> float:
    """Score for a single logit vector; lies in [1/C, 1]."""
    logits = np.asarray(logits)
    if logits.ndim != 1:
        raise ShapeError("rank-1 logits", logits.shape)
    return float(msp_scores(logits, temperature))


def compute_tau(basic_scores: ScoreSet, lam: float) -> float:
    """Per-batch threshold: mean minus lam times the population standard
    deviation (divisor n) of the mild branch's scores."""
    values = np.asarray(basic_scores.values, dtype=np.float64)
    if values.size == 0:
        raise ParameterError("cannot compute a threshold from an empty score set")
    return float(values.mean() - lam * values.std())


def mix(basic_batch: np.ndarray, heavy_batch: np.ndarray, heavy_scores: np.ndarray, tau: float):
    """Per-sample selection: keep the heavy version when its score strictly
    exceeds tau, otherwise fall back to the basic version."""
    heavy_scores = np.asarray(heavy_scores)
    if basic_batch.shape != heavy_batch.shape:
        raise ShapeError(basic_batch.shape, heavy_batch.shape)
    if heavy_scores.shape[0] != basic_batch.shape[0]:
        raise ShapeError((basic_batch.shape[0],), heavy_scores.shape)
    kept = heavy_scores > tau
    mixed = np.where(kept.reshape((-1,) + (1,) * (basic_batch.ndim - 1)), heavy_batch, basic_batch)
    decision = GateDecision(
        kept_heavy=kept,
        tau=float(tau),
        replaced_fraction=float(np.count_nonzero(~kept)) / len(kept),
        heavy_scores=heavy_scores,
    )
    return mixed, decision


def warmup_epochs(warmup_fraction: float, total_epochs: int) -> int:
    """Number of leading epochs gated off; ceil of the fraction, guarded
    against float round-up (0.2 * 200 must give exactly 40)."""
    return max(0, math.ceil(warmup_fraction * total_epochs - 1e-9))


def resolve_scorer(config: GateConfig, arch) -> ModelParams | None:
    """Load and validate the offline scorer checkpoint up front, or return
    None for the online scorer.  Failures surface at startup, not mid-run."""
    path = config.offline_path
    if path is None:
        return None
    try:
        params = load_checkpoint(path)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"offline scorer checkpoint {path!r} unusable: {exc}") from exc
    if params.arch != arch:
        raise ConfigurationError(
            f"offline scorer architecture {params.arch} does not match the model architecture {arch}"
        )
    return params


def gate_batch(
    state: TrainState,
    basic_batch: np.ndarray,
    heavy_batch: np.ndarray,
    config: GateConfig,
    epoch: int,
    total_epochs: int,
    scorer_params: ModelParams | None = None,
):
    """One gating step of the training loop.

    During the warm-up prefix the basic batch passes through untouched.
    Afterwards both batches are scored with the scorer model (the current
    parameters unless an offline checkpoint was resolved), tau comes from
    this batch's basic scores, and the mixing rule selects per sample.
    Scoring is a read-only forward pass: no gradients, no state mutation.
    """
    if epoch < warmup_epochs(config.warmup_fraction, total_epochs):
        b = basic_batch.shape[0]
        decision = GateDecision(
            kept_heavy=np.zeros(b, dtype=bool),
            tau=float("nan"),
            replaced_fraction=1.0,
            warmup=True,
        )
        return basic_batch, decision

    if scorer_params is None:
        scorer_params = state.params if config.offline_path is None else resolve_scorer(config, state.params.arch)
    basic_s = msp_scores(forward(scorer_params, basic_batch), config.temperature)
    heavy_s = msp_scores(forward(scorer_params, heavy_batch), config.temperature)
    tau = compute_tau(ScoreSet(basic_s, "basic"), config.lam)
    mixed, decision = mix(basic_batch, heavy_batch, heavy_s, tau)
    decision.basic_scores = basic_s
    return mixed, decision
