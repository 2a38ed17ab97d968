"""Minimal denoising diffusion baseline on the same toy targets as the GAN trainers."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from engine import autodiff as ad
from engine import metrics, toydata
from engine.autodiff import DomainError, Graph, Tensor
from engine.nn import Network, NetworkSpec, init_network, make_optimizer, optimizer_step
from engine.telemetry import EVALUATE, EVALUATIONS, G_STEP, G_UPDATES, RunTelemetry
from engine.toydata import DistributionSpec, Rng
from engine.trainers import DIVERGENCE_BOUND, STATUS_COMPLETED, STATUS_DIVERGED, ConfigError, RunLog
from ganlab.logging import log_event, run_context

logger = logging.getLogger(__name__)

SCHEDULES = ("linear", "constant")


class NoiseSchedule:
    """Per-step variances beta_1..beta_T with alpha_t = 1 - beta_t and cumulative products."""

    def __init__(self, betas: np.ndarray | list[float], kind: str = "custom"):
        b = np.asarray(betas, dtype=np.float64).reshape(-1)
        if b.size < 1:
            raise ValueError("schedule needs at least one step")
        # beta = 0 is accepted so the noiseless chain can be exercised.
        if np.any(b < 0) or np.any(b >= 1):
            raise ValueError("every beta must lie in [0, 1)")
        self.kind = kind
        self.betas = b
        self.alphas = 1.0 - b
        self.alpha_bars = np.cumprod(self.alphas)

    @classmethod
    def constant(cls, steps: int, beta: float = 0.01) -> NoiseSchedule:
        return cls(np.full(int(steps), float(beta)), "constant")

    @classmethod
    def linear(cls, steps: int, start: float = 1e-4, end: float = 0.02) -> NoiseSchedule:
        return cls(np.linspace(float(start), float(end), int(steps)), "linear")

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def check_step(self, t: int) -> int:
        if not 1 <= int(t) <= self.T:
            raise ValueError(f"step {t} outside [1, {self.T}]")
        return int(t)


@dataclass(frozen=True)
class DiffusionConfig:
    schedule: str = "linear"
    T: int = 1000
    beta: float = 0.01
    beta_start: float = 1e-4
    beta_end: float = 0.02
    steps: int = 2000
    batch: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    hidden: tuple[int, ...] = (128, 128)
    activation: str = "leaky_relu"
    eval_every: int = 0
    eval_samples: int = 2000
    seed: int = 0

    def make_schedule(self) -> NoiseSchedule:
        if self.schedule == "constant":
            return NoiseSchedule.constant(self.T, self.beta)
        return NoiseSchedule.linear(self.T, self.beta_start, self.beta_end)

    def as_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["hidden"] = list(self.hidden)
        return doc


def validate_diffusion(config: DiffusionConfig) -> DiffusionConfig:
    if config.schedule not in SCHEDULES:
        raise ConfigError("diffusion.schedule", f"unknown value {config.schedule!r}", SCHEDULES)
    for key in ("T", "steps", "batch", "eval_samples"):
        if int(getattr(config, key)) < 1:
            raise ConfigError(f"diffusion.{key}", f"must be >= 1, got {getattr(config, key)}")
    if config.eval_every < 0:
        raise ConfigError("diffusion.eval_every", f"must be >= 0, got {config.eval_every}")
    for key in ("beta", "beta_start", "beta_end"):
        if not 0.0 <= float(getattr(config, key)) < 1.0:
            raise ConfigError(f"diffusion.{key}", f"must lie in [0, 1), got {getattr(config, key)}")
    if not config.lr >= 0:
        raise ConfigError("diffusion.lr", f"must be >= 0, got {config.lr}")
    if any(int(h) < 1 for h in config.hidden):
        raise ConfigError("diffusion.hidden", f"widths must be >= 1, got {list(config.hidden)}")
    return config


@dataclass
class Denoiser:
    """MLP on (x_t, t/T) predicting the noise that produced x_t."""

    network: Network
    schedule: NoiseSchedule

    @property
    def data_dim(self) -> int:
        return self.network.spec.output_dim

    def inputs(self, x_t: np.ndarray, t: np.ndarray | int) -> np.ndarray:
        x = np.asarray(x_t, dtype=np.float64)
        steps = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1, 1), (x.shape[0], 1))
        return np.concatenate([x, steps / self.schedule.T], axis=1)

    def predict(self, x_t: np.ndarray, t: np.ndarray | int, binding=None) -> Tensor:
        return self.network(self.inputs(x_t, t), binding)


def make_denoiser(data_dim: int, schedule: NoiseSchedule, config: DiffusionConfig) -> Denoiser:
    spec = NetworkSpec.mlp(data_dim + 1, config.hidden, data_dim, activation=config.activation)
    seed = int(Rng(config.seed).stream("init/denoiser").integers(0, 2**62, 1)[0])
    return Denoiser(Network(spec, init_network(spec, seed)), schedule)


def _jump(x0: np.ndarray, alpha_bar: np.ndarray | float, eps: np.ndarray) -> np.ndarray:
    return np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * eps


def forward_diffuse(x0: np.ndarray, t: int, schedule: NoiseSchedule, rng: Rng) -> np.ndarray:
    """Closed-form draw of x_t given x_0."""
    t = schedule.check_step(t)
    x = np.asarray(x0, dtype=np.float64)
    return _jump(x, schedule.alpha_bars[t - 1], rng.normal(x.shape))


def forward_diffuse_stepwise(x0: np.ndarray, t: int, schedule: NoiseSchedule, rng: Rng) -> np.ndarray:
    """Compose the one-step rule x_s = sqrt(1 - beta_s) x_{s-1} + sqrt(beta_s) eps, s = 1..t."""
    t = schedule.check_step(t)
    x = np.asarray(x0, dtype=np.float64)
    for s in range(t):
        x = np.sqrt(schedule.alphas[s]) * x + np.sqrt(schedule.betas[s]) * rng.normal(x.shape)
    return x


def denoiser_loss(
    denoiser: Denoiser,
    x0: np.ndarray,
    t: np.ndarray,
    eps: np.ndarray,
    binding=None,
) -> Tensor:
    """mean over rows of ||eps_hat(x_t, t) - eps||^2."""
    alpha_bar = denoiser.schedule.alpha_bars[np.asarray(t, dtype=np.int64) - 1].reshape(-1, 1)
    x_t = _jump(np.asarray(x0, dtype=np.float64), alpha_bar, eps)
    residual = ad.sub(denoiser.predict(x_t, t, binding), eps)
    return ad.reduce_sum(ad.reduce_mean(ad.square(residual), axis=0, keepdims=True))


def reverse_sample(denoiser: Denoiser, schedule: NoiseSchedule, n: int, rng: Rng) -> np.ndarray:
    """Ancestral sampling from x_T ~ N(0, I); x_T is the first draw taken from ``rng``."""
    x = rng.normal((int(n), denoiser.data_dim))
    for t in range(schedule.T, 0, -1):
        beta = schedule.betas[t - 1]
        remaining = 1.0 - schedule.alpha_bars[t - 1]
        coef = beta / math.sqrt(remaining) if beta > 0 and remaining > 0 else 0.0
        if coef:
            x = x - coef * denoiser.predict(x, t).value
        x = x / math.sqrt(schedule.alphas[t - 1])
        if t > 1 and beta > 0:
            x = x + math.sqrt(beta) * rng.normal(x.shape)
    return x


def fingerprint(dist: DistributionSpec, config: DiffusionConfig) -> str:
    doc = {"data": toydata.describe(dist), "diffusion": config.as_dict()}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def train_denoiser(dist: DistributionSpec, config: DiffusionConfig) -> tuple[Denoiser, RunLog]:
    """Fit the noise-prediction network; evaluation draws full reverse chains."""
    validate_diffusion(config)
    if not isinstance(dist, (toydata.Gaussian1D, *toydata.MIXTURES)):
        raise ConfigError("data.kind", "diffusion trains on single distributions only", ("gaussian1d", "ring", "grid", "labeled"))
    schedule = config.make_schedule()
    denoiser = make_denoiser(dist.dim, schedule, config)
    root = Rng(config.seed)
    data_rng, noise_rng = root.stream("data"), root.stream("noise")
    opt = make_optimizer("adam", config.lr, betas=(config.beta1, config.beta2))
    graph = Graph()
    telemetry = RunTelemetry()
    run_id = f"ddpm-{fingerprint(dist, config)[:10]}-s{config.seed}"
    reference = toydata.sample(dist, config.eval_samples, root.stream("eval/reference"))
    records: list[metrics.MetricsRecord] = []
    samples = np.zeros((0, dist.dim))
    status = STATUS_COMPLETED
    start = time.perf_counter()

    def evaluate(step: int, loss: float) -> None:
        nonlocal samples
        with telemetry.phase(EVALUATE):
            samples = reverse_sample(denoiser, schedule, config.eval_samples, root.stream("eval/noise"))
            score = metrics.score_samples(samples, reference, dist)
        telemetry.count(EVALUATIONS)
        records.append(
            metrics.MetricsRecord(
                step=step,
                d_loss=math.nan,
                g_loss=loss,
                kl=score.kl,
                js=score.js,
                w1=score.w1,
                modes_covered=score.modes_covered,
                high_quality_fraction=score.high_quality_fraction,
                d_accuracy=math.nan,
            )
        )
        log_event(logger, logging.INFO, f"step {step}: js={score.js:.4f}", step=step, js=score.js)

    with run_context(run_id, "ddpm", config.seed), np.errstate(all="ignore"):
        logger.info("training denoiser for %d steps (T=%d, seed %d)", config.steps, schedule.T, config.seed)
        step = 0
        try:
            for step in range(1, config.steps + 1):
                x0 = toydata.sample(dist, config.batch, data_rng)
                t = noise_rng.integers(1, schedule.T + 1, config.batch)
                eps = noise_rng.normal(x0.shape)
                with telemetry.phase(G_STEP):
                    graph.clear()
                    binding = denoiser.network.bind(graph)
                    loss = denoiser_loss(denoiser, x0, t, eps, binding)
                    value = loss.item()
                    if not math.isfinite(value) or abs(value) > DIVERGENCE_BOUND:
                        raise FloatingPointError(f"denoiser loss {value!r} out of bounds")
                    grads = ad.grad(loss, binding.tensors)
                    optimizer_step(opt, denoiser.network.trainable(), grads)
                telemetry.count(G_UPDATES)
                if (config.eval_every and step % config.eval_every == 0) or step == config.steps:
                    evaluate(step, value)
        except (FloatingPointError, DomainError) as exc:
            status = STATUS_DIVERGED
            log_event(logger, logging.WARNING, f"denoiser diverged at step {step}: {exc}", step=step)

    log = RunLog(
        config={"algorithm": "ddpm", "seed": config.seed, "data": toydata.describe(dist), "diffusion": config.as_dict()},
        records=records,
        samples=samples,
        wall_time=time.perf_counter() - start,
        status=status,
        counters=telemetry.counters(),
        timings=telemetry.timings(),
        run_id=run_id,
    )
    return denoiser, log
