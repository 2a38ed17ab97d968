"""Alternating-update training loops for every algorithm, with stabilizers as options.

A run is a pure function of its :class:`TrainConfig`: every random draw comes from a
named child stream of the config seed, and each evaluation reuses the same fixed noise.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from engine import autodiff as ad
from engine import losses, metrics, toydata
from engine.autodiff import DomainError, Graph, Tensor
from engine.models import (
    ALGORITHMS,
    D_FAMILY,
    PACKABLE,
    ModelBundle,
    ModelDims,
    build_bundle,
    condition,
    pack,
)
from engine.nn import (
    HIDDEN_ACTIVATIONS,
    Network,
    OptimizerState,
    clip_gradient,
    clip_weight_values,
    embed,
    make_optimizer,
    optimizer_step,
)
from engine.telemetry import D_STEP, D_UPDATES, EVALUATE, EVALUATIONS, G_STEP, G_UPDATES, RunTelemetry
from engine.toydata import DataSpec, Gaussian1D, Rng
from ganlab.logging import log_event, run_context

logger = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e6
EQUILIBRIUM_BAND = (0.35, 0.65)
WGAN_FAMILY = ("wgan_clip", "wgan_gp")
WGAN_N_CRITIC = 5
CLIP_MODES = ("none", "value", "norm")
OPTIMIZERS = ("sgd", "adam", "rmsprop")
AAE_PRIORS = ("gaussian", "uniform")

STATUS_COMPLETED = "completed"
STATUS_DIVERGED = "diverged"


class ConfigError(ValueError):
    """Invalid experiment setting; ``key`` names the offending field."""

    def __init__(self, key: str, message: str, accepted: Sequence[Any] | None = None):
        self.key = key
        self.accepted = tuple(accepted) if accepted is not None else None
        text = f"{key}: {message}"
        if self.accepted:
            text = f"{text} (accepted: {', '.join(str(a) for a in self.accepted)})"
        super().__init__(text)


@dataclass(frozen=True)
class ModelConfig:
    z_dim: int = 100
    hidden: tuple[int, ...] = (128, 128)
    activation: str = "leaky_relu"
    pack_k: int = 1
    embed_dim: int = 8
    code_k: int = 4
    g_output: str = "identity"
    g_loss: str = "nonsaturating"
    aae_prior: str = "gaussian"
    latent_dim: int | None = None


@dataclass(frozen=True)
class OptimConfig:
    kind: str = "adam"
    lr_g: float = 2e-4
    lr_d: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    alpha: float = 0.99

    def make(self, lr: float) -> OptimizerState:
        return make_optimizer(
            self.kind, lr, betas=(self.beta1, self.beta2), eps=self.eps, alpha=self.alpha
        )


OPTIM_DEFAULTS: dict[str, OptimConfig] = {
    "wgan_clip": OptimConfig(kind="rmsprop", lr_g=5e-5, lr_d=5e-5),
}


def default_optim(algorithm: str) -> OptimConfig:
    """Optimizer an experiment file gets for ``algorithm`` when its [optim] keys are omitted."""
    return OPTIM_DEFAULTS.get(algorithm, OptimConfig())


@dataclass(frozen=True)
class RegularizerConfig:
    real_target: float = 1.0
    fake_target: float = 0.0
    input_noise_std: float = 0.0
    grad_clip_mode: str = "none"
    grad_clip_bound: float = 1.0
    dp_noise_std: float = 0.0
    replay_capacity: int = 0
    replay_mix: float = 0.0
    spectral_norm: bool = False
    feature_matching_weight: float = 0.0
    gp_lambda: float = 10.0
    clip_c: float = 0.01
    l1_lambda: float = 100.0
    cycle_lambda: float = 10.0


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "vanilla"
    data: DataSpec = field(default_factory=Gaussian1D)
    steps: int = 5000
    batch: int = 64
    n_critic: int | None = None
    unroll_k: int = 0
    eval_every: int = 500
    eval_samples: int = 2000
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    regularizers: RegularizerConfig = field(default_factory=RegularizerConfig)

    @property
    def critic_steps(self) -> int:
        if self.n_critic is not None:
            return self.n_critic
        return WGAN_N_CRITIC if self.algorithm in WGAN_FAMILY else 1

    def as_dict(self) -> dict[str, Any]:
        doc = asdict(self)
        doc["data"] = toydata.describe(self.data)
        doc["model"]["hidden"] = list(self.model.hidden)
        return doc

    def fingerprint(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def run_id(self) -> str:
        return f"{self.algorithm}-{self.fingerprint()[:10]}-s{self.seed}"


# Which data kinds each algorithm can train on.
_DATA_FOR = {
    "cgan": (toydata.LabeledMixture,),
    "pix2pix_toy": (toydata.PairedData,),
    "cyclegan_toy": (toydata.TwoDomainData,),
}
_DISTRIBUTIONS = (toydata.Gaussian1D, *toydata.MIXTURES)


def validate_config(config: TrainConfig) -> TrainConfig:
    """Raise :class:`ConfigError` naming the first invalid field."""
    if config.algorithm not in ALGORITHMS:
        raise ConfigError("experiment.algorithm", f"unknown value {config.algorithm!r}", ALGORITHMS)
    allowed = _DATA_FOR.get(config.algorithm, _DISTRIBUTIONS)
    if not isinstance(config.data, allowed):
        names = [k for k, cls in toydata.DATA_KINDS.items() if cls in allowed]
        raise ConfigError("data.kind", f"{toydata.kind_of(config.data)!r} does not fit {config.algorithm}", names)
    for key, value in (
        ("experiment.steps", config.steps),
        ("experiment.batch", config.batch),
        ("experiment.eval_every", config.eval_every),
        ("experiment.eval_samples", config.eval_samples),
    ):
        if int(value) < 1:
            raise ConfigError(key, f"must be >= 1, got {value}")
    if config.n_critic is not None and config.n_critic < 1:
        raise ConfigError("experiment.n_critic", f"must be >= 1, got {config.n_critic}")
    if config.unroll_k < 0:
        raise ConfigError("experiment.unroll_k", f"must be >= 0, got {config.unroll_k}")
    if config.unroll_k and config.algorithm not in PACKABLE:
        raise ConfigError("experiment.unroll_k", f"unrolling is not wired for {config.algorithm}", PACKABLE)

    m = config.model
    if m.pack_k < 1:
        raise ConfigError("model.pack_k", f"must be >= 1, got {m.pack_k}")
    if m.pack_k > 1 and config.algorithm not in PACKABLE:
        raise ConfigError("model.pack_k", f"packing is not wired for {config.algorithm}", PACKABLE)
    if config.batch % m.pack_k:
        raise ConfigError("experiment.batch", f"{config.batch} is not divisible by pack_k={m.pack_k}")
    if config.eval_samples % m.pack_k:
        raise ConfigError(
            "experiment.eval_samples", f"{config.eval_samples} is not divisible by pack_k={m.pack_k}"
        )
    if m.g_loss not in losses.G_LOSS_FORMS:
        raise ConfigError("model.g_loss", f"unknown value {m.g_loss!r}", losses.G_LOSS_FORMS)
    if m.aae_prior not in AAE_PRIORS:
        raise ConfigError("model.aae_prior", f"unknown value {m.aae_prior!r}", AAE_PRIORS)
    if m.activation not in HIDDEN_ACTIVATIONS:
        raise ConfigError("model.activation", f"unknown value {m.activation!r}", HIDDEN_ACTIVATIONS)
    if m.g_output not in ("identity", "tanh"):
        raise ConfigError("model.g_output", f"unknown value {m.g_output!r}", ("identity", "tanh"))
    for key in ("z_dim", "embed_dim", "code_k"):
        if int(getattr(m, key)) < 1:
            raise ConfigError(f"model.{key}", f"must be >= 1, got {getattr(m, key)}")
    if any(int(h) < 1 for h in m.hidden):
        raise ConfigError("model.hidden", f"widths must be >= 1, got {list(m.hidden)}")
    if config.algorithm == "infogan" and m.z_dim <= m.code_k:
        raise ConfigError("model.z_dim", f"infogan needs z_dim > code_k ({m.z_dim} <= {m.code_k})")
    if m.latent_dim is not None and m.latent_dim < 1:
        raise ConfigError("model.latent_dim", f"must be >= 1, got {m.latent_dim}")

    o = config.optim
    if o.kind not in OPTIMIZERS:
        raise ConfigError("optim.kind", f"unknown value {o.kind!r}", OPTIMIZERS)
    for key in ("lr_g", "lr_d", "eps"):
        if not float(getattr(o, key)) >= 0:
            raise ConfigError(f"optim.{key}", f"must be >= 0, got {getattr(o, key)}")
    for key in ("beta1", "beta2", "alpha"):
        if not 0.0 <= float(getattr(o, key)) < 1.0:
            raise ConfigError(f"optim.{key}", f"must lie in [0, 1), got {getattr(o, key)}")

    r = config.regularizers
    if not 0.0 <= r.fake_target < r.real_target <= 1.0:
        raise ConfigError(
            "regularizers.real_target", "smoothing targets need 0 <= fake_target < real_target <= 1"
        )
    if r.grad_clip_mode not in CLIP_MODES:
        raise ConfigError("regularizers.grad_clip_mode", f"unknown value {r.grad_clip_mode!r}", CLIP_MODES)
    for key in ("grad_clip_bound", "clip_c"):
        if not float(getattr(r, key)) > 0:
            raise ConfigError(f"regularizers.{key}", f"must be > 0, got {getattr(r, key)}")
    for key in (
        "input_noise_std",
        "dp_noise_std",
        "feature_matching_weight",
        "gp_lambda",
        "l1_lambda",
        "cycle_lambda",
    ):
        if not float(getattr(r, key)) >= 0:
            raise ConfigError(f"regularizers.{key}", f"must be >= 0, got {getattr(r, key)}")
    if r.replay_capacity < 0:
        raise ConfigError("regularizers.replay_capacity", f"must be >= 0, got {r.replay_capacity}")
    if not 0.0 <= r.replay_mix <= 1.0:
        raise ConfigError("regularizers.replay_mix", f"must lie in [0, 1], got {r.replay_mix}")
    if r.feature_matching_weight > 0:
        if config.algorithm not in PACKABLE:
            raise ConfigError(
                "regularizers.feature_matching_weight",
                f"feature matching is not wired for {config.algorithm}",
                PACKABLE,
            )
        if not m.hidden:
            raise ConfigError("regularizers.feature_matching_weight", "needs at least one hidden layer")
    return config


def model_dims(config: TrainConfig) -> ModelDims:
    m = config.model
    num_classes = config.data.num_classes if isinstance(config.data, toydata.LabeledMixture) else 0
    return ModelDims(
        data_dim=config.data.dim,
        z_dim=m.z_dim,
        hidden=tuple(m.hidden),
        pack_k=m.pack_k,
        num_classes=num_classes,
        code_k=m.code_k,
        embed_dim=m.embed_dim,
        latent_dim=m.latent_dim,
        activation=m.activation,
        g_output=m.g_output,
        spectral_norm=config.regularizers.spectral_norm,
    )


@dataclass
class RunLog:
    config: dict[str, Any]
    records: list[metrics.MetricsRecord]
    samples: np.ndarray
    wall_time: float
    status: str
    diagnostics: dict[str, float] = field(default_factory=dict)
    counters: dict[str, int] = field(default_factory=dict)
    timings: dict[str, dict[str, float]] = field(default_factory=dict)
    run_id: str = ""

    @property
    def final(self) -> metrics.MetricsRecord | None:
        return self.records[-1] if self.records else None

    @property
    def diverged(self) -> bool:
        return self.status == STATUS_DIVERGED


class ReplayBuffer:
    """Reservoir of past fakes: every inserted row is retained with equal probability."""

    def __init__(self, capacity: int):
        if capacity < 0:
            raise ValueError(f"replay capacity must be >= 0, got {capacity}")
        self.capacity = int(capacity)
        self.seen = 0
        self._rows: np.ndarray | None = None
        self._size = 0

    def __len__(self) -> int:
        return self._size

    @property
    def rows(self) -> np.ndarray:
        if self._rows is None:
            return np.zeros((0, 0))
        return self._rows[: self._size]

    def insert(self, batch: np.ndarray, rng: Rng) -> None:
        if self.capacity == 0:
            return
        x = np.asarray(batch, dtype=np.float64)
        if self._rows is None:
            self._rows = np.zeros((self.capacity, x.shape[1]))
        for row in x:
            self.seen += 1
            if self._size < self.capacity:
                self._rows[self._size] = row
                self._size += 1
                continue
            slot = int(rng.integers(0, self.seen, 1)[0])
            if slot < self.capacity:
                self._rows[slot] = row

    def sample(self, n: int, rng: Rng) -> np.ndarray:
        if self._size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        return self.rows[rng.integers(0, self._size, n)].copy()


def replay_mix(
    buffer: ReplayBuffer,
    fresh: np.ndarray,
    mix_fraction: float,
    rng: Rng,
    *,
    insert: bool = True,
) -> np.ndarray:
    """Replace the first floor(mix_fraction * batch) rows with buffered fakes, then store the fresh ones."""
    if not 0.0 <= mix_fraction <= 1.0:
        raise ValueError(f"mix_fraction must lie in [0, 1], got {mix_fraction}")
    fresh = np.asarray(fresh, dtype=np.float64)
    out = fresh.copy()
    count = int(math.floor(mix_fraction * fresh.shape[0]))
    if count and len(buffer):
        out[:count] = buffer.sample(count, rng)
    if insert:
        buffer.insert(fresh, rng)
    return out


def add_input_noise(x: np.ndarray, std: float, rng: Rng) -> np.ndarray:
    if std < 0:
        raise ValueError(f"noise std must be >= 0, got {std}")
    x = np.asarray(x, dtype=np.float64)
    if std == 0:
        return x
    return x + std * rng.normal(x.shape)


def dp_noise(grads: Sequence[np.ndarray], sigma: float, rng: Rng) -> list[np.ndarray]:
    """Add independent N(0, sigma^2) noise to every gradient entry."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    arrays = [np.asarray(g.value if isinstance(g, Tensor) else g, dtype=np.float64) for g in grads]
    if sigma == 0:
        return arrays
    return [g + sigma * rng.normal(g.shape) for g in arrays]


def unrolled_g_step(
    discriminator: Network,
    d_opt: OptimizerState,
    k: int,
    critic_update: Callable[[Network, OptimizerState], float],
    generator_loss: Callable[[Network], tuple[Tensor, list[Tensor]]],
) -> list[np.ndarray]:
    """Generator gradients against a copy of D advanced ``k`` critic updates.

    The live discriminator and its optimizer are never touched. Gradients do not flow
    through the copy's update steps.
    """
    if k < 1:
        raise ValueError(f"unroll depth must be >= 1, got {k}")
    shadow = discriminator.copy()
    shadow_opt = d_opt.copy()
    for _ in range(k):
        critic_update(shadow, shadow_opt)
    loss, wrt = generator_loss(shadow)
    return [g.value for g in ad.grad(loss, wrt)]


class _Diverged(Exception):
    def __init__(self, phase: str, value: float):
        self.phase = phase
        self.value = value
        super().__init__(f"{phase} loss {value!r} out of bounds")


def _check(phase: str, value: float) -> float:
    if not math.isfinite(value) or abs(value) > DIVERGENCE_BOUND:
        raise _Diverged(phase, value)
    return value


def _realness(family: str, out: np.ndarray) -> np.ndarray:
    """Map a discriminator output to a probability of being real."""
    if family == "minimax_bce":
        return out
    if family == "ebgan":
        return np.exp(-out)
    return 0.5 * (1.0 + np.tanh(0.5 * out))


class _Trainer:
    """Shared loop: n_critic D updates, one G update, periodic evaluation, divergence stop."""

    def __init__(self, config: TrainConfig, bundle: ModelBundle | None = None):
        self.config = validate_config(config)
        self.bundle = bundle or build_bundle(config.algorithm, model_dims(config), config.seed)
        root = Rng(config.seed)
        self.data_rng = root.stream("data")
        self.noise_rng = root.stream("noise")
        self.reg_rng = root.stream("regularizers")
        self._eval_root = root
        self.graph = Graph()
        self.telemetry = RunTelemetry()
        reg = config.regularizers
        self.smoothing = losses.SmoothingConfig(reg.real_target, reg.fake_target)
        self.family = D_FAMILY[config.algorithm]
        self.g_opt = config.optim.make(config.optim.lr_g)
        self.d_opt = config.optim.make(config.optim.lr_d)
        self.replay = ReplayBuffer(reg.replay_capacity) if reg.replay_capacity > 0 else None

    # --- hooks -----------------------------------------------------------

    def d_step(self, d_net: Network | None = None, d_opt: OptimizerState | None = None, *, shadow: bool = False) -> float:
        raise NotImplementedError

    def g_step(self) -> float:
        raise NotImplementedError

    def eval_batch(self) -> tuple[np.ndarray, np.ndarray]:
        """(generated, reference) samples scored at every evaluation."""
        raise NotImplementedError

    def eval_accuracy(self) -> float:
        raise NotImplementedError

    def variant_diagnostics(self) -> dict[str, float]:
        return {}

    # --- shared helpers ----------------------------------------------------

    def eval_rng(self, name: str) -> Rng:
        return self._eval_root.stream(f"eval/{name}")

    def target_draws(self, n: int, rng: Rng) -> np.ndarray:
        return toydata.sample(self.config.data, n, rng)

    def noise(self, n: int, rng: Rng | None = None) -> np.ndarray:
        return (rng or self.noise_rng).normal((n, self.config.model.z_dim))

    def finish_grads(self, grads: Sequence[Tensor], *, private: bool = False) -> list[np.ndarray]:
        """Apply gradient clipping and, for discriminator updates, DP noise."""
        reg = self.config.regularizers
        arrays = [g.value for g in grads]
        if reg.grad_clip_mode != "none":
            arrays = clip_gradient(arrays, reg.grad_clip_mode, reg.grad_clip_bound)
        if private and reg.dp_noise_std > 0:
            arrays = dp_noise(arrays, reg.dp_noise_std, self.reg_rng)
        return arrays

    def scored(self, score: metrics.SampleScore, step: int, d_loss: float, g_loss: float, d_acc: float) -> metrics.MetricsRecord:
        return metrics.MetricsRecord(
            step=step,
            d_loss=float(d_loss),
            g_loss=float(g_loss),
            kl=score.kl,
            js=score.js,
            w1=score.w1,
            modes_covered=score.modes_covered,
            high_quality_fraction=score.high_quality_fraction,
            d_accuracy=d_acc,
        )

    def evaluate(self, step: int, d_loss: float, g_loss: float) -> metrics.MetricsRecord:
        with self.telemetry.phase(EVALUATE):
            generated, reference = self.eval_batch()
            score = metrics.score_samples(generated, reference, self.config.data)
            acc = self.eval_accuracy()
        self.telemetry.count(EVALUATIONS)
        self._last_samples = generated
        record = self.scored(score, step, d_loss, g_loss, acc)
        log_event(
            logger,
            logging.INFO,
            f"step {step}: js={record.js:.4f} w1={record.w1:.4f} modes={record.modes_covered}",
            step=step,
            js=record.js,
            w1=record.w1,
            modes=record.modes_covered,
            d_acc=record.d_accuracy,
        )
        return record

    def run(self) -> RunLog:
        config = self.config
        run_id = config.run_id()
        records: list[metrics.MetricsRecord] = []
        status = STATUS_COMPLETED
        start = time.perf_counter()
        self._last_samples = np.zeros((0, config.data.dim))
        with run_context(run_id, config.algorithm, config.seed), np.errstate(all="ignore"):
            logger.info("training %s for %d steps (seed %d)", config.algorithm, config.steps, config.seed)
            records.append(self.evaluate(0, math.nan, math.nan))
            d_loss = g_loss = math.nan
            step = 0
            try:
                for step in range(1, config.steps + 1):
                    for _ in range(config.critic_steps):
                        with self.telemetry.phase(D_STEP):
                            d_loss = _check("d", self.d_step())
                        self.telemetry.count(D_UPDATES)
                    with self.telemetry.phase(G_STEP):
                        g_loss = _check("g", self.g_step())
                    self.telemetry.count(G_UPDATES)
                    if step % config.eval_every == 0 or step == config.steps:
                        records.append(self.evaluate(step, d_loss, g_loss))
            except (_Diverged, DomainError) as exc:
                status = STATUS_DIVERGED
                log_event(logger, logging.WARNING, f"run diverged at step {step}: {exc}", step=step)
            diagnostics = self.diagnostics(records) if status == STATUS_COMPLETED else {}
            log_event(logger, logging.INFO, f"run {status}", step=step, **self.telemetry.counters())
        return RunLog(
            config=config.as_dict(),
            records=records,
            samples=self._last_samples,
            wall_time=time.perf_counter() - start,
            status=status,
            diagnostics=diagnostics,
            counters=self.telemetry.counters(),
            timings=self.telemetry.timings(),
            run_id=run_id,
        )

    def diagnostics(self, records: list[metrics.MetricsRecord]) -> dict[str, float]:
        acc = records[-1].d_accuracy
        lo, hi = EQUILIBRIUM_BAND
        out = {
            "d_accuracy_final": acc,
            "near_equilibrium": 1.0 if lo <= acc <= hi else 0.0,
        }
        out.update(self.variant_diagnostics())
        return out


class AdversarialTrainer(_Trainer):
    """vanilla, wgan_clip, wgan_gp, lsgan and hinge, with packing, replay, unrolling and the rest."""

    def critic_input(self, x: Tensor | np.ndarray) -> Tensor | np.ndarray:
        return pack(x, self.config.model.pack_k)

    def d_out(self, net: Network, x: Tensor | np.ndarray, binding=None, *, training: bool = False) -> Tensor:
        return net(self.critic_input(x), binding, training=training)

    def sample_fake(self, n: int, rng: Rng | None = None) -> np.ndarray:
        return self.bundle.generator(self.noise(n, rng)).value

    def d_step(self, d_net: Network | None = None, d_opt: OptimizerState | None = None, *, shadow: bool = False) -> float:
        cfg, reg = self.config, self.config.regularizers
        net = d_net or self.bundle.discriminator
        opt = d_opt or self.d_opt
        real = self.target_draws(cfg.batch, self.data_rng)
        fake = self.sample_fake(cfg.batch)
        if self.replay is not None:
            fake = replay_mix(self.replay, fake, reg.replay_mix, self.reg_rng, insert=not shadow)
        if reg.input_noise_std > 0:
            real = add_input_noise(real, reg.input_noise_std, self.reg_rng)
            fake = add_input_noise(fake, reg.input_noise_std, self.reg_rng)

        self.graph.clear()
        binding = net.bind(self.graph)
        d_real = self.d_out(net, real, binding, training=True)
        d_fake = self.d_out(net, fake, binding)
        d_loss, _ = losses.adversarial_losses(
            self.family, d_real, d_fake, smoothing=self.smoothing, g_form=cfg.model.g_loss
        )
        if self.family == "wgan_gp":
            penalty = losses.gradient_penalty(
                lambda x: self.d_out(net, x, binding),
                real,
                fake,
                reg.gp_lambda,
                self.reg_rng,
                self.graph,
            )
            d_loss = ad.add(d_loss, penalty)
        grads = self.finish_grads(ad.grad(d_loss, binding.tensors), private=True)
        params = net.trainable()
        optimizer_step(opt, params, grads)
        if cfg.algorithm == "wgan_clip":
            clip_weight_values(params, reg.clip_c)
        return d_loss.item()

    def generator_loss(self, d_net: Network) -> tuple[Tensor, list[Tensor]]:
        cfg, reg = self.config, self.config.regularizers
        self.graph.clear()
        g_binding = self.bundle.generator.bind(self.graph)
        fake = self.bundle.generator(self.noise(cfg.batch), g_binding)
        d_fake, f_fake = d_net.features(self.critic_input(fake))
        g_loss = losses.generator_objective(self.family, d_fake, cfg.model.g_loss)
        if reg.feature_matching_weight > 0:
            real = self.target_draws(cfg.batch, self.data_rng)
            _, f_real = d_net.features(self.critic_input(real))
            fm = losses.feature_matching_loss(f_real, f_fake)
            g_loss = ad.add(g_loss, ad.scale(fm, reg.feature_matching_weight))
        return g_loss, g_binding.tensors

    def g_step(self) -> float:
        cfg = self.config
        if cfg.unroll_k > 0:
            losses_seen: list[float] = []

            def loss_on(d_net: Network) -> tuple[Tensor, list[Tensor]]:
                loss, wrt = self.generator_loss(d_net)
                losses_seen.append(loss.item())
                return loss, wrt

            raw = unrolled_g_step(
                self.bundle.discriminator,
                self.d_opt,
                cfg.unroll_k,
                lambda net, opt: self.d_step(net, opt, shadow=True),
                loss_on,
            )
            grads = self.finish_grads([Tensor(g) for g in raw])
            optimizer_step(self.g_opt, self.bundle.generator.trainable(), grads)
            return losses_seen[-1]
        loss, wrt = self.generator_loss(self.bundle.discriminator)
        grads = self.finish_grads(ad.grad(loss, wrt))
        optimizer_step(self.g_opt, self.bundle.generator.trainable(), grads)
        return loss.item()

    def eval_batch(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.config.eval_samples
        return self.sample_fake(n, self.eval_rng("noise")), self.target_draws(n, self.eval_rng("reference"))

    def eval_scores(self) -> tuple[np.ndarray, np.ndarray]:
        generated, reference = self.eval_batch()
        d = self.bundle.discriminator
        return self.d_out(d, reference).value, self.d_out(d, generated).value

    def eval_accuracy(self) -> float:
        real, fake = self.eval_scores()
        return metrics.d_accuracy(_realness(self.family, real), _realness(self.family, fake))

    def variant_diagnostics(self) -> dict[str, float]:
        if self.config.algorithm not in WGAN_FAMILY:
            return {}
        real, fake = self.eval_scores()
        return {"critic_gap": float(np.mean(real) - np.mean(fake))}


class EnergyTrainer(AdversarialTrainer):
    """ebgan: the discriminator is an autoencoder and its reconstruction error is the energy."""

    def d_out(self, net: Network, x: Tensor | np.ndarray, binding=None, *, training: bool = False) -> Tensor:
        return losses.reconstruction_energy(x, net(x, binding, training=training))

    def generator_loss(self, d_net: Network) -> tuple[Tensor, list[Tensor]]:
        self.graph.clear()
        g_binding = self.bundle.generator.bind(self.graph)
        fake = self.bundle.generator(self.noise(self.config.batch), g_binding)
        energy = self.d_out(d_net, fake)
        return ad.reduce_mean(energy), g_binding.tensors


class ConditionalTrainer(AdversarialTrainer):
    """cgan: labels are embedded and concatenated into both the generator and discriminator inputs."""

    @property
    def dist(self) -> toydata.LabeledMixture:
        return self.config.data  # type: ignore[return-value]

    def labels(self, n: int, rng: Rng) -> np.ndarray:
        return rng.integers(0, self.dist.num_classes, n)

    def generate(self, z: np.ndarray, labels: np.ndarray, binding=None) -> Tensor:
        g = self.bundle.generator
        return g(condition(z, embed(g.table(binding), labels)), binding)

    def judge(self, net: Network, x, labels: np.ndarray, binding=None, *, training: bool = False) -> Tensor:
        return net(condition(x, embed(net.table(binding), labels)), binding, training=training)

    def d_step(self, d_net: Network | None = None, d_opt: OptimizerState | None = None, *, shadow: bool = False) -> float:
        cfg, reg = self.config, self.config.regularizers
        net = self.bundle.discriminator
        real, real_labels = toydata.sample_labeled(self.dist, cfg.batch, self.data_rng)
        fake_labels = self.labels(cfg.batch, self.noise_rng)
        fake = self.generate(self.noise(cfg.batch), fake_labels).value
        if reg.input_noise_std > 0:
            real = add_input_noise(real, reg.input_noise_std, self.reg_rng)
            fake = add_input_noise(fake, reg.input_noise_std, self.reg_rng)
        self.graph.clear()
        binding = net.bind(self.graph)
        d_real = self.judge(net, real, real_labels, binding, training=True)
        d_fake = self.judge(net, fake, fake_labels, binding)
        d_loss = losses.d_loss_minimax(d_real, d_fake, self.smoothing)
        grads = self.finish_grads(ad.grad(d_loss, binding.tensors), private=True)
        optimizer_step(self.d_opt, net.trainable(), grads)
        return d_loss.item()

    def g_step(self) -> float:
        cfg = self.config
        self.graph.clear()
        g_binding = self.bundle.generator.bind(self.graph)
        labels = self.labels(cfg.batch, self.noise_rng)
        fake = self.generate(self.noise(cfg.batch), labels, g_binding)
        loss = losses.g_loss(cfg.model.g_loss, self.judge(self.bundle.discriminator, fake, labels))
        grads = self.finish_grads(ad.grad(loss, g_binding.tensors))
        optimizer_step(self.g_opt, self.bundle.generator.trainable(), grads)
        return loss.item()

    def _eval_set(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n = self.config.eval_samples
        labels = self.labels(n, self.eval_rng("labels"))
        generated = self.generate(self.noise(n, self.eval_rng("noise")), labels).value
        reference, ref_labels = toydata.sample_labeled(self.dist, n, self.eval_rng("reference"))
        return generated, labels, reference, ref_labels

    def eval_batch(self) -> tuple[np.ndarray, np.ndarray]:
        generated, _, reference, _ = self._eval_set()
        return generated, reference

    def eval_accuracy(self) -> float:
        generated, labels, reference, ref_labels = self._eval_set()
        d = self.bundle.discriminator
        return metrics.d_accuracy(self.judge(d, reference, ref_labels).value, self.judge(d, generated, labels).value)

    def variant_diagnostics(self) -> dict[str, float]:
        generated, labels, _, _ = self._eval_set()
        return {"cgan_accuracy": float(np.mean(toydata.labels_for(self.dist, generated) == labels))}


class InfoTrainer(AdversarialTrainer):
    """infogan: z = (noise, one-hot code); Q recovers the code from the generated sample."""

    def __init__(self, config: TrainConfig, bundle: ModelBundle | None = None):
        super().__init__(config, bundle)
        self.q_opt = config.optim.make(config.optim.lr_g)

    def latent(self, n: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
        k = self.config.model.code_k
        codes = rng.integers(0, k, n)
        onehot = np.zeros((n, k))
        onehot[np.arange(n), codes] = 1.0
        noise = rng.normal((n, self.bundle.extras["noise_dim"]))
        return np.concatenate([noise, onehot], axis=1), codes

    def sample_fake(self, n: int, rng: Rng | None = None) -> np.ndarray:
        z, _ = self.latent(n, rng or self.noise_rng)
        return self.bundle.generator(z).value

    def g_step(self) -> float:
        cfg = self.config
        self.graph.clear()
        g_binding = self.bundle.generator.bind(self.graph)
        q = self.bundle.q_network
        assert q is not None
        q_binding = q.bind(self.graph)
        z, codes = self.latent(cfg.batch, self.noise_rng)
        fake = self.bundle.generator(z, g_binding)
        adv = losses.g_loss(cfg.model.g_loss, self.bundle.discriminator(fake))
        aux = losses.infogan_aux_loss(q(fake, q_binding), codes)
        total = ad.add(adv, aux)
        grads = self.finish_grads(ad.grad(total, g_binding.tensors + q_binding.tensors))
        n_g = len(g_binding.tensors)
        optimizer_step(self.g_opt, self.bundle.generator.trainable(), grads[:n_g])
        optimizer_step(self.q_opt, q.trainable(), grads[n_g:])
        return total.item()

    def variant_diagnostics(self) -> dict[str, float]:
        q = self.bundle.q_network
        assert q is not None
        z, codes = self.latent(self.config.eval_samples, self.eval_rng("codes"))
        logits = q(self.bundle.generator(z)).value
        return {"infogan_code_accuracy": float(np.mean(np.argmax(logits, axis=1) == codes))}


class AdversarialAutoencoderTrainer(_Trainer):
    """aae: encoder/decoder minimize reconstruction while a latent critic pulls codes to the prior."""

    def __init__(self, config: TrainConfig, bundle: ModelBundle | None = None):
        super().__init__(config, bundle)
        self.enc_opt = config.optim.make(config.optim.lr_g)
        self.latent_dim = self.bundle.extras["latent_dim"]

    @property
    def encoder(self) -> Network:
        assert self.bundle.encoder is not None
        return self.bundle.encoder

    def prior(self, n: int, rng: Rng) -> np.ndarray:
        if self.config.model.aae_prior == "uniform":
            return rng.uniform((n, self.latent_dim), -1.0, 1.0)
        return rng.normal((n, self.latent_dim))

    def d_step(self, d_net: Network | None = None, d_opt: OptimizerState | None = None, *, shadow: bool = False) -> float:
        cfg = self.config
        net = self.bundle.discriminator
        x = self.target_draws(cfg.batch, self.data_rng)
        codes = self.encoder(x).value
        prior = self.prior(cfg.batch, self.noise_rng)
        self.graph.clear()
        binding = net.bind(self.graph)
        d_loss = losses.d_loss_minimax(
            net(prior, binding, training=True), net(codes, binding), self.smoothing
        )
        grads = self.finish_grads(ad.grad(d_loss, binding.tensors), private=True)
        optimizer_step(self.d_opt, net.trainable(), grads)
        return d_loss.item()

    def g_step(self) -> float:
        cfg = self.config
        x = self.target_draws(cfg.batch, self.data_rng)
        self.graph.clear()
        e_binding = self.encoder.bind(self.graph)
        g_binding = self.bundle.generator.bind(self.graph)
        codes = self.encoder(x, e_binding)
        recon = ad.reduce_mean(losses.reconstruction_energy(x, self.bundle.generator(codes, g_binding)))
        adv = losses.g_loss(cfg.model.g_loss, self.bundle.discriminator(codes))
        total = ad.add(recon, adv)
        grads = self.finish_grads(ad.grad(total, e_binding.tensors + g_binding.tensors))
        n_e = len(e_binding.tensors)
        optimizer_step(self.enc_opt, self.encoder.trainable(), grads[:n_e])
        optimizer_step(self.g_opt, self.bundle.generator.trainable(), grads[n_e:])
        return total.item()

    def eval_batch(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.config.eval_samples
        generated = self.bundle.generator(self.prior(n, self.eval_rng("noise"))).value
        return generated, self.target_draws(n, self.eval_rng("reference"))

    def _latent_pair(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.config.eval_samples
        codes = self.encoder(self.target_draws(n, self.eval_rng("reference"))).value
        return codes, self.prior(n, self.eval_rng("prior"))

    def eval_accuracy(self) -> float:
        codes, prior = self._latent_pair()
        d = self.bundle.discriminator
        return metrics.d_accuracy(d(prior).value, d(codes).value)

    def variant_diagnostics(self) -> dict[str, float]:
        codes, prior = self._latent_pair()
        lo, hi = (-1.0, 1.0) if self.config.model.aae_prior == "uniform" else (-4.0, 4.0)
        per_dim = [
            metrics.js(
                metrics.histogram(prior[:, j], metrics.DEFAULT_BINS, lo, hi),
                metrics.histogram(codes[:, j], metrics.DEFAULT_BINS, lo, hi),
            )
            for j in range(self.latent_dim)
        ]
        return {"aae_latent_js": float(np.mean(per_dim))}


class PairedTranslationTrainer(_Trainer):
    """pix2pix_toy: G maps x to y on rotation pairs; D judges (x, y) pairs with least squares."""

    def __init__(self, config: TrainConfig, bundle: ModelBundle | None = None):
        super().__init__(config, bundle)
        self.heldout = toydata.make_paired(config.eval_samples, self.eval_rng("heldout"), config.data.noise)
        self.l1_init = self.heldout_l1()

    def pairs(self) -> toydata.PairedSet:
        return toydata.make_paired(self.config.batch, self.data_rng, self.config.data.noise)

    def heldout_l1(self) -> float:
        return float(np.mean(np.abs(self.bundle.generator(self.heldout.x).value - self.heldout.y)))

    def d_step(self, d_net: Network | None = None, d_opt: OptimizerState | None = None, *, shadow: bool = False) -> float:
        net = self.bundle.discriminator
        batch = self.pairs()
        y_hat = self.bundle.generator(batch.x).value
        self.graph.clear()
        binding = net.bind(self.graph)
        d_real = net(condition(batch.x, batch.y), binding, training=True)
        d_fake = net(condition(batch.x, y_hat), binding)
        d_loss, _ = losses.lsgan_losses(d_real, d_fake)
        grads = self.finish_grads(ad.grad(d_loss, binding.tensors), private=True)
        optimizer_step(self.d_opt, net.trainable(), grads)
        return d_loss.item()

    def g_step(self) -> float:
        batch = self.pairs()
        self.graph.clear()
        g_binding = self.bundle.generator.bind(self.graph)
        y_hat = self.bundle.generator(batch.x, g_binding)
        adv = losses.generator_objective("lsgan", self.bundle.discriminator(condition(batch.x, y_hat)))
        loss = losses.composite_pix2pix_g(adv, y_hat, batch.y, self.config.regularizers.l1_lambda)
        grads = self.finish_grads(ad.grad(loss, g_binding.tensors))
        optimizer_step(self.g_opt, self.bundle.generator.trainable(), grads)
        return loss.item()

    def eval_batch(self) -> tuple[np.ndarray, np.ndarray]:
        return self.bundle.generator(self.heldout.x).value, self.heldout.y

    def eval_accuracy(self) -> float:
        d = self.bundle.discriminator
        x, y = self.heldout.x, self.heldout.y
        real = d(condition(x, y)).value
        fake = d(condition(x, self.bundle.generator(x).value)).value
        return metrics.d_accuracy(_realness("lsgan", real), _realness("lsgan", fake))

    def variant_diagnostics(self) -> dict[str, float]:
        return {"pix2pix_l1_init": self.l1_init, "pix2pix_l1_final": self.heldout_l1()}


class CycleTrainer(_Trainer):
    """cyclegan_toy: two generator/discriminator pairs tied by an L1 round-trip loss."""

    def __init__(self, config: TrainConfig, bundle: ModelBundle | None = None):
        super().__init__(config, bundle)
        self.f_opt = config.optim.make(config.optim.lr_g)
        self.d_b_opt = config.optim.make(config.optim.lr_d)
        self.heldout = toydata.make_two_domain(config.eval_samples, self.eval_rng("heldout"))

    @property
    def reverse(self) -> Network:
        assert self.bundle.generator_b is not None
        return self.bundle.generator_b

    @property
    def judge_a(self) -> Network:
        assert self.bundle.discriminator_b is not None
        return self.bundle.discriminator_b

    def _critic_update(self, net: Network, opt: OptimizerState, real: np.ndarray, fake: np.ndarray) -> float:
        self.graph.clear()
        binding = net.bind(self.graph)
        d_loss, _ = losses.lsgan_losses(net(real, binding, training=True), net(fake, binding))
        grads = self.finish_grads(ad.grad(d_loss, binding.tensors), private=True)
        optimizer_step(opt, net.trainable(), grads)
        return d_loss.item()

    def d_step(self, d_net: Network | None = None, d_opt: OptimizerState | None = None, *, shadow: bool = False) -> float:
        batch = toydata.make_two_domain(self.config.batch, self.data_rng)
        fake_b = self.bundle.generator(batch.a).value
        fake_a = self.reverse(batch.b).value
        loss_b = self._critic_update(self.bundle.discriminator, self.d_opt, batch.b, fake_b)
        loss_a = self._critic_update(self.judge_a, self.d_b_opt, batch.a, fake_a)
        return loss_a + loss_b

    def g_step(self) -> float:
        batch = toydata.make_two_domain(self.config.batch, self.data_rng)
        self.graph.clear()
        g_binding = self.bundle.generator.bind(self.graph)
        f_binding = self.reverse.bind(self.graph)
        fake_b = self.bundle.generator(batch.a, g_binding)
        fake_a = self.reverse(batch.b, f_binding)
        adv_b = losses.generator_objective("lsgan", self.bundle.discriminator(fake_b))
        adv_a = losses.generator_objective("lsgan", self.judge_a(fake_a))
        cyc = losses.cycle_loss(
            batch.a, self.reverse(fake_b, f_binding), batch.b, self.bundle.generator(fake_a, g_binding)
        )
        total = ad.add(ad.add(adv_a, adv_b), ad.scale(cyc, self.config.regularizers.cycle_lambda))
        grads = self.finish_grads(ad.grad(total, g_binding.tensors + f_binding.tensors))
        n_g = len(g_binding.tensors)
        optimizer_step(self.g_opt, self.bundle.generator.trainable(), grads[:n_g])
        optimizer_step(self.f_opt, self.reverse.trainable(), grads[n_g:])
        return total.item()

    def eval_batch(self) -> tuple[np.ndarray, np.ndarray]:
        return self.bundle.generator(self.heldout.a).value, self.heldout.b

    def eval_accuracy(self) -> float:
        d = self.bundle.discriminator
        real = d(self.heldout.b).value
        fake = d(self.bundle.generator(self.heldout.a).value).value
        return metrics.d_accuracy(_realness("lsgan", real), _realness("lsgan", fake))

    def variant_diagnostics(self) -> dict[str, float]:
        a, b = self.heldout.a, self.heldout.b
        g, f = self.bundle.generator, self.reverse
        value = losses.cycle_loss(a, f(g(a)), b, g(f(b))).item()
        return {"cycle_loss_heldout": float(value)}


TRAINERS: dict[str, type[_Trainer]] = {
    "vanilla": AdversarialTrainer,
    "wgan_clip": AdversarialTrainer,
    "wgan_gp": AdversarialTrainer,
    "lsgan": AdversarialTrainer,
    "hinge": AdversarialTrainer,
    "ebgan": EnergyTrainer,
    "cgan": ConditionalTrainer,
    "infogan": InfoTrainer,
    "aae": AdversarialAutoencoderTrainer,
    "pix2pix_toy": PairedTranslationTrainer,
    "cyclegan_toy": CycleTrainer,
}


def make_trainer(config: TrainConfig, bundle: ModelBundle | None = None) -> _Trainer:
    validate_config(config)
    return TRAINERS[config.algorithm](config, bundle)


def train(config: TrainConfig) -> RunLog:
    return make_trainer(config).run()


def with_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return replace(config, seed=int(seed))
