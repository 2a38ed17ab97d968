"""End-to-end statistical runs; all but the determinism check need --runslow."""
from dataclasses import replace
from pathlib import Path
from statistics import median

import numpy as np
import pytest

from engine import toydata
from engine.diffusion import DiffusionConfig, train_denoiser
from engine.trainers import ModelConfig, OptimConfig, TrainConfig, default_optim, make_trainer
from ganlab import reporting
from ganlab.experiment import Experiment, load_experiment, load_sweep
from ganlab.sweep import run_experiment

EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"
SEEDS = range(5)
RING = toydata.MixtureRing()
SMALL_MODEL = ModelConfig(z_dim=2, hidden=(64, 64))


def passes(results, needed):
    return sum(bool(r) for r in results) >= needed


def test_same_config_writes_identical_run_files(tmp_path):
    config = TrainConfig(
        algorithm="wgan_gp",
        data=RING,
        steps=4,
        batch=16,
        n_critic=2,
        eval_every=2,
        eval_samples=64,
        model=ModelConfig(z_dim=2, hidden=(8,)),
    )
    experiment = Experiment(config)
    run_experiment(experiment, tmp_path / "a", svg=False)
    run_experiment(experiment, tmp_path / "b", svg=False)
    for name in (reporting.METRICS_FILE, reporting.SAMPLES_FILE, reporting.RUNLOG_FILE, reporting.GENERATOR_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


@pytest.mark.slow
def test_gaussian_reproduction_and_equilibrium():
    base = load_experiment(EXPERIMENTS / "vanilla_gaussian.yaml").train
    logs = [make_trainer(replace(base, seed=s)).run() for s in SEEDS]

    def reproduced(log):
        x = log.samples[:, 0]
        return abs(np.mean(x) - 4.0) < 0.5 and abs(np.std(x) - 1.25) < 0.5 and log.final.js < 0.15

    good = [log for log in logs if reproduced(log)]
    assert len(good) >= 4
    for log in good:
        assert 0.35 <= log.final.d_accuracy <= 0.65


@pytest.mark.slow
def test_wgan_gp_reduces_wasserstein_distance():
    base = load_experiment(EXPERIMENTS / "wgan_gp_ring.yaml").train
    for seed in SEEDS:
        log = make_trainer(replace(base, seed=seed)).run()
        assert not log.diverged
        assert log.final.w1 <= 0.5 * log.records[0].w1


@pytest.mark.slow
def test_weight_clipping_holds_after_every_critic_step():
    config = TrainConfig(
        algorithm="wgan_clip", data=RING, steps=200, eval_every=100, model=SMALL_MODEL, optim=default_optim("wgan_clip")
    )
    trainer = make_trainer(config)
    live_step = trainer.d_step
    bounds = []

    def checked_step(*args, **kwargs):
        loss = live_step(*args, **kwargs)
        bounds.append(trainer.bundle.discriminator.trainable().max_abs())
        return loss

    trainer.d_step = checked_step
    log = trainer.run()
    assert log.status == "completed"
    assert len(bounds) == 200 * 5
    assert max(bounds) <= 0.01 + 1e-12


@pytest.mark.slow
def test_unrolling_and_packing_cover_more_modes():
    spec = load_sweep(EXPERIMENTS / "mode_collapse_sweep.yaml")
    modes: dict[tuple[int, int], list[int]] = {}
    for cell in spec.cells():
        train = cell.experiment.train
        if train.unroll_k and train.model.pack_k > 1:
            continue
        log = make_trainer(train).run()
        modes.setdefault((train.unroll_k, train.model.pack_k), []).append(log.final.modes_covered)
    vanilla = median(modes[(0, 1)])
    for variant in ((5, 1), (0, 2)):
        assert median(modes[variant]) >= 7
        assert median(modes[variant]) > vanilla


def _variant(algorithm, data):
    return TrainConfig(
        algorithm=algorithm,
        data=data,
        steps=3000,
        eval_every=1000,
        model=ModelConfig(z_dim=8, hidden=(64, 64)),
        optim=OptimConfig(lr_g=1e-3, lr_d=1e-3),
    )


@pytest.mark.slow
@pytest.mark.parametrize(
    "config, key, check",
    [
        (_variant("cgan", toydata.LabeledMixture.ring(4)), "cgan_accuracy", lambda v: v > 0.8),
        (_variant("infogan", toydata.MixtureRing(k=4)), "infogan_code_accuracy", lambda v: v > 0.8),
        (_variant("aae", RING), "aae_latent_js", lambda v: v < 0.1),
        (_variant("cyclegan_toy", toydata.TwoDomainData()), "cycle_loss_heldout", lambda v: v < 0.2),
    ],
    ids=["cgan", "infogan", "aae", "cyclegan"],
)
def test_variant_pipelines(config, key, check):
    results = [make_trainer(replace(config, seed=s)).run().diagnostics.get(key) for s in SEEDS]
    assert passes([v is not None and check(v) for v in results], 3)


@pytest.mark.slow
def test_pix2pix_improves_heldout_l1():
    config = _variant("pix2pix_toy", toydata.PairedData())
    results = []
    for seed in SEEDS:
        d = make_trainer(replace(config, seed=seed)).run().diagnostics
        results.append(d.get("pix2pix_l1_final", np.inf) * 5 <= d.get("pix2pix_l1_init", 0.0))
    assert passes(results, 3)


@pytest.mark.slow
def test_diffusion_reproduces_gaussian():
    _, log = train_denoiser(toydata.Gaussian1D(), DiffusionConfig(eval_samples=10000))
    x = log.samples[:, 0]
    assert abs(np.mean(x) - 4.0) < 0.5
    assert abs(np.std(x) - 1.25) < 0.5


@pytest.mark.slow
def test_diffusion_covers_the_ring():
    base = load_experiment(EXPERIMENTS / "compare_ring.yaml").diffusion
    covered = [train_denoiser(RING, replace(base, seed=s))[1].final.modes_covered == 8 for s in SEEDS]
    assert passes(covered, 4)
