import math
from dataclasses import astuple, replace

import numpy as np
import pytest

from engine import autodiff as ad
from engine import losses, toydata
from engine import trainers as trainers_module
from engine.models import ALGORITHMS
from engine.nn import NetworkError
from engine.telemetry import D_UPDATES, EVALUATIONS, G_UPDATES
from engine.toydata import Rng
from engine.trainers import (
    STATUS_COMPLETED,
    STATUS_DIVERGED,
    ConfigError,
    ModelConfig,
    OptimConfig,
    RegularizerConfig,
    ReplayBuffer,
    TrainConfig,
    add_input_noise,
    dp_noise,
    make_trainer,
    replay_mix,
    unrolled_g_step,
    validate_config,
    with_seed,
)

TINY_MODEL = ModelConfig(z_dim=6, hidden=(8,))

DATA_FOR = {
    "cgan": toydata.LabeledMixture.ring(4),
    "pix2pix_toy": toydata.PairedData(),
    "cyclegan_toy": toydata.TwoDomainData(),
    "wgan_gp": toydata.MixtureRing(),
}


def tiny(algorithm="vanilla", **overrides):
    base = TrainConfig(
        algorithm=algorithm,
        data=DATA_FOR.get(algorithm, toydata.Gaussian1D()),
        steps=3,
        batch=16,
        eval_every=2,
        eval_samples=64,
        seed=3,
        model=TINY_MODEL,
    )
    return replace(base, **overrides)


class TestValidateConfig:
    def test_defaults_are_valid(self):
        assert validate_config(TrainConfig()) is not None

    def test_unknown_algorithm(self):
        with pytest.raises(ConfigError) as info:
            validate_config(TrainConfig(algorithm="stylegan"))
        assert info.value.key == "experiment.algorithm"
        assert "vanilla" in info.value.accepted

    def test_batch_must_divide_by_pack(self):
        config = TrainConfig(batch=33, model=ModelConfig(pack_k=2))
        with pytest.raises(ConfigError) as info:
            validate_config(config)
        assert info.value.key == "experiment.batch"

    def test_data_kind_must_fit_algorithm(self):
        with pytest.raises(ConfigError) as info:
            validate_config(TrainConfig(algorithm="cgan"))
        assert info.value.key == "data.kind"

    def test_infogan_needs_room_for_noise(self):
        config = TrainConfig(algorithm="infogan", model=ModelConfig(z_dim=4, code_k=4))
        with pytest.raises(ConfigError) as info:
            validate_config(config)
        assert info.value.key == "model.z_dim"

    def test_smoothing_targets_must_be_ordered(self):
        config = TrainConfig(regularizers=RegularizerConfig(real_target=0.2, fake_target=0.3))
        with pytest.raises(ConfigError):
            validate_config(config)

    def test_unroll_only_for_plain_adversarial_family(self):
        config = TrainConfig(algorithm="aae", data=toydata.MixtureRing(), unroll_k=2)
        with pytest.raises(ConfigError) as info:
            validate_config(config)
        assert info.value.key == "experiment.unroll_k"

    def test_critic_steps_default_per_family(self):
        assert TrainConfig(algorithm="wgan_gp").critic_steps == 5
        assert TrainConfig(algorithm="vanilla").critic_steps == 1
        assert TrainConfig(algorithm="wgan_gp", n_critic=2).critic_steps == 2


class TestReplayBuffer:
    def test_zero_capacity_keeps_nothing(self):
        buffer = ReplayBuffer(0)
        buffer.insert(np.ones((4, 2)), Rng(0))
        assert len(buffer) == 0

    def test_reservoir_stays_at_capacity(self):
        buffer = ReplayBuffer(5)
        rng = Rng(1)
        for i in range(10):
            buffer.insert(np.full((3, 2), float(i)), rng)
        assert len(buffer) == 5
        assert buffer.seen == 30
        assert buffer.rows.shape == (5, 2)

    def test_empty_buffer_cannot_be_sampled(self):
        with pytest.raises(ValueError):
            ReplayBuffer(3).sample(1, Rng(0))

    def test_mix_replaces_leading_rows(self):
        buffer = ReplayBuffer(16)
        rng = Rng(2)
        first = replay_mix(buffer, np.zeros((8, 1)), 0.5, rng)
        assert np.array_equal(first, np.zeros((8, 1)))
        mixed = replay_mix(buffer, np.ones((8, 1)), 0.5, rng, insert=False)
        assert np.all(mixed[:4] == 0.0)
        assert np.all(mixed[4:] == 1.0)
        assert len(buffer) == 8

    def test_mix_fraction_is_bounded(self):
        with pytest.raises(ValueError):
            replay_mix(ReplayBuffer(4), np.zeros((2, 1)), 1.5, Rng(0))


def test_dp_noise_zero_sigma_is_identity():
    grads = [np.ones((2, 2)), np.zeros(3)]
    out = dp_noise(grads, 0.0, Rng(0))
    assert all(np.array_equal(a, b) for a, b in zip(out, grads))


def test_dp_noise_has_requested_scale():
    out = dp_noise([np.zeros(20000)], 0.5, Rng(4))[0]
    assert abs(float(np.std(out)) - 0.5) < 0.02


def test_unrolled_step_leaves_live_discriminator_untouched():
    trainer = make_trainer(tiny(unroll_k=3))
    before = trainer.bundle.discriminator.trainable().fingerprint()
    g_before = trainer.bundle.generator.trainable().fingerprint()
    loss = trainer.g_step()
    assert math.isfinite(loss)
    assert trainer.bundle.discriminator.trainable().fingerprint() == before
    assert trainer.d_opt.step_count == 0
    assert trainer.bundle.generator.trainable().fingerprint() != g_before


def test_unroll_depth_must_be_positive():
    trainer = make_trainer(tiny())
    with pytest.raises(ValueError):
        unrolled_g_step(trainer.bundle.discriminator, trainer.d_opt, 0, lambda n, o: 0.0, trainer.generator_loss)


def test_weight_clipping_bounds_every_critic_entry():
    trainer = make_trainer(tiny("wgan_clip", regularizers=RegularizerConfig(clip_c=0.02)))
    for _ in range(3):
        trainer.d_step()
    assert trainer.bundle.discriminator.trainable().max_abs() <= 0.02


def test_update_counts_follow_n_critic():
    log = make_trainer(tiny(n_critic=2)).run()
    counters = log.counters
    assert counters[D_UPDATES] == 6
    assert counters[G_UPDATES] == 3
    assert counters[EVALUATIONS] == 3
    assert [r.step for r in log.records] == [0, 2, 3]


def test_run_completes_with_diagnostics():
    log = make_trainer(tiny()).run()
    assert log.status == STATUS_COMPLETED
    assert not log.diverged
    assert log.samples.shape == (64, 1)
    assert 0.0 <= log.diagnostics["d_accuracy_final"] <= 1.0
    assert log.diagnostics["near_equilibrium"] in (0.0, 1.0)
    assert log.run_id.endswith("-s3")


def test_non_finite_loss_marks_run_diverged():
    trainer = make_trainer(tiny())
    trainer.g_step = lambda: float("inf")
    log = trainer.run()
    assert log.status == STATUS_DIVERGED
    assert len(log.records) == 1
    assert log.diagnostics == {}


def test_same_seed_same_run():
    a = make_trainer(tiny("wgan_gp", n_critic=2)).run()
    b = make_trainer(tiny("wgan_gp", n_critic=2)).run()
    assert np.array_equal(a.samples, b.samples)
    for ra, rb in zip(a.records, b.records):
        np.testing.assert_array_equal(np.array(astuple(ra)), np.array(astuple(rb)))
    assert "critic_gap" in a.diagnostics


def test_seed_changes_run_identity():
    config = tiny()
    assert with_seed(config, 4).run_id() != config.run_id()
    assert with_seed(config, 4).fingerprint() != config.fingerprint()


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_every_algorithm_trains_a_few_steps(algorithm):
    log = make_trainer(tiny(algorithm, steps=2, eval_every=1)).run()
    assert log.status == STATUS_COMPLETED
    assert len(log.records) == 3
    assert log.records[-1].step == 2


def test_aae_uniform_prior_stays_in_box():
    config = tiny("aae", model=replace(TINY_MODEL, aae_prior="uniform"))
    trainer = make_trainer(config)
    draws = trainer.prior(500, Rng(0))
    assert draws.shape == (500, trainer.latent_dim)
    assert draws.min() >= -1.0 and draws.max() <= 1.0
    assert make_trainer(config).run().status == STATUS_COMPLETED


def test_contract_errors_propagate_instead_of_diverging():
    trainer = make_trainer(tiny())

    def broken_step():
        raise NetworkError("gradient 3 has shape (1, 1), parameter has (1,)")

    trainer.d_step = broken_step
    with pytest.raises(NetworkError):
        trainer.run()


def test_diverged_run_still_reports_every_counter():
    trainer = make_trainer(tiny(n_critic=2))
    trainer.g_step = lambda: float("nan")
    log = trainer.run()
    assert log.status == STATUS_DIVERGED
    assert log.counters == {D_UPDATES: 2, G_UPDATES: 0, EVALUATIONS: 1}


def test_input_noise_zero_std_is_identity():
    x = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(add_input_noise(x, 0.0, Rng(0)), x)
    with pytest.raises(ValueError):
        add_input_noise(x, -0.1, Rng(0))


def test_input_noise_has_requested_scale():
    out = add_input_noise(np.full((20000, 1), 3.0), 0.05, Rng(6))
    assert abs(float(np.mean(out)) - 3.0) < 0.002
    assert abs(float(np.std(out)) - 0.05) < 0.002


def _spy(monkeypatch, name):
    calls = []
    original = getattr(trainers_module, name)

    def wrapper(*args, **kwargs):
        calls.append(args)
        return original(*args, **kwargs)

    monkeypatch.setattr(trainers_module, name, wrapper)
    return calls


class TestRegularizersInsideRuns:
    def test_input_noise_reaches_both_discriminator_batches(self, monkeypatch):
        calls = _spy(monkeypatch, "add_input_noise")
        trainer = make_trainer(tiny(regularizers=RegularizerConfig(input_noise_std=0.05)))
        trainer.d_step()
        assert len(calls) == 2
        assert all(args[1] == 0.05 for args in calls)
        trainer.g_step()
        assert len(calls) == 2

    def test_dp_noise_only_touches_discriminator_updates(self, monkeypatch):
        calls = _spy(monkeypatch, "dp_noise")
        trainer = make_trainer(tiny(regularizers=RegularizerConfig(dp_noise_std=0.1)))
        trainer.d_step()
        trainer.g_step()
        assert len(calls) == 1
        assert calls[0][1] == 0.1
        assert make_trainer(tiny(regularizers=RegularizerConfig(dp_noise_std=0.1))).run().status == STATUS_COMPLETED

    def test_replay_buffer_fills_from_live_updates_only(self):
        trainer = make_trainer(tiny(unroll_k=2, regularizers=RegularizerConfig(replay_capacity=24, replay_mix=0.5)))
        trainer.g_step()
        assert len(trainer.replay) == 0
        trainer.d_step()
        trainer.d_step()
        assert len(trainer.replay) == 24
        assert trainer.replay.seen == 32

    @pytest.mark.parametrize("mode", ["norm", "value"])
    def test_gradient_clipping_bounds_every_update(self, mode):
        bound = 1e-3
        config = tiny(
            optim=OptimConfig(kind="sgd", lr_g=1.0, lr_d=1.0),
            regularizers=RegularizerConfig(grad_clip_mode=mode, grad_clip_bound=bound),
        )
        trainer = make_trainer(config)
        for net, step in ((trainer.bundle.discriminator, trainer.d_step), (trainer.bundle.generator, trainer.g_step)):
            before = net.trainable().copy().values
            step()
            deltas = [after - b for after, b in zip(net.trainable().values, before)]
            if mode == "norm":
                assert math.sqrt(sum(float(np.sum(d * d)) for d in deltas)) <= bound * (1 + 1e-9)
            else:
                assert max(float(np.max(np.abs(d))) for d in deltas) <= bound * (1 + 1e-9)

    def test_spectral_norm_tracks_only_the_discriminator(self):
        trainer = make_trainer(tiny(regularizers=RegularizerConfig(spectral_norm=True)))
        d_params = trainer.bundle.discriminator.params
        assert trainer.bundle.discriminator.spec.spectral_norm
        assert not trainer.bundle.generator.spec.spectral_norm
        before = {i: u.copy() for i, u in d_params.sn_u.items()}
        assert before
        trainer.d_step()
        assert any(not np.array_equal(before[i], d_params.sn_u[i]) for i in before)
        assert trainer.run().status == STATUS_COMPLETED

    def test_feature_matching_adds_a_nonnegative_term(self):
        plain = make_trainer(tiny())
        matched = make_trainer(tiny(regularizers=RegularizerConfig(feature_matching_weight=1.0)))
        base, _ = plain.generator_loss(plain.bundle.discriminator)
        with_fm, _ = matched.generator_loss(matched.bundle.discriminator)
        assert with_fm.item() > base.item()

    def test_label_smoothing_changes_the_discriminator_loss(self):
        plain = make_trainer(tiny())
        smoothed = make_trainer(tiny(regularizers=RegularizerConfig(real_target=0.9)))
        assert smoothed.smoothing == losses.SmoothingConfig(0.9, 0.0)
        assert smoothed.d_step() != plain.d_step()


def test_unroll_against_frozen_critic_matches_plain_generator_gradient():
    trainer = make_trainer(tiny(unroll_k=1, optim=OptimConfig(lr_d=0.0)))
    z = Rng(9).normal((16, TINY_MODEL.z_dim))

    def loss_on(d_net):
        trainer.graph.clear()
        binding = trainer.bundle.generator.bind(trainer.graph)
        fake = trainer.bundle.generator(z, binding)
        return losses.generator_objective(trainer.family, trainer.d_out(d_net, fake)), binding.tensors

    unrolled = unrolled_g_step(
        trainer.bundle.discriminator,
        trainer.d_opt,
        1,
        lambda net, opt: trainer.d_step(net, opt, shadow=True),
        loss_on,
    )
    loss, wrt = loss_on(trainer.bundle.discriminator)
    plain = [g.value for g in ad.grad(loss, wrt)]
    assert len(unrolled) == len(plain)
    for a, b in zip(unrolled, plain):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)
