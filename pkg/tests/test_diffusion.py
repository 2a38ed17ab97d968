from dataclasses import replace

import numpy as np
import pytest

from engine import toydata
from engine.diffusion import (
    DiffusionConfig,
    NoiseSchedule,
    denoiser_loss,
    forward_diffuse,
    forward_diffuse_stepwise,
    make_denoiser,
    reverse_sample,
    train_denoiser,
    validate_diffusion,
)
from engine.nn import NetworkError
from engine.telemetry import G_UPDATES
from engine.toydata import Rng
from engine.trainers import STATUS_COMPLETED, ConfigError

TINY = DiffusionConfig(T=10, steps=5, batch=16, hidden=(8,), eval_samples=64, seed=2)


class TestSchedule:
    def test_linear_endpoints(self):
        s = NoiseSchedule.linear(5, 0.1, 0.5)
        assert s.T == 5
        assert s.betas[0] == pytest.approx(0.1)
        assert s.betas[-1] == pytest.approx(0.5)

    def test_alpha_bar_is_cumulative_product(self):
        s = NoiseSchedule.constant(4, 0.1)
        assert s.alpha_bars[-1] == pytest.approx(0.9**4)

    @pytest.mark.parametrize("betas", [[], [0.1, 1.0], [-0.1]])
    def test_invalid_betas(self, betas):
        with pytest.raises(ValueError):
            NoiseSchedule(betas)

    def test_step_range(self):
        s = NoiseSchedule.constant(3)
        assert s.check_step(3) == 3
        with pytest.raises(ValueError):
            s.check_step(0)
        with pytest.raises(ValueError):
            s.check_step(4)


def test_closed_form_matches_stepwise_statistics():
    schedule = NoiseSchedule.constant(10, 0.02)
    x0 = np.full((20000, 1), 2.0)
    direct = forward_diffuse(x0, 10, schedule, Rng(0))
    chained = forward_diffuse_stepwise(x0, 10, schedule, Rng(1))
    alpha_bar = 0.98**10
    for draws in (direct, chained):
        assert float(np.mean(draws)) == pytest.approx(2.0 * np.sqrt(alpha_bar), abs=0.02)
        assert float(np.var(draws)) == pytest.approx(1.0 - alpha_bar, abs=0.01)


def test_noiseless_chain_is_identity():
    schedule = NoiseSchedule([0.0, 0.0, 0.0])
    x0 = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(forward_diffuse_stepwise(x0, 3, schedule, Rng(0)), x0)
    assert np.array_equal(forward_diffuse(x0, 3, schedule, Rng(0)), x0)


def test_noiseless_reverse_chain_returns_its_start():
    schedule = NoiseSchedule([0.0, 0.0])
    denoiser = make_denoiser(2, schedule, TINY)
    out = reverse_sample(denoiser, schedule, 5, Rng(7))
    assert np.allclose(out, Rng(7).normal((5, 2)))


def test_zero_network_loss_is_data_dim():
    schedule = NoiseSchedule.linear(50)
    denoiser = make_denoiser(2, schedule, TINY)
    for value in denoiser.network.trainable().values:
        value[...] = 0.0
    rng = Rng(3)
    x0 = rng.normal((20000, 2))
    t = rng.integers(1, 51, 20000)
    eps = rng.normal((20000, 2))
    assert denoiser_loss(denoiser, x0, t, eps).item() == pytest.approx(2.0, abs=0.05)


def test_reverse_sample_is_seeded():
    schedule = NoiseSchedule.linear(10)
    denoiser = make_denoiser(1, schedule, TINY)
    a = reverse_sample(denoiser, schedule, 8, Rng(4))
    b = reverse_sample(denoiser, schedule, 8, Rng(4))
    assert a.shape == (8, 1)
    assert np.array_equal(a, b)


def test_train_denoiser_evaluates_at_end_by_default():
    _, log = train_denoiser(toydata.Gaussian1D(), TINY)
    assert log.status == STATUS_COMPLETED
    assert [r.step for r in log.records] == [5]
    assert log.samples.shape == (64, 1)
    assert log.run_id.startswith("ddpm-") and log.run_id.endswith("-s2")
    assert log.counters[G_UPDATES] == 5
    assert log.config["algorithm"] == "ddpm"


def test_train_denoiser_periodic_evaluation():
    _, log = train_denoiser(toydata.MixtureRing(), replace(TINY, eval_every=2))
    assert [r.step for r in log.records] == [2, 4, 5]


def test_diffusion_needs_a_single_distribution():
    with pytest.raises(ConfigError):
        train_denoiser(toydata.PairedData(), TINY)


def test_validate_rejects_unknown_schedule():
    with pytest.raises(ConfigError) as info:
        validate_diffusion(DiffusionConfig(schedule="cosine"))
    assert info.value.key == "diffusion.schedule"


def test_denoiser_contract_errors_propagate(monkeypatch):
    def broken(*args, **kwargs):
        raise NetworkError("gradient 3 has shape (1, 1), parameter has (1,)")

    monkeypatch.setattr("engine.diffusion.optimizer_step", broken)
    with pytest.raises(NetworkError):
        train_denoiser(toydata.Gaussian1D(), TINY)
