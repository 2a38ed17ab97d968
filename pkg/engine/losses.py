"""Adversarial objectives and auxiliary losses as graph-attached scalars."""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from engine import autodiff as ad
from engine.autodiff import Graph, Tensor
from engine.toydata import Rng

logger = logging.getLogger(__name__)

PROB_EPS = 1e-12

LOSS_KINDS = (
    "minimax_bce",
    "nonsaturating",
    "wgan",
    "wgan_gp",
    "lsgan",
    "hinge",
    "ebgan",
    "infogan_aux",
    "pix2pix",
    "cycle",
    "feature_matching",
)
G_LOSS_FORMS = ("nonsaturating", "saturating")


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class SmoothingConfig:
    real_target: float = 1.0
    fake_target: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fake_target < self.real_target <= 1.0:
            raise LossError(
                f"smoothing targets need 0 <= fake < real <= 1, got "
                f"({self.real_target}, {self.fake_target})"
            )


def _t(x: Tensor | np.ndarray | Sequence[float]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _safe_log(p: Tensor) -> Tensor:
    return ad.log(ad.clamp(p, PROB_EPS, 1.0 - PROB_EPS))


def _bce(p: Tensor, target: float) -> Tensor:
    """Batch-mean binary cross-entropy against a constant target."""
    pos = ad.scale(ad.reduce_mean(_safe_log(p)), -target) if target > 0 else None
    neg = (
        ad.scale(ad.reduce_mean(_safe_log(ad.sub(1.0, p))), -(1.0 - target))
        if target < 1
        else None
    )
    if pos is None:
        return neg  # type: ignore[return-value]
    if neg is None:
        return pos
    return ad.add(pos, neg)


def d_loss_minimax(p_real, p_fake, smoothing: SmoothingConfig | None = None) -> Tensor:
    s = smoothing or SmoothingConfig()
    return ad.add(_bce(_t(p_real), s.real_target), _bce(_t(p_fake), s.fake_target))


def g_loss(kind: str, p_fake) -> Tensor:
    """``nonsaturating``: -mean log D(G(z)); ``saturating``: mean log(1 - D(G(z)))."""
    p = _t(p_fake)
    if kind == "nonsaturating":
        return ad.negate(ad.reduce_mean(_safe_log(p)))
    if kind == "saturating":
        return ad.reduce_mean(_safe_log(ad.sub(1.0, p)))
    raise LossError(f"unknown generator loss {kind!r}; accepted: {G_LOSS_FORMS}")


def wgan_losses(s_real, s_fake) -> tuple[Tensor, Tensor]:
    sr, sf = _t(s_real), _t(s_fake)
    mean_fake = ad.reduce_mean(sf)
    return ad.sub(mean_fake, ad.reduce_mean(sr)), ad.negate(mean_fake)


def gradient_penalty(
    critic: Callable[[Tensor], Tensor],
    real: np.ndarray,
    fake: np.ndarray,
    lam: float,
    rng: Rng,
    graph: Graph,
) -> Tensor:
    """lam * mean((||grad_x critic(x_hat)|| - 1)^2) on per-row interpolates x_hat.

    ``critic`` must close over graph-attached parameters so the result can be
    differentiated with respect to them.
    """
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise LossError(f"real {real.shape} and fake {fake.shape} batches differ in shape")
    if lam < 0:
        raise LossError(f"penalty coefficient must be >= 0, got {lam}")
    eps = rng.uniform((real.shape[0], 1))
    x_hat = graph.leaf(eps * real + (1.0 - eps) * fake)
    scores = critic(x_hat)
    if len(scores.shape) != 2 or scores.shape[1] != 1:
        raise LossError(f"critic must emit one score per row, got shape {list(scores.shape)}")
    (g,) = ad.grad(ad.reduce_sum(scores), [x_hat], create_graph=True)
    if not g.attached:
        # Critic ignores its input: the gradient is a detached zero.
        g = ad.add(g, ad.scale(x_hat, 0.0))
    norms = ad.row_l2_norm(g)
    return ad.scale(ad.reduce_mean(ad.square(ad.sub(norms, 1.0))), lam)


def lsgan_losses(v_real, v_fake) -> tuple[Tensor, Tensor]:
    vr, vf = _t(v_real), _t(v_fake)
    d = ad.add(
        ad.scale(ad.reduce_mean(ad.square(ad.sub(vr, 1.0))), 0.5),
        ad.scale(ad.reduce_mean(ad.square(vf)), 0.5),
    )
    g = ad.scale(ad.reduce_mean(ad.square(ad.sub(vf, 1.0))), 0.5)
    return d, g


def hinge_losses(s_real, s_fake) -> tuple[Tensor, Tensor]:
    sr, sf = _t(s_real), _t(s_fake)
    d = ad.add(
        ad.reduce_mean(ad.relu(ad.sub(1.0, sr))),
        ad.reduce_mean(ad.relu(ad.add(sf, 1.0))),
    )
    return d, ad.negate(ad.reduce_mean(sf))


def reconstruction_energy(x, x_rec) -> Tensor:
    """Per-sample mean squared reconstruction error, shape [n x 1]."""
    a, b = _t(x), _t(x_rec)
    if a.shape != b.shape:
        raise LossError(f"reconstruction shape {b.shape} does not match input {a.shape}")
    return ad.reduce_mean(ad.square(ad.sub(b, a)), axis=1, keepdims=True)


def ebgan_losses(recon_real, recon_fake) -> tuple[Tensor, Tensor]:
    er, ef = _t(recon_real), _t(recon_fake)
    if np.any(er.value < 0) or np.any(ef.value < 0):
        raise LossError("energies must be nonnegative")
    mean_fake = ad.reduce_mean(ef)
    return ad.sub(ad.reduce_mean(er), mean_fake), mean_fake


def infogan_aux_loss(q_logits, codes: Sequence[int] | np.ndarray) -> Tensor:
    """Categorical cross-entropy of the Q head against the sampled codes."""
    logits = _t(q_logits)
    idx = np.asarray(codes, dtype=np.int64).reshape(-1)
    if len(logits.shape) != 2 or logits.shape[0] != idx.size:
        raise LossError(f"need one logit row per code, got {list(logits.shape)} for {idx.size} codes")
    k = logits.shape[1]
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise LossError(f"code out of range [0, {k})")
    onehot = np.zeros((idx.size, k))
    onehot[np.arange(idx.size), idx] = 1.0
    picked = ad.reduce_sum(ad.mul(ad.log_softmax(logits, axis=1), Tensor(onehot)))
    return ad.scale(picked, -1.0 / idx.size)


def l1_mean(a, b) -> Tensor:
    x, y = _t(a), _t(b)
    if x.shape != y.shape:
        raise LossError(f"shape mismatch {x.shape} vs {y.shape}")
    return ad.reduce_mean(ad.absolute(ad.sub(x, y)))


def composite_pix2pix_g(adv_term, y_hat, y, lambda_l1: float) -> Tensor:
    if lambda_l1 < 0:
        raise LossError(f"lambda_l1 must be >= 0, got {lambda_l1}")
    return ad.add(_t(adv_term), ad.scale(l1_mean(y_hat, y), lambda_l1))


def cycle_loss(x, x_rec, y, y_rec) -> Tensor:
    return ad.add(l1_mean(x_rec, x), l1_mean(y_rec, y))


def feature_matching_loss(f_real, f_fake) -> Tensor:
    fr, ff = _t(f_real), _t(f_fake)
    if fr.shape[-1] != ff.shape[-1]:
        raise LossError(f"feature widths differ: {fr.shape[-1]} vs {ff.shape[-1]}")
    diff = ad.sub(ad.reduce_mean(fr, axis=0, keepdims=True), ad.reduce_mean(ff, axis=0, keepdims=True))
    return ad.reduce_sum(ad.square(diff))


def adversarial_losses(
    family: str,
    d_real: Tensor,
    d_fake: Tensor,
    *,
    smoothing: SmoothingConfig | None = None,
    g_form: str = "nonsaturating",
) -> tuple[Tensor, Tensor]:
    """(d_loss, g_loss) for one discriminator family; both read the same D outputs."""
    if family == "minimax_bce":
        return d_loss_minimax(d_real, d_fake, smoothing), g_loss(g_form, d_fake)
    if family in ("wgan", "wgan_gp"):
        return wgan_losses(d_real, d_fake)
    if family == "lsgan":
        return lsgan_losses(d_real, d_fake)
    if family == "hinge":
        return hinge_losses(d_real, d_fake)
    if family == "ebgan":
        return ebgan_losses(d_real, d_fake)
    raise LossError(f"{family!r} is not an adversarial family")


def generator_objective(family: str, d_fake: Tensor, g_form: str = "nonsaturating") -> Tensor:
    """The generator half of :func:`adversarial_losses`, without building the critic term."""
    if family == "minimax_bce":
        return g_loss(g_form, d_fake)
    if family in ("wgan", "wgan_gp", "hinge"):
        return ad.negate(ad.reduce_mean(d_fake))
    if family == "lsgan":
        return ad.scale(ad.reduce_mean(ad.square(ad.sub(d_fake, 1.0))), 0.5)
    if family == "ebgan":
        return ad.reduce_mean(d_fake)
    raise LossError(f"{family!r} is not an adversarial family")
