"""Network rosters for each algorithm and the input-shaping transforms (packing, conditioning)."""
from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from engine import autodiff as ad
from engine.autodiff import Tensor
from engine.nn import EmbeddingTable, Network, NetworkSpec, init_network
from engine.toydata import Rng

logger = logging.getLogger(__name__)

ALGORITHMS = (
    "vanilla",
    "wgan_clip",
    "wgan_gp",
    "lsgan",
    "hinge",
    "cgan",
    "infogan",
    "ebgan",
    "aae",
    "pix2pix_toy",
    "cyclegan_toy",
)

# Discriminator loss family per algorithm.
D_FAMILY = {
    "vanilla": "minimax_bce",
    "cgan": "minimax_bce",
    "infogan": "minimax_bce",
    "aae": "minimax_bce",
    "wgan_clip": "wgan",
    "wgan_gp": "wgan_gp",
    "lsgan": "lsgan",
    "hinge": "hinge",
    "pix2pix_toy": "lsgan",
    "cyclegan_toy": "lsgan",
    "ebgan": "ebgan",
}

PACKABLE = ("vanilla", "wgan_clip", "wgan_gp", "lsgan", "hinge")
G_OUTPUTS = ("identity", "tanh")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelDims:
    data_dim: int
    z_dim: int = 100
    hidden: tuple[int, ...] = (128, 128)
    pack_k: int = 1
    num_classes: int = 0
    code_k: int = 4
    embed_dim: int = 8
    latent_dim: int | None = None
    activation: str = "leaky_relu"
    g_output: str = "identity"
    spectral_norm: bool = False

    @property
    def bottleneck(self) -> int:
        return max(2, self.data_dim)

    @property
    def aae_latent(self) -> int:
        return self.latent_dim if self.latent_dim is not None else max(2, self.data_dim)


@dataclass
class ModelBundle:
    """Every network one algorithm trains.

    ``discriminator`` is the energy autoencoder for ebgan and the latent critic for aae.
    For cyclegan_toy, ``generator`` maps A to B and ``discriminator`` judges B; the
    ``*_b`` pair is the reverse direction.
    """

    algorithm: str
    dims: ModelDims
    generator: Network
    discriminator: Network
    generator_b: Network | None = None
    discriminator_b: Network | None = None
    encoder: Network | None = None
    q_network: Network | None = None
    extras: dict[str, int] = field(default_factory=dict)

    @property
    def d_family(self) -> str:
        return D_FAMILY[self.algorithm]

    def networks(self) -> Iterator[tuple[str, Network]]:
        for role in ("generator", "discriminator", "generator_b", "discriminator_b", "encoder", "q_network"):
            net = getattr(self, role)
            if net is not None:
                yield role, net

    def fingerprints(self) -> dict[str, str]:
        return {role: net.trainable().fingerprint() for role, net in self.networks()}


def _seed_for(seed: int, role: str) -> int:
    return int(Rng(seed).stream(f"init/{role}").integers(0, 2**62, 1)[0])


def _network(spec: NetworkSpec, seed: int, role: str) -> Network:
    return Network(spec, init_network(spec, _seed_for(seed, role)))


def _validate(algorithm: str, dims: ModelDims) -> None:
    if algorithm not in ALGORITHMS:
        raise ModelError(f"unknown algorithm {algorithm!r}; accepted: {ALGORITHMS}")
    for name in ("data_dim", "z_dim", "pack_k", "embed_dim", "code_k"):
        if int(getattr(dims, name)) < 1:
            raise ModelError(f"{name} must be positive, got {getattr(dims, name)}")
    if any(int(h) < 1 for h in dims.hidden):
        raise ModelError(f"hidden widths must be positive, got {dims.hidden}")
    if dims.pack_k > 1 and algorithm not in PACKABLE:
        raise ModelError(f"packing is only wired for {PACKABLE}, not {algorithm!r}")
    if dims.g_output not in G_OUTPUTS:
        raise ModelError(f"unknown generator output {dims.g_output!r}; accepted: {G_OUTPUTS}")
    if algorithm == "cgan" and dims.num_classes < 1:
        raise ModelError("cgan needs num_classes >= 1")
    if algorithm == "infogan" and dims.z_dim <= dims.code_k:
        raise ModelError(f"infogan needs z_dim > code_k, got {dims.z_dim} <= {dims.code_k}")
    if dims.latent_dim is not None and dims.latent_dim < 1:
        raise ModelError(f"latent_dim must be positive, got {dims.latent_dim}")


def build_bundle(algorithm: str, dims: ModelDims, seed: int = 0) -> ModelBundle:
    _validate(algorithm, dims)
    d, hidden, act = dims.data_dim, dims.hidden, dims.activation
    tap = len(hidden) - 1 if hidden else None
    head = "sigmoid" if D_FAMILY[algorithm] == "minimax_bce" else "identity"

    def critic(in_dim: int) -> NetworkSpec:
        return NetworkSpec.mlp(
            in_dim, hidden, 1, activation=act, output=head,
            spectral_norm=dims.spectral_norm, feature_tap=tap,
        )

    def mapper(in_dim: int, out_dim: int, output: str = "identity") -> NetworkSpec:
        return NetworkSpec.mlp(in_dim, hidden, out_dim, activation=act, output=output)

    if algorithm in PACKABLE:
        return ModelBundle(
            algorithm,
            dims,
            generator=_network(mapper(dims.z_dim, d, dims.g_output), seed, "generator"),
            discriminator=_network(critic(d * dims.pack_k), seed, "discriminator"),
        )

    if algorithm == "cgan":
        rng = Rng(seed).stream("init/embedding")
        g_table, d_table = rng.split(2)
        generator = _network(mapper(dims.z_dim + dims.embed_dim, d, dims.g_output), seed, "generator")
        generator.embedding = EmbeddingTable.create(dims.num_classes, dims.embed_dim, g_table)
        discriminator = _network(critic(d + dims.embed_dim), seed, "discriminator")
        discriminator.embedding = EmbeddingTable.create(dims.num_classes, dims.embed_dim, d_table)
        return ModelBundle(algorithm, dims, generator, discriminator)

    if algorithm == "infogan":
        return ModelBundle(
            algorithm,
            dims,
            generator=_network(mapper(dims.z_dim, d, dims.g_output), seed, "generator"),
            discriminator=_network(critic(d), seed, "discriminator"),
            q_network=_network(mapper(d, dims.code_k), seed, "q_network"),
            extras={"noise_dim": dims.z_dim - dims.code_k},
        )

    if algorithm == "ebgan":
        sizes = (d, *hidden, dims.bottleneck, *reversed(hidden), d)
        autoencoder = NetworkSpec(sizes, (act,) * (len(sizes) - 2), "identity", dims.spectral_norm)
        return ModelBundle(
            algorithm,
            dims,
            generator=_network(mapper(dims.z_dim, d, dims.g_output), seed, "generator"),
            discriminator=_network(autoencoder, seed, "discriminator"),
        )

    if algorithm == "aae":
        latent = dims.aae_latent
        return ModelBundle(
            algorithm,
            dims,
            generator=_network(mapper(latent, d, dims.g_output), seed, "generator"),
            discriminator=_network(critic(latent), seed, "discriminator"),
            encoder=_network(mapper(d, latent), seed, "encoder"),
            extras={"latent_dim": latent},
        )

    if algorithm == "pix2pix_toy":
        return ModelBundle(
            algorithm,
            dims,
            generator=_network(mapper(d, d), seed, "generator"),
            discriminator=_network(critic(2 * d), seed, "discriminator"),
        )

    return ModelBundle(
        algorithm,
        dims,
        generator=_network(mapper(d, d), seed, "generator"),
        discriminator=_network(critic(d), seed, "discriminator"),
        generator_b=_network(mapper(d, d), seed, "generator_b"),
        discriminator_b=_network(critic(d), seed, "discriminator_b"),
    )


def pack(batch: np.ndarray | Tensor, k: int) -> np.ndarray | Tensor:
    """Concatenate consecutive groups of ``k`` rows feature-wise."""
    if k < 1:
        raise ModelError(f"pack size must be >= 1, got {k}")
    n = batch.shape[0]
    if n % k:
        raise ModelError(f"batch of {n} rows is not divisible by pack size {k}")
    if k == 1:
        return batch
    if isinstance(batch, Tensor):
        parts = [ad.select_rows(batch, list(range(j, n, k))) for j in range(k)]
        return ad.concat(parts, axis=1)
    x = np.asarray(batch, dtype=np.float64)
    return x.reshape(n // k, k * x.shape[1])


def unpack(packed: np.ndarray, k: int) -> np.ndarray:
    x = np.asarray(packed, dtype=np.float64)
    if k < 1 or x.shape[1] % k:
        raise ModelError(f"packed width {x.shape[1]} is not divisible by pack size {k}")
    return x.reshape(x.shape[0] * k, x.shape[1] // k)


def condition(z: np.ndarray | Tensor, label_vecs: np.ndarray | Tensor) -> Tensor:
    """Feature-wise concatenation of inputs with their label embeddings."""
    if z.shape[0] != label_vecs.shape[0]:
        raise ModelError(f"row counts differ: {z.shape[0]} vs {label_vecs.shape[0]}")
    return ad.concat([z, label_vecs], axis=1)
