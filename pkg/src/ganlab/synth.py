"""Toy 2D distributions and the GAN training / finetuning loops run on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .metrics import SampleSet
from .nn import MLP, AdamState, adam_step, chain

GEN_HIDDEN = (64, 128, 128, 128, 64)
DISC_HIDDEN = (64, 128, 128, 64)


@dataclass(frozen=True)
class GaussianMixtureSpec:
    centers: tuple[tuple[float, ...], ...]
    sigma: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.centers:
            raise ValueError("mixture needs at least one component")
        if not len(self.centers) == len(self.sigma) == len(self.weights):
            raise ValueError("centers, sigma and weights must have equal length")
        if any(s <= 0 for s in self.sigma):
            raise ValueError("sigma must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-12 or any(w < 0 for w in self.weights):
            raise ValueError("weights must be a probability vector")

    @property
    def dim(self) -> int:
        return len(self.centers[0])

    @classmethod
    def isotropic(cls, centers, sigma: float) -> "GaussianMixtureSpec":
        centers = tuple(tuple(float(v) for v in c) for c in centers)
        k = len(centers)
        return cls(centers, (float(sigma),) * k, (1.0 / k,) * k)

    def sample_array(self, n: int, rng: np.random.Generator) -> np.ndarray:
        centers = np.asarray(self.centers)
        comp = rng.choice(len(centers), size=n, p=np.asarray(self.weights))
        noise = rng.standard_normal((n, self.dim))
        return centers[comp] + noise * np.asarray(self.sigma)[comp, None]


@dataclass(frozen=True)
class RingPlusNoiseSpec:
    """Uniform angle on a zero-centered circle, plus isotropic Gaussian noise."""

    radius: float
    noise_sigma: float

    def __post_init__(self):
        if self.radius <= 0 or self.noise_sigma <= 0:
            raise ValueError("radius and noise_sigma must be positive")

    dim = 2

    def sample_array(self, n: int, rng: np.random.Generator) -> np.ndarray:
        theta = rng.uniform(0.0, 2 * math.pi, size=n)
        ring = self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return ring + self.noise_sigma * rng.standard_normal((n, 2))


DataSpec = GaussianMixtureSpec | RingPlusNoiseSpec


def circle_centers(k: int = 10, radius: float = 20.0) -> list[tuple[float, float]]:
    angles = 2 * math.pi * np.arange(k) / k
    return [(radius * math.cos(a), radius * math.sin(a)) for a in angles]


def target_spec() -> GaussianMixtureSpec:
    """Ten Gaussians on a radius-20 circle, sigma 0.25."""
    return GaussianMixtureSpec.isotropic(circle_centers(10, 20.0), 0.25)


def source1_spec() -> RingPlusNoiseSpec:
    """Wide ring: high coverage, low precision w.r.t. the target."""
    return RingPlusNoiseSpec(20.0, 4.0)


def source2_spec() -> GaussianMixtureSpec:
    """Three Gaussians sharing three consecutive target centers, sigma 0.5."""
    return GaussianMixtureSpec.isotropic(circle_centers(10, 20.0)[:3], 0.5)


def sample(spec: DataSpec, n: int, seed: int = 0) -> SampleSet:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return SampleSet(spec.sample_array(n, rng), label=type(spec).__name__)


@dataclass
class TrainConfig:
    generator_steps: int = 5000
    disc_steps_per_gen: int = 4
    batch_size: int = 64
    latent_dim: int = 64
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    snapshot_every: int = 50
    seed: int = 0
    loss: Literal["nonsaturating", "minimax"] = "nonsaturating"

    def __post_init__(self):
        for name in ("disc_steps_per_gen", "batch_size", "latent_dim", "snapshot_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.generator_steps < 0:
            raise ValueError("generator_steps must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for batch-norm")
        if self.loss not in ("nonsaturating", "minimax"):
            raise ValueError(f"unknown loss {self.loss!r}")

    def adam(self) -> AdamState:
        return AdamState(self.lr, self.beta1, self.beta2)


@dataclass
class GanCheckpoint:
    generator: MLP
    discriminator: MLP
    gen_opt: AdamState
    disc_opt: AdamState
    step: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.generator.out_dim != self.discriminator.in_dim:
            raise ValueError("generator output dim must equal discriminator input dim")
        if self.discriminator.out_dim != 1:
            raise ValueError("discriminator must output a single logit")

    def copy(self, with_optimizers: bool = True) -> "GanCheckpoint":
        import copy as _copy
        g_opt = _copy.deepcopy(self.gen_opt) if with_optimizers else self.gen_opt.fresh()
        d_opt = _copy.deepcopy(self.disc_opt) if with_optimizers else self.disc_opt.fresh()
        return GanCheckpoint(self.generator.copy(), self.discriminator.copy(), g_opt, d_opt, self.step, self.seed)


def fresh_checkpoint(config: TrainConfig, data_dim: int = 2) -> GanCheckpoint:
    rng = np.random.default_rng([config.seed, 0x1A17])
    g = MLP(chain((config.latent_dim, *GEN_HIDDEN, data_dim), batch_norm=True), rng)
    d = MLP(chain((data_dim, *DISC_HIDDEN, 1), batch_norm=False), rng)
    return GanCheckpoint(g, d, config.adam(), config.adam(), 0, config.seed)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint: GanCheckpoint, step: int):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.step = step


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step])


def _disc_update(ckpt: GanCheckpoint, real: np.ndarray, fake: np.ndarray) -> float:
    d = ckpt.discriminator
    b = real.shape[0]
    logits, cache = d.forward(np.concatenate([real, fake]), train=True)
    lr_, lf = logits[:b, 0], logits[b:, 0]
    loss = _softplus(-lr_).mean() + _softplus(lf).mean()
    grad = np.concatenate([-_sigmoid(-lr_), _sigmoid(lf)])[:, None] / b
    adam_step([d.flat], [d.backward(cache, grad, input_grad=False).flat], ckpt.disc_opt)
    return float(loss)


def _gen_update(ckpt: GanCheckpoint, z: np.ndarray, loss_kind: str) -> float:
    g, d = ckpt.generator, ckpt.discriminator
    fake, g_cache = g.forward(z, train=True)
    logits, d_cache = d.forward(fake, train=True)
    l = logits[:, 0]
    b = z.shape[0]
    if loss_kind == "nonsaturating":
        loss = _softplus(-l).mean()
        dl = -_sigmoid(-l) / b
    else:
        # minimise log(1 - sigmoid(l)) = -softplus(l)
        loss = -_softplus(l).mean()
        dl = -_sigmoid(l) / b
    dx = d.backward(d_cache, dl[:, None], param_grads=False).input
    adam_step([g.flat], [g.backward(g_cache, dx, input_grad=False).flat], ckpt.gen_opt)
    return float(loss)


def gan_train(data_spec: DataSpec, config: TrainConfig, init: GanCheckpoint | None = None,
              keep_snapshots: bool = True,
              callback: Callable[[int, GanCheckpoint], None] | None = None,
              ) -> tuple[GanCheckpoint, list[GanCheckpoint]]:
    """Alternate ``disc_steps_per_gen`` D updates and one G update, ``generator_steps`` times.

    ``init`` is deep-copied, never mutated.  Snapshots (generator + discriminator,
    without optimizer moments) are taken after every ``snapshot_every`` generator
    steps; ``callback(step, snapshot)`` sees each of them.  The random stream of
    generator step ``i`` is seeded by ``(config.seed, i)`` alone.
    """
    ckpt = fresh_checkpoint(config, data_spec.dim) if init is None else init.copy()
    if ckpt.generator.in_dim != config.latent_dim:
        raise ValueError(f"generator latent dim {ckpt.generator.in_dim} != config {config.latent_dim}")
    if ckpt.generator.out_dim != data_spec.dim:
        raise ValueError("generator output dim does not match the data dimension")
    ckpt.seed = config.seed
    snapshots = []
    b, zd = config.batch_size, config.latent_dim
    for i in range(config.generator_steps):
        rng = _step_rng(config.seed, i)
        for _ in range(config.disc_steps_per_gen):
            real = data_spec.sample_array(b, rng)
            fake = ckpt.generator.forward(rng.standard_normal((b, zd)), train=True)[0]
            d_loss = _disc_update(ckpt, real, fake)
        g_loss = _gen_update(ckpt, rng.standard_normal((b, zd)), config.loss)
        ckpt.step += 1
        if not (math.isfinite(d_loss) and math.isfinite(g_loss)):
            raise TrainingDiverged(f"non-finite loss at generator step {i} (d={d_loss}, g={g_loss})", ckpt, i)
        if (i + 1) % config.snapshot_every == 0:
            snap = ckpt.copy(with_optimizers=False)
            if keep_snapshots:
                snapshots.append(snap)
            if callback is not None:
                callback(i + 1, snap)
    return ckpt, snapshots


def finetune(target: DataSpec, start: GanCheckpoint, steps: int = 1000,
             config: TrainConfig | None = None, **kw) -> GanCheckpoint:
    """Continue training ``start`` on ``target`` with freshly reset Adam moments."""
    config = replace(config or TrainConfig(), generator_steps=steps)
    init = start.copy(with_optimizers=False)
    init.gen_opt = config.adam()
    init.disc_opt = config.adam()
    if steps == 0:
        return init
    final, _ = gan_train(target, config, init, keep_snapshots=False, **kw)
    return final


def generate(g: MLP, n: int, latent_dim: int | None = None, seed: int = 0) -> SampleSet:
    """Push ``n`` standard-normal latents through ``g`` in eval mode."""
    latent_dim = g.in_dim if latent_dim is None else latent_dim
    if latent_dim != g.in_dim:
        raise ValueError(f"generator expects latent dim {g.in_dim}, got {latent_dim}")
    if n == 0:
        return SampleSet(np.zeros((0, g.out_dim)), label="generated")
    z = np.random.default_rng(seed).standard_normal((n, latent_dim))
    return SampleSet(g.forward(z, train=False)[0], label="generated")


def generate_from_latents(g: MLP, z: np.ndarray) -> np.ndarray:
    return g.forward(z, train=False)[0]
