"""Plain-text run configuration.

One ``key = value`` pair per line; ``#`` starts a comment; blank lines are
ignored.  Lists (``seeds``) are comma separated.  Unknown keys are an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .synth import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    name: str = "run"
    seeds: tuple[int, ...] = (0, 1, 2)
    generator_steps: int = 5000
    finetune_steps: int = 1000
    disc_steps_per_gen: int = 4
    batch_size: int = 64
    latent_dim: int = 64
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    snapshot_every: int = 50
    n_checkpoints: int = 30
    eval_samples: int = 1000
    mode_samples: int = 10000
    knn_k: int = 5
    n_latents: int = 256
    w1_method: str = "scipy"
    loss: str = "nonsaturating"
    _set: set = field(default_factory=set, repr=False, compare=False)

    def train_config(self, seed: int, steps: int | None = None) -> TrainConfig:
        return TrainConfig(
            generator_steps=self.generator_steps if steps is None else steps,
            disc_steps_per_gen=self.disc_steps_per_gen, batch_size=self.batch_size,
            latent_dim=self.latent_dim, lr=self.lr, beta1=self.beta1, beta2=self.beta2,
            snapshot_every=self.snapshot_every, seed=seed, loss=self.loss)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        unknown = set(kw) - set(_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **kw)

    def dump(self) -> str:
        lines = []
        for k in _KEYS:
            v = getattr(self, k)
            lines.append(f"{k} = {','.join(map(str, v)) if isinstance(v, tuple) else v}")
        return "\n".join(lines) + "\n"


_KEYS = [f.name for f in fields(RunConfig) if not f.name.startswith("_")]
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            vals = tuple(int(v) for v in raw.split(",") if v.strip())
            if not vals:
                raise ValueError("empty list")
            return vals
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {raw!r} ({e})") from None
    return raw


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw)
    cfg = RunConfig(**values)
    cfg._set = set(values)
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as f:
        return parse_config(f.read())
