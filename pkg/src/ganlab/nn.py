"""Small feed-forward networks with exact backprop, batch-norm and Adam.

Everything here is float64 numpy.  A network is a chain of blocks, each block
being ``linear -> [batch-norm] -> [relu]``.  ``MLP.forward`` returns the output
together with a :class:`Cache` that ``MLP.backward`` consumes.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

Activation = Literal["relu", "identity"]


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation = "identity"
    batch_norm: bool = False

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


def chain(sizes: Sequence[int], batch_norm: bool, last_activation: Activation = "identity") -> list[LayerSpec]:
    """Layer specs for a plain MLP; every layer but the last gets ReLU (and BN if asked)."""
    specs = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        specs.append(LayerSpec(a, b, last_activation if last else "relu", batch_norm and not last))
    return specs


@dataclass
class Cache:
    model_id: int
    train: bool
    inputs: list = field(default_factory=list)    # input of each linear layer
    xhat: list = field(default_factory=list)      # normalized pre-affine values (BN layers)
    inv_std: list = field(default_factory=list)
    relu_mask: list = field(default_factory=list)
    out_shape: tuple = ()


@dataclass
class GradientBundle:
    params: list[np.ndarray]
    input: np.ndarray | None
    flat: np.ndarray | None = None


class MLP:
    """Parameters and batch-norm state for a chain of :class:`LayerSpec` blocks."""

    def __init__(self, layers: Sequence[LayerSpec], rng: np.random.Generator | None = None,
                 bn_eps: float = BN_EPS, bn_momentum: float = BN_MOMENTUM):
        layers = list(layers)
        if not layers:
            raise ValueError("MLP needs at least one layer")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"dimension chain broken: {a.out_dim} -> {b.in_dim}")
        self.layers = layers
        self.bn_eps = bn_eps
        self.bn_momentum = bn_momentum
        rng = rng if rng is not None else np.random.default_rng(0)
        # all trainable parameters live in one flat buffer; the per-layer arrays are views
        self._slices = self._layout(layers)
        self.flat = np.empty(self._size(layers))
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        self.gamma: dict[int, np.ndarray] = {}
        self.beta: dict[int, np.ndarray] = {}
        self.running_mean: dict[int, np.ndarray] = {}
        self.running_var: dict[int, np.ndarray] = {}
        self._bind()
        for i, spec in enumerate(layers):
            bound = 1.0 / np.sqrt(spec.in_dim)
            self.weights[i][...] = rng.uniform(-bound, bound, size=(spec.in_dim, spec.out_dim))
            self.biases[i][...] = rng.uniform(-bound, bound, size=spec.out_dim)
            if spec.batch_norm:
                self.gamma[i][...] = 1.0
                self.beta[i][...] = 0.0
                self.running_mean[i] = np.zeros(spec.out_dim)
                self.running_var[i] = np.ones(spec.out_dim)

    @staticmethod
    def _size(layers) -> int:
        return sum(s.in_dim * s.out_dim + s.out_dim + (2 * s.out_dim if s.batch_norm else 0) for s in layers)

    @staticmethod
    def _layout(layers) -> list[list[tuple[tuple[int, ...], slice]]]:
        out, pos = [], 0
        for s in layers:
            shapes = [(s.in_dim, s.out_dim), (s.out_dim,)]
            if s.batch_norm:
                shapes += [(s.out_dim,), (s.out_dim,)]
            block = []
            for shape in shapes:
                size = int(np.prod(shape))
                block.append((shape, slice(pos, pos + size)))
                pos += size
            out.append(block)
        return out

    def _views(self, buf: np.ndarray) -> list[list[np.ndarray]]:
        return [[buf[sl].reshape(shape) for shape, sl in block] for block in self._slices]

    def _bind(self):
        for i, (spec, views) in enumerate(zip(self.layers, self._views(self.flat))):
            if i < len(self.weights):
                self.weights[i], self.biases[i] = views[0], views[1]
            else:
                self.weights.append(views[0])
                self.biases.append(views[1])
            if spec.batch_norm:
                self.gamma[i], self.beta[i] = views[2], views[3]

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def params(self) -> list[np.ndarray]:
        """Trainable arrays in canonical order: per layer W, b, then gamma, beta if BN."""
        out = []
        for i, spec in enumerate(self.layers):
            out += [self.weights[i], self.biases[i]]
            if spec.batch_norm:
                out += [self.gamma[i], self.beta[i]]
        return out

    def buffers(self) -> list[np.ndarray]:
        """Non-trainable batch-norm running statistics, per BN layer mean then var."""
        out = []
        for i, spec in enumerate(self.layers):
            if spec.batch_norm:
                out += [self.running_mean[i], self.running_var[i]]
        return out

    def copy(self) -> "MLP":
        new = copy.copy(self)
        new.flat = self.flat.copy()
        new.weights, new.biases, new.gamma, new.beta = [], [], {}, {}
        new._bind()
        new.running_mean = {k: v.copy() for k, v in self.running_mean.items()}
        new.running_var = {k: v.copy() for k, v in self.running_var.items()}
        return new

    def __deepcopy__(self, memo):
        return self.copy()

    def forward(self, x: np.ndarray, train: bool = False) -> tuple[np.ndarray, Cache]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected input with {self.in_dim} columns, got shape {x.shape}")
        has_bn = any(s.batch_norm for s in self.layers)
        if train and has_bn and x.shape[0] < 2:
            raise ValueError("batch-norm in train mode needs a batch of at least 2 rows")
        cache = Cache(id(self), train)
        h = x
        for i, spec in enumerate(self.layers):
            cache.inputs.append(h)
            h = h @ self.weights[i] + self.biases[i]
            if spec.batch_norm:
                if train:
                    n = h.shape[0]
                    mu = h.sum(axis=0) / n
                    hc = h - mu
                    var = np.einsum("ij,ij->j", hc, hc) / n
                    m = self.bn_momentum
                    rm, rv = self.running_mean[i], self.running_var[i]
                    rm *= 1 - m
                    rm += m * mu
                    rv *= 1 - m
                    rv += (m * n / (n - 1)) * var
                else:
                    hc = h - self.running_mean[i]
                    var = self.running_var[i]
                inv_std = 1.0 / np.sqrt(var + self.bn_eps)
                xhat = hc * inv_std
                cache.xhat.append(xhat)
                cache.inv_std.append(inv_std)
                h = xhat * self.gamma[i] + self.beta[i]
            else:
                cache.xhat.append(None)
                cache.inv_std.append(None)
            if spec.activation == "relu":
                mask = h > 0
                cache.relu_mask.append(mask)
                h = np.maximum(h, 0.0)
            else:
                cache.relu_mask.append(None)
        cache.out_shape = h.shape
        return h, cache

    def __call__(self, x, train: bool = False) -> np.ndarray:
        return self.forward(x, train)[0]

    def backward(self, cache: Cache, output_grad: np.ndarray,
                 param_grads: bool = True, input_grad: bool = True) -> GradientBundle:
        """Exact gradients of ``sum(output * output_grad)``.

        ``param_grads=False`` / ``input_grad=False`` skip work the caller does not
        need; the skipped part of the bundle is then all zeros / ``None``.
        """
        if cache.model_id != id(self) or len(cache.inputs) != len(self.layers):
            raise ValueError("cache was not produced by this model")
        g = np.asarray(output_grad, dtype=np.float64)
        if g.shape != cache.out_shape:
            raise ValueError(f"output_grad shape {g.shape} does not match forward output {cache.out_shape}")
        flat = np.zeros_like(self.flat)
        views = self._views(flat)
        for i in range(len(self.layers) - 1, -1, -1):
            spec = self.layers[i]
            if cache.relu_mask[i] is not None:
                g = g * cache.relu_mask[i]
            if spec.batch_norm:
                xhat = cache.xhat[i]
                if param_grads:
                    views[i][2][...] = np.einsum("ij,ij->j", g, xhat)
                    views[i][3][...] = g.sum(axis=0)
                gx = g * self.gamma[i]
                if cache.train:
                    # batch statistics depend on every row
                    n = g.shape[0]
                    g = cache.inv_std[i] * (gx - gx.sum(axis=0) / n - xhat * (np.einsum("ij,ij->j", gx, xhat) / n))
                else:
                    g = gx * cache.inv_std[i]
            if param_grads:
                np.matmul(cache.inputs[i].T, g, out=views[i][0])
                views[i][1][...] = g.sum(axis=0)
            if i > 0 or input_grad:
                g = g @ self.weights[i].T
        bundle = GradientBundle([a for blk in views for a in blk], g if input_grad else None)
        bundle.flat = flat
        return bundle


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("Adam eps must be positive")

    def fresh(self) -> "AdamState":
        """Same hyperparameters, zeroed moments."""
        return AdamState(self.lr, self.beta1, self.beta2, self.eps)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ValueError(f"{len(params)} params but {len(grads)} grads")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    elif [m.shape for m in state.m] != [p.shape for p in params]:
        raise ValueError("Adam moment buffers do not match parameter shapes")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.t
    c2 = 1 - b2 ** state.t
    step = state.lr / c1
    inv_c2 = 1.0 / np.sqrt(c2)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        denom = np.sqrt(v)
        denom *= inv_c2
        denom += state.eps
        p -= step * m / denom


def input_gradient_of_logit(disc: MLP, points: np.ndarray) -> np.ndarray:
    """d D(x) / dx for each row, D being the raw (pre-sigmoid) logit, eval mode."""
    if disc.out_dim != 1:
        raise ValueError(f"discriminator must output one logit per row, has {disc.out_dim}")
    out, cache = disc.forward(points, train=False)
    return disc.backward(cache, np.ones_like(out)).input
