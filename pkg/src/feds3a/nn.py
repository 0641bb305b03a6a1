"""Feed-forward softmax classifier over flat parameter vectors.

Parameters of every model live in one contiguous float64 array
(:class:`ParamVector`) so that aggregation and transport can treat a model
as a plain vector.  Layer ``l`` occupies a ``(n_in, n_out)`` weight block
followed by an ``n_out`` bias block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError, NumericError


@dataclass(frozen=True)
class LayerShape:
    kind: str
    n_in: int
    n_out: int

    @property
    def size(self) -> int:
        return self.n_in * self.n_out + self.n_out


@dataclass(frozen=True, eq=False)
class ParamVector:
    """All model parameters as one float64 vector plus the layer layout."""

    values: np.ndarray
    shapes: tuple[LayerShape, ...]

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise InputError("ParamVector values must be one-dimensional")
        expected = sum(s.size for s in self.shapes)
        if values.shape[0] != expected:
            raise InputError(
                f"ParamVector has {values.shape[0]} values but shapes require {expected}"
            )
        if not np.all(np.isfinite(values)):
            raise NumericError("ParamVector contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shapes", tuple(self.shapes))

    def __len__(self) -> int:
        return self.values.shape[0]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` into :attr:`values`, one pair per layer."""
        out = []
        offset = 0
        for s in self.shapes:
            w = self.values[offset:offset + s.n_in * s.n_out].reshape(s.n_in, s.n_out)
            offset += s.n_in * s.n_out
            b = self.values[offset:offset + s.n_out]
            offset += s.n_out
            out.append((w, b))
        return out

    def with_values(self, values: np.ndarray) -> ParamVector:
        return ParamVector(values, self.shapes)

    def _trusted(self, values: np.ndarray) -> ParamVector:
        # hot path: caller guarantees length, dtype and finiteness
        out = object.__new__(ParamVector)
        object.__setattr__(out, "values", values)
        object.__setattr__(out, "shapes", self.shapes)
        return out

    def copy(self) -> ParamVector:
        return ParamVector(self.values.copy(), self.shapes)

    def same_layout(self, other: ParamVector) -> bool:
        return self.shapes == other.shapes


@dataclass(frozen=True, eq=False)
class VersionedModel:
    """Parameters tagged with the global version they were derived from."""

    params: ParamVector
    version: int


@dataclass(frozen=True)
class ModelSpec:
    """Layer widths ``(n_features, hidden..., n_classes)`` of a ReLU MLP."""

    widths: tuple[int, ...]
    dropout: float = 0.0
    l1: float = 0.0

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2 or any(w <= 0 for w in widths):
            raise ConfigurationError(f"invalid layer widths {widths}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.l1 < 0:
            raise ConfigurationError(f"l1 must be nonnegative, got {self.l1}")
        object.__setattr__(self, "widths", widths)

    @property
    def n_features(self) -> int:
        return self.widths[0]

    @property
    def n_classes(self) -> int:
        return self.widths[-1]

    @property
    def shapes(self) -> tuple[LayerShape, ...]:
        return tuple(
            LayerShape("dense", a, b) for a, b in zip(self.widths[:-1], self.widths[1:])
        )

    @property
    def n_params(self) -> int:
        return sum(s.size for s in self.shapes)


def init_params(spec: ModelSpec, rng: np.random.Generator) -> ParamVector:
    """He-normal weights, zero biases."""
    chunks = []
    for s in spec.shapes:
        chunks.append(rng.normal(0.0, np.sqrt(2.0 / s.n_in), size=s.n_in * s.n_out))
        chunks.append(np.zeros(s.n_out))
    return ParamVector(np.concatenate(chunks), spec.shapes)


def zeros(spec: ModelSpec) -> ParamVector:
    return ParamVector(np.zeros(spec.n_params), spec.shapes)


def _check(params: ParamVector, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    if params.shapes != spec.shapes:
        raise ConfigurationError("parameter layout does not match the model spec")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.n_features:
        raise ConfigurationError(
            f"batch has shape {x.shape}, expected (n, {spec.n_features})"
        )
    return x


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cache(params, spec, x, rng):
    """Run the network, keeping what backprop needs."""
    layers = params.layers()
    acts = [x]
    masks = []
    h = x
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if not np.isfinite(z).all():
            raise NumericError(f"non-finite activation in layer {i}")
        if i == last:
            return softmax(z), acts, masks
        h = np.maximum(z, 0.0)
        if rng is not None and spec.dropout > 0:
            keep = 1.0 - spec.dropout
            m = (rng.random(h.shape) < keep) / keep
            h = h * m
        else:
            m = None
        masks.append((z > 0, m))
        acts.append(h)
    raise AssertionError("unreachable")


def forward(
    params: ParamVector,
    spec: ModelSpec,
    x: np.ndarray,
    *,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Class probabilities for each row of ``x``.

    Dropout is active only when an ``rng`` is supplied (training mode).
    """
    x = _check(params, spec, x)
    probs, _, _ = _forward_cache(params, spec, x, rng)
    return probs


def predict(params: ParamVector, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    return forward(params, spec, x).argmax(axis=1)


def loss_and_grad(
    params: ParamVector,
    spec: ModelSpec,
    x: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray | None = None,
    *,
    rng: np.random.Generator | None = None,
) -> tuple[float, ParamVector]:
    """Masked mean cross-entropy plus ``spec.l1 * ||params||_1`` and its gradient.

    Rows with ``mask == 0`` contribute nothing.  With no unmasked rows the
    data term is zero and only the L1 subgradient (``sign(0) = 0``) remains.
    """
    x = _check(params, spec, x)
    targets = np.asarray(targets, dtype=np.float64)
    n = x.shape[0]
    if targets.shape != (n, spec.n_classes):
        raise InputError(f"targets have shape {targets.shape}, expected {(n, spec.n_classes)}")
    if n and not (np.all((targets == 0) | (targets == 1)) and np.all(targets.sum(axis=1) == 1)):
        raise InputError("target rows must be one-hot")
    mask = np.ones(n) if mask is None else np.asarray(mask, dtype=np.float64)
    if mask.shape != (n,):
        raise InputError(f"mask has shape {mask.shape}, expected ({n},)")
    cache = _forward_cache(params, spec, x, rng) if mask.any() else None
    return _loss_grad_from_cache(params, spec, cache, targets, mask)


def _loss_grad_from_cache(params, spec, cache, targets, mask):
    l1_loss = spec.l1 * float(np.abs(params.values).sum())
    grad = spec.l1 * np.sign(params.values) if spec.l1 else np.zeros_like(params.values)
    count = float(mask.sum())
    if count == 0:
        return l1_loss, params._trusted(grad)

    probs, acts, masks = cache
    picked = np.clip((probs * targets).sum(axis=1), 1e-300, None)
    data_loss = float(-(mask * np.log(picked)).sum() / count)

    layers = params.layers()
    grads = []
    delta = (probs - targets) * (mask / count)[:, None]
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append(delta.sum(axis=0))
        grads.append((acts[i].T @ delta).ravel())
        if i == 0:
            break
        delta = delta @ w.T
        active, drop = masks[i - 1]
        delta = delta * active
        if drop is not None:
            delta = delta * drop
    grad += np.concatenate(grads[::-1])
    return data_loss + l1_loss, params._trusted(grad)


def pseudo_label_loss_and_grad(
    params: ParamVector,
    spec: ModelSpec,
    x: np.ndarray,
    threshold: float,
    *,
    rng: np.random.Generator | None = None,
) -> tuple[float, ParamVector, np.ndarray, np.ndarray]:
    """Loss and gradient with argmax pseudo-labels kept where ``max(p) >= threshold``.

    Equivalent to building targets and mask from :func:`forward` and calling
    :func:`loss_and_grad`; without dropout the forward pass is shared.
    Returns ``(loss, grad, pseudo_labels, mask)``.
    """
    x = _check(params, spec, x)
    n = x.shape[0]
    train_rng = rng if spec.dropout > 0 else None
    cache = _forward_cache(params, spec, x, None)
    probs = cache[0]
    labels = probs.argmax(axis=1)
    mask = (probs.max(axis=1) >= threshold).astype(np.float64)
    targets = np.zeros_like(probs)
    targets[np.arange(n), labels] = 1.0
    if train_rng is not None and mask.any():
        cache = _forward_cache(params, spec, x, train_rng)
    loss, grad = _loss_grad_from_cache(params, spec, cache, targets, mask)
    return loss, grad, labels, mask


@dataclass
class OptimizerState:
    """Mutable optimizer state for one training run.

    When ``l1`` is positive the step is orthant-constrained: a coordinate
    sitting at exactly zero stays there unless its gradient magnitude
    exceeds ``l1``, and no coordinate may cross zero in a single step (it
    lands on zero instead).
    """

    kind: str = "adam"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l1: float = 0.0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    step: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")

    def fresh(self, lr: float | None = None) -> OptimizerState:
        """Same hyperparameters, zeroed moments."""
        return OptimizerState(
            self.kind, self.lr if lr is None else lr, self.beta1, self.beta2, self.eps, self.l1
        )


def optimizer_step(state: OptimizerState, params: ParamVector, grad: ParamVector) -> ParamVector:
    w = params.values
    g = grad.values
    if g.shape != w.shape:
        raise InputError(f"gradient length {g.shape[0]} != parameter length {w.shape[0]}")
    if not np.isfinite(g).all():
        raise NumericError("non-finite gradient")

    if state.l1 > 0:
        # minimum-norm subgradient at zero coordinates
        at_zero = w == 0
        g = np.where(at_zero, np.sign(g) * np.maximum(np.abs(g) - state.l1, 0.0), g)
        orthant = np.where(at_zero, -np.sign(g), np.sign(w))

    state.step += 1
    if state.kind == "sgd":
        new = w - state.lr * g
    else:
        if state.m is None:
            state.m = np.zeros_like(w)
            state.v = np.zeros_like(w)
        state.m = state.beta1 * state.m + (1 - state.beta1) * g
        state.v = state.beta2 * state.v + (1 - state.beta2) * g * g
        m_hat = state.m / (1 - state.beta1 ** state.step)
        v_hat = state.v / (1 - state.beta2 ** state.step)
        new = w - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    if state.l1 > 0:
        new = np.where(np.sign(new) == orthant, new, 0.0)
    if not np.isfinite(new).all():
        raise NumericError("optimizer step produced non-finite parameters")
    return params._trusted(new)
