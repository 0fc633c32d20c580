"""Loss, reverse-mode gradients, Adam and the training loop.

Gradients are derived by hand. Cotangents of complex fields use the
convention ``g = dl/dRe + 1j * dl/dIm``, under which

* intensity ``|f|^2`` sends a real cotangent ``c`` to ``2 c f``;
* multiplication by a constant array ``w`` sends ``g`` to ``conj(w) g``;
* propagation ``ifft2(H * fft2(f))`` sends ``g`` to ``ifft2(conj(H) * fft2(g))``;
* for ``s = p exp(1j theta)``, ``dl/dtheta = Im(conj(s) g)``.

Branch cotangents are accumulated as spectra (FFT of the spatial
cotangent), mirroring the spectral merge in :func:`forward_batch`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
from scipy import fft as sfft

from holograph.errors import InvalidArgumentError, NumericError
from holograph.network import (
    ForwardCache,
    NetworkConfig,
    _transfer,
    argmax_lowest,
    forward_batch,
)
from holograph.reference import reference_loss
from holograph.rng import rng_stream

METRICS_HEADER = ("epoch", "train_loss", "train_acc", "test_acc")


@dataclass(frozen=True)
class Hyperparams:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 500
    batch_size: int = 32
    normalize_sums: bool = False
    deterministic: bool = True

    def __post_init__(self):
        if not self.lr >= 0:
            raise InvalidArgumentError(f"learning rate must be >= 0, got {self.lr}")
        if self.epochs < 0 or self.batch_size < 1:
            raise InvalidArgumentError("epochs must be >= 0 and batch_size >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidArgumentError("Adam betas must lie in [0, 1)")


@dataclass
class TrainState:
    thetas: list[np.ndarray]
    m: list[np.ndarray]
    v: list[np.ndarray]
    step_count: int = 0
    epoch: int = 0
    rng_seed: int = 0
    hyper: Hyperparams = field(default_factory=Hyperparams)

    @classmethod
    def fresh(cls, config: NetworkConfig, hyper: Hyperparams | None = None, seed: int = 0) -> "TrainState":
        thetas = [t.copy() for t in config.thetas()]
        return cls(
            thetas=thetas,
            m=[np.zeros_like(t) for t in thetas],
            v=[np.zeros_like(t) for t in thetas],
            rng_seed=seed,
            hyper=hyper or Hyperparams(),
        )


@dataclass(frozen=True)
class LossReport:
    loss: float
    softmax_probs: np.ndarray
    predicted: int


# --- loss -------------------------------------------------------------------

def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _normalize(sums: np.ndarray) -> np.ndarray:
    total = sums.sum(axis=-1, keepdims=True)
    return sums / np.where(total > 0, total, 1.0)


def softmax_mse(sums: np.ndarray, targets: np.ndarray, normalize: bool = False):
    """Per-sample losses and ``dl/dsums`` for a ``(B, C)`` batch.

    ``l = mean_c (softmax(s)_c - onehot(t)_c)^2``.
    """
    sums = np.asarray(sums, dtype=np.float64)
    targets = np.asarray(targets)
    B, C = sums.shape
    if np.any(targets < 0) or np.any(targets >= C):
        raise InvalidArgumentError(f"target class out of range [0, {C})")
    logits = _normalize(sums) if normalize else sums
    p = _softmax(logits)
    onehot = np.zeros_like(p)
    onehot[np.arange(B), targets] = 1.0
    diff = p - onehot
    losses = np.mean(diff ** 2, axis=-1)
    dp = 2.0 * diff / C
    dlogits = p * (dp - np.sum(dp * p, axis=-1, keepdims=True))
    if normalize:
        total = sums.sum(axis=-1, keepdims=True)
        total = np.where(total > 0, total, 1.0)
        dsums = (dlogits - np.sum(dlogits * logits, axis=-1, keepdims=True)) / total
    else:
        dsums = dlogits
    return losses, dsums, p


def loss(detector_sums, target: int, normalize: bool = False) -> LossReport:
    sums = np.asarray(detector_sums, dtype=np.float64)
    if sums.ndim != 1 or sums.size < 2:
        raise InvalidArgumentError("need a vector of at least two detector sums")
    if not np.all(np.isfinite(sums)):
        raise InvalidArgumentError("detector sums must be finite")
    if not 0 <= target < sums.size:
        raise InvalidArgumentError(f"target {target} out of range [0, {sums.size})")
    losses, _, p = softmax_mse(sums[None, :], np.array([target]), normalize)
    return LossReport(float(losses[0]), p[0], int(argmax_lowest(sums)))


# --- reverse pass -------------------------------------------------------------

def backward_from_cache(config: NetworkConfig, cache: ForwardCache, dsums: np.ndarray) -> list[np.ndarray]:
    """``dl/dtheta`` per layer, summed over the batch, given ``dl/dsums`` ``(B, C)``."""
    grid = config.grid
    L = config.num_layers
    h_layer = _transfer(grid, 1)
    incoming = config.incoming()
    fields = cache.layer_fields

    d_int = np.zeros(cache.intensity.shape)
    for c, (r0, c0, h, w) in enumerate(config.detector.regions):
        d_int[..., r0:r0 + h, c0:c0 + w] += dsums[:, c, None, None]
    g = 2.0 * d_int * cache.detector_field
    if config.detector_hops:
        g = sfft.ifft2(np.conj(_transfer(grid, config.detector_hops)) * sfft.fft2(g))

    # spectral cotangents of layer outputs, filled by later layers
    pending: dict[int, np.ndarray] = {}
    grads: list[np.ndarray] = [None] * L
    for b in range(L, 0, -1):
        if b < L:
            g = sfft.ifft2(pending.pop(b))
        s = fields[b]
        grads[b - 1] = np.sum(np.imag(np.conj(s) * g), axis=0) if g.ndim == 3 else np.imag(np.conj(s) * g)
        if not np.all(np.isfinite(grads[b - 1])):
            raise NumericError(f"non-finite gradient at layer {b}")
        if b == 1:
            break
        cot_p = g * np.conj(cache.transmissions[b - 1])
        cot_u = np.conj(h_layer) * sfft.fft2(cot_p)
        srcs = incoming.get(b, [])
        share = cot_u / (len(srcs) + 1) if srcs else cot_u
        if b - 1 >= 1:
            pending[b - 1] = pending[b - 1] + share if b - 1 in pending else share
        for a in srcs:
            if a == 0:
                continue
            contrib = np.conj(_transfer(grid, b - a)) * share
            pending[a] = pending[a] + contrib if a in pending else contrib
    return grads


def backward(config: NetworkConfig, state: TrainState | None, inputs, targets, normalize: bool = False):
    """Mean-loss gradients over a batch (a single field/target also works).

    Uses ``state.thetas`` when a state is supplied, else the config's masks.
    Returns ``(grads, losses, sums)``.
    """
    if state is not None:
        config = config.with_thetas(state.thetas)
    inputs = np.asarray(inputs, dtype=np.complex128)
    single = inputs.ndim == 2
    if single:
        inputs = inputs[None]
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if targets.shape[0] != inputs.shape[0]:
        raise InvalidArgumentError("one target per input field required")
    cache = forward_batch(config, inputs)
    losses, dsums, _ = softmax_mse(cache.sums, targets, normalize)
    B = inputs.shape[0]
    grads = backward_from_cache(config, cache, dsums / B)
    return grads, losses, cache.sums


def batch_loss(config: NetworkConfig, inputs, targets, normalize: bool = False) -> float:
    inputs = np.asarray(inputs, dtype=np.complex128)
    if inputs.ndim == 2:
        inputs = inputs[None]
    cache = forward_batch(config, inputs)
    losses, _, _ = softmax_mse(cache.sums, np.atleast_1d(targets), normalize)
    return float(np.mean(losses))


# --- optimizer ------------------------------------------------------------------

def step(state: TrainState, gradients: Sequence[np.ndarray]) -> TrainState:
    """One bias-corrected Adam update; returns a new state."""
    if len(gradients) != len(state.thetas):
        raise InvalidArgumentError(f"expected {len(state.thetas)} gradient arrays, got {len(gradients)}")
    hp = state.hyper
    t = state.step_count + 1
    c1 = 1.0 - hp.beta1 ** t
    c2 = 1.0 - hp.beta2 ** t
    thetas, ms, vs = [], [], []
    for theta, m, v, g in zip(state.thetas, state.m, state.v, gradients):
        if g.shape != theta.shape:
            raise InvalidArgumentError(f"gradient shape {g.shape} does not match parameters {theta.shape}")
        m = hp.beta1 * m + (1.0 - hp.beta1) * g
        v = hp.beta2 * v + (1.0 - hp.beta2) * (g * g)
        if hp.lr:
            theta = theta - hp.lr * (m / c1) / (np.sqrt(v / c2) + hp.eps)
        else:
            theta = theta.copy()
        thetas.append(theta)
        ms.append(m)
        vs.append(v)
    return replace(state, thetas=thetas, m=ms, v=vs, step_count=t)


# --- datasets and evaluation ---------------------------------------------------------

class FieldDataset(Protocol):
    """What :func:`fit` needs: id lists, labels, and a field builder."""

    train_ids: np.ndarray
    test_ids: np.ndarray
    labels: np.ndarray
    num_classes: int

    def fields(self, ids: np.ndarray) -> np.ndarray: ...


@dataclass
class ArrayDataset:
    """In-memory dataset of precomputed input fields."""

    inputs: np.ndarray
    labels: np.ndarray
    train_ids: np.ndarray
    test_ids: np.ndarray
    num_classes: int

    def fields(self, ids):
        return self.inputs[np.asarray(ids)]


def evaluate(config: NetworkConfig, dataset: FieldDataset, ids, chunk: int = 64, normalize: bool = False):
    """``(mean loss, accuracy, predictions)`` over ``ids``."""
    ids = np.asarray(ids)
    if ids.size == 0:
        raise InvalidArgumentError("cannot evaluate on an empty node set")
    preds = np.empty(ids.size, dtype=np.int64)
    total = 0.0
    for lo in range(0, ids.size, chunk):
        part = ids[lo:lo + chunk]
        cache = forward_batch(config, dataset.fields(part))
        losses, _, _ = softmax_mse(cache.sums, dataset.labels[part], normalize)
        total += float(np.sum(losses))
        preds[lo:lo + part.size] = argmax_lowest(cache.sums)
    acc = float(np.mean(preds == dataset.labels[ids]))
    return total / ids.size, acc, preds


def confusion_matrix(labels, preds, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(preds)), 1)
    return cm


@dataclass
class FitResult:
    config: NetworkConfig
    state: TrainState
    history: list[dict]

    def metrics_csv(self) -> str:
        return metrics_to_csv(self.history)

    def best_test_acc(self) -> float:
        return max(row["test_acc"] for row in self.history)


def metrics_to_csv(history: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for row in history:
        writer.writerow([
            row["epoch"],
            repr(float(row["train_loss"])),
            repr(float(row["train_acc"])),
            repr(float(row["test_acc"])),
        ])
    return buf.getvalue()


def fit(
    config: NetworkConfig,
    dataset: FieldDataset,
    hyper: Hyperparams,
    seed: int = 0,
    callbacks: Sequence[Callable[[dict, NetworkConfig, TrainState], None]] = (),
    state: TrainState | None = None,
) -> FitResult:
    """Mini-batch Adam training.

    Each epoch shuffles the training ids with the ``batch`` random stream,
    records the mean pre-update loss and accuracy of the training batches,
    then evaluates test accuracy with the updated masks. Reductions run in
    a fixed order, so runs are reproducible for a given seed.
    """
    train_ids = np.asarray(dataset.train_ids)
    if train_ids.size == 0:
        raise InvalidArgumentError("training set is empty")
    if state is None:
        state = TrainState.fresh(config, hyper, seed)
    else:
        state = replace(state, hyper=hyper)
        config = config.with_thetas(state.thetas)
    order_rng = rng_stream(seed, "batch")
    history = []
    for _ in range(hyper.epochs):
        order = order_rng.permutation(train_ids)
        loss_sum = 0.0
        correct = 0
        for lo in range(0, order.size, hyper.batch_size):
            ids = order[lo:lo + hyper.batch_size]
            targets = dataset.labels[ids]
            cache = forward_batch(config, dataset.fields(ids))
            losses, dsums, _ = softmax_mse(cache.sums, targets, hyper.normalize_sums)
            grads = backward_from_cache(config, cache, dsums / ids.size)
            loss_sum += float(np.sum(losses))
            correct += int(np.sum(argmax_lowest(cache.sums) == targets))
            state = step(state, grads)
            config = config.with_thetas(state.thetas)
        state = replace(state, epoch=state.epoch + 1)
        if len(dataset.test_ids):
            _, test_acc, _ = evaluate(config, dataset, dataset.test_ids, normalize=hyper.normalize_sums)
        else:
            test_acc = float("nan")
        row = {
            "epoch": state.epoch,
            "train_loss": loss_sum / order.size,
            "train_acc": correct / order.size,
            "test_acc": test_acc,
        }
        history.append(row)
        for cb in callbacks:
            cb(row, config, state)
    return FitResult(config, state, history)


# --- finite-difference verification ----------------------------------------------

@dataclass(frozen=True)
class GradCheckReport:
    num_checked: int
    max_rel_error: float
    median_rel_error: float
    max_abs_error: float
    step: float
    seed: int
    entries: tuple = ()

    def passed(self, tol: float = 1e-5) -> bool:
        return self.max_rel_error <= tol

    def summary(self) -> str:
        return (
            f"checked {self.num_checked} parameters (step {self.step:g}, seed {self.seed}): "
            f"max rel err {self.max_rel_error:.3e}, median {self.median_rel_error:.3e}, "
            f"max abs err {self.max_abs_error:.3e}"
        )


ZERO_GRADIENT_FLOOR = 1e-12


def relative_error(a: float, b: float, floor: float = ZERO_GRADIENT_FLOOR) -> float:
    """``|a - b| / max(|a|, |b|, floor)``.

    The floor keeps structurally-zero gradients (e.g. the last mask when the
    detector sits on the last layer, whose phase cannot change intensity)
    from turning rounding residue into a relative error of 1.
    """
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(
    config: NetworkConfig,
    seed: int = 0,
    num_params: int = 64,
    step_size: float = 1e-6,
    batch: int = 1,
    normalize: bool = False,
) -> GradCheckReport:
    """Compare analytic gradients with central differences at random parameters.

    The input fields (random complex, unit energy) and targets are drawn from
    ``seed``; parameters are sampled without replacement over all layers.
    """
    rng = np.random.default_rng(seed)
    n = config.grid.n
    L = config.num_layers
    inputs = rng.standard_normal((batch, n, n)) + 1j * rng.standard_normal((batch, n, n))
    inputs /= np.sqrt(np.sum(np.abs(inputs) ** 2, axis=(1, 2), keepdims=True))
    targets = rng.integers(0, config.num_classes, size=batch)
    grads, _, _ = backward(config, None, inputs, targets, normalize)

    total = L * n * n
    if num_params > total:
        raise InvalidArgumentError(f"only {total} parameters available, {num_params} requested")
    flat = rng.choice(total, size=num_params, replace=False)
    thetas = config.thetas()
    entries = []
    for idx in flat:
        layer, pix = divmod(int(idx), n * n)
        r, c = divmod(pix, n)
        plus = [t.copy() for t in thetas]
        minus = [t.copy() for t in thetas]
        plus[layer][r, c] += step_size
        minus[layer][r, c] -= step_size
        lp = reference_loss(config, inputs, targets, plus, np.clongdouble, normalize)
        lm = reference_loss(config, inputs, targets, minus, np.clongdouble, normalize)
        fd = float((lp - lm) / (2 * np.longdouble(step_size)))
        an = float(grads[layer][r, c])
        entries.append((layer + 1, r, c, an, fd, relative_error(an, fd)))
    rel = np.array([e[5] for e in entries])
    abs_err = np.array([abs(e[3] - e[4]) for e in entries])
    return GradCheckReport(
        num_checked=len(entries),
        max_rel_error=float(rel.max()),
        median_rel_error=float(np.median(rel)),
        max_abs_error=float(abs_err.max()),
        step=step_size,
        seed=seed,
        entries=tuple(entries),
    )
