"""A small numpy layer library with hand-written backward passes.

Every ``*_forward`` returns its output together with a cache that the
matching ``*_backward`` consumes. Arrays are float64 throughout so that the
finite-difference checks in :func:`check_gradients` stay tight.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def he_uniform_init(shape, fan_in: int, rng) -> np.ndarray:
    """Uniform He initialisation on ``[-sqrt(6 / fan_in), sqrt(6 / fan_in)]``."""
    if fan_in < 1:
        raise ValueError("fan_in must be at least 1")
    limit = np.sqrt(6.0 / fan_in)
    return as_rng(rng).uniform(-limit, limit, size=shape)


# -- dense -------------------------------------------------------------------

def dense_forward(x, W, b):
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ValueError(f"shape mismatch: x{x.shape} W{W.shape} b{b.shape}")
    return x @ W + b, (x, W)


def dense_backward(dy, cache):
    x, W = cache
    x2 = x.reshape(-1, W.shape[0])
    dy2 = dy.reshape(-1, W.shape[1])
    return dy @ W.T, x2.T @ dy2, dy2.sum(axis=0)


def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dy, cache):
    return dy * cache


# -- LSTM --------------------------------------------------------------------

@dataclass
class LSTMCache:
    x: np.ndarray
    W: np.ndarray
    U: np.ndarray
    mask: np.ndarray | None
    steps: list = field(default_factory=list)


def lstm_forward(x, W, U, b, mask=None):
    """Run an LSTM over ``x`` of shape ``(B, T, D)`` from zero states.

    Gate blocks in ``W`` (D, 4H), ``U`` (H, 4H) and ``b`` (4H,) are ordered
    input, forget, output, candidate. ``mask`` (B, T) marks valid steps; on
    padded steps the states are carried over unchanged, so the final hidden
    state is the one at each sequence's last valid step.

    Returns ``(hidden_seq, final_hidden, cache)``.
    """
    B, T, D = x.shape
    if T == 0:
        raise ValueError("LSTM needs a sequence of length >= 1")
    H = U.shape[0]
    if W.shape != (D, 4 * H) or U.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ValueError(f"shape mismatch: x{x.shape} W{W.shape} U{U.shape} b{b.shape}")
    xw = x @ W + b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((B, T, H))
    cache = LSTMCache(x, W, U, mask)
    for t in range(T):
        z = xw[:, t] + h @ U
        ifo = expit(z[:, :3 * H])
        g = np.tanh(z[:, 3 * H:])
        i, f, o = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 2 * H:]
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = None
        if mask is not None:
            m = mask[:, t, None].astype(float)
            c_new = m * c_new + (1.0 - m) * c
            h_new = m * h_new + (1.0 - m) * h
        cache.steps.append((ifo, g, c, tc, h, m))
        c, h = c_new, h_new
        hs[:, t] = h
    return hs, h, cache


def lstm_backward(dhs, dh_final, cache: LSTMCache):
    """Backpropagation through time. Either upstream gradient may be ``None``.

    Returns ``(dx, dW, dU, db)``.
    """
    x, W, U = cache.x, cache.W, cache.U
    B, T, D = x.shape
    H = U.shape[0]
    dz_all = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H)) if dh_final is None else dh_final.copy()
    dc_next = np.zeros((B, H))
    dU = np.zeros_like(U)
    for t in reversed(range(T)):
        ifo, g, c_prev, tc, h_prev, m = cache.steps[t]
        i, f, o = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 2 * H:]
        dh = dh_next if dhs is None else dh_next + dhs[:, t]
        if m is not None:
            dh_pass, dc_pass = dh * (1.0 - m), dc_next * (1.0 - m)
            dh, dc_next = dh * m, dc_next * m
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = np.empty((B, 4 * H))
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[:, 3 * H:] = dc * i * (1.0 - g * g)
        dz_all[:, t] = dz
        dU += h_prev.T @ dz
        dh_next = dz @ U.T
        dc_next = dc * f
        if m is not None:
            dh_next += dh_pass
            dc_next += dc_pass
    dW = x.reshape(-1, D).T @ dz_all.reshape(-1, 4 * H)
    db = dz_all.sum(axis=(0, 1))
    dx = dz_all @ W.T
    return dx, dW, dU, db


# -- convolution and pooling -------------------------------------------------

def conv2d_forward(x, kernels, bias):
    """3x3 convolution, stride 1, zero 'same' padding. ``x``: (B, C, H, W)."""
    B, C, H, Wd = x.shape
    F = kernels.shape[0]
    if kernels.shape != (F, C, 3, 3) or bias.shape != (F,):
        raise ValueError(f"shape mismatch: x{x.shape} kernels{kernels.shape} bias{bias.shape}")
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * Wd, C * 9)
    y = cols @ kernels.reshape(F, C * 9).T + bias
    return y.reshape(B, H, Wd, F).transpose(0, 3, 1, 2), (cols, kernels, x.shape)


def conv2d_backward(dy, cache):
    cols, kernels, (B, C, H, Wd) = cache
    F = kernels.shape[0]
    dy2 = dy.transpose(0, 2, 3, 1).reshape(-1, F)
    dk = (dy2.T @ cols).reshape(kernels.shape)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ kernels.reshape(F, C * 9)).reshape(B, H, Wd, C, 3, 3)
    dxp = np.zeros((B, C, H + 2, Wd + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + H, j:j + Wd] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dk, db


def maxpool2x2_forward(x):
    """2x2 max pooling; odd sizes are padded with -inf. Ties go to the first
    cell of the window in row-major order."""
    B, C, H, Wd = x.shape
    ph, pw = H % 2, Wd % 2
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), constant_values=-np.inf)
    Ho, Wo = x.shape[2] // 2, x.shape[3] // 2
    win = x.reshape(B, C, Ho, 2, Wo, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, 4)
    idx = win.argmax(axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return y, (idx, (B, C, H, Wd))


def maxpool2x2_backward(dy, cache):
    idx, (B, C, H, Wd) = cache
    Ho, Wo = idx.shape[2], idx.shape[3]
    dwin = np.zeros((B, C, Ho, Wo, 4))
    np.put_along_axis(dwin, idx[..., None], dy[..., None], axis=-1)
    dx = dwin.reshape(B, C, Ho, Wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * Ho, 2 * Wo)
    return dx[:, :, :H, :Wd]


# -- dropout and loss --------------------------------------------------------

def dropout_forward(x, rate: float, train: bool, rng=None):
    """Inverted dropout; the identity in evaluation mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not train or rate == 0.0:
        return x, None
    keep = as_rng(rng).random(x.shape) >= rate
    scale = keep / (1.0 - rate)
    return x * scale, scale


def dropout_backward(dy, cache):
    return dy if cache is None else dy * cache


def dropout(x, rate: float, mode: str = "train", rng=None):
    return dropout_forward(x, rate, mode == "train", rng)[0]


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_xent(logits, target):
    """Softmax with cross-entropy.

    ``logits`` is ``(K,)`` with an integer target, or ``(B, K)`` with a
    target array; batch losses are averaged. Returns ``(probs, loss, dlogits)``.
    """
    logits = np.asarray(logits, dtype=float)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    t = np.atleast_1d(np.asarray(target))
    if z.shape[-1] < 1:
        raise ValueError("need at least one logit")
    if t.shape != (z.shape[0],) or t.min() < 0 or t.max() >= z.shape[1]:
        raise ValueError(f"invalid target {target!r} for {z.shape[1]} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - log_norm[:, None]
    probs = np.exp(logp)
    rows = np.arange(len(t))
    loss = -logp[rows, t].mean()
    grad = probs.copy()
    grad[rows, t] -= 1.0
    grad /= len(t)
    if single:
        return probs[0], float(loss), grad[0]
    return probs, float(loss), grad


# -- parameters and optimisation --------------------------------------------

@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


class ParamSet:
    """Named parameter arrays plus Adam moment estimates."""

    def __init__(self, params: Mapping[str, np.ndarray] | None = None):
        self.values: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> np.ndarray:
        arr = np.array(value, dtype=float)
        self.values[name] = arr
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def items(self):
        return self.values.items()

    @property
    def size(self) -> int:
        return sum(v.size for v in self.values.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.values.items()}

    def load(self, values: Mapping[str, np.ndarray]) -> None:
        for k, v in values.items():
            if self.values[k].shape != np.shape(v):
                raise ValueError(f"shape mismatch for {k}: {self.values[k].shape} vs {np.shape(v)}")
            self.values[k][...] = v


def adam_step(params: ParamSet, grads: Mapping[str, np.ndarray], cfg: AdamConfig) -> ParamSet:
    """One bias-corrected Adam update, applied in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int((~np.isfinite(g)).sum())
            raise FloatingPointError(
                f"non-finite gradient for {name!r} ({bad} entries) at step {params.step + 1}"
            )
        if g.shape != params.values[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r}")
    params.step += 1
    t = params.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for name, g in grads.items():
        m, v = params.m[name], params.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        params.values[name] -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon_hat)
    return params


# -- gradient verification ---------------------------------------------------

def relative_error(analytic, numeric, floor: float = 1e-7) -> np.ndarray:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def tensor_relative_error(analytic, numeric, floor: float = 1e-7) -> float:
    """``||a - n|| / max(||a||, ||n||, floor)`` over a whole tensor.

    Entries far below the tensor's scale carry central-difference roundoff
    (about machine epsilon times the loss over the step) that would dominate
    an elementwise ratio, so the check compares tensors as a whole.
    """
    a, n = np.asarray(analytic, dtype=float).ravel(), np.asarray(numeric, dtype=float).ravel()
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), floor))


def numeric_gradient(f: Callable[[], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` with respect to ``x``; ``x`` is perturbed in place."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        up = f()
        flat[i] = old - step
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * step)
    return grad


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def __str__(self):
        lines = [f"{name:>16s}  {err:.3e}" for name, err in self.errors.items()]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"max {self.max_error:.3e} (tolerance {self.tolerance:.0e}) {verdict}")
        return "\n".join(lines)


def check_gradients(loss_fn: Callable[[], float], arrays: Mapping[str, np.ndarray],
                    analytic: Mapping[str, np.ndarray], tolerance: float = 1e-5,
                    step: float = 1e-5) -> GradCheckReport:
    """Compare analytic gradients with central differences of ``loss_fn``,
    one relative error per tensor.

    ``loss_fn`` must read the arrays in ``arrays`` (they are perturbed in place).
    """
    errors = {}
    for name, arr in arrays.items():
        numeric = numeric_gradient(loss_fn, arr, step)
        errors[name] = tensor_relative_error(analytic[name], numeric)
    return GradCheckReport(errors, tolerance)


def grad_check(network, inputs, tolerance: float = 1e-5, step: float = 1e-5) -> GradCheckReport:
    """Finite-difference check of a network's ``loss_and_grads(inputs)``.

    Runs in evaluation mode (no dropout) so the loss is deterministic.
    """
    _, grads = network.loss_and_grads(inputs, train=False)

    def loss():
        return network.loss_and_grads(inputs, train=False, need_grads=False)[0]

    return check_gradients(loss, network.params.values, grads, tolerance, step)


# -- model documents ---------------------------------------------------------

MODEL_FORMAT = "goalrec-model/1"


def save_params(path, params: ParamSet, header: Mapping) -> None:
    """Write parameters and a header as a JSON document.

    Floats are written in shortest round-trip form (at most 17 significant
    digits), so values reload bit-exactly.
    """
    entries = []
    for name, value in params.items():
        entries.append({
            "name": name,
            "shape": list(value.shape),
            "values": value.ravel().tolist(),
        })
    doc = {"format": MODEL_FORMAT, **header, "params": entries}
    Path(path).write_text(json.dumps(doc, indent=1))


def load_params(path) -> tuple[dict, dict[str, np.ndarray]]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} document")
    values = {
        e["name"]: np.array(e["values"], dtype=float).reshape(e["shape"]) for e in doc.pop("params")
    }
    return doc, values
