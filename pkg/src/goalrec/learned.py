"""Learned goal recognizers and their training loop.

Three architectures are provided:

``DualEncoderNet``
    Two LSTM encoders, one over normalised coordinates and one over a
    plan-cost feature sequence (GC or SD). Their final hidden states are
    concatenated and mapped to one logit per goal.
``BaselineNet``
    The coordinate encoder alone ("LSTM obs").
``SpatioTemporalNet``
    A per-frame convolutional encoder over 9-channel grid frames followed
    by an LSTM, a 256-unit fully connected layer and the goal logits.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import neuralnet as nn
from .features import build_channel_stack, gc_features, observation_frame, sd_features
from .features import CH_DIFF, NUM_CHANNELS
from .gridworld import NavProblem
from .planning import UNIFORM, CostModel, cost_fields

log = logging.getLogger(__name__)

INPUT_KINDS = ("gc-net", "sd-net", "lstm-obs", "stdnn")


# -- inputs ------------------------------------------------------------------

@dataclass
class NetInputs:
    """Network inputs for one example.

    ``coords`` is (T, 2); ``feats`` is (T, G) with a zero first row so that
    row t holds the derivative of the step ending at t; ``frames`` is
    (T', 9, H, W) for the grid network.
    """

    coords: np.ndarray
    feats: np.ndarray | None = None
    frames: np.ndarray | None = None


def normalized_coords(p: NavProblem, traj) -> np.ndarray:
    h, w = p.map.shape
    cells = np.asarray(traj, dtype=float).reshape(-1, 2)
    scale = np.array([1.0 / (h - 1) if h > 1 else 0.0, 1.0 / (w - 1) if w > 1 else 0.0])
    return cells * scale


def build_inputs(kind: str, p: NavProblem, traj, fields=None,
                 model: CostModel = UNIFORM) -> NetInputs:
    """Preprocess a trajectory for one of the learned recognizers.

    ``fields`` are per-goal cost fields for ``gc-net``; they are computed
    under ``model`` when omitted.
    """
    coords = normalized_coords(p, traj)
    if kind in ("gc-net", "sd-net"):
        if kind == "gc-net":
            fs = gc_features(p, traj, fields if fields is not None else cost_fields(p.map, p.goals, model))
        else:
            fs = sd_features(p, traj)
        if fs.length != len(traj) - 1:
            raise ValueError("feature sequence does not match the trajectory length")
        feats = np.zeros((len(traj), len(p.goals)))
        feats[1:] = fs.values.T
        return NetInputs(coords, feats)
    if kind == "lstm-obs":
        return NetInputs(coords)
    if kind == "stdnn":
        if len(traj) > 1:
            frames = build_channel_stack(p, traj, model)
        else:
            # a lone cell has no step yet: show it with an empty differential channel
            frames = np.zeros((1, NUM_CHANNELS) + p.map.shape)
            frames[0, :CH_DIFF] = observation_frame(p, traj[0])
        return NetInputs(coords, frames=frames)
    raise ValueError(f"unknown input kind {kind!r}; expected one of {INPUT_KINDS}")


@dataclass
class Batch:
    mask: np.ndarray  # (B, T) bool
    coords: np.ndarray | None = None
    feats: np.ndarray | None = None
    frames: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __len__(self):
        return self.mask.shape[0]


def collate(items: Sequence[NetInputs], labels=None, use_frames: bool = False) -> Batch:
    """Right-pad variable-length inputs into a masked batch."""
    if use_frames:
        lengths = [len(it.frames) for it in items]
    else:
        lengths = [len(it.coords) for it in items]
    B, T = len(items), max(lengths)
    mask = np.zeros((B, T), dtype=bool)
    for b, n in enumerate(lengths):
        mask[b, :n] = True
    batch = Batch(mask, labels=None if labels is None else np.asarray(labels, dtype=int))
    if use_frames:
        frames = np.zeros((B, T) + items[0].frames.shape[1:])
        for b, it in enumerate(items):
            frames[b, :len(it.frames)] = it.frames
        batch.frames = frames
        return batch
    coords = np.zeros((B, T, 2))
    for b, it in enumerate(items):
        coords[b, :len(it.coords)] = it.coords
    batch.coords = coords
    if items[0].feats is not None:
        feats = np.zeros((B, T, items[0].feats.shape[1]))
        for b, it in enumerate(items):
            feats[b, :len(it.feats)] = it.feats
        batch.feats = feats
    return batch


# -- networks ----------------------------------------------------------------

class Network:
    """Shared plumbing: loss, posterior and the model description."""

    architecture = "base"
    uses_frames = False

    def __init__(self, num_goals: int, dropout_rate: float = 0.1):
        self.num_goals = num_goals
        self.dropout_rate = dropout_rate
        self.params = nn.ParamSet()

    def forward(self, batch: Batch, train: bool = False, rng=None):
        raise NotImplementedError

    def backward(self, dlogits, cache) -> dict:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def loss_and_grads(self, batch: Batch, train: bool = False, rng=None, need_grads: bool = True):
        logits, cache = self.forward(batch, train, rng)
        _, loss, dlogits = nn.softmax_xent(logits, batch.labels)
        if not need_grads:
            return loss, None
        return loss, self.backward(dlogits, cache)

    def posterior(self, batch: Batch) -> np.ndarray:
        logits, _ = self.forward(batch, train=False)
        return nn.softmax(logits)

    def collate(self, items, labels=None) -> Batch:
        return collate(items, labels, use_frames=self.uses_frames)

    def _lstm(self, prefix: str, input_dim: int, hidden: int, rng) -> None:
        self.params.add(f"{prefix}.W", nn.he_uniform_init((input_dim, 4 * hidden), input_dim, rng))
        self.params.add(f"{prefix}.U", nn.he_uniform_init((hidden, 4 * hidden), hidden, rng))
        self.params.add(f"{prefix}.b", np.zeros(4 * hidden))

    def _dense(self, prefix: str, n_in: int, n_out: int, rng) -> None:
        self.params.add(f"{prefix}.W", nn.he_uniform_init((n_in, n_out), n_in, rng))
        self.params.add(f"{prefix}.b", np.zeros(n_out))


class SequenceNet(Network):
    """LSTM encoders over coordinate and/or feature sequences plus a dense head."""

    architecture = "sequence"

    def __init__(self, num_goals: int, hidden: int = 64, encoders=("obs", "feat"),
                 feat_dim: int | None = None, dropout_rate: float = 0.1, seed=0):
        super().__init__(num_goals, dropout_rate)
        self.hidden = hidden
        self.encoders = tuple(encoders)
        self.feat_dim = num_goals if feat_dim is None else feat_dim
        if not self.encoders or set(self.encoders) - {"obs", "feat"}:
            raise ValueError(f"encoders must be a non-empty subset of ('obs', 'feat'), got {encoders}")
        rng = nn.as_rng(seed)
        for enc in self.encoders:
            self._lstm(enc, 2 if enc == "obs" else self.feat_dim, hidden, rng)
        self._dense("head", hidden * len(self.encoders), num_goals, rng)

    def _sequence(self, enc, batch):
        x = batch.coords if enc == "obs" else batch.feats
        if x is None:
            raise ValueError(f"batch has no input for the {enc!r} encoder")
        return x

    def forward(self, batch, train=False, rng=None):
        p = self.params
        finals, caches = [], []
        for enc in self.encoders:
            _, h, cache = nn.lstm_forward(self._sequence(enc, batch), p[f"{enc}.W"], p[f"{enc}.U"],
                                          p[f"{enc}.b"], batch.mask)
            finals.append(h)
            caches.append(cache)
        z = np.concatenate(finals, axis=1)
        z, drop = nn.dropout_forward(z, self.dropout_rate, train, rng)
        logits, dense = nn.dense_forward(z, p["head.W"], p["head.b"])
        return logits, (caches, drop, dense)

    def backward(self, dlogits, cache):
        caches, drop, dense = cache
        grads = {}
        dz, grads["head.W"], grads["head.b"] = nn.dense_backward(dlogits, dense)
        dz = nn.dropout_backward(dz, drop)
        H = self.hidden
        for k, (enc, c) in enumerate(zip(self.encoders, caches)):
            _, dW, dU, db = nn.lstm_backward(None, dz[:, k * H:(k + 1) * H], c)
            grads[f"{enc}.W"], grads[f"{enc}.U"], grads[f"{enc}.b"] = dW, dU, db
        return grads

    def describe(self):
        return {"architecture": self.architecture, "num_goals": self.num_goals,
                "hidden": self.hidden, "encoders": list(self.encoders),
                "feat_dim": self.feat_dim, "dropout_rate": self.dropout_rate}


class DualEncoderNet(SequenceNet):
    architecture = "dual-encoder"

    def __init__(self, num_goals: int, hidden: int = 64, use_obs_encoder: bool = True,
                 dropout_rate: float = 0.1, seed=0, feat_dim: int | None = None):
        encoders = ("obs", "feat") if use_obs_encoder else ("feat",)
        super().__init__(num_goals, hidden, encoders, feat_dim, dropout_rate, seed)


class BaselineNet(SequenceNet):
    architecture = "lstm-obs"

    def __init__(self, num_goals: int, hidden: int = 64, dropout_rate: float = 0.1, seed=0):
        super().__init__(num_goals, hidden, ("obs",), None, dropout_rate, seed)


class SpatioTemporalNet(Network):
    """Per-frame CNN (shared across time), LSTM over the flattened features,
    a ReLU fully connected layer, then goal logits."""

    architecture = "stdnn"
    uses_frames = True

    def __init__(self, num_goals: int, grid_shape, filters=(16, 32, 64), hidden: int = 256,
                 fc_units: int = 256, pool: bool | None = None, in_channels: int = NUM_CHANNELS,
                 dropout_rate: float = 0.1, seed=0):
        super().__init__(num_goals, dropout_rate)
        self.grid_shape = tuple(grid_shape)
        self.filters = tuple(filters)
        self.hidden = hidden
        self.fc_units = fc_units
        self.in_channels = in_channels
        self.pool = max(self.grid_shape) > 16 if pool is None else pool
        rng = nn.as_rng(seed)
        c_in = in_channels
        for k, f in enumerate(self.filters):
            self.params.add(f"conv{k}.k", nn.he_uniform_init((f, c_in, 3, 3), c_in * 9, rng))
            self.params.add(f"conv{k}.b", np.zeros(f))
            c_in = f
        self._lstm("lstm", self.flat_size, hidden, rng)
        self._dense("fc", hidden, fc_units, rng)
        self._dense("head", fc_units, num_goals, rng)

    @property
    def flat_size(self) -> int:
        h, w = self.grid_shape
        if self.pool:
            for _ in range(len(self.filters) - 1):
                h, w = (h + 1) // 2, (w + 1) // 2
        return self.filters[-1] * h * w

    def forward(self, batch, train=False, rng=None):
        p = self.params
        frames = batch.frames
        if frames is None or frames.shape[2:] != (self.in_channels,) + self.grid_shape:
            raise ValueError(f"expected frames of shape (B, T, {self.in_channels}, {self.grid_shape})")
        B, T = frames.shape[:2]
        x = frames.reshape((B * T,) + frames.shape[2:])
        convs = []
        for k in range(len(self.filters)):
            x, cc = nn.conv2d_forward(x, p[f"conv{k}.k"], p[f"conv{k}.b"])
            x, rc = nn.relu_forward(x)
            pc = None
            if self.pool and k < len(self.filters) - 1:
                x, pc = nn.maxpool2x2_forward(x)
            x, dc = nn.dropout_forward(x, self.dropout_rate, train, rng)
            convs.append((cc, rc, pc, dc))
        conv_shape = x.shape
        seq = x.reshape(B, T, -1)
        _, h, lc = nn.lstm_forward(seq, p["lstm.W"], p["lstm.U"], p["lstm.b"], batch.mask)
        h, d1 = nn.dropout_forward(h, self.dropout_rate, train, rng)
        y, fcc = nn.dense_forward(h, p["fc.W"], p["fc.b"])
        y, rfc = nn.relu_forward(y)
        y, d2 = nn.dropout_forward(y, self.dropout_rate, train, rng)
        logits, hc = nn.dense_forward(y, p["head.W"], p["head.b"])
        return logits, (convs, conv_shape, lc, d1, fcc, rfc, d2, hc)

    def backward(self, dlogits, cache):
        convs, conv_shape, lc, d1, fcc, rfc, d2, hc = cache
        grads = {}
        dy, grads["head.W"], grads["head.b"] = nn.dense_backward(dlogits, hc)
        dy = nn.relu_backward(nn.dropout_backward(dy, d2), rfc)
        dh, grads["fc.W"], grads["fc.b"] = nn.dense_backward(dy, fcc)
        dh = nn.dropout_backward(dh, d1)
        dseq, grads["lstm.W"], grads["lstm.U"], grads["lstm.b"] = nn.lstm_backward(None, dh, lc)
        dx = dseq.reshape(conv_shape)
        for k in reversed(range(len(self.filters))):
            cc, rc, pc, dc = convs[k]
            dx = nn.dropout_backward(dx, dc)
            if pc is not None:
                dx = nn.maxpool2x2_backward(dx, pc)
            dx = nn.relu_backward(dx, rc)
            dx, grads[f"conv{k}.k"], grads[f"conv{k}.b"] = nn.conv2d_backward(dx, cc)
        return grads

    def describe(self):
        return {"architecture": self.architecture, "num_goals": self.num_goals,
                "grid_shape": list(self.grid_shape), "filters": list(self.filters),
                "hidden": self.hidden, "fc_units": self.fc_units, "pool": self.pool,
                "in_channels": self.in_channels, "dropout_rate": self.dropout_rate}


def make_network(kind: str, num_goals: int, grid_shape=None, seed=0, **kwargs) -> Network:
    """Default network for an input kind."""
    if kind in ("gc-net", "sd-net"):
        return DualEncoderNet(num_goals, seed=seed, **kwargs)
    if kind == "lstm-obs":
        return BaselineNet(num_goals, seed=seed, **kwargs)
    if kind == "stdnn":
        if grid_shape is None:
            raise ValueError("stdnn needs the grid shape")
        return SpatioTemporalNet(num_goals, grid_shape, seed=seed, **kwargs)
    raise ValueError(f"unknown input kind {kind!r}")


def network_from_description(desc: dict) -> Network:
    arch = desc["architecture"]
    classes = {"dual-encoder": DualEncoderNet, "lstm-obs": BaselineNet, "sequence": SequenceNet}
    if arch in classes:
        net = SequenceNet.__new__(classes[arch])
        SequenceNet.__init__(net, desc["num_goals"], desc["hidden"], desc["encoders"],
                             desc["feat_dim"], desc["dropout_rate"])
        return net
    if arch == "stdnn":
        return SpatioTemporalNet(desc["num_goals"], desc["grid_shape"], desc["filters"], desc["hidden"],
                                 desc["fc_units"], desc["pool"], desc["in_channels"],
                                 desc["dropout_rate"])
    raise ValueError(f"unknown architecture {arch!r}")


# -- prediction --------------------------------------------------------------

def choose_goal(probs, rng) -> int:
    """Argmax with uniformly random tie-breaking among the maximal entries."""
    probs = np.asarray(probs)
    best = np.flatnonzero(probs == probs.max())
    if len(best) == 1:
        return int(best[0])
    return int(best[nn.as_rng(rng).integers(len(best))])


def predict(net: Network, inputs: NetInputs, rng=None) -> int:
    probs = net.posterior(net.collate([inputs]))[0]
    return choose_goal(probs, rng)


# -- training ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    iterations_per_epoch: int = 64
    batch_size: int = 32
    adam: nn.AdamConfig = field(default_factory=nn.AdamConfig)
    dropout_rate: float = 0.1
    lr_decay_factor: float = 0.9
    lr_patience_epochs: int = 10
    lr_min: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        for name in ("epochs", "iterations_per_epoch", "batch_size", "lr_patience_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.lr_decay_factor <= 1:
            raise ValueError("lr_decay_factor must lie in (0, 1]")
        if self.lr_min > self.adam.learning_rate:
            raise ValueError("lr_min exceeds the initial learning rate")

    def to_dict(self) -> dict:
        return asdict(self)


class PlateauSchedule:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs
    without a new best validation loss, never going below ``min_lr``."""

    def __init__(self, lr: float, factor: float = 0.9, patience: int = 10, min_lr: float = 1e-5):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = np.inf
        self.stale = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best:
            self.best = val_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr = max(self.min_lr, self.lr * self.factor)
                self.stale = 0
        return self.lr


@dataclass
class TrainResult:
    net: Network
    history: list[dict]
    best_params: dict[str, np.ndarray]
    final_params: dict[str, np.ndarray]
    best_epoch: int


def evaluate(net: Network, examples: Sequence[tuple[NetInputs, int]], batch_size: int = 64,
             rng=None) -> tuple[float, float]:
    """Mean cross-entropy and accuracy (random tie-breaking) in evaluation mode."""
    rng = nn.as_rng(rng)
    total_loss, correct = 0.0, 0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        batch = net.collate([x for x, _ in chunk], [y for _, y in chunk])
        logits, _ = net.forward(batch, train=False)
        probs, loss, _ = nn.softmax_xent(logits, batch.labels)
        total_loss += loss * len(chunk)
        correct += sum(choose_goal(p, rng) == y for p, y in zip(probs, batch.labels))
    return total_loss / len(examples), correct / len(examples)


def _batches(stream: Iterator, size: int) -> Iterator[list]:
    while True:
        chunk = []
        for item in stream:
            chunk.append(item)
            if len(chunk) == size:
                break
        if len(chunk) < size:
            if chunk:
                yield chunk
            return
        yield chunk


def train(net: Network, stream: Iterable[tuple[NetInputs, int]], cfg: TrainConfig,
          validation: Sequence[tuple[NetInputs, int]], progress=None) -> TrainResult:
    """Mini-batch Adam training on cross-entropy with a plateau LR schedule.

    ``stream`` yields ``(inputs, label)`` pairs and is consumed in order;
    each epoch draws ``iterations_per_epoch`` batches from it. Training stops
    early if the stream runs dry.
    """
    if not validation:
        raise ValueError("validation set must not be empty")
    net.dropout_rate = cfg.dropout_rate
    rng = np.random.default_rng(cfg.seed)
    eval_seed = np.random.SeedSequence(cfg.seed).spawn(1)[0]
    schedule = PlateauSchedule(cfg.adam.learning_rate, cfg.lr_decay_factor,
                               cfg.lr_patience_epochs, cfg.lr_min)
    adam = cfg.adam
    batches = _batches(iter(stream), cfg.batch_size)
    history = []
    best_loss, best_epoch = np.inf, 0
    best_params = net.params.snapshot()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for _ in range(cfg.iterations_per_epoch):
            chunk = next(batches, None)
            if chunk is None:
                break
            step += 1
            batch = net.collate([x for x, _ in chunk], [y for _, y in chunk])
            loss, grads = net.loss_and_grads(batch, train=True, rng=rng)
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {step} (seed {cfg.seed})"
                )
            nn.adam_step(net.params, grads, adam)
            losses.append(loss)
        if not losses:
            break
        val_loss, val_acc = evaluate(net, validation, rng=np.random.default_rng(eval_seed))
        if val_loss < best_loss:
            best_loss, best_epoch = val_loss, epoch
            best_params = net.params.snapshot()
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_loss": float(val_loss), "val_accuracy": float(val_acc),
                        "lr": adam.learning_rate})
        if progress is not None:
            progress(history[-1])
        log.debug("epoch %d: %s", epoch, history[-1])
        lr = schedule.step(val_loss)
        if lr != adam.learning_rate:
            adam = replace(adam, learning_rate=lr)
    return TrainResult(net, history, best_params, net.params.snapshot(), best_epoch)


# -- model documents ---------------------------------------------------------

def save_model(path, net: Network, input_kind: str, train_maps: Sequence[str] = (),
               hyperparameters: dict | None = None, extra: dict | None = None) -> None:
    header = dict(extra or {})
    header.update({
        "architecture": net.architecture,
        "num_goals": net.num_goals,
        "input_kind": input_kind,
        "network": net.describe(),
        "train_maps": list(train_maps),
        "hyperparameters": hyperparameters or {},
    })
    nn.save_params(path, net.params, header)


@dataclass
class LoadedModel:
    net: Network
    input_kind: str
    train_maps: list[str]
    header: dict


def load_model(path) -> LoadedModel:
    header, values = nn.load_params(path)
    net = network_from_description(header["network"])
    net.params.load(values)
    return LoadedModel(net, header["input_kind"], list(header.get("train_maps", [])), header)
