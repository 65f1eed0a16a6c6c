"""Finite-difference checks for every layer and every network.

Each layer is checked through a scalar probe ``sum(R * layer(x))`` with a
fixed random ``R``. Networks use reduced sizes so the numeric pass is quick.
"""

from __future__ import annotations

import numpy as np

from .. import neuralnet as nn
from ..learned import NetInputs, make_network

AFFINE_TOL = 1e-6
RECURRENT_TOL = 1e-5


def _probe(forward, arrays, backward, rng, tol):
    out = forward()
    R = rng.normal(size=np.shape(out))
    grads = backward(R)

    def loss():
        return float(np.sum(R * forward()))

    return nn.check_gradients(loss, arrays, grads, tol)


def layer_checks(rng) -> dict[str, nn.GradCheckReport]:
    rng = nn.as_rng(rng)
    reports = {}

    x, W, b = rng.normal(size=(3, 5)), rng.normal(size=(5, 4)), rng.normal(size=4)

    def dense_grads(R):
        dx, dW, db = nn.dense_backward(R, nn.dense_forward(x, W, b)[1])
        return {"x": dx, "W": dW, "b": db}

    reports["dense"] = _probe(lambda: nn.dense_forward(x, W, b)[0], {"x": x, "W": W, "b": b},
                              dense_grads, rng, AFFINE_TOL)

    # keep inputs away from the kink at zero
    xr = rng.uniform(0.1, 1.0, size=(4, 6)) * rng.choice([-1.0, 1.0], size=(4, 6))
    reports["relu"] = _probe(lambda: nn.relu_forward(xr)[0], {"x": xr},
                             lambda R: {"x": nn.relu_backward(R, nn.relu_forward(xr)[1])},
                             rng, AFFINE_TOL)

    xd = rng.normal(size=(4, 6))
    _, mask = nn.dropout_forward(xd, 0.3, True, rng)
    reports["dropout"] = _probe(lambda: xd * mask, {"x": xd},
                                lambda R: {"x": nn.dropout_backward(R, mask)}, rng, AFFINE_TOL)

    logits, target = rng.normal(size=(3, 5)), np.array([0, 4, 2])
    _, _, dlogits = nn.softmax_xent(logits, target)
    reports["softmax-xent"] = nn.check_gradients(lambda: nn.softmax_xent(logits, target)[1],
                                                 {"logits": logits}, {"logits": dlogits}, AFFINE_TOL)

    B, T, D, H = 2, 4, 3, 4
    xs = rng.normal(size=(B, T, D))
    Wl, Ul, bl = rng.normal(size=(D, 4 * H)) * 0.5, rng.normal(size=(H, 4 * H)) * 0.5, rng.normal(size=4 * H)
    mask_l = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=bool)
    Rf = rng.normal(size=(B, H))

    def lstm_out():
        hs, hT, _ = nn.lstm_forward(xs, Wl, Ul, bl, mask_l)
        return hs, hT

    # both outputs feed the loss: the per-step sequence and the final state
    Rs = rng.normal(size=(B, T, H))
    _, _, cache = nn.lstm_forward(xs, Wl, Ul, bl, mask_l)
    dx, dW, dU, db = nn.lstm_backward(Rs, Rf, cache)

    def lstm_loss():
        hs, hT = lstm_out()
        return float(np.sum(Rs * hs) + np.sum(Rf * hT))

    reports["lstm"] = nn.check_gradients(lstm_loss, {"x": xs, "W": Wl, "U": Ul, "b": bl},
                                         {"x": dx, "W": dW, "U": dU, "b": db}, RECURRENT_TOL)

    xc = rng.normal(size=(2, 3, 5, 4))
    K, kb = rng.normal(size=(2, 3, 3, 3)), rng.normal(size=2)

    def conv_grads(R):
        dx, dk, db = nn.conv2d_backward(R, nn.conv2d_forward(xc, K, kb)[1])
        return {"x": dx, "kernels": dk, "bias": db}

    reports["conv2d"] = _probe(lambda: nn.conv2d_forward(xc, K, kb)[0], {"x": xc, "kernels": K, "bias": kb},
                               conv_grads, rng, RECURRENT_TOL)

    xp = rng.permutation(2 * 2 * 5 * 5).reshape(2, 2, 5, 5) * 0.01
    reports["maxpool"] = _probe(lambda: nn.maxpool2x2_forward(xp)[0], {"x": xp},
                                lambda R: {"x": nn.maxpool2x2_backward(R, nn.maxpool2x2_forward(xp)[1])},
                                rng, RECURRENT_TOL)
    return reports


def _sequence_inputs(rng, num_goals, lengths, grid=None):
    items = []
    for T in lengths:
        coords = rng.uniform(size=(T, 2))
        feats = rng.integers(-1, 2, size=(T, num_goals)).astype(float)
        frames = None
        if grid is not None:
            frames = (rng.uniform(size=(T, 9) + grid) < 0.3).astype(float)
        items.append(NetInputs(coords, feats, frames))
    return items


def _jitter(net, rng):
    # zero biases over dead units put ReLUs exactly on their kink, where
    # finite differences are meaningless; random biases avoid that
    net.params.load({k: v + rng.normal(scale=0.1, size=v.shape) if k.endswith(".b") else v
                     for k, v in net.params.items()})
    return net


def network_checks(rng, hidden: int = 4) -> dict[str, nn.GradCheckReport]:
    rng = nn.as_rng(rng)
    reports = {}
    G = 3
    labels = [0, 2, 1]
    for kind in ("gc-net", "sd-net", "lstm-obs"):
        net = _jitter(make_network(kind, G, seed=int(rng.integers(2 ** 31)), hidden=hidden), rng)
        batch = net.collate(_sequence_inputs(rng, G, (3, 1, 4)), labels)
        reports[kind] = nn.grad_check(net, batch, RECURRENT_TOL)
    grid = (4, 4)
    net = _jitter(make_network("stdnn", G, grid_shape=grid, seed=int(rng.integers(2 ** 31)),
                               filters=(2, 2, 2), hidden=hidden, fc_units=hidden, pool=True), rng)
    batch = net.collate(_sequence_inputs(rng, G, (3, 2, 4), grid), labels)
    reports["stdnn"] = nn.grad_check(net, batch, RECURRENT_TOL)
    return reports


def gradient_suite(seed: int = 0, hidden: int = 4) -> dict[str, nn.GradCheckReport]:
    rng = np.random.default_rng(seed)
    return {**layer_checks(rng), **network_checks(rng, hidden)}
