"""Dueling Q-network in plain numpy with hand-written backpropagation and Adam."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    pass


class QNetwork:
    """ReLU trunk followed by a scalar value head and a per-action advantage head.

    ``params`` is a flat list ``[W0, b0, ..., Wv, bv, Wa, ba]``; weight matrices are
    stored as ``(fan_in, fan_out)`` so a batch ``x`` of shape ``(B, n_inputs)``
    maps through ``x @ W + b``.
    """

    def __init__(self, n_inputs: int, n_actions: int, hidden=(32, 32, 32),
                 rng: np.random.Generator | None = None, dtype=np.float64):
        rng = rng if rng is not None else np.random.default_rng()
        self.n_inputs = n_inputs
        self.n_actions = n_actions
        self.hidden = tuple(hidden)
        self.dtype = np.dtype(dtype)
        sizes = (n_inputs,) + self.hidden
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            self.params += self._layer(fan_in, fan_out, rng)
        self.params += self._layer(sizes[-1], 1, rng)
        self.params += self._layer(sizes[-1], n_actions, rng)

    def _layer(self, fan_in, fan_out, rng):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(self.dtype)
        b = rng.uniform(-bound, bound, size=fan_out).astype(self.dtype)
        return [w, b]

    @property
    def init_bounds(self) -> list[float]:
        """Largest magnitude the initializer can draw, one value per layer (weights and bias)."""
        return [1.0 / np.sqrt(w.shape[0]) for w in self.params[0::2]]

    @property
    def architecture(self) -> dict:
        return {"n_inputs": self.n_inputs, "n_actions": self.n_actions, "hidden": list(self.hidden)}

    def copy(self) -> "QNetwork":
        clone = object.__new__(QNetwork)
        clone.__dict__.update(self.__dict__)
        clone.params = [p.copy() for p in self.params]
        return clone

    def _check(self, x):
        x = np.asarray(x, dtype=self.dtype)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise ShapeMismatch(f"expected input width {self.n_inputs}, got shape {x.shape}")
        return x, single

    def _trunk(self, x):
        acts = [x]
        h = x
        for i in range(len(self.hidden)):
            h = h @ self.params[2 * i]
            h += self.params[2 * i + 1]
            np.maximum(h, 0.0, out=h)
            acts.append(h)
        return acts

    def _forward(self, x):
        acts = self._trunk(x)
        h = acts[-1]
        n_trunk = len(self.hidden)
        wv, bv, wa, ba = self.params[2 * n_trunk:]
        value = h @ wv + bv
        adv = h @ wa
        adv += ba
        # In place, same rounding as value + (adv - mean(adv)).
        q = adv - adv.mean(axis=1, keepdims=True)
        q += value
        return q, value[:, 0], adv, acts

    def forward(self, x) -> np.ndarray:
        """Q-values for one state (1-D input) or a batch (2-D input)."""
        x, single = self._check(x)
        q = self._forward(x)[0]
        return q[0] if single else q

    __call__ = forward

    def value_advantage(self, x):
        x, single = self._check(x)
        _, v, a, _ = self._forward(x)
        return (v[0], a[0]) if single else (v, a)

    def greedy(self, x, mask) -> np.ndarray:
        """Row-wise argmax of Q over ``mask``; the value head and centring do not move it."""
        x, _ = self._check(x)
        h = self._trunk(x)[-1]
        n_trunk = len(self.hidden)
        adv = h @ self.params[2 * n_trunk + 2]
        adv += self.params[2 * n_trunk + 3]
        return np.argmax(np.where(mask, adv, -np.inf), axis=1)

    def q_selected(self, x, actions) -> np.ndarray:
        """``Q(x_k, actions_k)`` per row without forming the full advantage matrix."""
        x, _ = self._check(x)
        actions = np.asarray(actions).reshape(-1)
        h = self._trunk(x)[-1]
        return self._q_selected(h, actions)[0]

    def _q_selected(self, h, actions):
        wv, bv, wa, ba = self.params[2 * len(self.hidden):]
        wa_mean = wa.mean(axis=1)
        wa_sel = wa[:, actions].T                     # (B, hidden)
        q = (h @ wv)[:, 0] + bv[0] + np.einsum("ij,ij->i", h, wa_sel) + ba[actions] \
            - (h @ wa_mean + ba.mean())
        return q, wa_sel, wa_mean

    def loss(self, x, actions, targets) -> float:
        x, _ = self._check(x)
        return float(self._loss(x, actions, targets))

    def _loss(self, x, actions, targets):
        q = self._forward(x)[0]
        rows = np.arange(len(x))
        err = np.asarray(targets, dtype=self.dtype).reshape(-1) - q[rows, np.asarray(actions).reshape(-1)]
        return np.mean(err ** 2)

    def backward(self, x, actions, targets):
        """Gradients of the batch-mean squared error ``(y - Q(s, a))**2``.

        Returns ``(grads, loss)`` with ``grads`` aligned to ``params``. Only the
        selected action's Q-value enters the loss; through the mean-centred
        aggregation it pushes ``1 - 1/|A|`` onto its own advantage and ``-1/|A|``
        onto every other one. The mean advantage is linear in the last hidden
        layer, so the full advantage vector is never formed.
        """
        x, _ = self._check(x)
        actions = np.asarray(actions).reshape(-1)
        targets = np.asarray(targets, dtype=self.dtype).reshape(-1)
        if len(actions) != len(x) or len(targets) != len(x):
            raise ShapeMismatch("actions and targets must match the batch size")
        acts = self._trunk(x)
        n_trunk = len(self.hidden)
        wv, bv, wa, ba = self.params[2 * n_trunk:]
        h = acts[-1]
        q_sel, wa_sel, wa_mean = self._q_selected(h, actions)
        err = targets - q_sel
        batch = len(x)
        loss = float(np.mean(err ** 2))

        g = -2.0 * err / batch                        # dL/dQ(s, a)
        hg = h * g[:, None]
        grads = [None] * len(self.params)
        grads[2 * n_trunk] = hg.sum(axis=0)[:, None]
        grads[2 * n_trunk + 1] = np.array([g.sum()], dtype=self.dtype)
        grad_wa = np.empty_like(wa)
        grad_wa[...] = (hg.sum(axis=0) * (-1.0 / self.n_actions))[:, None]
        np.add.at(grad_wa.T, actions, hg)
        grads[2 * n_trunk + 2] = grad_wa
        grad_ba = np.full(self.n_actions, -g.sum() / self.n_actions, dtype=self.dtype)
        grad_ba += np.bincount(actions, weights=g, minlength=self.n_actions)
        grads[2 * n_trunk + 3] = grad_ba

        dh = g[:, None] * (wv[:, 0] + wa_sel - wa_mean)
        for i in range(n_trunk - 1, -1, -1):
            dh = dh * (acts[i + 1] > 0)
            grads[2 * i] = acts[i].T @ dh
            grads[2 * i + 1] = dh.sum(axis=0)
            if i:
                dh = dh @ self.params[2 * i].T
        return grads, loss


class Adam:
    def __init__(self, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._scratch = [np.empty_like(p) for p in params]

    def step(self, params, grads) -> None:
        """Bias-corrected update of ``params`` in place.

        Uses the equivalent form ``lr_t * m / (sqrt(v) + eps_t)`` with the bias
        corrections folded into ``lr_t`` and ``eps_t``.
        """
        if len(grads) != len(self.m):
            raise ShapeMismatch("gradient list does not match optimizer state")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale = self.learning_rate * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        eps_hat = self.eps * np.sqrt(1.0 - b2 ** self.t)
        for p, g, m, v, tmp in zip(params, grads, self.m, self.v, self._scratch):
            m *= b1
            np.multiply(g, 1.0 - b1, out=tmp)
            m += tmp
            v *= b2
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - b2
            v += tmp
            np.sqrt(v, out=tmp)
            tmp += eps_hat
            np.divide(m, tmp, out=tmp)
            tmp *= scale
            p -= tmp


def adam_step(net: QNetwork, grads, opt: Adam) -> QNetwork:
    opt.step(net.params, grads)
    return net


def sync_target(online: QNetwork, target: QNetwork) -> QNetwork:
    """Copy the online parameters into ``target``."""
    if online.architecture != target.architecture:
        raise ShapeMismatch("online and target networks differ in architecture")
    for dst, src in zip(target.params, online.params):
        dst[...] = src
    return target


def grad_check(net: QNetwork, x, action, target, h: float = 1e-5, max_params: int | None = None,
               rng: np.random.Generator | None = None, backward=None,
               reference_dtype=np.longdouble) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    The analytic gradients come from ``net`` as it is. The finite differences
    are evaluated on a copy held in ``reference_dtype`` (extended precision by
    default), which keeps their round-off well below the tolerance even for
    large losses. Relative error is ``|a - n| / max(|a|, |n|, 1e-6)``, so
    vanishing gradients are compared absolutely. ``max_params`` limits the check
    to a random subset of coordinates; ``backward`` swaps in another gradient
    routine (fault injection).
    """
    x = np.atleast_2d(np.asarray(x, dtype=net.dtype))
    actions = np.atleast_1d(action)
    targets = np.atleast_1d(target)
    backward = backward or QNetwork.backward
    grads, _ = backward(net, x, actions, targets)

    ref = net.copy()
    ref.dtype = np.dtype(reference_dtype)
    ref.params = [p.astype(ref.dtype) for p in net.params]
    x_ref = x.astype(ref.dtype)
    t_ref = targets.astype(ref.dtype)

    coords = [(i, j) for i, p in enumerate(ref.params) for j in range(p.size)]
    if max_params is not None and max_params < len(coords):
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=max_params, replace=False)
        coords = [coords[k] for k in pick]
    worst = 0.0
    for i, j in coords:
        flat = ref.params[i].reshape(-1)
        old = flat[j]
        flat[j] = old + h
        up = ref._loss(x_ref, actions, t_ref)
        flat[j] = old - h
        down = ref._loss(x_ref, actions, t_ref)
        flat[j] = old
        numeric = float((up - down) / (2 * h))
        analytic = float(grads[i].reshape(-1)[j])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, err)
    return worst


def save_params(net: QNetwork, path) -> Path:
    """Write a checkpoint: an ``.npz`` archive holding a JSON header and ``p0..pK``.

    The header records the format version, the architecture and every
    parameter shape, and is checked on load.
    """
    path = Path(path)
    header = dict(version=CHECKPOINT_VERSION, **net.architecture,
                  shapes=[list(p.shape) for p in net.params], dtype=net.dtype.name)
    arrays = {f"p{i}": p for i, p in enumerate(net.params)}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), **arrays)
    return path


def load_params(path, expect: QNetwork | None = None) -> QNetwork:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        params = [data[f"p{i}"] for i in range(len(header["shapes"]))]
    net = QNetwork(header["n_inputs"], header["n_actions"], header["hidden"],
                   rng=np.random.default_rng(0), dtype=header["dtype"])
    if expect is not None and expect.architecture != net.architecture:
        raise ShapeMismatch(f"checkpoint architecture {net.architecture} != {expect.architecture}")
    for p, (dst, shape) in enumerate(zip(net.params, header["shapes"])):
        if list(params[p].shape) != shape or dst.shape != tuple(shape):
            raise ShapeMismatch(f"parameter {p} has shape {params[p].shape}, header says {shape}")
        dst[...] = params[p]
    return net
