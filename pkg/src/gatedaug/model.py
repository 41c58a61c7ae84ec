"""Small trainable classifiers with explicit forward, loss, and gradients.

Vector mode uses an MLP (d -> 64 -> 64 -> C, ReLU); image mode a two-stage
convnet (3x3 conv same-padding, 2x2 max pool, ReLU, twice, then a linear
head).  No normalization or dropout layers, so scoring passes behave exactly
like training passes.  All gradients are hand-derived and checked against
central finite differences in the test suite.

The pool layers run before their ReLU: max commutes with a monotone
activation, so the function is identical to conv -> ReLU -> pool while the
gradient routing stays well-defined when ReLU would tie many zeros.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, NumericError, ParameterError, ShapeError
from .rng import DOMAIN_INIT, RngStream

CKPT_MAGIC = b"DAUGCKPT"
CKPT_VERSION = 1

MLP_HIDDEN = (64, 64)
CONV_CHANNELS = (8, 16)


@dataclass(frozen=True)
class Arch:
    kind: str  # "mlp" | "conv"
    input_shape: tuple[int, ...]
    hidden: tuple[int, ...]
    class_count: int

    def tensor_shapes(self) -> list[tuple[int, ...]]:
        c = self.class_count
        if self.kind == "mlp":
            (d,) = self.input_shape
            h1, h2 = self.hidden
            return [(h1, d), (h1,), (h2, h1), (h2,), (c, h2), (c,)]
        if self.kind == "conv":
            h, w = self.input_shape
            c1, c2 = self.hidden
            flat = c2 * (h // 2 // 2) * (w // 2 // 2)
            return [(c1, 1, 3, 3), (c1,), (c2, c1, 3, 3), (c2,), (c, flat), (c,)]
        raise ParameterError(f"unknown architecture kind {self.kind!r}")


@dataclass
class ModelParams:
    arch: Arch
    tensors: list[np.ndarray]  # [W1, b1, W2, b2, W_out, b_out]

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, [t.copy() for t in self.tensors])

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.arch, [t.astype(dtype) for t in self.tensors])


@dataclass
class TrainState:
    params: ModelParams
    velocity: list[np.ndarray]
    epoch: int = 0
    step: int = 0
    seed: int = 0


def arch_for(mode: str, feature_shape: tuple[int, ...], class_count: int) -> Arch:
    if mode == "vector":
        return Arch("mlp", feature_shape, MLP_HIDDEN, class_count)
    if mode == "image":
        return Arch("conv", feature_shape, CONV_CHANNELS, class_count)
    raise ParameterError(f"unknown mode {mode!r}")


def init_params(arch: Arch, seed: int) -> ModelParams:
    """He fan-in init for hidden layers; the output layer starts at zero so
    early softmax outputs are uniform."""
    rng = RngStream(seed, DOMAIN_INIT)
    shapes = arch.tensor_shapes()
    tensors = []
    for i, shape in enumerate(shapes):
        is_output = i >= len(shapes) - 2
        if is_output or len(shape) == 1:
            tensors.append(np.zeros(shape, dtype=np.float32))
        else:
            fan_in = int(np.prod(shape[1:]))
            std = np.sqrt(2.0 / fan_in)
            tensors.append((rng.normal(1.0, size=shape) * std).astype(np.float32))
    return ModelParams(arch, tensors)


def init_state(arch: Arch, seed: int) -> TrainState:
    params = init_params(arch, seed)
    velocity = [np.zeros_like(t) for t in params.tensors]
    return TrainState(params=params, velocity=velocity, seed=seed)


# --------------------------------------------------------------------------
# layers


def _conv2d(x, w, b):
    """Same-padding 3x3 convolution; returns (output, im2col patches)."""
    bsz, cin, h, wd = x.shape
    cout = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((bsz, h, wd, cin, 3, 3), dtype=x.dtype)
    for di in range(3):
        for dj in range(3):
            cols[:, :, :, :, di, dj] = xp[:, :, di : di + h, dj : dj + wd].transpose(0, 2, 3, 1)
    cols = cols.reshape(bsz, h, wd, cin * 9)
    out = cols @ w.reshape(cout, -1).T + b
    return out.transpose(0, 3, 1, 2), cols


def _conv2d_backward(dout, cols, w, x_shape, need_dx=True):
    bsz, cin, h, wd = x_shape
    cout = w.shape[0]
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, cout)
    dw = (dflat.T @ cols.reshape(-1, cin * 9)).reshape(w.shape)
    db = dflat.sum(axis=0)
    if not need_dx:
        return dw, db, None
    dcols = (dflat @ w.reshape(cout, -1)).reshape(bsz, h, wd, cin, 3, 3)
    dxp = np.zeros((bsz, cin, h + 2, wd + 2), dtype=dout.dtype)
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di : di + h, dj : dj + wd] += dcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return dw, db, dxp[:, :, 1:-1, 1:-1]


def _pool2x2(x):
    """2x2 max pool, stride 2, trailing odd row/column dropped."""
    bsz, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    win = x[:, :, : h2 * 2, : w2 * 2].reshape(bsz, c, h2, 2, w2, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(bsz, c, h2, w2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool2x2_backward(dout, idx, x_shape):
    bsz, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dwin = np.zeros((bsz, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(bsz, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, : h2 * 2, : w2 * 2] = dwin.reshape(bsz, c, h2 * 2, w2 * 2)
    return dx


def _check_input(arch: Arch, batch: np.ndarray) -> None:
    if batch.ndim != len(arch.input_shape) + 1 or tuple(batch.shape[1:]) != arch.input_shape:
        raise ShapeError(("B",) + arch.input_shape, tuple(batch.shape))


def _forward_cached(params: ModelParams, batch: np.ndarray):
    arch = params.arch
    _check_input(arch, batch)
    t = params.tensors
    if arch.kind == "mlp":
        z1 = batch @ t[0].T + t[1]
        a1 = np.maximum(z1, 0)
        z2 = a1 @ t[2].T + t[3]
        a2 = np.maximum(z2, 0)
        logits = a2 @ t[4].T + t[5]
        return logits, (batch, z1, a1, z2, a2)

    x = batch[:, None, :, :]
    c1, cols1 = _conv2d(x, t[0], t[1])
    p1, idx1 = _pool2x2(c1)
    a1 = np.maximum(p1, 0)
    c2, cols2 = _conv2d(a1, t[2], t[3])
    p2, idx2 = _pool2x2(c2)
    a2 = np.maximum(p2, 0)
    flat = a2.reshape(batch.shape[0], -1)
    logits = flat @ t[4].T + t[5]
    return logits, (x, cols1, c1, idx1, p1, a1, cols2, c2, idx2, p2, a2, flat)


def forward(params: ModelParams, batch: np.ndarray) -> np.ndarray:
    """Deterministic logits for a batch; no parameter mutation."""
    logits, _ = _forward_cached(params, batch)
    return logits


def _softmax_xent(logits: np.ndarray, labels: np.ndarray):
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    rows = np.arange(len(labels))
    log_probs = z - np.log(ez.sum(axis=1, keepdims=True))
    loss = float(-log_probs[rows, labels].mean(dtype=np.float64))
    dlogits = probs.copy()
    dlogits[rows, labels] -= 1.0
    dlogits /= len(labels)
    return loss, dlogits


def loss_and_grad(params: ModelParams, batch: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and exact analytic parameter gradients.

    Returns ``(loss, grads)`` with grads matching ``params.tensors`` in order
    and shape.
    """
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= params.arch.class_count):
        raise ParameterError(f"labels must lie in [0, {params.arch.class_count}), got range "
                             f"[{labels.min()}, {labels.max()}]")
    logits, cache = _forward_cached(params, batch)
    loss, dlogits = _softmax_xent(logits, labels)
    t = params.tensors

    if params.arch.kind == "mlp":
        x, z1, a1, z2, a2 = cache
        dw3 = dlogits.T @ a2
        db3 = dlogits.sum(axis=0)
        da2 = dlogits @ t[4]
        dz2 = da2 * (z2 > 0)
        dw2 = dz2.T @ a1
        db2 = dz2.sum(axis=0)
        da1 = dz2 @ t[2]
        dz1 = da1 * (z1 > 0)
        dw1 = dz1.T @ x
        db1 = dz1.sum(axis=0)
        return loss, [dw1, db1, dw2, db2, dw3, db3]

    x, cols1, c1, idx1, p1, a1, cols2, c2, idx2, p2, a2, flat = cache
    dwf = dlogits.T @ flat
    dbf = dlogits.sum(axis=0)
    dflat = dlogits @ t[4]
    da2 = dflat.reshape(a2.shape)
    dp2 = da2 * (p2 > 0)
    dc2 = _pool2x2_backward(dp2, idx2, c2.shape)
    dw2, db2, da1 = _conv2d_backward(dc2, cols2, t[2], a1.shape)
    dp1 = da1 * (p1 > 0)
    dc1 = _pool2x2_backward(dp1, idx1, c1.shape)
    dw1, db1, _ = _conv2d_backward(dc1, cols1, t[0], x.shape, need_dx=False)
    return loss, [dw1, db1, dw2, db2, dwf, dbf]


def sgd_step(state: TrainState, grads, lr: float, momentum: float = 0.0, weight_decay: float = 0.0) -> TrainState:
    """Momentum SGD update in place; increments the step index.

    Weight decay enters as an L2 term added to the gradient.  With momentum
    and decay both zero the update is exactly ``-lr * grad``.
    """
    if lr <= 0:
        raise ParameterError(f"lr must be > 0, got {lr}")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient at step {state.step}")
    for p, v, g in zip(state.params.tensors, state.velocity, grads):
        g_eff = g + weight_decay * p if weight_decay else g
        v *= momentum
        v += g_eff
        p -= (lr * v).astype(p.dtype, copy=False)
    for p in state.params.tensors:
        if not np.all(np.isfinite(p)):
            raise NumericError(f"non-finite parameters after step {state.step}")
    state.step += 1
    return state


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: ModelParams, path) -> None:
    arch = params.arch
    kind_byte = 0 if arch.kind == "mlp" else 1
    flat = np.concatenate([np.ascontiguousarray(t, dtype="<f4").ravel() for t in params.tensors])
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<HB", CKPT_VERSION, kind_byte))
        f.write(struct.pack("<B", len(arch.input_shape)))
        for d in arch.input_shape:
            f.write(struct.pack("<I", d))
        f.write(struct.pack("<B", len(arch.hidden)))
        for d in arch.hidden:
            f.write(struct.pack("<I", d))
        f.write(struct.pack("<IQ", arch.class_count, flat.size))
        f.write(flat.tobytes())


def _read_exact(f, n, offset, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated checkpoint while reading {what}", offset + len(buf))
    return buf


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CKPT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}", 0)
        off = 8
        version, kind_byte = struct.unpack("<HB", _read_exact(f, 3, off, "header"))
        if version != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}", off)
        if kind_byte not in (0, 1):
            raise FormatError(f"unknown architecture byte {kind_byte}", off + 2)
        off += 3
        (rank,) = struct.unpack("<B", _read_exact(f, 1, off, "input rank"))
        off += 1
        input_shape = []
        for _ in range(rank):
            (d,) = struct.unpack("<I", _read_exact(f, 4, off, "input dim"))
            input_shape.append(d)
            off += 4
        (nh,) = struct.unpack("<B", _read_exact(f, 1, off, "hidden count"))
        off += 1
        hidden = []
        for _ in range(nh):
            (d,) = struct.unpack("<I", _read_exact(f, 4, off, "hidden dim"))
            hidden.append(d)
            off += 4
        class_count, count = struct.unpack("<IQ", _read_exact(f, 12, off, "class/param counts"))
        off += 12
        arch = Arch("mlp" if kind_byte == 0 else "conv", tuple(input_shape), tuple(hidden), class_count)
        shapes = arch.tensor_shapes()
        expected = sum(int(np.prod(s)) for s in shapes)
        if count != expected:
            raise FormatError(f"parameter count {count} does not match architecture ({expected})", off - 8)
        raw = _read_exact(f, count * 4, off, "parameters")
        flat = np.frombuffer(raw, dtype="<f4")
        tensors = []
        pos = 0
        for s in shapes:
            n = int(np.prod(s))
            tensors.append(flat[pos : pos + n].reshape(s).copy())
            pos += n
    return ModelParams(arch, tensors)
