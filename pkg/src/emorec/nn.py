"""Minimal CNN engine: forward, backward, RMSProp, and the 13x26 emotion model.

Tensors are numpy arrays in NHWC layout; training math runs in float64,
checkpoints store float32.  The layer set is fixed: 3x3 convolutions (same or
valid padding), 2x2 max pooling, inverted dropout, flatten, dense, with ReLU
hidden activations and a softmax head trained by categorical cross-entropy.

The reference 13x26 model:

    Conv2D(32, same) -> Conv2D(32, valid) -> MaxPool -> Dropout(0.25)
    -> Conv2D(64, same) -> Conv2D(64, valid) -> MaxPool -> Dropout(0.25)
    -> Flatten -> Dense(512) -> Dropout(0.5) -> Dense(8, softmax)

which on a (13, 26, 1) input produces 233,448 trainable parameters.

Determinism: weight init, shuffling and dropout all draw from seeded PCG64
generators in a fixed single-threaded order, so identical seeds reproduce
identical training histories bit for bit.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, NumericalError

CNN_MAGIC = b"EMOCNN\x00\x00"
CNN_VERSION = 1

PROB_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# Layer specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Conv2D:
    filters: int
    kernel: int = 3
    padding: str = "same"        # "same" | "valid"
    activation: str = "relu"     # "relu" | "none"


@dataclass(frozen=True)
class MaxPool2D:
    size: int = 2


@dataclass(frozen=True)
class DropoutSpec:
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"dropout rate {self.rate} outside [0, 1)")


@dataclass(frozen=True)
class FlattenSpec:
    pass


@dataclass(frozen=True)
class Dense:
    units: int
    activation: str = "relu"     # "relu" | "softmax" | "none"


# ---------------------------------------------------------------------------
# Primitive ops
# ---------------------------------------------------------------------------

def conv2d_forward(x, W, b, padding="same"):
    """Cross-correlation plus bias.  x: (N,H,W,Cin), W: (k,k,Cin,Cout).

    same-padding pads symmetrically with zeros (odd kernels only); valid
    shrinks each spatial dim by k-1.
    """
    k = W.shape[0]
    if W.shape[2] != x.shape[3]:
        raise ValueError(f"channel mismatch: input {x.shape[3]}, kernel {W.shape[2]}")
    if padding == "same":
        p = (k - 1) // 2
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    elif padding == "valid":
        xp = x
    else:
        raise ValueError(f"unknown padding {padding!r}")
    n, hp, wp, cin = xp.shape
    ho, wo = hp - k + 1, wp - k + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"input {x.shape[1:3]} too small for {k}x{k} valid conv")
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * cin)
    out = cols @ W.reshape(k * k * cin, -1) + b
    out = out.reshape(n, ho, wo, -1)
    cache = (cols, x.shape, xp.shape, W, padding)
    return out, cache


def conv2d_backward(dout, cache):
    cols, x_shape, xp_shape, W, padding = cache
    k = W.shape[0]
    n, ho, wo, cout = dout.shape
    cin = W.shape[2]
    dflat = dout.reshape(n * ho * wo, cout)
    dW = (cols.T @ dflat).reshape(W.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ W.reshape(k * k * cin, cout).T)
    dcols = dcols.reshape(n, ho, wo, k, k, cin)
    dxp = np.zeros(xp_shape)
    for di in range(k):
        for dj in range(k):
            dxp[:, di:di + ho, dj:dj + wo, :] += dcols[:, :, :, di, dj, :]
    if padding == "same":
        p = (k - 1) // 2
        dx = dxp[:, p:p + x_shape[1], p:p + x_shape[2], :]
    else:
        dx = dxp
    return dx, dW, db


def maxpool2d_forward(x, size=2):
    """Non-overlapping size x size max; trailing odd rows/cols are dropped."""
    n, h, w, c = x.shape
    if h < size or w < size:
        raise ValueError(f"input {x.shape[1:3]} too small for {size}x{size} pooling")
    ho, wo = h // size, w // size
    v = x[:, :ho * size, :wo * size, :]
    v = v.reshape(n, ho, size, wo, size, c).transpose(0, 1, 3, 5, 2, 4)
    windows = v.reshape(n, ho, wo, c, size * size)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape, size)


def maxpool2d_backward(dout, cache):
    idx, x_shape, size = cache
    n, h, w, c = x_shape
    ho, wo = h // size, w // size
    dwin = np.zeros((n, ho, wo, c, size * size))
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, ho, wo, c, size, size).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros(x_shape)
    dx[:, :ho * size, :wo * size, :] = dwin.reshape(n, ho * size, wo * size, c)
    return dx


def dense_forward(x, W, b):
    if x.shape[1] != W.shape[0]:
        raise ValueError(f"dense input dim {x.shape[1]} != weight rows {W.shape[0]}")
    return x @ W + b, (x, W)


def dense_backward(dout, cache):
    x, W = cache
    return dout @ W.T, x.T @ dout, dout.sum(axis=0)


def relu_forward(x):
    return np.maximum(0.0, x), x > 0


def relu_backward(dout, mask):
    return dout * mask


def dropout_forward(x, rate, train, rng=None, mask=None):
    """Inverted dropout: zero with prob rate, scale survivors by 1/(1-rate).

    In infer mode (train=False) this is the identity.  A precomputed mask can
    be supplied to replay a forward pass (finite-difference checks).
    """
    if not train or rate == 0.0:
        return x, None
    if mask is None:
        mask = rng.random(x.shape) >= rate
    return x * mask / (1.0 - rate), mask


def dropout_backward(dout, mask, rate):
    if mask is None:
        return dout
    return dout * mask / (1.0 - rate)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(probs, labels, n_classes=None):
    """Mean over the batch of -ln p_true, with p clamped to >= 1e-12.

    labels: integer class indices, shape (N,).
    """
    probs = np.asarray(probs)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = probs.shape[1] if n_classes is None else n_classes
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"label outside 0..{n_classes - 1}")
    p = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(p, PROB_FLOOR)).mean())


def softmax_cross_entropy(logits, labels):
    """Combined softmax + cross-entropy: loss, d(loss)/d(logits), probs."""
    probs = softmax(logits)
    loss = cross_entropy_loss(probs, labels)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(labels)), labels] = 1.0
    dlogits = (probs - onehot) / len(labels)
    return loss, dlogits, probs


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class CnnModel:
    specs: tuple
    input_shape: tuple            # (H, W, C)
    params: list                  # per layer: {"W","b"} or None
    seed: int
    rms_state: list | None = None
    pipeline_config: dict | None = None

    @property
    def n_classes(self) -> int:
        return self.specs[-1].units


def layer_shapes(specs, input_shape):
    """Output shape after each layer; raises on impossible geometry."""
    shape = tuple(input_shape)
    out = []
    for spec in specs:
        if isinstance(spec, Conv2D):
            h, w, _ = shape
            if spec.padding == "valid":
                h, w = h - spec.kernel + 1, w - spec.kernel + 1
            if h < 1 or w < 1:
                raise ConfigError(f"conv output collapsed to {h}x{w}")
            shape = (h, w, spec.filters)
        elif isinstance(spec, MaxPool2D):
            h, w, c = shape
            if h < spec.size or w < spec.size:
                raise ConfigError(f"{h}x{w} too small for {spec.size}x{spec.size} pool")
            shape = (h // spec.size, w // spec.size, c)
        elif isinstance(spec, DropoutSpec):
            pass
        elif isinstance(spec, FlattenSpec):
            shape = (int(np.prod(shape)),)
        elif isinstance(spec, Dense):
            if len(shape) != 1:
                raise ConfigError("dense layer needs flattened input")
            shape = (spec.units,)
        else:
            raise ConfigError(f"unknown layer spec {spec!r}")
        out.append(shape)
    return out


def parameter_counts(specs, input_shape):
    """Trainable parameter count per layer (0 for parameterless layers)."""
    counts = []
    shape = tuple(input_shape)
    for spec, out_shape in zip(specs, layer_shapes(specs, input_shape)):
        if isinstance(spec, Conv2D):
            counts.append(spec.kernel * spec.kernel * shape[-1] * spec.filters
                          + spec.filters)
        elif isinstance(spec, Dense):
            counts.append(shape[0] * spec.units + spec.units)
        else:
            counts.append(0)
        shape = out_shape
    return counts


def _glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def init_params(specs, input_shape, seed):
    rng = np.random.default_rng(seed)
    params = []
    shape = tuple(input_shape)
    for spec, out_shape in zip(specs, layer_shapes(specs, input_shape)):
        if isinstance(spec, Conv2D):
            k, cin, cout = spec.kernel, shape[-1], spec.filters
            W = _glorot(rng, (k, k, cin, cout), k * k * cin, k * k * cout)
            params.append({"W": W, "b": np.zeros(cout)})
        elif isinstance(spec, Dense):
            W = _glorot(rng, (shape[0], spec.units), shape[0], spec.units)
            params.append({"W": W, "b": np.zeros(spec.units)})
        else:
            params.append(None)
        shape = out_shape
    return params


def build_model(specs, input_shape, seed=0) -> CnnModel:
    layer_shapes(specs, input_shape)  # validate geometry up front
    return CnnModel(specs=tuple(specs), input_shape=tuple(input_shape),
                    params=init_params(specs, input_shape, seed), seed=seed)


def build_emotion_cnn(n_mfcc=13, n_frames=26, n_classes=8, seed=0,
                      conv_filters=(32, 32, 64, 64), dense_units=512,
                      dropout_rates=(0.25, 0.25, 0.5)) -> CnnModel:
    """The reference two-block CNN over an (n_mfcc, n_frames, 1) window."""
    f1, f2, f3, f4 = conv_filters
    specs = (
        Conv2D(f1, padding="same"),
        Conv2D(f2, padding="valid"),
        MaxPool2D(2),
        DropoutSpec(dropout_rates[0]),
        Conv2D(f3, padding="same"),
        Conv2D(f4, padding="valid"),
        MaxPool2D(2),
        DropoutSpec(dropout_rates[1]),
        FlattenSpec(),
        Dense(dense_units, activation="relu"),
        DropoutSpec(dropout_rates[2]),
        Dense(n_classes, activation="softmax"),
    )
    return build_model(specs, (n_mfcc, n_frames, 1), seed=seed)


def audit_params(model: CnnModel) -> str:
    """Human-readable per-layer table ending with the total parameter count."""
    shapes = layer_shapes(model.specs, model.input_shape)
    counts = parameter_counts(model.specs, model.input_shape)
    names = {Conv2D: "conv2d", MaxPool2D: "max_pooling2d",
             DropoutSpec: "dropout", FlattenSpec: "flatten", Dense: "dense"}
    lines = [f"{'layer':<16}{'output shape':<20}{'params':>8}"]
    for spec, shape, count in zip(model.specs, shapes, counts):
        lines.append(f"{names[type(spec)]:<16}{str(shape):<20}{count:>8}")
    lines.append(f"Total params: {sum(counts)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def forward(model: CnnModel, x, train=False, rng=None, masks=None,
            check_finite=False):
    """Run the network up to the output logits.

    Returns (logits, caches, used_masks).  masks replays a previous forward's
    dropout decisions; otherwise train-mode dropout draws from rng.
    """
    x = np.asarray(x, dtype=np.float64)
    caches = []
    used_masks = []
    mask_iter = iter(masks) if masks is not None else None
    for spec, p in zip(model.specs, model.params):
        if isinstance(spec, Conv2D):
            x, cache = conv2d_forward(x, p["W"], p["b"], spec.padding)
            relu_mask = None
            if spec.activation == "relu":
                x, relu_mask = relu_forward(x)
            caches.append(("conv", cache, relu_mask))
        elif isinstance(spec, MaxPool2D):
            x, cache = maxpool2d_forward(x, spec.size)
            caches.append(("pool", cache))
        elif isinstance(spec, DropoutSpec):
            mask = next(mask_iter) if mask_iter is not None else None
            x, mask = dropout_forward(x, spec.rate, train, rng=rng, mask=mask)
            used_masks.append(mask)
            caches.append(("dropout", mask, spec.rate))
        elif isinstance(spec, FlattenSpec):
            caches.append(("flatten", x.shape))
            x = x.reshape(x.shape[0], -1)
        elif isinstance(spec, Dense):
            x, cache = dense_forward(x, p["W"], p["b"])
            relu_mask = None
            if spec.activation == "relu":
                x, relu_mask = relu_forward(x)
            caches.append(("dense", cache, relu_mask))
        if check_finite and not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite activation after {spec}")
    return x, caches, used_masks


def backward(model: CnnModel, dlogits, caches):
    """Gradients of the loss w.r.t. every parameter tensor (and the input)."""
    grads = [None if p is None else {} for p in model.params]
    d = dlogits
    for i in range(len(model.specs) - 1, -1, -1):
        cache = caches[i]
        if cache[0] == "conv":
            _, conv_cache, relu_mask = cache
            if relu_mask is not None:
                d = relu_backward(d, relu_mask)
            d, dW, db = conv2d_backward(d, conv_cache)
            grads[i] = {"W": dW, "b": db}
        elif cache[0] == "pool":
            d = maxpool2d_backward(d, cache[1])
        elif cache[0] == "dropout":
            d = dropout_backward(d, cache[1], cache[2])
        elif cache[0] == "flatten":
            d = d.reshape(cache[1])
        elif cache[0] == "dense":
            _, dense_cache, relu_mask = cache
            if relu_mask is not None:
                d = relu_backward(d, relu_mask)
            d, dW, db = dense_backward(d, dense_cache)
            grads[i] = {"W": dW, "b": db}
    return grads, d


def loss_and_grads(model: CnnModel, x, labels, rng=None, masks=None,
                   train=True):
    logits, caches, used_masks = forward(model, x, train=train, rng=rng,
                                         masks=masks)
    loss, dlogits, probs = softmax_cross_entropy(logits, labels)
    grads, _ = backward(model, dlogits, caches)
    return loss, grads, probs, used_masks


def predict_proba(model: CnnModel, x, batch_size=256) -> np.ndarray:
    """Softmax probabilities in infer mode (dropout off)."""
    x = np.asarray(x, dtype=np.float64)
    outs = []
    for start in range(0, len(x), batch_size):
        logits, _, _ = forward(model, x[start:start + batch_size], train=False)
        outs.append(softmax(logits))
    return np.concatenate(outs, axis=0)


def predict_labels(model: CnnModel, x) -> np.ndarray:
    return predict_proba(model, x).argmax(axis=1)


# ---------------------------------------------------------------------------
# RMSProp + training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    lr: float = 1e-4
    decay: float = 1e-6
    rho: float = 0.9
    epsilon: float = 1e-7
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho {self.rho} outside [0, 1)")


def rmsprop_step(params, grads, acc, cfg: TrainConfig, t: int):
    """In-place RMSProp update with iteration-decayed learning rate.

    lr_t = lr / (1 + decay*t); acc <- rho*acc + (1-rho)*g^2;
    p <- p - lr_t * g / (sqrt(acc) + epsilon).
    """
    lr_t = cfg.lr / (1.0 + cfg.decay * t)
    for p, g, a in zip(params, grads, acc):
        if p is None:
            continue
        for key in p:
            a[key] = cfg.rho * a[key] + (1.0 - cfg.rho) * g[key] ** 2
            p[key] = p[key] - lr_t * g[key] / (np.sqrt(a[key]) + cfg.epsilon)


def _fresh_rms_state(params):
    return [None if p is None else {k: np.zeros_like(v) for k, v in p.items()}
            for p in params]


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float | None = None
    val_acc: float | None = None


def evaluate(model: CnnModel, x, labels):
    """(mean cross-entropy, accuracy) in infer mode."""
    probs = predict_proba(model, x)
    loss = cross_entropy_loss(probs, labels)
    acc = float((probs.argmax(axis=1) == np.asarray(labels)).mean())
    return loss, acc


def train(model: CnnModel, x, labels, cfg: TrainConfig,
          x_val=None, labels_val=None, verbose=False):
    """Seeded mini-batch RMSProp training; returns per-epoch history.

    Train loss/accuracy are running means over the epoch's batches (dropout
    active, measured before each update), matching the usual epoch-log
    convention; validation metrics are clean infer-mode numbers.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ConfigError("empty training split")
    if model.rms_state is None:
        model.rms_state = _fresh_rms_state(model.params)
    rng = np.random.default_rng(cfg.seed)
    history = []
    t = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(x))
        losses, hits, seen = [], 0, 0
        for start in range(0, len(order), cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            xb, yb = x[sel], labels[sel]
            loss, grads, probs, _ = loss_and_grads(model, xb, yb, rng=rng)
            rmsprop_step(model.params, grads, model.rms_state, cfg, t)
            t += 1
            losses.append(loss * len(sel))
            hits += int((probs.argmax(axis=1) == yb).sum())
            seen += len(sel)
        train_loss = float(np.sum(losses) / seen)
        train_acc = hits / seen
        if not math.isfinite(train_loss):
            raise NumericalError(f"non-finite training loss at epoch {epoch}")
        val_loss = val_acc = None
        if x_val is not None and len(x_val):
            val_loss, val_acc = evaluate(model, x_val, labels_val)
        history.append(EpochStats(epoch, train_loss, train_acc, val_loss, val_acc))
        if verbose:
            msg = f"epoch {epoch}: loss {train_loss:.4f} acc {train_acc:.4f}"
            if val_loss is not None:
                msg += f" val_loss {val_loss:.4f} val_acc {val_acc:.4f}"
            print(msg)
    return history


def history_to_csv(history) -> str:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for row in history:
        val_loss = "" if row.val_loss is None else repr(row.val_loss)
        val_acc = "" if row.val_acc is None else repr(row.val_acc)
        lines.append(f"{row.epoch},{row.train_loss!r},{row.train_acc!r},"
                     f"{val_loss},{val_acc}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------

def gradient_check(model: CnnModel, x, labels, h=1e-5, seed=0):
    """Central finite differences against backprop on every parameter.

    Dropout masks are drawn once and replayed for every evaluation so the
    loss is a deterministic function of the parameters.  Returns the max
    relative error and a per-tensor breakdown.

    The loss is piecewise smooth: a perturbation that flips a max-pool
    argmax or a ReLU gate invalidates the finite-difference model, so
    fixtures must keep activations away from those ties.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    _, _, masks = forward(model, x, train=True, rng=rng)

    loss_analytic, grads, _, _ = loss_and_grads(model, x, labels, masks=masks)

    def loss_at():
        logits, _, _ = forward(model, x, train=True, masks=masks)
        loss, _, _ = softmax_cross_entropy(logits, labels)
        return loss

    worst = 0.0
    per_tensor = {}
    for i, p in enumerate(model.params):
        if p is None:
            continue
        for key, tensor in p.items():
            g_an = grads[i][key]
            g_fd = np.zeros_like(tensor)
            for idx in np.ndindex(*tensor.shape):
                orig = tensor[idx]
                tensor[idx] = orig + h
                lp = loss_at()
                tensor[idx] = orig - h
                lm = loss_at()
                tensor[idx] = orig
                g_fd[idx] = (lp - lm) / (2.0 * h)
            denom = np.maximum(np.maximum(np.abs(g_an), np.abs(g_fd)), 1e-6)
            rel = float((np.abs(g_an - g_fd) / denom).max())
            per_tensor[f"layer{i}.{key}"] = rel
            worst = max(worst, rel)
    return worst, per_tensor


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_SPEC_NAMES = {"conv2d": Conv2D, "max_pooling2d": MaxPool2D,
               "dropout": DropoutSpec, "flatten": FlattenSpec, "dense": Dense}


def _spec_to_dict(spec):
    for name, cls in _SPEC_NAMES.items():
        if isinstance(spec, cls):
            d = {"type": name}
            d.update(spec.__dict__)
            return d
    raise ConfigError(f"unknown layer spec {spec!r}")


def _spec_from_dict(d):
    d = dict(d)
    cls = _SPEC_NAMES[d.pop("type")]
    return cls(**d)


def save_cnn(path, model: CnnModel, include_rms=False) -> None:
    """Versioned binary checkpoint; parameters stored as little-endian float32."""
    tensors = []
    for p in model.params:
        if p is not None:
            tensors.extend([p["W"], p["b"]])
    rms = []
    if include_rms and model.rms_state is not None:
        for a in model.rms_state:
            if a is not None:
                rms.extend([a["W"], a["b"]])
    meta = {
        "specs": [_spec_to_dict(s) for s in model.specs],
        "input_shape": list(model.input_shape),
        "seed": model.seed,
        "shapes": [list(t.shape) for t in tensors],
        "rms_shapes": [list(t.shape) for t in rms],
        "pipeline_config": model.pipeline_config,
    }
    blob = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CNN_MAGIC)
        fh.write(struct.pack("<II", CNN_VERSION, len(blob)))
        fh.write(blob)
        for t in tensors + rms:
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_cnn(path) -> CnnModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CNN_MAGIC:
        raise FormatError(f"bad CNN checkpoint magic {data[:8]!r}")
    version, blob_len = struct.unpack_from("<II", data, 8)
    if version != CNN_VERSION:
        raise FormatError(f"CNN checkpoint version {version}, expected {CNN_VERSION}")
    meta = json.loads(data[16 : 16 + blob_len].decode("utf-8"))
    pos = 16 + blob_len

    def read_tensors(shapes):
        nonlocal pos
        out = []
        for shape in shapes:
            size = int(np.prod(shape)) * 4
            t = np.frombuffer(data[pos : pos + size], dtype="<f4")
            out.append(t.reshape(shape).astype(np.float64))
            pos += size
        return out

    specs = tuple(_spec_from_dict(d) for d in meta["specs"])
    tensors = read_tensors(meta["shapes"])
    rms = read_tensors(meta["rms_shapes"])

    params = []
    it = iter(tensors)
    for spec in specs:
        if isinstance(spec, (Conv2D, Dense)):
            params.append({"W": next(it), "b": next(it)})
        else:
            params.append(None)
    rms_state = None
    if rms:
        rms_state = []
        it = iter(rms)
        for spec in specs:
            if isinstance(spec, (Conv2D, Dense)):
                rms_state.append({"W": next(it), "b": next(it)})
            else:
                rms_state.append(None)
    return CnnModel(specs=specs, input_shape=tuple(meta["input_shape"]),
                    params=params, seed=meta["seed"], rms_state=rms_state,
                    pipeline_config=meta.get("pipeline_config"))
