"""Encoder-decoder network that predicts the semantic shift for an initial noise.

The network sees the initial noise ``z_T`` and the reference latent ``I``
concatenated on channels and returns ``S_pred`` with the latent's shape.
Adding ``S_pred`` to ``z_T`` yields the improved initial noise.

Encoder (ResNet-style, three scales)::

    f1 = relu(bn(conv3x3/2(x)))                                 (c1, h/2)
    f2 = relu(main(maxpool(f1)) + shortcut(maxpool(f1)))       (c2, h/4)
    f3 = relu(main(f2) + shortcut(f2))    main stride 2        (c3, h/8)

Decoder: conv -> ELU -> pixel shuffle per stage, concatenating f2 then f1,
and a final 3x3 conv head.
"""

from __future__ import annotations

import io
import json
import logging
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from hqnoise.collector import NoisePair
from hqnoise.errors import DimensionError, FormatError, TrainingError
from hqnoise.nn.functional import conv2d_forward
from hqnoise.nn.layers import (
    ELU,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    MaxPool2d,
    Module,
    PixelShuffle,
    ReLU,
    Sequential,
)
from hqnoise.nn.optim import Adam, step_decay_lr

log = logging.getLogger(__name__)

FULL_CHANNELS = (64, 64, 128)
DESK_CHANNELS = (16, 16, 32)
MICRO_CHANNELS = (8, 8, 16)


@dataclass(frozen=True)
class EdnConfig:
    latent_shape: tuple = (4, 16, 16)
    channels: tuple = DESK_CHANNELS
    upsample: str = "pixel_shuffle"
    # inputs are divided and outputs multiplied by this (noise std, e.g. q)
    scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "latent_shape", tuple(int(d) for d in self.latent_shape))
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        c, h, w = self.latent_shape
        if h % 8 or w % 8:
            raise DimensionError(f"latent spatial dims {h}x{w} must be divisible by 8")
        if len(self.channels) != 3:
            raise ValueError("channels must be a (c1, c2, c3) triple")
        if self.upsample not in ("pixel_shuffle", "transposed"):
            raise ValueError(f"unknown upsample mode {self.upsample!r}")

    @property
    def in_channels(self):
        return 2 * self.latent_shape[0]


class _ResidualStage(Module):
    """Main conv path and a parallel 1x1 shortcut, summed then rectified."""

    def __init__(self, cin, cout, stride, rng):
        self.main = Sequential(
            Conv2d(cin, cout, 3, stride, 1, bias=False, rng=rng),
            BatchNorm2d(cout),
            ReLU(),
            Conv2d(cout, cout, 3, 1, 1, bias=False, rng=rng),
            BatchNorm2d(cout),
        )
        self.shortcut = Sequential(
            Conv2d(cin, cout, 1, stride, 0, bias=False, rng=rng), BatchNorm2d(cout)
        )
        self.act = ReLU()

    def forward(self, x):
        return self.act.forward(self.main.forward(x) + self.shortcut.forward(x))

    def backward(self, grad):
        g = self.act.backward(grad)
        return self.main.backward(g) + self.shortcut.backward(g)


def _up(cin, cout, mode, rng):
    if mode == "pixel_shuffle":
        return Sequential(Conv2d(cin, cout * 4, 3, 1, 1, rng=rng), ELU(), PixelShuffle(2))
    return Sequential(ConvTranspose2d(cin, cout, 2, 2, rng=rng), ELU())


class EdnModel(Module):
    def __init__(self, config: EdnConfig = EdnConfig()):
        self.config = config
        rng = np.random.default_rng(config.seed)
        c1, c2, c3 = config.channels
        cin = config.in_channels
        self.stem = Sequential(Conv2d(cin, c1, 3, 2, 1, bias=False, rng=rng), BatchNorm2d(c1), ReLU())
        self.pool = MaxPool2d(2)
        self.stage2 = _ResidualStage(c1, c2, 1, rng)
        self.stage3 = _ResidualStage(c2, c3, 2, rng)
        self.up3 = _up(c3, c2, config.upsample, rng)
        self.up2 = _up(2 * c2, c1, config.upsample, rng)
        self.up1 = _up(2 * c1, c1, config.upsample, rng)
        self.head = Conv2d(c1, config.latent_shape[0], 3, 1, 1, rng=rng)

    def features(self, x):
        f1 = self.stem.forward(x)
        f2 = self.stage2.forward(self.pool.forward(f1))
        f3 = self.stage3.forward(f2)
        return f1, f2, f3

    def forward(self, x):
        """Batched forward on the concatenated ``(N, 2C, h, w)`` input, in scaled units."""
        f1, f2, f3 = self.features(x)
        self._split = (f2.shape[1], f1.shape[1])
        d = self.up3.forward(f3)
        d = self.up2.forward(np.concatenate([d, f2], axis=1))
        d = self.up1.forward(np.concatenate([d, f1], axis=1))
        return self.head.forward(d)

    def backward(self, grad):
        c2, c1 = self._split
        g = self.head.backward(grad)
        g = self.up1.backward(g)
        g, g_f1 = g[:, :-c1], g[:, -c1:]
        g = self.up2.backward(g)
        g, g_f2 = g[:, :-c2], g[:, -c2:]
        g_f3 = self.up3.backward(g)
        g_f2 = g_f2 + self.stage3.backward(g_f3)
        g_f1 = g_f1 + self.pool.backward(self.stage2.backward(g_f2))
        return self.stem.backward(g_f1)

    def state_arrays(self):
        """Parameters in declaration order followed by BatchNorm running stats."""
        return [p.value for p in self.parameters()] + list(self.buffers())

    def copy_state(self):
        return [a.copy() for a in self.state_arrays()]

    def load_state(self, arrays):
        targets = self.state_arrays()
        if len(arrays) != len(targets):
            raise FormatError(f"expected {len(targets)} arrays, got {len(arrays)}")
        for dst, src in zip(targets, arrays):
            if dst.shape != np.shape(src):
                raise FormatError(f"array shape {np.shape(src)} != {dst.shape}")
            dst[...] = src

    def zero_(self):
        for a in self.state_arrays():
            a[...] = 0.0
        return self


def _batch_input(config: EdnConfig, z_T, I):
    z_T = np.asarray(z_T, dtype=np.float64)
    I = np.asarray(I, dtype=np.float64)
    shape = config.latent_shape
    if z_T.shape[-3:] != shape:
        raise DimensionError(f"noise shape {z_T.shape} does not end in latent shape {shape}")
    if I.shape != shape and I.shape != z_T.shape:
        raise DimensionError(f"reference shape {I.shape} incompatible with noise {z_T.shape}")
    lead = z_T.shape[:-3]
    zb = z_T.reshape((-1,) + shape)
    Ib = np.broadcast_to(I, z_T.shape).reshape((-1,) + shape)
    return np.concatenate([zb / config.scale, Ib], axis=1), lead


def edn_forward(model: EdnModel, z_T, I):
    """Predicted semantic shift ``S_pred`` for ``z_T``.

    ``z_T`` may be a single latent ``(C, h, w)`` or carry leading axes
    (views, batch); ``I`` is broadcast across them.
    """
    x, lead = _batch_input(model.config, z_T, I)
    out = model.forward(x) * model.config.scale
    return out.reshape(lead + model.config.latent_shape)


def apply_edn(model: EdnModel, z_T, I):
    """High-quality noise ``z_T + S_pred`` (inference mode)."""
    was = model.training
    model.eval()
    try:
        return np.asarray(z_T, dtype=np.float64) + edn_forward(model, z_T, I)
    finally:
        model.train(was)


def smooth_l1(pred, target, beta=1.0):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} vs target {target.shape}")
    d = np.abs(pred - target)
    return float(np.mean(np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)))


def smooth_l1_grad(pred, target, beta=1.0):
    d = pred - target
    return np.where(np.abs(d) < beta, d / beta, np.sign(d)) / d.size


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    batch_size: int = 8
    decay: float = 0.8
    decay_every: int = 200
    epochs: int = 600
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        for name in ("lr", "batch_size", "decay", "decay_every", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def lr_at(self, epoch):
        """Learning rate for zero-based ``epoch``."""
        return step_decay_lr(self.lr, epoch, self.decay, self.decay_every)


@dataclass
class EpochLog:
    epoch: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    model: EdnModel
    history: list = field(default_factory=list)

    @property
    def losses(self):
        return np.array([h.loss for h in self.history])


def training_arrays(pairs):
    """Flatten pairs into per-view samples ``(z, I, S_gt)``."""
    zs, Is, Ss = [], [], []
    for p in pairs:
        z = np.asarray(p.z_T, dtype=np.float64)
        lat = z.shape[-3:]
        zb = z.reshape((-1,) + lat)
        zs.append(zb)
        Is.append(np.broadcast_to(p.I, zb.shape))
        Ss.append((np.asarray(p.z_tilde_T, dtype=np.float64) - z).reshape((-1,) + lat))
    return np.concatenate(zs), np.concatenate(Is), np.concatenate(Ss)


def train_edn(pairs, model: EdnModel, config: TrainConfig = TrainConfig(), on_epoch=None):
    """Fit ``model`` so that ``edn_forward(z_T, I)`` matches ``z_tilde_T - z_T``.

    Works in scaled units: the network output is compared with
    ``S_gt / scale`` so the loss and step sizes do not depend on the noise
    magnitude. Reported losses are in those units.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty training set")
    z, I, S = training_arrays(pairs)
    scale = model.config.scale
    x = np.concatenate([z / scale, I], axis=1)
    target = S / scale
    n = x.shape[0]
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.parameters(), lr=config.lr)
    model.train()
    result = TrainResult(model)
    last_good = model.copy_state()
    for epoch in range(config.epochs):
        opt.lr = config.lr_at(epoch)
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            out = model.forward(x[idx])
            loss = smooth_l1(out, target[idx])
            if not math.isfinite(loss):
                model.load_state(last_good)
                raise TrainingError(f"non-finite loss at epoch {epoch}; restored last good state")
            opt.zero_grad()
            model.backward(smooth_l1_grad(out, target[idx]))
            try:
                opt.step()
            except TrainingError:
                model.load_state(last_good)
                raise
            total += loss * idx.size
        entry = EpochLog(epoch, opt.lr, total / n)
        result.history.append(entry)
        last_good = model.copy_state()
        if on_epoch is not None:
            on_epoch(entry)
    model.eval()
    return result


def evaluate_loss(model: EdnModel, pairs):
    """Mean smooth-L1 (scaled units) of the model in inference mode."""
    z, I, S = training_arrays(pairs)
    scale = model.config.scale
    was = model.training
    model.eval()
    try:
        out = model.forward(np.concatenate([z / scale, I], axis=1))
    finally:
        model.train(was)
    return smooth_l1(out, S / scale)


def linear_task_pairs(count=64, shape=(4, 16, 16), smooth=1.0, kernel_scale=0.15, seed=0):
    """Pairs whose shift is a fixed 3x3 convolution of ``[z_T, I]``.

    The target is exactly representable by a linear map of the input, so a
    correct network and optimizer must drive the loss toward zero. Inputs are
    Gaussian-smoothed (periodic borders) and renormalized to unit std, which
    keeps the content recoverable after the stride-2 stem.
    Returns ``(pairs, kernel)``.
    """
    c = shape[0]
    rng = np.random.default_rng(seed)
    kernel = rng.standard_normal((c, 2 * c, 3, 3)) * kernel_scale
    pairs = []
    for i in range(count):
        x = rng.standard_normal((2 * c,) + tuple(shape[1:]))
        if smooth:
            x = gaussian_filter(x, (0, smooth, smooth), mode="wrap")
            x /= x.std()
        shift, _ = conv2d_forward(x[None], kernel, None, 1, 1)
        z, ref = x[:c], x[c:]
        pairs.append(NoisePair(z, z + shift[0], ref, i, 1, "linear-task", 0.0))
    return pairs, kernel


MAGIC = b"EDNM"
VERSION = 1


def save_checkpoint(model: EdnModel, path):
    """Write magic, version, JSON config block, then float32 LE arrays."""
    cfg = json.dumps(asdict(model.config), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(cfg)))
        fh.write(cfg)
        for arr in model.state_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> EdnModel:
    with open(path, "rb") as fh:
        data = fh.read()
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise FormatError(f"{path}: not an EDN checkpoint")
    version, n = struct.unpack("<HI", buf.read(6))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    cfg = json.loads(buf.read(n))
    model = EdnModel(EdnConfig(**cfg))
    arrays = []
    for target in model.state_arrays():
        nbytes = target.size * 4
        chunk = buf.read(nbytes)
        if len(chunk) != nbytes:
            raise FormatError(f"{path}: truncated parameter data")
        arrays.append(np.frombuffer(chunk, dtype="<f4").reshape(target.shape))
    if buf.read(1):
        raise FormatError(f"{path}: trailing bytes after parameters")
    model.load_state(arrays)
    model.eval()
    return model
