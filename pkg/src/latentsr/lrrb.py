"""Latent residual refinement block.

A small dense-block network maps ``concat(z_L, r)`` to a correction ``dr`` of
the coarse residual ``r``; the refined latent is ``z_L - (r + dr)``. Forward
and backward passes are written out by hand on numpy arrays so that every
gradient can be checked against finite differences.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, FormatError, ParameterError, ShapeError
from .spatial_filters import box_blur3
from .tensor_io import DTYPE, tensor_read_ft32, tensor_write_ft32

LAYERS_PER_BLOCK = 4
INIT_RANGE = 0.05
MANIFEST = "manifest.txt"
# data range of the built-in toy task; at unit scale 200 plain GD steps at
# lr=1e-2 barely move the zero-initialized output projection
TASK_AMPLITUDE = 4.0


@dataclass
class Conv2dParams:
    """Same-padded convolution: ``weight`` is Cout x Cin x k x k, ``bias`` has Cout entries."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ShapeError(f"kernel must be Cout x Cin x k x k, got {self.weight.shape}")
        if self.weight.shape[2] not in (1, 3):
            raise ShapeError(f"kernel size must be 1 or 3, got {self.weight.shape[2]}")
        self.bias = np.asarray(self.bias).reshape(-1)
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ShapeError(f"bias has {self.bias.shape[0]} entries, kernel has {self.weight.shape[0]} outputs")

    @property
    def k(self):
        return self.weight.shape[2]

    @property
    def c_in(self):
        return self.weight.shape[1]

    @property
    def c_out(self):
        return self.weight.shape[0]


@dataclass
class DenseBlockParams:
    layers: list
    fuse: Conv2dParams


@dataclass
class LrrbParams:
    conv_in: Conv2dParams
    blocks: list
    conv_out: Conv2dParams
    residual_scale: float = 0.2
    slope: float = 0.2
    seed: int = 0

    @property
    def channels(self):
        return self.conv_out.c_out

    @property
    def features(self):
        return self.conv_in.c_out

    @property
    def growth(self):
        return self.blocks[0].layers[0].c_out if self.blocks else 0

    def named(self):
        """Parameter arrays keyed by their serialization names (insertion ordered)."""
        out = {"conv_in.w": self.conv_in.weight, "conv_in.b": self.conv_in.bias}
        for i, blk in enumerate(self.blocks):
            for j, layer in enumerate(blk.layers):
                out[f"block{i}.layer{j}.w"] = layer.weight
                out[f"block{i}.layer{j}.b"] = layer.bias
            out[f"block{i}.fuse.w"] = blk.fuse.weight
            out[f"block{i}.fuse.b"] = blk.fuse.bias
        out["conv_out.w"] = self.conv_out.weight
        out["conv_out.b"] = self.conv_out.bias
        return out

    def copy(self):
        def cp(c):
            return Conv2dParams(c.weight.copy(), c.bias.copy())

        return LrrbParams(
            cp(self.conv_in),
            [DenseBlockParams([cp(l) for l in b.layers], cp(b.fuse)) for b in self.blocks],
            cp(self.conv_out),
            self.residual_scale,
            self.slope,
            self.seed,
        )

    def astype(self, dtype):
        p = self

        def cast(c):
            return Conv2dParams(c.weight.astype(dtype), c.bias.astype(dtype))

        return LrrbParams(
            cast(p.conv_in),
            [DenseBlockParams([cast(l) for l in b.layers], cast(b.fuse)) for b in p.blocks],
            cast(p.conv_out),
            p.residual_scale,
            p.slope,
            p.seed,
        )


@dataclass
class RefinementState:
    z_l: np.ndarray
    r: np.ndarray
    delta_r: np.ndarray
    r_prime: np.ndarray
    z_r: np.ndarray


# ---------------------------------------------------------------------------
# convolution primitives


def _batched(x):
    x = np.asarray(x)
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected C x H x W or N x C x H x W, got shape {x.shape}")


def _im2col(x, k):
    n, c, h, w = x.shape
    if k == 1:
        return x.reshape(n, c, h * w)
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = np.empty((n, c, k, k, h, w), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            cols[:, :, di, dj] = xp[:, :, di : di + h, dj : dj + w]
    return cols.reshape(n, c * k * k, h * w)


def _col2im(cols, c, k, h, w):
    n = cols.shape[0]
    if k == 1:
        return cols.reshape(n, c, h, w)
    p = k // 2
    cols = cols.reshape(n, c, k, k, h, w)
    xp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=cols.dtype)
    for di in range(k):
        for dj in range(k):
            xp[:, :, di : di + h, dj : dj + w] += cols[:, :, di, dj]
    return xp[:, :, p : p + h, p : p + w]


def conv2d_forward(x, p):
    """Zero-padded same-size cross-correlation plus bias.

    Accepts C x H x W or N x C x H x W input and returns the same rank.
    """
    xb, single = _batched(x)
    n, c, h, w = xb.shape
    if c != p.c_in:
        raise ShapeError(f"input has {c} channels, kernel expects {p.c_in}")
    cols = _im2col(xb, p.k)
    out = np.matmul(p.weight.reshape(p.c_out, -1), cols) + p.bias[None, :, None]
    out = out.reshape(n, p.c_out, h, w)
    return out[0] if single else out


def conv2d_backward(x, p, grad_out):
    """Gradients ``(grad_x, grad_weight, grad_bias)`` of :func:`conv2d_forward`."""
    xb, single = _batched(x)
    gb, _ = _batched(grad_out)
    n, c, h, w = xb.shape
    if c != p.c_in:
        raise ShapeError(f"input has {c} channels, kernel expects {p.c_in}")
    if gb.shape != (n, p.c_out, h, w):
        raise ShapeError(f"grad_out shape {gb.shape} does not match forward output {(n, p.c_out, h, w)}")
    cols = _im2col(xb, p.k)
    g = gb.reshape(n, p.c_out, h * w)
    grad_w = np.einsum("nop,nqp->oq", g, cols).reshape(p.weight.shape)
    grad_b = g.sum(axis=(0, 2))
    grad_cols = np.matmul(p.weight.reshape(p.c_out, -1).T, g)
    grad_x = _col2im(grad_cols, c, p.k, h, w)
    return (grad_x[0] if single else grad_x), grad_w, grad_b


def leaky_relu(x, slope):
    return np.where(x >= 0, x, slope * x)


def _leaky_relu_grad(pre, g, slope):
    return np.where(pre >= 0, g, slope * g)


# ---------------------------------------------------------------------------
# dense block and full network


def _dense_block_forward(h, blk, scale, slope):
    feats = [h]
    pres = []
    for layer in blk.layers:
        inp = np.concatenate(feats, axis=1)
        pre = conv2d_forward(inp, layer)
        pres.append(pre)
        feats.append(leaky_relu(pre, slope))
    cat = np.concatenate(feats, axis=1)
    fused = conv2d_forward(cat, blk.fuse)
    return h + scale * fused, (feats, pres, cat)


def _dense_block_backward(g_out, blk, cache, scale, slope):
    feats, pres, cat = cache
    grads = {}
    g_cat, gw, gb = conv2d_backward(cat, blk.fuse, scale * g_out)
    grads["fuse"] = (gw, gb)
    widths = [f.shape[1] for f in feats]
    offsets = np.cumsum([0] + widths)
    g_feats = [g_cat[:, offsets[i] : offsets[i + 1]].copy() for i in range(len(feats))]
    layer_grads = [None] * len(blk.layers)
    for j in reversed(range(len(blk.layers))):
        g_pre = _leaky_relu_grad(pres[j], g_feats[j + 1], slope)
        inp = np.concatenate(feats[: j + 1], axis=1)
        g_inp, gw, gb = conv2d_backward(inp, blk.layers[j], g_pre)
        layer_grads[j] = (gw, gb)
        for i in range(j + 1):
            g_feats[i] += g_inp[:, offsets[i] : offsets[i + 1]]
    grads["layers"] = layer_grads
    # identity skip plus the dense path into the block input
    return g_out + g_feats[0], grads


def dense_block_forward(x, blk, residual_scale=0.2, slope=0.2):
    """Four LeakyReLU 3x3 layers with dense concatenation, fused by 1x1, scaled residual.

    ``x`` is F x H x W (or batched); returns a tensor of the same shape.
    """
    xb, single = _batched(x)
    if xb.shape[1] != blk.layers[0].c_in:
        raise ShapeError(f"input width {xb.shape[1]} does not match block width {blk.layers[0].c_in}")
    if residual_scale == 0:
        return np.array(x, copy=True)
    out, _ = _dense_block_forward(xb, blk, residual_scale, slope)
    return out[0] if single else out


def _check_pair(z_l, r):
    z_l, r = np.asarray(z_l), np.asarray(r)
    if z_l.shape != r.shape:
        raise ShapeError(f"z_L {z_l.shape} and r {r.shape} differ in shape")
    return z_l, r


def _forward(z_l, r, params):
    zb, single = _batched(z_l)
    rb, _ = _batched(r)
    if zb.shape[1] != params.channels or 2 * zb.shape[1] != params.conv_in.c_in:
        raise ShapeError(f"latent has {zb.shape[1]} channels, params expect {params.channels}")
    x0 = np.concatenate([zb, rb], axis=1)
    h = conv2d_forward(x0, params.conv_in)
    caches = []
    hs = [h]
    for blk in params.blocks:
        h, cache = _dense_block_forward(h, blk, params.residual_scale, params.slope)
        caches.append(cache)
        hs.append(h)
    out = conv2d_forward(h, params.conv_out)
    return out, (x0, hs, caches), single


def lrrb_forward(z_l, r, params):
    """Residual correction ``dr = conv_out(blocks(conv_in(concat(z_L, r))))``."""
    z_l, r = _check_pair(z_l, r)
    out, _, single = _forward(z_l, r, params)
    return out[0] if single else out


def lrrb_backward(z_l, r, params, grad_out):
    """Parameter gradients of ``sum(grad_out * lrrb_forward(z_l, r, params))``.

    Returns a dict keyed like :meth:`LrrbParams.named`.
    """
    z_l, r = _check_pair(z_l, r)
    out, (x0, hs, caches), _ = _forward(z_l, r, params)
    g, _ = _batched(grad_out)
    if g.shape != out.shape:
        raise ShapeError(f"grad_out shape {g.shape} does not match output {out.shape}")
    grads = {}
    g_h, gw, gb = conv2d_backward(hs[-1], params.conv_out, g)
    grads["conv_out.w"], grads["conv_out.b"] = gw, gb
    block_grads = [None] * len(params.blocks)
    for i in reversed(range(len(params.blocks))):
        g_h, block_grads[i] = _dense_block_backward(
            g_h, params.blocks[i], caches[i], params.residual_scale, params.slope
        )
    _, gw, gb = conv2d_backward(x0, params.conv_in, g_h)
    ordered = {"conv_in.w": gw, "conv_in.b": gb}
    for i, bg in enumerate(block_grads):
        for j, (lw, lb) in enumerate(bg["layers"]):
            ordered[f"block{i}.layer{j}.w"] = lw
            ordered[f"block{i}.layer{j}.b"] = lb
        ordered[f"block{i}.fuse.w"], ordered[f"block{i}.fuse.b"] = bg["fuse"]
    ordered.update(grads)
    return ordered


def refine(z_l, r, params):
    """Apply the refinement: ``r' = r + dr`` and ``z_r = z_L - r'``."""
    z_l, r = _check_pair(z_l, r)
    delta = lrrb_forward(z_l, r, params).astype(z_l.dtype)
    r_prime = r + delta
    return RefinementState(z_l, r, delta, r_prime, z_l - r_prime)


# ---------------------------------------------------------------------------
# construction and serialization


def _uniform_conv(rng, c_out, c_in, k, dtype, zero=False):
    if zero:
        w = np.zeros((c_out, c_in, k, k), dtype=dtype)
    else:
        w = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(c_out, c_in, k, k)).astype(dtype)
    return Conv2dParams(w, np.zeros(c_out, dtype=dtype))


def init_params(channels=4, features=32, growth=16, n_blocks=2, residual_scale=0.2, slope=0.2, seed=0, dtype=DTYPE):
    """Seeded parameters with a zero final projection (so ``dr == 0`` initially)."""
    if min(channels, features, growth) < 1 or n_blocks < 0:
        raise ParameterError("channels, features and growth must be >= 1, n_blocks >= 0")
    rng = np.random.default_rng(seed)
    conv_in = _uniform_conv(rng, features, 2 * channels, 1, dtype)
    blocks = []
    for _ in range(n_blocks):
        layers = [
            _uniform_conv(rng, growth, features + j * growth, 3, dtype) for j in range(LAYERS_PER_BLOCK)
        ]
        fuse = _uniform_conv(rng, features, features + LAYERS_PER_BLOCK * growth, 1, dtype)
        blocks.append(DenseBlockParams(layers, fuse))
    conv_out = _uniform_conv(rng, channels, features, 1, dtype, zero=True)
    return LrrbParams(conv_in, blocks, conv_out, residual_scale, slope, seed)


def with_named(params, arrays):
    """Copy of ``params`` with arrays replaced from a ``named()``-style dict."""
    p = params.copy()

    def conv(prefix):
        return Conv2dParams(np.array(arrays[f"{prefix}.w"]), np.array(arrays[f"{prefix}.b"]))

    p.conv_in = conv("conv_in")
    p.conv_out = conv("conv_out")
    p.blocks = [
        DenseBlockParams(
            [conv(f"block{i}.layer{j}") for j in range(len(b.layers))],
            conv(f"block{i}.fuse"),
        )
        for i, b in enumerate(params.blocks)
    ]
    return p


def save_params(params, directory):
    """Write every parameter as an FT32 file plus a ``manifest.txt`` of hyper-parameters.

    Biases are stored as rank-2 ``Cout x 1`` tensors since FT32 has no rank 1.
    """
    os.makedirs(directory, exist_ok=True)
    for name, arr in params.named().items():
        data = arr.reshape(-1, 1) if arr.ndim == 1 else arr
        tensor_write_ft32(data, os.path.join(directory, name))
    manifest = (
        f"channels={params.channels}\n"
        f"features={params.features}\n"
        f"growth={params.growth}\n"
        f"blocks={len(params.blocks)}\n"
        f"residual_scale={params.residual_scale!r}\n"
        f"slope={params.slope!r}\n"
        f"seed={params.seed}\n"
    )
    with open(os.path.join(directory, MANIFEST), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(manifest)


def load_params(directory):
    from .config import parse_kv

    path = os.path.join(directory, MANIFEST)
    try:
        with open(path, encoding="utf-8") as fh:
            meta = parse_kv(fh.read(), path)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read {path}: {exc.strerror}", path) from exc
    try:
        skeleton = init_params(
            channels=int(meta["channels"]),
            features=int(meta["features"]),
            growth=int(meta["growth"]),
            n_blocks=int(meta["blocks"]),
            residual_scale=float(meta["residual_scale"]),
            slope=float(meta["slope"]),
            seed=int(meta["seed"]),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: malformed manifest ({exc})") from exc
    arrays = {}
    for name, ref in skeleton.named().items():
        t = tensor_read_ft32(os.path.join(directory, name))
        if t.size != ref.size or (ref.ndim == 4 and t.shape != ref.shape):
            raise FormatError(f"{name}: shape {t.shape} does not match manifest ({ref.shape})")
        arrays[name] = t.reshape(ref.shape)
    return with_named(skeleton, arrays)


# ---------------------------------------------------------------------------
# toy training


def synthetic_task(n_samples=8, channels=4, size=8, seed=0, amplitude=TASK_AMPLITUDE):
    """Samples ``(z_L, r, target)`` where ``target = blur3x3(r) - r`` per channel."""
    rng = np.random.default_rng(seed)
    data = []
    for _ in range(n_samples):
        z_l = rng.uniform(-amplitude, amplitude, size=(channels, size, size)).astype(DTYPE)
        r = rng.uniform(-amplitude, amplitude, size=(channels, size, size)).astype(DTYPE)
        target = np.stack([box_blur3(r[c]) for c in range(channels)]) - r
        data.append((z_l, r, target.astype(DTYPE)))
    return data


def _stack(dataset):
    z = np.stack([d[0] for d in dataset])
    r = np.stack([d[1] for d in dataset])
    t = np.stack([d[2] for d in dataset])
    if not (z.shape == r.shape == t.shape):
        raise ShapeError("dataset samples must share one shape")
    return z, r, t


def mse_loss_and_grads(params, z, r, target):
    pred = lrrb_forward(z, r, params)
    diff = pred.astype(np.float64) - target
    loss = float(np.mean(diff * diff))
    g = (2.0 / diff.size) * diff
    grads = lrrb_backward(z, r, params, g.astype(pred.dtype))
    return loss, grads


@dataclass
class TrainResult:
    params: LrrbParams
    losses: list = field(default_factory=list)

    @property
    def ratio(self):
        """Final over initial loss (1.0 when the initial loss is already zero)."""
        if self.losses[0] == 0:
            return 1.0
        return self.losses[-1] / self.losses[0]


def lrrb_train_toy(dataset, params, steps=200, lr=1e-2):
    """Full-batch gradient descent on the MSE between ``dr`` and the target.

    ``losses`` holds ``steps + 1`` values: the loss before each update and
    the loss after the final one. The input ``params`` are not modified.
    """
    if lr <= 0:
        raise ParameterError(f"lr must be > 0, got {lr}")
    z, r, t = _stack(dataset)
    p = params.copy()
    arrays = p.named()
    losses = []
    for step in range(steps + 1):
        # overflow shows up as a non-finite loss, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = mse_loss_and_grads(p, z, r, t)
        if not np.isfinite(loss):
            raise DivergenceError(step, loss)
        losses.append(loss)
        if step == steps:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            for name, arr in arrays.items():
                arr -= np.asarray(lr * grads[name], dtype=arr.dtype)
    return TrainResult(p, losses)
