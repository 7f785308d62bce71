"""Learned feature planes, the decoder MLP, AdamW, and checkpoint I/O.

This is the numeric core: everything here is hand-rolled numpy with explicit
adjoints (no autodiff), dtype-generic so the same code path runs in float32
for training and float64 for finite-difference verification.

A FeaturePlane is a (height, width, channels) grid addressed by uv in [0,1]^2
with texel centers at ((i + 0.5) / width, (j + 0.5) / height). Bilinear fetch
blends the four surrounding texels; each axis either wraps periodically (WRAP)
or clamps to the edge texel (CLAMP). plane_fetch_backward scatters an output
gradient back onto at most four texels per sample with the same weights.

The decoder is a fixed-width MLP (default layer dims 32-32-32-32-3) with
LeakyReLU on hidden layers and a linear output layer unless
`output_activation` is set. Its forward here is the package's *reference*
evaluation kernel: reductions run over fixed-length axes in fixed-size row
chunks, so a row's result is bitwise independent of batch size, batch order
and thread count. The trainer keeps an equivalent BLAS fast path for bulk
optimization; the two are equivalence-tested.

Checkpoint container ("TPLN", little-endian):

    magic "TPLN" | u32 version=1
    3 plane headers (U, H, D): u32 width | u32 height | u32 channels
                               | u8 wrap_u | u8 wrap_v | u16 0
    u32 n_dims | n_dims * u32 layer dims | f32 leaky_slope
                               | u8 output_activation | 3 * u8 0
    raw float32 tensors, C-order: plane U (h,w,c), plane H, plane D,
                               then per layer: W (out,in), b (out)
    u32 n_blocks | blocks: 4-byte tag | u64 payload bytes | payload

    optional blocks: "GLUT" Gaussianization tables, "QPLN" synthesized plane
    (with its uv scale), "TRNS" optimizer state for training resume.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import (
    ArgumentError,
    CorruptionError,
    FormatError,
    VersionError,
)

CKPT_MAGIC = b"TPLN"
CKPT_VERSION = 1

# Reference-path row chunk: bounds temp memory and fixes reduction shapes.
_ROW_CHUNK = 8192


class WrapMode(IntEnum):
    CLAMP = 0
    WRAP = 1


@dataclass
class FeaturePlane:
    """A learnable 2D feature grid. data has shape (height, width, channels)."""

    data: np.ndarray
    wrap_u: WrapMode = WrapMode.WRAP
    wrap_v: WrapMode = WrapMode.WRAP

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ArgumentError("plane data must be (height, width, channels)")
        if min(self.data.shape) < 1:
            raise ArgumentError("plane dimensions must be >= 1")
        if not np.all(np.isfinite(self.data)):
            raise ArgumentError("plane holds non-finite values")
        self.wrap_u = WrapMode(self.wrap_u)
        self.wrap_v = WrapMode(self.wrap_v)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def astype(self, dtype) -> "FeaturePlane":
        return FeaturePlane(self.data.astype(dtype), self.wrap_u, self.wrap_v)


def _resolve_axis(coord, n, wrap, out_dtype):
    """Continuous texel coordinate -> (lo index, hi index, hi weight)."""
    lo = np.floor(coord)
    t = (coord - lo).astype(out_dtype, copy=False)
    lo = lo.astype(np.int64)
    hi = lo + 1
    if wrap == WrapMode.WRAP:
        lo %= n
        hi %= n
    else:
        np.clip(lo, 0, n - 1, out=lo)
        np.clip(hi, 0, n - 1, out=hi)
    return lo, hi, t


def bilinear_ingredients(plane: FeaturePlane, uv):
    """Flat corner indices and weights shared by fetch and its adjoint.

    Returns (idx, w): idx int64 (4, B) into the plane viewed as (h*w, c),
    w (4, B) in the promoted float dtype. Corner order: (y0,x0), (y0,x1),
    (y1,x0), (y1,x1).
    """
    uv = np.asarray(uv)
    if uv.shape[-1] != 2:
        raise ArgumentError("uv must have a trailing axis of 2")
    dtype = np.result_type(plane.data.dtype, uv.dtype, np.float32)
    flat_uv = uv.reshape(-1, 2)
    w_n, h_n = plane.width, plane.height
    x = flat_uv[..., 0].astype(dtype) * w_n - dtype.type(0.5)
    y = flat_uv[..., 1].astype(dtype) * h_n - dtype.type(0.5)
    x0, x1, tx = _resolve_axis(x, w_n, plane.wrap_u, dtype)
    y0, y1, ty = _resolve_axis(y, h_n, plane.wrap_v, dtype)
    one = dtype.type(1.0)
    idx = np.stack(
        [y0 * w_n + x0, y0 * w_n + x1, y1 * w_n + x0, y1 * w_n + x1]
    )
    w = np.stack(
        [(one - ty) * (one - tx), (one - ty) * tx, ty * (one - tx), ty * tx]
    )
    return idx, w


def plane_fetch(plane: FeaturePlane, uv) -> np.ndarray:
    """Bilinear fetch. uv (..., 2) -> feature vectors (..., channels).

    WRAP axes treat uv periodically (any real value is valid); CLAMP axes
    clamp to the edge texel row/column.
    """
    uv = np.asarray(uv)
    idx, w = bilinear_ingredients(plane, uv)
    flat = plane.data.reshape(-1, plane.channels)
    out = (
        flat[idx[0]] * w[0][:, None]
        + flat[idx[1]] * w[1][:, None]
        + flat[idx[2]] * w[2][:, None]
        + flat[idx[3]] * w[3][:, None]
    )
    return out.reshape(uv.shape[:-1] + (plane.channels,))


def plane_fetch_backward(plane: FeaturePlane, uv, grad_out) -> np.ndarray:
    """Adjoint of plane_fetch: scatter output gradients onto texels.

    grad_out (..., channels) pairs with uv (..., 2); returns an array shaped
    like plane.data. Each sample touches at most its four bilinear corners,
    weighted exactly as the forward fetch.
    """
    uv = np.asarray(uv)
    grad_out = np.asarray(grad_out)
    if grad_out.shape[-1] != plane.channels:
        raise ArgumentError("grad_out channel count does not match the plane")
    idx, w = bilinear_ingredients(plane, uv)
    g = grad_out.reshape(-1, plane.channels)
    dtype = np.result_type(w.dtype, g.dtype)
    n = plane.height * plane.width
    acc = np.zeros((n, plane.channels), dtype=dtype)
    scatter_corner_grads(acc, idx, w, g)
    return acc.reshape(plane.data.shape).astype(
        np.result_type(plane.data.dtype, dtype), copy=False
    )


def scatter_corner_grads(acc, idx, w, g):
    """acc[(h*w, c)] += sum over corners of w * g, via bincount.

    Texel/channel sums accumulate in sample order (bincount walks its input
    in order), so results do not depend on how this is chunked by channels.
    Corners whose weights are identically zero contribute nothing and are
    skipped; exact-hit corners (all weights 1) skip the multiply. Neither
    shortcut changes the accumulated values.
    """
    n, c = acc.shape
    acc_flat = acc.reshape(-1)
    chan = np.arange(c, dtype=np.int64)
    for k in range(4):
        wk = w[k]
        if not wk.any():
            continue
        contrib = g if np.all(wk == 1.0) else g * wk[:, None]
        flat_idx = (idx[k][:, None] * c + chan).ravel()
        acc_flat += np.bincount(flat_idx, weights=contrib.ravel(), minlength=n * c)


@dataclass
class MlpParams:
    """Dense decoder parameters. weights[i] is (out, in); biases[i] is (out,)."""

    weights: list
    biases: list
    leaky_slope: float = 0.01
    output_activation: bool = False

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ArgumentError("weights and biases must pair up, at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ArgumentError(f"layer {i} shapes inconsistent: {w.shape} / {b.shape}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ArgumentError(f"layer {i} input dim does not chain")

    @property
    def dims(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def astype(self, dtype) -> "MlpParams":
        return MlpParams(
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
            self.leaky_slope,
            self.output_activation,
        )


def leaky_relu(x, slope):
    x = np.asarray(x)
    if 0.0 <= slope <= 1.0:
        # max(x, slope*x) selects the same value as the branchy form here.
        return np.maximum(x, x * x.dtype.type(slope))
    return np.where(x > 0, x, x * slope)


def leaky_relu_grad(pre, slope):
    # Derivative at exactly 0 is defined as the negative-side slope.
    return np.where(pre > 0, pre.dtype.type(1.0), pre.dtype.type(slope))


def _dense_rows(x, w, b):
    """Row-stable dense layer: fixed-length reduction per output element."""
    return (x[:, None, :] * w[None, :, :]).sum(axis=2) + b


def mlp_forward(mlp: MlpParams, x, want_cache: bool = False):
    """Reference forward pass. x (..., in_dim) -> (..., out_dim).

    Row results are bitwise independent of batch composition: inputs are
    processed in fixed-size chunks and every reduction runs over a fixed
    axis length. With want_cache=True also returns (pre_acts, activations)
    for mlp_backward; the cache path is single-chunk and meant for tests
    and small batches.
    """
    x = np.asarray(x)
    squeeze = x.ndim == 1
    x2 = x.reshape(1, -1) if squeeze else x.reshape(-1, x.shape[-1])
    if x2.shape[1] != mlp.dims[0]:
        raise ArgumentError(f"input dim {x2.shape[1]} != mlp input {mlp.dims[0]}")

    if want_cache:
        pre, act = _forward_chunk(mlp, x2, True)
        y = act[-1]
        out = y[0] if squeeze else y.reshape(x.shape[:-1] + (y.shape[-1],))
        return out, (pre, act)

    pieces = []
    for start in range(0, x2.shape[0], _ROW_CHUNK):
        pieces.append(_forward_chunk(mlp, x2[start : start + _ROW_CHUNK], False))
    y = pieces[0] if len(pieces) == 1 else np.concatenate(pieces, axis=0)
    return y[0] if squeeze else y.reshape(x.shape[:-1] + (y.shape[-1],))


def _forward_chunk(mlp, x2, want_cache):
    slope = mlp.leaky_slope
    last = len(mlp.weights) - 1
    pre_acts, acts = [], [x2]
    h = x2
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = _dense_rows(h, w, b)
        h = leaky_relu(z, slope) if (i < last or mlp.output_activation) else z
        if want_cache:
            pre_acts.append(z)
            acts.append(h)
    if want_cache:
        return pre_acts, acts
    return h


def mlp_backward(mlp: MlpParams, cache, grad_y):
    """Backprop through the decoder.

    cache comes from mlp_forward(..., want_cache=True). Returns
    (weight_grads, bias_grads, grad_x) where the grads line up with
    mlp.weights / mlp.biases.
    """
    pre_acts, acts = cache
    grad_y = np.asarray(grad_y)
    delta = grad_y.reshape(pre_acts[-1].shape).copy()
    last = len(mlp.weights) - 1
    w_grads = [None] * len(mlp.weights)
    b_grads = [None] * len(mlp.weights)
    slope = mlp.leaky_slope
    for i in range(last, -1, -1):
        if i < last or mlp.output_activation:
            # Scale only the non-positive lanes in place; the positive lanes
            # would be multiplied by exactly 1 anyway.
            np.multiply(delta, slope, where=pre_acts[i] <= 0, out=delta)
        w_grads[i] = delta.T @ acts[i]
        b_grads[i] = delta.sum(axis=0)
        delta = delta @ mlp.weights[i]
    return w_grads, b_grads, delta


@dataclass
class TriplePlaneModel:
    """Spatial plane + two angular planes + shared decoder."""

    plane_u: FeaturePlane
    plane_h: FeaturePlane
    plane_d: FeaturePlane
    mlp: MlpParams

    def __post_init__(self):
        total = self.plane_u.channels + self.plane_h.channels + self.plane_d.channels
        if self.mlp.dims[0] != total:
            raise ArgumentError(
                f"decoder input dim {self.mlp.dims[0]} != plane channels {total}"
            )

    def params(self) -> dict:
        """Name -> array views, in the canonical checkpoint order."""
        out = {
            "plane_u": self.plane_u.data,
            "plane_h": self.plane_h.data,
            "plane_d": self.plane_d.data,
        }
        for i, (w, b) in enumerate(zip(self.mlp.weights, self.mlp.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def astype(self, dtype) -> "TriplePlaneModel":
        return TriplePlaneModel(
            self.plane_u.astype(dtype),
            self.plane_h.astype(dtype),
            self.plane_d.astype(dtype),
            self.mlp.astype(dtype),
        )


def init_model(
    u_size=(400, 400),
    u_channels: int = 16,
    hd_size=(20, 20),
    hd_channels: int = 8,
    hidden: int = 32,
    hidden_layers: int = 3,
    out_dim: int = 3,
    leaky_slope: float = 0.01,
    output_activation: bool = False,
    seed: int = 0,
) -> TriplePlaneModel:
    """Build a model with zero-mean uniform fan-in-scaled init, zero biases.

    The spatial plane wraps on both axes; the angular planes clamp the theta
    axis (first uv component) and wrap the periodic phi axis.
    """
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = float(np.sqrt(6.0 / fan_in))
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    uw, uh = int(u_size[0]), int(u_size[1])
    hw, hh = int(hd_size[0]), int(hd_size[1])
    plane_u = FeaturePlane(
        uniform((uh, uw, u_channels), u_channels), WrapMode.WRAP, WrapMode.WRAP
    )
    plane_h = FeaturePlane(
        uniform((hh, hw, hd_channels), hd_channels), WrapMode.CLAMP, WrapMode.WRAP
    )
    plane_d = FeaturePlane(
        uniform((hh, hw, hd_channels), hd_channels), WrapMode.CLAMP, WrapMode.WRAP
    )
    dims = [u_channels + 2 * hd_channels] + [hidden] * hidden_layers + [out_dim]
    weights = [uniform((dims[i + 1], dims[i]), dims[i]) for i in range(len(dims) - 1)]
    biases = [np.zeros(dims[i + 1], dtype=np.float32) for i in range(len(dims) - 1)]
    return TriplePlaneModel(
        plane_u,
        plane_h,
        plane_d,
        MlpParams(weights, biases, leaky_slope, output_activation),
    )


@dataclass
class AdamWState:
    """First/second moment estimates plus the shared step counter."""

    step: int
    m: dict
    v: dict

    @staticmethod
    def zeros_like(params: dict) -> "AdamWState":
        return AdamWState(
            step=0,
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adamw_step(
    params: dict,
    grads: dict,
    state: AdamWState,
    lr,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    decay_params=(),
):
    """One decoupled-weight-decay Adam step, in place on `params`.

    lr is a float or a {name: float} dict. Decay multiplies the parameter by
    (1 - lr * weight_decay) *before* the moment update and applies only to
    names listed in decay_params. Elementwise throughout, so results do not
    depend on how parameters are grouped into arrays.
    """
    if set(params) != set(grads):
        raise ArgumentError("params and grads must hold the same names")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    decay_set = set(decay_params)
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ArgumentError(f"grad shape mismatch for {name}")
        lr_p = float(lr[name]) if isinstance(lr, dict) else float(lr)
        if weight_decay and name in decay_set:
            p *= 1.0 - lr_p * weight_decay
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr_p * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ---------------------------------------------------------------------------
# Checkpoint container


def _pack_plane_header(plane: FeaturePlane) -> bytes:
    return struct.pack(
        "<IIIBBH",
        plane.width,
        plane.height,
        plane.channels,
        int(plane.wrap_u),
        int(plane.wrap_v),
        0,
    )


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise CorruptionError("checkpoint truncated")
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f32(self, count: int) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4", count=count).copy()


def _read_plane_header(r: _Reader):
    w, h, c, wu, wv, _ = r.unpack("<IIIBBH")
    if min(w, h, c) < 1:
        raise CorruptionError("plane header with zero dimension")
    try:
        return w, h, c, WrapMode(wu), WrapMode(wv)
    except ValueError as e:
        raise CorruptionError(f"bad wrap mode in plane header: {e}") from e


def save_checkpoint(path, model: TriplePlaneModel, gauss=None, quilted=None,
                    quilted_scale: float = 1.0, train_state=None) -> None:
    """Write a TPLN container.

    gauss: optional synthesis.GaussianizedExemplar frozen into a GLUT block.
    quilted: optional FeaturePlane (a synthesized spatial plane) with its
        uv scale, stored as a QPLN block.
    train_state: optional (epoch_completed, AdamWState) for exact resume.
    """
    for name, p in model.params().items():
        if not np.all(np.isfinite(p)):
            raise ArgumentError(f"refusing to checkpoint non-finite parameter {name}")
    parts = [CKPT_MAGIC, struct.pack("<I", CKPT_VERSION)]
    for plane in (model.plane_u, model.plane_h, model.plane_d):
        parts.append(_pack_plane_header(plane))
    dims = model.mlp.dims
    parts.append(struct.pack("<I", len(dims)))
    parts.append(struct.pack(f"<{len(dims)}I", *dims))
    parts.append(
        struct.pack("<fB3x", model.mlp.leaky_slope, int(model.mlp.output_activation))
    )
    for p in model.params().values():
        parts.append(np.ascontiguousarray(p, dtype="<f4").tobytes())

    blocks = []
    if gauss is not None:
        blocks.append((b"GLUT", _pack_gauss_block(gauss)))
    if quilted is not None:
        blocks.append((b"QPLN", _pack_quilted_block(quilted, quilted_scale)))
    if train_state is not None:
        epoch, opt = train_state
        blocks.append((b"TRNS", _pack_train_block(model, epoch, opt)))
    parts.append(struct.pack("<I", len(blocks)))
    for tag, payload in blocks:
        parts.append(tag + struct.pack("<Q", len(payload)) + payload)

    with open(path, "wb") as f:
        f.write(b"".join(parts))


@dataclass
class CheckpointBundle:
    model: TriplePlaneModel
    gauss: object = None
    quilted: FeaturePlane = None
    quilted_scale: float = 1.0
    epoch: int = None
    opt_state: AdamWState = None


def load_checkpoint(path) -> CheckpointBundle:
    """Read a TPLN container, validating structure and finiteness."""
    with open(path, "rb") as f:
        buf = f.read()
    r = _Reader(buf)
    if r.take(4) != CKPT_MAGIC:
        raise FormatError("not a TPLN checkpoint (bad magic)")
    (version,) = r.unpack("<I")
    if version != CKPT_VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    headers = [_read_plane_header(r) for _ in range(3)]
    (n_dims,) = r.unpack("<I")
    if not 2 <= n_dims <= 64:
        raise CorruptionError(f"implausible layer-dim count {n_dims}")
    dims = list(r.unpack(f"<{n_dims}I"))
    slope, out_act = r.unpack("<fB3x")

    def take_plane(hdr, wrap_default=None):
        w, h, c, wu, wv = hdr
        data = r.f32(w * h * c).reshape(h, w, c)
        if not np.all(np.isfinite(data)):
            raise CorruptionError("plane payload holds non-finite values")
        return FeaturePlane(data, wu, wv)

    planes = [take_plane(h) for h in headers]
    weights, biases = [], []
    for i in range(n_dims - 1):
        weights.append(r.f32(dims[i + 1] * dims[i]).reshape(dims[i + 1], dims[i]))
        biases.append(r.f32(dims[i + 1]))
    for a in weights + biases:
        if not np.all(np.isfinite(a)):
            raise CorruptionError("decoder payload holds non-finite values")
    model = TriplePlaneModel(
        planes[0], planes[1], planes[2],
        MlpParams(weights, biases, float(slope), bool(out_act)),
    )

    bundle = CheckpointBundle(model=model)
    (n_blocks,) = r.unpack("<I")
    for _ in range(n_blocks):
        tag = r.take(4)
        (length,) = r.unpack("<Q")
        payload = r.take(length)
        if tag == b"GLUT":
            bundle.gauss = _unpack_gauss_block(payload)
        elif tag == b"QPLN":
            bundle.quilted, bundle.quilted_scale = _unpack_quilted_block(payload)
        elif tag == b"TRNS":
            bundle.epoch, bundle.opt_state = _unpack_train_block(payload, model)
        # Unknown tags are skipped: forward-compatible readers.
    return bundle


def _pack_quilted_block(plane: FeaturePlane, uv_scale: float) -> bytes:
    return (
        _pack_plane_header(plane)
        + struct.pack("<f", float(uv_scale))
        + np.ascontiguousarray(plane.data, dtype="<f4").tobytes()
    )


def _unpack_quilted_block(payload: bytes):
    r = _Reader(payload)
    w, h, c, wu, wv = _read_plane_header(r)
    (scale,) = r.unpack("<f")
    data = r.f32(w * h * c).reshape(h, w, c)
    return FeaturePlane(data, wu, wv), float(scale)


def _pack_gauss_block(gauss) -> bytes:
    gp, sp = gauss.gauss_plane, gauss.source_plane
    c = gp.channels
    lut_len = gauss.forward_lut.shape[1]
    parts = [
        struct.pack("<II", lut_len, c),
        _pack_plane_header(gp),
        np.ascontiguousarray(gauss.value_min, dtype="<f4").tobytes(),
        np.ascontiguousarray(gauss.value_max, dtype="<f4").tobytes(),
        np.ascontiguousarray(gauss.forward_lut, dtype="<f4").tobytes(),
        np.ascontiguousarray(gauss.inverse_lut, dtype="<f4").tobytes(),
        np.ascontiguousarray(gp.data, dtype="<f4").tobytes(),
        np.ascontiguousarray(sp.data, dtype="<f4").tobytes(),
    ]
    return b"".join(parts)


def _unpack_gauss_block(payload: bytes):
    from .synthesis import GaussianizedExemplar  # local: avoids a module cycle

    r = _Reader(payload)
    lut_len, c = r.unpack("<II")
    w, h, c2, wu, wv = _read_plane_header(r)
    if c2 != c:
        raise CorruptionError("gauss block channel mismatch")
    vmin = r.f32(c)
    vmax = r.f32(c)
    fwd = r.f32(c * lut_len).reshape(c, lut_len)
    inv = r.f32(c * lut_len).reshape(c, lut_len)
    gp = FeaturePlane(r.f32(w * h * c).reshape(h, w, c), wu, wv)
    sp = FeaturePlane(r.f32(w * h * c).reshape(h, w, c), wu, wv)
    return GaussianizedExemplar(
        source_plane=sp,
        gauss_plane=gp,
        value_min=vmin,
        value_max=vmax,
        forward_lut=fwd,
        inverse_lut=inv,
    )


def _pack_train_block(model: TriplePlaneModel, epoch: int, opt: AdamWState) -> bytes:
    parts = [struct.pack("<IIQ", int(epoch), 0, int(opt.step))]
    for name in model.params():
        parts.append(np.ascontiguousarray(opt.m[name], dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(opt.v[name], dtype="<f4").tobytes())
    return b"".join(parts)


def _unpack_train_block(payload: bytes, model: TriplePlaneModel):
    r = _Reader(payload)
    epoch, _, step = r.unpack("<IIQ")
    m, v = {}, {}
    for name, p in model.params().items():
        m[name] = r.f32(p.size).reshape(p.shape)
        v[name] = r.f32(p.size).reshape(p.shape)
    return int(epoch), AdamWState(step=int(step), m=m, v=v)
