"""Dynamic by-example synthesis over a trained spatial feature plane.

The trained spatial plane is a small exemplar; these operations extend it to
arbitrarily large virtual extents:

  * REPEAT        periodic tiling of the exemplar (the baseline),
  * HIST_BLEND    per-query histogram-preserving blending on a random
                  equilateral-triangle lattice,
  * HEX_TILE      the same machinery on hexagonal cells with sharpened
                  partition-of-unity weights,
  * QUILTED       offline patch quilting into one big plane (storage baseline).

Histogram-preserving blending works channel-wise in a Gaussianized domain:
each exemplar channel is rank-mapped onto an N(0, 1) histogram, blended as
g* = sum(w_i * G_i) / sqrt(sum(w_i^2)) (variance-preserving for normalized
inputs), then mapped back through a monotone inverse lookup table, so the
synthesized channel keeps the exemplar's value histogram.

The lattice hash is splitmix64 over (lattice i, lattice j, seed): process
independent, thread independent, reproducible everywhere.

All per-query paths here are elementwise or fixed-length reductions, so
results are bitwise independent of batch composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import ndtri

from .errors import ArgumentError, ConfigError
from .neural_core import FeaturePlane, WrapMode, plane_fetch

SQRT3 = math.sqrt(3.0)

DEFAULT_GRID_SCALE = 0.25
DEFAULT_LUT_SIZE = 4096
DEFAULT_HEX_SHARPNESS = 7.0


class SynthesisMode(Enum):
    REPEAT = "repeat"
    HIST_BLEND = "hist"
    HEX_TILE = "hex"
    QUILTED = "quilt"


@dataclass
class SynthesisParams:
    """How positional features are produced for queries outside [0, 1)^2.

    tileable_border None picks min(plane dims) // 16; 0 disables the
    tileable preprocessing of the exemplar before Gaussianization.
    """

    mode: SynthesisMode = SynthesisMode.REPEAT
    grid_scale: float = DEFAULT_GRID_SCALE
    seed: int = 0
    hex_sharpness: float = DEFAULT_HEX_SHARPNESS
    lut_size: int = DEFAULT_LUT_SIZE
    tileable_border: int = None
    quilted_plane: FeaturePlane = None
    quilted_scale: float = 1.0

    def __post_init__(self):
        self.mode = SynthesisMode(self.mode)
        if self.grid_scale <= 0:
            raise ConfigError("grid_scale must be > 0")
        if self.hex_sharpness < 1:
            raise ConfigError("hex_sharpness must be >= 1")
        if self.lut_size < 2:
            raise ConfigError("lut_size must be >= 2")
        if self.quilted_scale <= 0:
            raise ConfigError("quilted_scale must be > 0")


# ---------------------------------------------------------------------------
# Tileable preprocessing


def make_tileable(plane: FeaturePlane, border: int) -> FeaturePlane:
    """Cross-fade a border band with the half-period translate of the plane.

    Within `border` texels of an edge the plane is linearly faded into its
    half-period roll along that axis (fade weight 1 at the outermost texel,
    falling to 0 at distance `border`), so the two wrap-adjacent edge rows
    become neighbouring interior texels of the original and the wrap seam
    disappears. Interior content (beyond the band) is untouched. border = 0
    returns the plane unchanged.
    """
    if border < 0:
        raise ArgumentError("border must be >= 0")
    if border == 0:
        return FeaturePlane(plane.data.copy(), plane.wrap_u, plane.wrap_v)
    if 2 * border >= min(plane.width, plane.height):
        raise ArgumentError(
            f"border {border} too large for a {plane.width}x{plane.height} plane"
        )
    data = plane.data.astype(np.float64)
    for axis in (1, 0):  # u (width) first, then v (height)
        n = data.shape[axis]
        shifted = np.roll(data, n // 2, axis=axis)
        j = np.arange(n)
        dist = np.minimum(j, n - 1 - j)
        lam = np.clip(1.0 - dist / border, 0.0, 1.0)
        shape = [1, 1, 1]
        shape[axis] = n
        lam = lam.reshape(shape)
        data = data * (1.0 - lam) + shifted * lam
    return FeaturePlane(
        data.astype(plane.data.dtype, copy=False), plane.wrap_u, plane.wrap_v
    )


# ---------------------------------------------------------------------------
# Gaussianization


@dataclass
class GaussianizedExemplar:
    """A plane rank-mapped per channel onto N(0, 1), with inverse tables.

    forward_lut[c] samples the value -> gaussian map on a uniform grid over
    [value_min[c], value_max[c]]; inverse_lut[c] samples the gaussian ->
    value map at the L uniform normal quantiles Phi^-1((i + 0.5) / L). Both
    are monotone non-decreasing. A constant channel maps to gaussian 0 and
    back to its constant.
    """

    source_plane: FeaturePlane
    gauss_plane: FeaturePlane
    value_min: np.ndarray
    value_max: np.ndarray
    forward_lut: np.ndarray
    inverse_lut: np.ndarray

    @property
    def lut_size(self) -> int:
        return self.forward_lut.shape[1]

    @property
    def channels(self) -> int:
        return self.forward_lut.shape[0]


def _normal_grid(lut_size: int) -> np.ndarray:
    return ndtri((np.arange(lut_size) + 0.5) / lut_size)


def build_gaussianization(
    plane: FeaturePlane, lut_size: int = DEFAULT_LUT_SIZE
) -> GaussianizedExemplar:
    """Rank-transform each channel to a standard-normal histogram.

    Ranks use a stable sort over the flattened (row-major) plane so ties
    break identically everywhere; texel k of n maps to
    Phi^-1((rank_k + 0.5) / n).
    """
    if lut_size < 2:
        raise ArgumentError("lut_size must be >= 2")
    h, w, c = plane.data.shape
    n = h * w
    values = plane.data.reshape(n, c).astype(np.float64)
    gauss = np.empty((n, c), dtype=np.float64)
    vmin = np.empty(c, dtype=np.float64)
    vmax = np.empty(c, dtype=np.float64)
    fwd = np.empty((c, lut_size), dtype=np.float64)
    inv = np.empty((c, lut_size), dtype=np.float64)
    quantiles = ndtri((np.arange(n) + 0.5) / n)
    lut_mid = (np.arange(lut_size) + 0.5) / lut_size
    for ch in range(c):
        v = values[:, ch]
        vmin[ch] = v.min()
        vmax[ch] = v.max()
        if vmax[ch] - vmin[ch] < 1e-12:
            gauss[:, ch] = 0.0
            fwd[ch] = 0.0
            inv[ch] = v[0]
            continue
        order = np.argsort(v, kind="stable")
        gauss[order, ch] = quantiles
        v_sorted = v[order]
        xs = vmin[ch] + lut_mid * (vmax[ch] - vmin[ch])
        lo = np.searchsorted(v_sorted, xs, side="left")
        hi = np.searchsorted(v_sorted, xs, side="right")
        cdf = np.clip((lo + hi) / (2.0 * n), 0.5 / n, 1.0 - 0.5 / n)
        fwd[ch] = np.maximum.accumulate(ndtri(cdf))
        take = np.minimum((lut_mid * n).astype(np.int64), n - 1)
        inv[ch] = v_sorted[take]
    gauss_plane = FeaturePlane(
        gauss.reshape(h, w, c).astype(np.float32), plane.wrap_u, plane.wrap_v
    )
    return GaussianizedExemplar(
        source_plane=plane,
        gauss_plane=gauss_plane,
        value_min=vmin.astype(np.float32),
        value_max=vmax.astype(np.float32),
        forward_lut=fwd.astype(np.float32),
        inverse_lut=inv.astype(np.float32),
    )


def gauss_forward(gex: GaussianizedExemplar, values) -> np.ndarray:
    """Map feature values (..., C) to gaussian space via the forward LUT."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != gex.channels:
        raise ArgumentError("channel count mismatch")
    flat = values.reshape(-1, gex.channels)
    out = np.empty_like(flat)
    L = gex.lut_size
    for ch in range(gex.channels):
        vmin = float(gex.value_min[ch])
        vmax = float(gex.value_max[ch])
        if vmax - vmin < 1e-12:
            out[:, ch] = 0.0
            continue
        t = (flat[:, ch] - vmin) / (vmax - vmin) * L - 0.5
        t = np.clip(t, 0.0, L - 1.0)
        i0 = np.minimum(t.astype(np.int64), L - 2)
        frac = t - i0
        lut = gex.forward_lut[ch].astype(np.float64)
        out[:, ch] = lut[i0] * (1.0 - frac) + lut[i0 + 1] * frac
    return out.reshape(values.shape)


def gauss_inverse(gex: GaussianizedExemplar, g) -> np.ndarray:
    """Map gaussian-space features (..., C) back to value space."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape[-1] != gex.channels:
        raise ArgumentError("channel count mismatch")
    flat = g.reshape(-1, gex.channels)
    out = np.empty_like(flat)
    grid = _normal_grid(gex.lut_size)
    for ch in range(gex.channels):
        out[:, ch] = np.interp(flat[:, ch], grid, gex.inverse_lut[ch].astype(np.float64))
    return out.reshape(g.shape)


# ---------------------------------------------------------------------------
# Random lattices and the vertex hash


_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_MUL2 = np.uint64(0x94D049BB133111EB)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + _SM_GAMMA
        x = (x ^ (x >> np.uint64(30))) * _SM_MUL1
        x = (x ^ (x >> np.uint64(27))) * _SM_MUL2
        return x ^ (x >> np.uint64(31))


def lattice_vertex_offsets(vi, vj, seed) -> np.ndarray:
    """Hashed patch offsets in [0, 1)^2 per lattice vertex.

    vi, vj: integer arrays (broadcastable). 64-bit splitmix chain over
    (seed, i, j); identical on every platform, process and thread.
    """
    vi = np.asarray(vi)
    vj = np.asarray(vj)
    s = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    ui = vi.astype(np.int64).astype(np.uint64)
    uj = vj.astype(np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = _splitmix64(_splitmix64(_splitmix64(np.broadcast_to(s, ui.shape).copy()) ^ ui) ^ uj)
        h2 = _splitmix64(h)
    ox = (h >> np.uint64(40)).astype(np.float64) / float(1 << 24)
    oy = (h2 >> np.uint64(40)).astype(np.float64) / float(1 << 24)
    return np.stack([ox, oy], axis=-1)


def _lattice_basis(grid_scale: float):
    e1 = np.array([grid_scale, 0.0])
    e2 = np.array([0.5 * grid_scale, 0.5 * SQRT3 * grid_scale])
    return e1, e2


def _lattice_decompose(u_star, grid_scale: float):
    """Barycentric decomposition of points onto the triangle lattice.

    Returns (verts (B, 3, 2) int64 lattice coords, weights (B, 3) float64).
    Weight order matches the vertex order; weights are >= 0 and sum to 1.
    """
    u = np.asarray(u_star, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(u)):
        raise ArgumentError("u_star must be finite")
    s = float(grid_scale)
    a = u[:, 0] / s - u[:, 1] / (s * SQRT3)
    b = 2.0 * u[:, 1] / (s * SQRT3)
    ia = np.floor(a).astype(np.int64)
    ib = np.floor(b).astype(np.int64)
    fa = a - ia
    fb = b - ib
    lower = fa + fb < 1.0

    verts = np.empty((u.shape[0], 3, 2), dtype=np.int64)
    weights = np.empty((u.shape[0], 3), dtype=np.float64)
    # Lower-left triangle: (ia, ib), (ia+1, ib), (ia, ib+1)
    verts[lower, 0, 0] = ia[lower]
    verts[lower, 0, 1] = ib[lower]
    verts[lower, 1, 0] = ia[lower] + 1
    verts[lower, 1, 1] = ib[lower]
    verts[lower, 2, 0] = ia[lower]
    verts[lower, 2, 1] = ib[lower] + 1
    weights[lower, 0] = 1.0 - fa[lower] - fb[lower]
    weights[lower, 1] = fa[lower]
    weights[lower, 2] = fb[lower]
    # Upper-right triangle: (ia+1, ib+1), (ia, ib+1), (ia+1, ib)
    up = ~lower
    verts[up, 0, 0] = ia[up] + 1
    verts[up, 0, 1] = ib[up] + 1
    verts[up, 1, 0] = ia[up]
    verts[up, 1, 1] = ib[up] + 1
    verts[up, 2, 0] = ia[up] + 1
    verts[up, 2, 1] = ib[up]
    weights[up, 0] = fa[up] + fb[up] - 1.0
    weights[up, 1] = 1.0 - fa[up]
    weights[up, 2] = 1.0 - fb[up]
    np.clip(weights, 0.0, 1.0, out=weights)
    return verts, weights


def lattice_vertex_uv(verts, grid_scale: float) -> np.ndarray:
    """uv positions of lattice vertices, shape like verts minus the last axis."""
    e1, e2 = _lattice_basis(grid_scale)
    a = verts[..., 0].astype(np.float64)
    b = verts[..., 1].astype(np.float64)
    return np.stack([a * e1[0] + b * e2[0], b * e2[1]], axis=-1)


def triangle_grid_lookup(u_star, grid_scale: float = DEFAULT_GRID_SCALE, seed: int = 0):
    """Blend weights and patch offsets for triangle-lattice synthesis.

    For each query point: barycentric weights of its lattice triangle and,
    per vertex, the uv at which to fetch the exemplar so the hashed patch
    anchored at that vertex passes through the query point
    (patch_offset = hash(vertex) + (u_star - vertex_uv)).

    Returns (weights, offsets): (B, 3) and (B, 3, 2) for (B, 2) input, or
    (3,) and (3, 2) for a single point.
    """
    u = np.asarray(u_star, dtype=np.float64)
    single = u.ndim == 1
    verts, weights = _lattice_decompose(u, grid_scale)
    offs = lattice_vertex_offsets(verts[..., 0], verts[..., 1], seed)
    pos = lattice_vertex_uv(verts, grid_scale)
    patch = offs + (u.reshape(-1, 1, 2) - pos)
    if single:
        return weights[0], patch[0]
    return weights, patch


def hex_grid_lookup(
    u_star,
    grid_scale: float = DEFAULT_GRID_SCALE,
    seed: int = 0,
    sharpness: float = DEFAULT_HEX_SHARPNESS,
):
    """Hex-cell variant: same lattice and hashes, sharpened smooth weights.

    Hexagonal cells are the nearest-vertex regions of the triangle lattice;
    the barycentric weights are remapped by an exponent and renormalized,
    giving a smooth partition of unity that approaches hard hex cells as
    `sharpness` grows. At a cell center the weight is exactly 1.
    """
    u = np.asarray(u_star, dtype=np.float64)
    single = u.ndim == 1
    verts, weights = _lattice_decompose(u, grid_scale)
    offs = lattice_vertex_offsets(verts[..., 0], verts[..., 1], seed)
    pos = lattice_vertex_uv(verts, grid_scale)
    patch = offs + (u.reshape(-1, 1, 2) - pos)
    w = weights ** float(sharpness)
    w /= w.sum(axis=1, keepdims=True)
    if single:
        return w[0], patch[0]
    return w, patch


def blend_features(gex: GaussianizedExemplar, weights, patch_offsets) -> np.ndarray:
    """Histogram-preserving blend of hashed exemplar patches.

    weights (B, 3) with each row summing to 1; patch_offsets (B, 3, 2).
    Fetches the Gaussianized plane at each offset, blends with
    sum(w_i * G_i) / sqrt(sum(w_i^2)) per channel, and maps back through
    the inverse LUT. Returns (B, channels) in exemplar value space.
    """
    w = np.asarray(weights, dtype=np.float64)
    po = np.asarray(patch_offsets, dtype=np.float64)
    single = w.ndim == 1
    w = w.reshape(-1, 3)
    po = po.reshape(-1, 3, 2)
    if w.shape[0] != po.shape[0]:
        raise ArgumentError("weights and patch_offsets disagree on batch size")
    g0 = plane_fetch(gex.gauss_plane, po[:, 0, :])
    g1 = plane_fetch(gex.gauss_plane, po[:, 1, :])
    g2 = plane_fetch(gex.gauss_plane, po[:, 2, :])
    num = w[:, 0:1] * g0 + w[:, 1:2] * g1 + w[:, 2:3] * g2
    den = np.sqrt(w[:, 0] ** 2 + w[:, 1] ** 2 + w[:, 2] ** 2)
    g_star = num / den[:, None]
    values = gauss_inverse(gex, g_star)
    return values[0] if single else values


def synthesize_features(gex: GaussianizedExemplar, params: SynthesisParams, u_star) -> np.ndarray:
    """Positional feature vectors for arbitrary u_star under params.mode."""
    u = np.asarray(u_star, dtype=np.float64)
    single = u.ndim == 1
    u2 = u.reshape(-1, 2)
    mode = params.mode
    if mode == SynthesisMode.REPEAT:
        out = plane_fetch(gex.source_plane, u2)
    elif mode == SynthesisMode.HIST_BLEND:
        w, po = triangle_grid_lookup(u2, params.grid_scale, params.seed)
        out = blend_features(gex, w, po)
    elif mode == SynthesisMode.HEX_TILE:
        w, po = hex_grid_lookup(u2, params.grid_scale, params.seed, params.hex_sharpness)
        out = blend_features(gex, w, po)
    elif mode == SynthesisMode.QUILTED:
        if params.quilted_plane is None:
            raise ConfigError("QUILTED mode needs a quilted plane")
        out = plane_fetch(params.quilted_plane, u2 / params.quilted_scale)
    else:  # pragma: no cover
        raise ConfigError(f"unhandled mode {mode}")
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Patch quilting


def min_error_seam(errors) -> tuple:
    """Minimum-cost monotone vertical seam through an error surface.

    errors: (rows, cols) non-negative costs. The seam visits one column per
    row, moving at most one column between rows. Ties prefer the leftmost
    column (an all-zero surface yields the column-0 seam). Returns
    (columns (rows,) int64, total cost float).
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.ndim != 2 or e.size == 0:
        raise ArgumentError("errors must be a non-empty 2D array")
    rows, cols = e.shape
    dp = e[0].copy()
    steps = np.empty((rows, cols), dtype=np.int64)
    inf = np.inf
    for i in range(1, rows):
        left = np.concatenate(([inf], dp[:-1]))
        right = np.concatenate((dp[1:], [inf]))
        stacked = np.stack([left, dp, right])  # candidate order: j-1, j, j+1
        k = np.argmin(stacked, axis=0)
        dp = e[i] + stacked[k, np.arange(cols)]
        steps[i] = k - 1
    end = int(np.argmin(dp))
    cost = float(dp[end])
    path = np.empty(rows, dtype=np.int64)
    path[rows - 1] = end
    for i in range(rows - 1, 0, -1):
        path[i - 1] = path[i] + steps[i, path[i]]
    return path, cost


def _overlap_ssd(region_old, region_new) -> np.ndarray:
    d = region_old.astype(np.float64) - region_new.astype(np.float64)
    return (d * d).sum(axis=-1)


def quilt_synthesize(
    plane: FeaturePlane,
    out_width: int,
    out_height: int,
    block: int,
    overlap: int,
    seed: int = 0,
    candidate_stride: int = 1,
    slack: float = 0.1,
) -> FeaturePlane:
    """Raster-scan patch quilting of the exemplar into a larger plane.

    Blocks of `block` texels (overlapping previous content by `overlap`)
    are chosen from the exemplar by summed squared feature difference over
    the already-placed overlap region; the source position is drawn
    uniformly among candidates within (1 + slack) of the best. Each block
    is stitched along a minimum-error seam (vertical for the left overlap,
    horizontal for the top, both at interior blocks); texels on the old
    side of a seam keep previous content, the seam texel and beyond take
    the new block. Deterministic per seed.

    block = exemplar size with overlap = 0 degenerates to exact repeat
    tiling.
    """
    src = plane.data
    sh, sw, c = src.shape
    if block < 1 or block > min(sh, sw):
        raise ArgumentError(f"block must be in [1, {min(sh, sw)}]")
    if not 0 <= overlap < block:
        raise ArgumentError("overlap must satisfy 0 <= overlap < block")
    if out_width < 1 or out_height < 1:
        raise ArgumentError("output dims must be >= 1")
    if candidate_stride < 1:
        raise ArgumentError("candidate_stride must be >= 1")
    rng = np.random.default_rng(seed)
    step = block - overlap
    out = np.zeros((out_height, out_width, c), dtype=src.dtype)

    ys = [0]
    while ys[-1] + block < out_height:
        ys.append(ys[-1] + step)
    xs = [0]
    while xs[-1] + block < out_width:
        xs.append(xs[-1] + step)

    for y0 in ys:
        for x0 in xs:
            bh = min(block, out_height - y0)
            bw = min(block, out_width - x0)
            has_left = x0 > 0 and overlap > 0
            has_top = y0 > 0 and overlap > 0
            cand_y = np.arange(0, sh - bh + 1, candidate_stride)
            cand_x = np.arange(0, sw - bw + 1, candidate_stride)
            costs = np.zeros((cand_y.size, cand_x.size), dtype=np.float64)
            if has_left or has_top:
                win = np.lib.stride_tricks.sliding_window_view(src, (bh, bw, c))[
                    ::candidate_stride, ::candidate_stride, 0
                ]
                if has_left:
                    ref = out[y0 : y0 + bh, x0 : x0 + overlap].astype(np.float64)
                    sub = win[:, :, :, :overlap, :]
                    costs += (
                        np.einsum("yxabc,yxabc->yx", sub, sub, dtype=np.float64)
                        - 2.0 * np.einsum("yxabc,abc->yx", sub, ref, dtype=np.float64)
                        + (ref * ref).sum()
                    )
                if has_top:
                    ref = out[y0 : y0 + overlap, x0 : x0 + bw].astype(np.float64)
                    sub = win[:, :, :overlap, :, :]
                    costs += (
                        np.einsum("yxabc,yxabc->yx", sub, sub, dtype=np.float64)
                        - 2.0 * np.einsum("yxabc,abc->yx", sub, ref, dtype=np.float64)
                        + (ref * ref).sum()
                    )
                if has_left and has_top:
                    ref = out[y0 : y0 + overlap, x0 : x0 + overlap].astype(np.float64)
                    sub = win[:, :, :overlap, :overlap, :]
                    costs -= (
                        np.einsum("yxabc,yxabc->yx", sub, sub, dtype=np.float64)
                        - 2.0 * np.einsum("yxabc,abc->yx", sub, ref, dtype=np.float64)
                        + (ref * ref).sum()
                    )
                costs = np.maximum(costs, 0.0)
            flat = costs.ravel()
            best = flat.min()
            eligible = np.nonzero(flat <= best * (1.0 + slack) + 1e-12)[0]
            pick = int(eligible[rng.integers(eligible.size)])
            sy = int(cand_y[pick // cand_x.size])
            sx = int(cand_x[pick % cand_x.size])

            new = src[sy : sy + bh, sx : sx + bw]
            region = out[y0 : y0 + bh, x0 : x0 + bw]
            take_new = np.ones((bh, bw), dtype=bool)
            if has_left:
                e = _overlap_ssd(region[:, :overlap], new[:, :overlap])
                seam, _ = min_error_seam(e)
                cols = np.arange(overlap)
                take_new[:, :overlap] = cols[None, :] >= seam[:, None]
            if has_top:
                e = _overlap_ssd(region[:overlap, :], new[:overlap, :])
                seam, _ = min_error_seam(e.T)  # horizontal seam: row per column
                rows = np.arange(overlap)
                take_new[:overlap, :] &= rows[:, None] >= seam[None, :]
            out[y0 : y0 + bh, x0 : x0 + bw] = np.where(
                take_new[:, :, None], new, region
            )
    return FeaturePlane(out, WrapMode.WRAP, WrapMode.WRAP)


# ---------------------------------------------------------------------------
# Storage accounting


def storage_estimate(model, params: SynthesisParams, uv_scale: float) -> int:
    """Bytes of float32 plane payload a mode needs at a given virtual scale.

    Dynamic modes (REPEAT / HIST_BLEND / HEX_TILE) carry only the trained
    planes regardless of scale; QUILTED materializes a resampled spatial
    plane of (uv_scale * width) x (uv_scale * height) texels.
    """
    if uv_scale <= 0:
        raise ArgumentError("uv_scale must be > 0")
    mode = SynthesisMode(params.mode)
    if mode == SynthesisMode.QUILTED:
        pu = model.plane_u
        w = int(round(uv_scale * pu.width))
        h = int(round(uv_scale * pu.height))
        return w * h * pu.channels * 4
    total = 0
    for plane in (model.plane_u, model.plane_h, model.plane_d):
        total += plane.width * plane.height * plane.channels * 4
    return total
