"""Direct-lighting plane renderer, image metrics, image IO, benchmarking.

The scene is fixed: a unit quad in the z = 0 plane textured by the
evaluated material, one light, no shadowing or indirect bounces. Surface
UV is the quad position times `uv_scale`, so scale 8 shows 64 exemplar
periods in REPEAT mode (or 64 periods' worth of synthesized field).
Pixel row 0 corresponds to v near 0, matching dataset image layout, so an
exemplar-scale render in REPEAT mode lines up with the stored BTF images
with no flips.

Outgoing radiance per pixel is query(uv, wi, wo) * cos(theta_i) * incident
radiance. The evaluator returns reflectance without foreshortening; the
cosine is applied here and only here.

Metrics (RMSE, DSSIM) always operate on linear images. PNG output is for
viewing: clamp((exposure * linear) ** (1/gamma)). PFM round-trips the
exact float32 buffer.
"""

from __future__ import annotations

import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ArgumentError, FormatError
from .halfdiff import cosine_sample_hemisphere

_LUMA_709 = (0.2126, 0.7152, 0.0722)

# SSIM window: Gaussian sigma 1.5 truncated at 3.5 sigma = 11x11 support.
_SSIM_SIGMA = 1.5
_SSIM_TRUNCATE = 3.5
_SSIM_PAD = 5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass(frozen=True)
class RenderSpec:
    """Camera, light, and output settings for render_plane.

    camera "ortho" looks straight down at the whole quad; "persp" is a
    pinhole at `eye` aimed at `target` (vertical fov `fov_deg`). The light
    is either directional (`light_dir` points toward the light, radiance
    per channel) or a point light (`light_pos`, `light_power`, attenuated
    by squared distance). exposure and gamma apply only when encoding PNG.
    """

    width: int
    height: int
    uv_scale: float = 1.0
    camera: str = "ortho"
    eye: tuple = (0.5, 0.5, 2.0)
    target: tuple = (0.5, 0.5, 0.0)
    fov_deg: float = 45.0
    light: str = "directional"
    light_dir: tuple = (0.0, 0.0, 1.0)
    light_radiance: tuple = (1.0, 1.0, 1.0)
    light_pos: tuple = (0.5, 0.5, 1.0)
    light_power: tuple = (1.0, 1.0, 1.0)
    exposure: float = 1.0
    gamma: float = 2.2

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ArgumentError("image dimensions must be >= 1")
        if not (math.isfinite(self.uv_scale) and self.uv_scale >= 1.0):
            raise ArgumentError("uv_scale must be >= 1")
        if self.camera not in ("ortho", "persp"):
            raise ArgumentError(f"unknown camera {self.camera!r}")
        if self.light not in ("directional", "point"):
            raise ArgumentError(f"unknown light {self.light!r}")
        if not 0.0 < self.fov_deg < 180.0:
            raise ArgumentError("fov_deg must be in (0, 180)")
        for name in ("light_radiance", "light_power"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (3,) or not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ArgumentError(f"{name} must be 3 finite values >= 0")
        if not (math.isfinite(self.exposure) and self.exposure >= 0):
            raise ArgumentError("exposure must be >= 0")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ArgumentError("gamma must be > 0")
        d = np.asarray(self.light_dir, dtype=np.float64)
        if d.shape != (3,) or not np.all(np.isfinite(d)):
            raise ArgumentError("light_dir must be a finite 3-vector")
        n = float(np.linalg.norm(d))
        if n < 1e-8:
            raise ArgumentError("light_dir must be nonzero")
        object.__setattr__(self, "light_dir", tuple((d / n).tolist()))


@dataclass
class ImageBuffer:
    """Linear RGB image, row 0 at v near 0."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ArgumentError(f"image must be (h, w, 3), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ArgumentError("image pixels must be finite")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def _as_array(img):
    if isinstance(img, ImageBuffer):
        return img.data
    return np.asarray(img)


def _pixel_geometry(spec: RenderSpec):
    """Surface points, view directions, and coverage for every pixel.

    Returns (point (N,3), wo (N,3), valid (N,)) with N = width*height in
    row-major pixel order. Invalid pixels (ray misses the quad, or views
    the surface from below) carry unit-z placeholders so downstream
    direction checks stay happy; they render black.
    """
    w, h = spec.width, spec.height
    px = (np.arange(w, dtype=np.float64) + 0.5) / w
    py = (np.arange(h, dtype=np.float64) + 0.5) / h
    uu, vv = np.meshgrid(px, py)
    if spec.camera == "ortho":
        point = np.stack([uu, vv, np.zeros_like(uu)], axis=-1).reshape(-1, 3)
        wo = np.zeros_like(point)
        wo[:, 2] = 1.0
        valid = np.ones(point.shape[0], dtype=bool)
        return point, wo, valid

    eye = np.asarray(spec.eye, dtype=np.float64)
    target = np.asarray(spec.target, dtype=np.float64)
    fwd = target - eye
    n = float(np.linalg.norm(fwd))
    if n < 1e-8:
        raise ArgumentError("eye and target coincide")
    fwd = fwd / n
    up_hint = np.array([0.0, 1.0, 0.0])
    if abs(float(fwd @ up_hint)) > 0.99:
        up_hint = np.array([1.0, 0.0, 0.0])
    right = np.cross(fwd, up_hint)
    right /= np.linalg.norm(right)
    up = np.cross(right, fwd)
    half = math.tan(math.radians(spec.fov_deg) * 0.5)
    ndc_x = (2.0 * uu - 1.0) * half * (w / h)
    ndc_y = (1.0 - 2.0 * vv) * half
    rays = (
        fwd[None, None]
        + ndc_x[..., None] * right[None, None]
        + ndc_y[..., None] * up[None, None]
    ).reshape(-1, 3)
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    dz = rays[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dz != 0.0, -eye[2] / dz, -1.0)
    point = eye[None] + t[:, None] * rays
    valid = (
        (t > 0)
        & (point[:, 0] >= 0.0)
        & (point[:, 0] <= 1.0)
        & (point[:, 1] >= 0.0)
        & (point[:, 1] <= 1.0)
    )
    wo = -rays
    valid &= wo[:, 2] > 1e-7
    point[~valid] = 0.0
    wo[~valid] = (0.0, 0.0, 1.0)
    return point, wo, valid


def _pixel_lighting(spec: RenderSpec, point):
    """Per-pixel (wi (N,3), incident radiance (N,3), lit (N,))."""
    n = point.shape[0]
    if spec.light == "directional":
        d = np.asarray(spec.light_dir, dtype=np.float64)
        lit = np.full(n, d[2] > 1e-7)
        wi = np.broadcast_to(d, (n, 3)).copy()
        incident = np.broadcast_to(
            np.asarray(spec.light_radiance, dtype=np.float64), (n, 3)
        ).copy()
    else:
        delta = np.asarray(spec.light_pos, dtype=np.float64)[None] - point
        d2 = np.einsum("ij,ij->i", delta, delta)
        lit = d2 > 1e-12
        dist = np.sqrt(np.where(lit, d2, 1.0))
        wi = delta / dist[:, None]
        lit &= wi[:, 2] > 1e-7
        with np.errstate(divide="ignore"):
            incident = np.asarray(spec.light_power, dtype=np.float64)[None] / np.where(
                lit, d2, 1.0
            )[:, None]
    wi[~lit] = (0.0, 0.0, 1.0)
    return wi, incident, lit


def render_plane(evaluator, spec: RenderSpec) -> ImageBuffer:
    """Render the textured quad through an evaluator. Deterministic."""
    point, wo, valid = _pixel_geometry(spec)
    wi, incident, lit = _pixel_lighting(spec, point)
    active = valid & lit
    out = np.zeros((point.shape[0], 3), dtype=np.float64)
    if np.any(active):
        uv = point[active, :2] * float(spec.uv_scale)
        rgb = evaluator.query_batch(uv, wi[active], wo[active])
        cos = wi[active, 2]
        out[active] = rgb * cos[:, None] * incident[active]
    return ImageBuffer(out.reshape(spec.height, spec.width, 3))


def _detect_direction_grid(dirs):
    """Recover a (theta, phi) product grid from distinct unit directions.

    Returns (thetas sorted, phis sorted, index grid (n_theta, n_phi) into
    `dirs`) or None when the directions do not form a product grid.
    """
    theta = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * np.pi)
    # At theta = 0 phi is arbitrary; canonicalize so grid detection works.
    phi = np.where(theta < 1e-9, 0.0, phi)
    tol = 1e-6

    def _cluster(vals):
        out = []
        for v in np.sort(vals):
            if not out or v - out[-1] > tol:
                out.append(float(v))
        return np.asarray(out)

    thetas = _cluster(theta)
    phis = _cluster(phi)
    ti = np.searchsorted(thetas, theta - tol)
    pj = np.searchsorted(phis, phi - tol)
    grid = np.full((thetas.size, phis.size), -1, dtype=np.int64)
    grid[ti, pj] = np.arange(dirs.shape[0])
    pole = thetas.size and thetas[0] < 1e-9
    ok_rows = grid[1:] if pole else grid
    if np.any(ok_rows < 0):
        return None
    if pole:
        if grid[0, 0] < 0:
            return None
        grid[0] = grid[0, 0]  # pole row: every phi maps to the one sample
    return thetas, phis, grid


def _angle_weights(values, knots, wrap):
    """Bracketing knot indices and lerp weight per value.

    knots sorted ascending. wrap=True treats the axis as periodic with
    period 2*pi (interpolating between the last and first knot); otherwise
    values clamp to the knot range.
    """
    k = knots.size
    if k == 1:
        z = np.zeros(values.shape[0], dtype=np.int64)
        return z, z, np.zeros_like(values)
    if wrap:
        period = 2.0 * np.pi
        v = np.mod(values, period)
        idx = np.searchsorted(knots, v, side="right") - 1
        idx = np.clip(idx, -1, k - 1)
        lo = np.where(idx < 0, k - 1, idx)
        hi = (lo + 1) % k
        base = np.where(idx < 0, knots[-1] - period, knots[lo])
        span = np.where(hi == 0, knots[0] + period, knots[hi]) - base
        frac = (v - base) / span
    else:
        v = np.clip(values, knots[0], knots[-1])
        idx = np.clip(np.searchsorted(knots, v, side="right") - 1, 0, k - 2)
        lo, hi = idx, idx + 1
        frac = (v - knots[lo]) / (knots[hi] - knots[lo])
    return lo, hi, np.clip(frac, 0.0, 1.0)


def _spatial_bilinear(images, pid, uv):
    """Wrap-mode bilinear fetch of images[pid] at uv, vectorized over rows.

    images: (P, H, W, 3); pid: (N,); uv: (N, 2) in tile units (period 1).
    """
    h, w = images.shape[1], images.shape[2]
    x = uv[:, 0] * w - 0.5
    y = uv[:, 1] * h - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    x0m, x1m = x0 % w, (x0 + 1) % w
    y0m, y1m = y0 % h, (y0 + 1) % h
    return (
        images[pid, y0m, x0m] * (1.0 - fx) * (1.0 - fy)
        + images[pid, y0m, x1m] * fx * (1.0 - fy)
        + images[pid, y1m, x0m] * (1.0 - fx) * fy
        + images[pid, y1m, x1m] * fx * fy
    )


def interpolate_reference(dataset, uv, wi, wo):
    """Ground-truth reflectance by interpolating the measured dataset.

    Directions interpolate bilinearly on the dataset's (theta, phi) product
    grid per side (16 neighboring pairs) when the pair list forms such a
    grid, else fall back to the nearest measured pair. Space interpolates
    bilinearly with wrap addressing at exemplar period 1.
    """
    uv = np.asarray(uv, dtype=np.float64)
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    n = uv.shape[0]
    pairs = dataset.pairs.astype(np.float64)
    uniq_wi, inv_wi = np.unique(pairs[:, 0:3], axis=0, return_inverse=True)
    uniq_wo, inv_wo = np.unique(pairs[:, 3:6], axis=0, return_inverse=True)
    pair_of = np.full((uniq_wi.shape[0], uniq_wo.shape[0]), -1, dtype=np.int64)
    pair_of[inv_wi, inv_wo] = np.arange(dataset.n_pairs)

    gi = _detect_direction_grid(uniq_wi)
    go = _detect_direction_grid(uniq_wo)
    out = np.zeros((n, 3), dtype=np.float64)
    if gi is None or go is None or np.any(pair_of < 0):
        # Irregular pair list: nearest pair by combined direction affinity.
        score = wi @ pairs[:, 0:3].T + wo @ pairs[:, 3:6].T
        pid = np.argmax(score, axis=1)
        return _spatial_bilinear(dataset.data, pid, uv)

    def _side(dirs, grid_info):
        thetas, phis, grid = grid_info
        th = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
        ph = np.mod(np.arctan2(dirs[:, 1], dirs[:, 0]), 2.0 * np.pi)
        tlo, thi, tf = _angle_weights(th, thetas, wrap=False)
        plo, phi_i, pf = _angle_weights(ph, phis, wrap=True)
        corners = [
            (grid[tlo, plo], (1.0 - tf) * (1.0 - pf)),
            (grid[tlo, phi_i], (1.0 - tf) * pf),
            (grid[thi, plo], tf * (1.0 - pf)),
            (grid[thi, phi_i], tf * pf),
        ]
        return corners

    ci = _side(wi, gi)
    co = _side(wo, go)
    for di, wgt_i in ci:
        for do, wgt_o in co:
            wgt = wgt_i * wgt_o
            live = wgt > 0.0
            if not np.any(live):
                continue
            pid = pair_of[di[live], do[live]]
            out[live] += wgt[live, None] * _spatial_bilinear(
                dataset.data, pid, uv[live]
            )
    return out


def render_reference(dataset, spec: RenderSpec) -> ImageBuffer:
    """render_plane's ground-truth twin, sampling the dataset directly."""
    point, wo, valid = _pixel_geometry(spec)
    wi, incident, lit = _pixel_lighting(spec, point)
    active = valid & lit
    out = np.zeros((point.shape[0], 3), dtype=np.float64)
    if np.any(active):
        uv = point[active, :2] * float(spec.uv_scale)
        refl = interpolate_reference(dataset, uv, wi[active], wo[active])
        out[active] = refl * wi[active, 2][:, None] * incident[active]
    return ImageBuffer(out.reshape(spec.height, spec.width, 3))


def luma(img) -> np.ndarray:
    """Rec. 709 luma of a linear RGB image."""
    a = _as_array(img).astype(np.float64)
    if a.ndim == 2:
        return a
    if a.ndim != 3 or a.shape[-1] != 3:
        raise ArgumentError(f"expected (h, w, 3) image, got {a.shape}")
    r, g, b = _LUMA_709
    return r * a[..., 0] + g * a[..., 1] + b * a[..., 2]


def compute_rmse(a, b) -> float:
    """Root mean squared componentwise difference of two linear images."""
    x = _as_array(a).astype(np.float64)
    y = _as_array(b).astype(np.float64)
    if x.shape != y.shape:
        raise ArgumentError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def _ssim_mean(x, y, data_range) -> float:
    def filt(a):
        return gaussian_filter(
            a, sigma=_SSIM_SIGMA, truncate=_SSIM_TRUNCATE, mode="reflect"
        )

    ux, uy = filt(x), filt(y)
    uxx, uyy, uxy = filt(x * x), filt(y * y), filt(x * y)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    c1 = (_SSIM_K1 * data_range) ** 2
    c2 = (_SSIM_K2 * data_range) ** 2
    s = ((2.0 * ux * uy + c1) * (2.0 * vxy + c2)) / (
        (ux * ux + uy * uy + c1) * (vx + vy + c2)
    )
    p = _SSIM_PAD
    return float(s[p:-p, p:-p].mean())


def compute_dssim(a, b, per_channel: bool = False):
    """Structural dissimilarity (1 - SSIM) / 2, on Rec. 709 luma.

    SSIM uses a Gaussian window (sigma 1.5, 11x11), k1 = 0.01, k2 = 0.03,
    population statistics, and drops a 5-pixel border before averaging.
    Dynamic range is the max luma over both inputs, which keeps the metric
    symmetric; two identical all-black images compare as 0. per_channel
    returns a length-3 array computed channelwise instead.
    """
    x = _as_array(a).astype(np.float64)
    y = _as_array(b).astype(np.float64)
    if x.shape != y.shape:
        raise ArgumentError(f"shape mismatch {x.shape} vs {y.shape}")
    if min(x.shape[0], x.shape[1]) < 2 * _SSIM_PAD + 1:
        raise ArgumentError("images smaller than the 11x11 SSIM window")
    if per_channel:
        if x.ndim != 3 or x.shape[2] != 3:
            raise ArgumentError("per_channel needs (h, w, 3) images")
        vals = []
        for c in range(3):
            dr = max(float(x[..., c].max()), float(y[..., c].max()))
            if dr <= 0.0:
                dr = 1.0
            vals.append((1.0 - _ssim_mean(x[..., c], y[..., c], dr)) / 2.0)
        return np.asarray(vals)
    lx, ly = luma(x), luma(y)
    dr = max(float(lx.max()), float(ly.max()))
    if dr <= 0.0:
        dr = 1.0
    return (1.0 - _ssim_mean(lx, ly, dr)) / 2.0


def write_pfm(path, img) -> None:
    """Color PFM, 32-bit little-endian, exact linear values."""
    a = _as_array(img).astype(np.float32)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ArgumentError(f"PFM writer needs (h, w, 3), got {a.shape}")
    with open(path, "wb") as f:
        f.write(b"PF\n")
        f.write(f"{a.shape[1]} {a.shape[0]}\n".encode("ascii"))
        f.write(b"-1.0\n")
        # PFM scanlines run bottom to top.
        f.write(a[::-1].astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.readline().strip()
        if head not in (b"PF", b"Pf"):
            raise FormatError(f"not a PFM file: header {head!r}")
        dims = f.readline().split()
        if len(dims) != 2:
            raise FormatError("malformed PFM dimensions line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        channels = 3 if head == b"PF" else 1
        count = w * h * channels
        raw = f.read(count * 4)
        if len(raw) != count * 4:
            raise FormatError("truncated PFM payload")
        dt = "<f4" if scale < 0 else ">f4"
        a = np.frombuffer(raw, dtype=dt).reshape(h, w, channels)
        return np.ascontiguousarray(a[::-1]).astype(np.float32)


def write_png(path, img, exposure: float = 1.0, gamma: float = 2.2) -> None:
    """Gamma-encoded 8-bit PNG of a linear image (viewing only)."""
    from PIL import Image

    a = _as_array(img).astype(np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ArgumentError(f"PNG writer needs (h, w, 3), got {a.shape}")
    encoded = np.clip(exposure * a, 0.0, None) ** (1.0 / gamma)
    u8 = (np.clip(encoded, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path, format="PNG")


def load_image(path) -> np.ndarray:
    """Read PFM (linear) or PNG (decoded back to linear, gamma 2.2)."""
    p = str(path)
    if p.lower().endswith(".pfm"):
        return read_pfm(p)
    if p.lower().endswith(".png"):
        from PIL import Image

        with Image.open(p) as im:
            a = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        return (a**2.2).astype(np.float32)
    raise ArgumentError(f"unsupported image extension: {p}")


def make_bench_queries(n: int, seed: int = 0):
    """Random valid queries: u* in [0, 8)^2, cosine-sampled directions."""
    rng = np.random.default_rng(seed)
    u_star = rng.random((n, 2)) * 8.0
    wi, _ = cosine_sample_hemisphere(rng.random(n), rng.random(n))
    wo, _ = cosine_sample_hemisphere(rng.random(n), rng.random(n))
    return u_star, wi, wo


def bench(
    evaluator, n_queries: int, threads: int = 1, seed: int = 0, return_rgb=False
) -> dict:
    """Time query_batch over pre-generated random queries.

    threads > 1 splits the batch into contiguous slices evaluated by a
    thread pool; results are bitwise identical regardless (the query path
    is pure). Query generation is excluded from the timing.
    """
    if n_queries < 1:
        raise ArgumentError("n_queries must be >= 1")
    if threads < 1:
        raise ArgumentError("threads must be >= 1")
    u_star, wi, wo = make_bench_queries(n_queries, seed)
    warm = min(n_queries, 4096)
    evaluator.query_batch(u_star[:warm], wi[:warm], wo[:warm])

    out = np.empty((n_queries, 3), dtype=np.float32)
    if threads == 1:
        t0 = time.perf_counter()
        out[:] = evaluator.query_batch(u_star, wi, wo)
        dt = time.perf_counter() - t0
    else:
        bounds = np.linspace(0, n_queries, threads + 1).astype(np.int64)

        def run(k):
            s, e = bounds[k], bounds[k + 1]
            if e > s:
                out[s:e] = evaluator.query_batch(u_star[s:e], wi[s:e], wo[s:e])

        with ThreadPoolExecutor(max_workers=threads) as pool:
            t0 = time.perf_counter()
            list(pool.map(run, range(threads)))
            dt = time.perf_counter() - t0
    report = {
        "n": int(n_queries),
        "threads": int(threads),
        "seconds": dt,
        "queries_per_sec": n_queries / dt,
        "ns_per_query": dt / n_queries * 1e9,
    }
    if return_rgb:
        report["rgb"] = out
    return report


def bench_scaling(
    evaluator, n: int, threads: int = 1, seed: int = 0, repeats: int = 3
) -> dict:
    """Throughput at n and 4n; best-of-`repeats` timings to damp noise."""
    best = {}
    for size in (n, 4 * n):
        times = [
            bench(evaluator, size, threads=threads, seed=seed)["seconds"]
            for _ in range(repeats)
        ]
        best[size] = min(times)
    return {
        "n": int(n),
        "time_n": best[n],
        "time_4n": best[4 * n],
        "ratio": best[4 * n] / best[n],
    }
