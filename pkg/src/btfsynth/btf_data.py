"""BTF datasets: in-memory container, file round-trip, synthetic generation.

A dataset is a dense stack of reflectance images, one per (wi, wo) direction
pair, all sharing one spatial resolution. Values are linear-RGB reflectance
(BRDF values; no cosine folded in), float32, finite and non-negative.

On-disk container ("BTFD", little-endian):

    magic "BTFD" | u32 version=1 | u32 width | u32 height | u32 n_pairs
    | u8 scalar_type (0 = float32, 1 = float16) | 3 reserved bytes
    | n_pairs * 6 float32: wi.xyz, wo.xyz
    | payload, [pair][row][col][rgb] order, float32 or float16

The synthetic generator is a per-texel Lambertian + isotropic microfacet
(GGX normal distribution, Smith shadowing, Schlick Fresnel from an index of
refraction) material driven by deterministic procedural maps. Direction
grids are uniform in (theta, phi) with theta at cell centers inside
[0, theta_max]; the pair list is the incident x outgoing cross product in
incident-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArgumentError,
    CorruptionError,
    FormatError,
    VersionError,
)
from .halfdiff import HalfDiffCoords, to_half_diff

BTF_MAGIC = b"BTFD"
BTF_VERSION = 1

SCALAR_F32 = 0
SCALAR_F16 = 1


@dataclass
class BtfDataset:
    """Dense BTF sample stack.

    pairs: (N, 6) float32, rows are wi.xyz, wo.xyz (unit, z > 0).
    data: (N, height, width, 3) float32 linear reflectance, >= 0, finite.
    """

    width: int
    height: int
    pairs: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.float32)
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.pairs.ndim != 2 or self.pairs.shape[1] != 6:
            raise ArgumentError("pairs must be (N, 6)")
        n = self.pairs.shape[0]
        if self.data.shape != (n, self.height, self.width, 3):
            raise ArgumentError(
                f"data shape {self.data.shape} != (N={n}, h={self.height}, "
                f"w={self.width}, 3)"
            )
        norms = np.linalg.norm(self.pairs.reshape(n, 2, 3), axis=2)
        if not np.all(np.abs(norms - 1.0) < 1e-5):
            raise ArgumentError("direction pairs must be unit vectors")
        if not (np.all(self.pairs[:, 2] > 0) and np.all(self.pairs[:, 5] > 0)):
            raise ArgumentError("directions must lie in the upper hemisphere")
        if not np.all(np.isfinite(self.data)):
            raise ArgumentError("reflectance values must be finite")
        if np.any(self.data < 0):
            raise ArgumentError("reflectance values must be non-negative")

    @property
    def n_pairs(self) -> int:
        return self.pairs.shape[0]

    def wi(self) -> np.ndarray:
        return self.pairs[:, 0:3]

    def wo(self) -> np.ndarray:
        return self.pairs[:, 3:6]

    def half_diff(self) -> HalfDiffCoords:
        """Half/difference angles for every pair, shape (N,) per field."""
        return to_half_diff(
            self.pairs[:, 0:3].astype(np.float64),
            self.pairs[:, 3:6].astype(np.float64),
        )


def save_btf(path, dataset: BtfDataset, scalar_type: int = SCALAR_F32) -> None:
    if scalar_type not in (SCALAR_F32, SCALAR_F16):
        raise ArgumentError(f"unknown scalar type {scalar_type}")
    header = BTF_MAGIC + struct.pack(
        "<IIIIB3x",
        BTF_VERSION,
        dataset.width,
        dataset.height,
        dataset.n_pairs,
        scalar_type,
    )
    payload_dtype = "<f4" if scalar_type == SCALAR_F32 else "<f2"
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(dataset.pairs, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(dataset.data, dtype=payload_dtype).tobytes())


def load_btf(path) -> BtfDataset:
    with open(path, "rb") as f:
        buf = f.read()
    if buf[:4] != BTF_MAGIC:
        raise FormatError("not a BTFD file (bad magic)")
    head_fmt = "<IIIIB3x"
    head_size = struct.calcsize(head_fmt)
    if len(buf) < 4 + head_size:
        raise CorruptionError("BTFD header truncated")
    version, width, height, n, scalar_type = struct.unpack_from(head_fmt, buf, 4)
    if version != BTF_VERSION:
        raise VersionError(f"unsupported BTFD version {version}")
    if scalar_type not in (SCALAR_F32, SCALAR_F16):
        raise FormatError(f"unknown scalar type {scalar_type}")
    off = 4 + head_size
    pair_bytes = n * 6 * 4
    item = 4 if scalar_type == SCALAR_F32 else 2
    payload_bytes = n * height * width * 3 * item
    if len(buf) < off + pair_bytes + payload_bytes:
        raise CorruptionError("BTFD payload truncated")
    pairs = np.frombuffer(buf, dtype="<f4", count=n * 6, offset=off).reshape(n, 6)
    dtype = "<f4" if scalar_type == SCALAR_F32 else "<f2"
    data = np.frombuffer(
        buf, dtype=dtype, count=n * height * width * 3, offset=off + pair_bytes
    ).reshape(n, height, width, 3)
    try:
        return BtfDataset(
            width=width,
            height=height,
            pairs=pairs.copy(),
            data=np.ascontiguousarray(data, dtype=np.float32),
        )
    except ArgumentError as e:
        raise CorruptionError(f"BTFD payload failed validation: {e}") from e


# ---------------------------------------------------------------------------
# Synthetic generation


@dataclass(frozen=True)
class SyntheticBtfSpec:
    """Recipe for a deterministic synthetic BTF.

    The angular grid has n_theta x n_phi directions per hemisphere with
    theta at cell centers in [0, theta_max_deg] and phi starting at 0;
    the dataset holds every (incident, outgoing) combination.

    Albedo comes from `albedo_image` (height, width, 3) when given, else
    from smooth procedural noise seeded by `albedo_seed` spanning
    `albedo_range` per channel. Roughness is an analogous single-channel
    map spanning `roughness_range` (values must stay in (0, 1]).
    `specular_weight` = 0 gives a purely Lambertian dataset.
    """

    width: int
    height: int
    n_theta: int = 5
    n_phi: int = 8
    # 60 degrees and a roughness floor of 0.3 keep grazing specular peaks
    # near 1.0; lower floors or wider cones push the dynamic range past 30
    # and the peaks dominate every error metric.
    theta_max_deg: float = 60.0
    albedo_seed: int = 0
    albedo_range: tuple = (0.2, 0.8)
    albedo_image: object = None
    specular_weight: float = 0.6
    roughness_seed: int = 1
    roughness_range: tuple = (0.3, 0.7)
    ior: float = 1.5

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ArgumentError("spatial dims must be >= 1")
        if self.n_theta < 1 or self.n_phi < 1:
            raise ArgumentError("angular grid counts must be >= 1")
        if not 0.0 <= self.theta_max_deg < 90.0:
            raise ArgumentError("theta_max_deg must be in [0, 90)")
        lo, hi = self.roughness_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ArgumentError("roughness_range must satisfy 0 < lo <= hi <= 1")
        if self.specular_weight < 0.0:
            raise ArgumentError("specular_weight must be >= 0")
        if self.ior <= 1.0:
            raise ArgumentError("ior must be > 1")
        a_lo, a_hi = self.albedo_range
        if not (0.0 <= a_lo <= a_hi <= 1.0):
            raise ArgumentError("albedo_range must satisfy 0 <= lo <= hi <= 1")


def _smooth_noise(height, width, channels, seed, cells=8):
    """Deterministic low-frequency noise in [0, 1]: bilinear upsample of a
    small random lattice. Output (height, width, channels)."""
    rng = np.random.default_rng(seed)
    gh = min(cells, height) + 1
    gw = min(cells, width) + 1
    lattice = rng.random((gh, gw, channels))
    ys = np.linspace(0.0, gh - 1.0, height)
    xs = np.linspace(0.0, gw - 1.0, width)
    y0 = np.clip(np.floor(ys).astype(int), 0, gh - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, gw - 2)
    ty = (ys - y0)[:, None, None]
    tx = (xs - x0)[None, :, None]
    a = lattice[y0][:, x0]
    b = lattice[y0][:, x0 + 1]
    c = lattice[y0 + 1][:, x0]
    d = lattice[y0 + 1][:, x0 + 1]
    return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d)


def direction_grid(n_theta: int, n_phi: int, theta_max_deg: float) -> np.ndarray:
    """(n_theta * n_phi, 3) unit directions, theta-major, float64."""
    theta_max = np.deg2rad(theta_max_deg)
    thetas = (np.arange(n_theta) + 0.5) / n_theta * theta_max
    phis = np.arange(n_phi) / n_phi * 2.0 * np.pi
    th, ph = np.meshgrid(thetas, phis, indexing="ij")
    st = np.sin(th)
    dirs = np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1)
    return dirs.reshape(-1, 3)


def synthetic_maps(spec: SyntheticBtfSpec):
    """The per-texel (albedo, roughness) maps a spec expands to."""
    if spec.albedo_image is not None:
        albedo = np.asarray(spec.albedo_image, dtype=np.float64)
        if albedo.shape != (spec.height, spec.width, 3):
            raise ArgumentError("albedo_image must be (height, width, 3)")
        if np.any(albedo < 0) or np.any(albedo > 1):
            raise ArgumentError("albedo_image values must lie in [0, 1]")
    else:
        lo, hi = spec.albedo_range
        noise = _smooth_noise(spec.height, spec.width, 3, spec.albedo_seed)
        albedo = lo + (hi - lo) * noise
    r_lo, r_hi = spec.roughness_range
    rough = r_lo + (r_hi - r_lo) * _smooth_noise(
        spec.height, spec.width, 1, spec.roughness_seed
    )[..., 0]
    return albedo, rough


def eval_material(albedo, roughness, ior, specular_weight, wi, wo):
    """Reflectance of the synthetic material for one direction pair.

    albedo (h, w, 3), roughness (h, w); wi/wo unit 3-vectors with z > 0.
    Returns (h, w, 3). Lambertian term albedo / pi plus an isotropic GGX
    lobe with height-separated Smith shadowing and Schlick Fresnel.
    """
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    out = albedo / np.pi
    if specular_weight <= 0.0:
        return out.copy()
    cos_i = wi[2]
    cos_o = wo[2]
    h = wi + wo
    h = h / np.linalg.norm(h)
    cos_h = h[2]
    cos_ih = float(np.dot(wi, h))

    alpha = roughness * roughness
    a2 = alpha * alpha
    denom = cos_h * cos_h * (a2 - 1.0) + 1.0
    ndf = a2 / (np.pi * denom * denom)

    def smith_g1(cos_t):
        t2 = max(0.0, 1.0 - cos_t * cos_t) / (cos_t * cos_t)
        return 2.0 / (1.0 + np.sqrt(1.0 + a2 * t2))

    g = smith_g1(cos_i) * smith_g1(cos_o)

    f0 = ((ior - 1.0) / (ior + 1.0)) ** 2
    fresnel = f0 + (1.0 - f0) * (1.0 - cos_ih) ** 5

    spec = specular_weight * fresnel * ndf * g / (4.0 * cos_i * cos_o)
    return out + spec[..., None]


def generate_synthetic_btf(spec: SyntheticBtfSpec) -> BtfDataset:
    """Expand a spec into a dense dataset. Deterministic per spec."""
    albedo, rough = synthetic_maps(spec)
    dirs = direction_grid(spec.n_theta, spec.n_phi, spec.theta_max_deg)
    nd = dirs.shape[0]
    data = np.empty((nd * nd, spec.height, spec.width, 3), dtype=np.float32)
    pairs = np.empty((nd * nd, 6), dtype=np.float32)
    k = 0
    for i in range(nd):
        for o in range(nd):
            pairs[k, 0:3] = dirs[i]
            pairs[k, 3:6] = dirs[o]
            data[k] = eval_material(
                albedo, rough, spec.ior, spec.specular_weight, dirs[i], dirs[o]
            )
            k += 1
    return BtfDataset(width=spec.width, height=spec.height, pairs=pairs, data=data)


# ---------------------------------------------------------------------------
# Batching


@dataclass
class TrainingBatch:
    """One optimizer batch: all texels of a set of direction pairs.

    uv: (B, 2) float32 texel-center positions in [0, 1)^2.
    hd: half/difference angles, (B,) per field, float32.
    target: (B, 3) float32 reflectance.
    pair_ids: (images,) indices of the pairs this batch drew from.
    """

    uv: np.ndarray
    hd: HalfDiffCoords
    target: np.ndarray
    pair_ids: np.ndarray

    def __len__(self) -> int:
        return self.uv.shape[0]


def texel_center_uv(width: int, height: int) -> np.ndarray:
    """(height * width, 2) float32 texel centers, row-major."""
    xs = (np.arange(width, dtype=np.float32) + np.float32(0.5)) / np.float32(width)
    ys = (np.arange(height, dtype=np.float32) + np.float32(0.5)) / np.float32(height)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=-1)


def select_batch_pairs(
    n_pairs: int, rng_seed, images: int, stratified: bool = True, batch_index: int = 0
) -> np.ndarray:
    """The pair indices batch `batch_index` draws, without touching data."""
    if images < 1 or images > n_pairs:
        raise ArgumentError(f"images must be in [1, {n_pairs}]")
    if stratified:
        perm = np.random.default_rng(rng_seed).permutation(n_pairs)
        pos = (batch_index * images + np.arange(images)) % n_pairs
        return perm[pos]
    rng = np.random.default_rng(
        np.random.SeedSequence(rng_seed, spawn_key=(batch_index,))
    )
    return rng.choice(n_pairs, size=images, replace=False)


def sample_batch(
    dataset: BtfDataset,
    rng_seed,
    images: int,
    stratified: bool = True,
    batch_index: int = 0,
) -> TrainingBatch:
    """Assemble a batch of `images` direction pairs, every texel once each.

    Deterministic in (rng_seed, batch_index). In stratified mode the pair
    choice walks a seed-derived permutation of all pairs, so stepping
    batch_index covers every pair before any repeats: batch_index b yields
    pairs perm[b * images : (b + 1) * images] (wrapping).
    """
    sel = select_batch_pairs(dataset.n_pairs, rng_seed, images, stratified, batch_index)
    uv1 = texel_center_uv(dataset.width, dataset.height)
    uv = np.tile(uv1, (images, 1))
    hd_all = dataset.half_diff()
    stacked = hd_all.stack().astype(np.float32)  # (N, 4)
    per_pair = stacked[sel]  # (images, 4)
    hd_rep = np.repeat(per_pair, uv1.shape[0], axis=0)
    target = dataset.data[sel].reshape(-1, 3)
    return TrainingBatch(
        uv=uv,
        hd=HalfDiffCoords.from_stack(hd_rep),
        target=np.ascontiguousarray(target),
        pair_ids=sel,
    )
