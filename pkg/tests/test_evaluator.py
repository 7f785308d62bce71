import numpy as np
import pytest
from scipy.special import ndtri

from btfsynth.btf_data import direction_grid
from btfsynth.errors import ArgumentError, ConfigError, OutOfHemisphereError
from btfsynth.evaluator import BtfEvaluator, BtfQuery, default_tileable_border, reconstruct_batch
from btfsynth.halfdiff import halfdiff_to_plane_uv, to_half_diff
from btfsynth.neural_core import FeaturePlane, WrapMode, init_model, plane_fetch
from btfsynth.synthesis import SynthesisMode, SynthesisParams, lattice_vertex_offsets


@pytest.fixture(scope="module")
def model():
    return init_model(u_size=(16, 16), seed=3)


def sample_queries(n, seed, uv_span=3.0):
    rng = np.random.default_rng(seed)
    u = rng.uniform(-uv_span, uv_span, size=(n, 2))
    z = rng.uniform(0.05, 1.0, size=(2, n))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=(2, n))
    r = np.sqrt(1.0 - z * z)
    dirs = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    return u, dirs[0], dirs[1]


# --- agreement with the training-time forward --------------------------------


def test_repeat_query_is_clamped_reconstruction(model):
    u, wi, wo = sample_queries(512, 0)
    ev = BtfEvaluator(model, SynthesisParams(mode=SynthesisMode.REPEAT))
    got = ev.query_batch(u, wi, wo)
    ref = reconstruct_batch(model, u, to_half_diff(wi, wo))
    np.testing.assert_array_equal(got, np.maximum(ref, np.float32(0.0)))
    assert got.dtype == np.float32
    assert np.all(got >= 0.0)


# --- independent composition oracle ------------------------------------------


def scalar_bilinear(plane, uv):
    """Textbook fetch of one point, scalar arithmetic only."""

    def address(i, n, wrap):
        if wrap == WrapMode.WRAP:
            return int(i % n)
        return int(min(max(i, 0), n - 1))

    h, w, _ = plane.data.shape
    x = uv[0] * w - 0.5
    y = uv[1] * h - 0.5
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    fx, fy = x - x0, y - y0
    out = 0.0
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = address(x0 + dx, w, plane.wrap_u)
            yi = address(y0 + dy, h, plane.wrap_v)
            out = out + wy * wx * plane.data[yi, xi].astype(np.float64)
    return out


def naive_query(model, u, wi, wo):
    hd = to_half_diff(np.asarray(wi)[None], np.asarray(wo)[None])
    uv_h, uv_d = halfdiff_to_plane_uv(hd)
    x = np.concatenate(
        [
            scalar_bilinear(model.plane_u, np.asarray(u, dtype=np.float64)),
            scalar_bilinear(model.plane_h, uv_h[0]),
            scalar_bilinear(model.plane_d, uv_d[0]),
        ]
    )
    last = len(model.mlp.weights) - 1
    for i, (w, b) in enumerate(zip(model.mlp.weights, model.mlp.biases)):
        x = w.astype(np.float64) @ x + b.astype(np.float64)
        if i < last or model.mlp.output_activation:
            x = np.where(x > 0.0, x, model.mlp.leaky_slope * x)
    return np.maximum(x, 0.0)


def test_query_matches_scalar_oracle(model):
    u, wi, wo = sample_queries(32, 1)
    ev = BtfEvaluator(model, SynthesisParams(mode=SynthesisMode.REPEAT))
    got = ev.query_batch(u, wi, wo)
    for k in range(32):
        want = naive_query(model, u[k], wi[k], wo[k])
        np.testing.assert_allclose(got[k], want, atol=1e-5)


def test_single_query_equals_batch_row(model):
    u, wi, wo = sample_queries(8, 2)
    ev = BtfEvaluator(model)
    batch = ev.query_batch(u, wi, wo)
    for k in range(8):
        one = ev.query(BtfQuery(u[k], wi[k], wo[k]))
        np.testing.assert_array_equal(one, batch[k])


# --- purity: order, chunking, mode composition -------------------------------


def test_query_order_invariance(model):
    u, wi, wo = sample_queries(20000, 4)
    ev = BtfEvaluator(model, SynthesisParams(mode=SynthesisMode.HIST_BLEND, seed=2))
    base = ev.query_batch(u, wi, wo)
    perm = np.random.default_rng(5).permutation(20000)
    shuffled = ev.query_batch(u[perm], wi[perm], wo[perm])
    unshuffled = np.empty_like(shuffled)
    unshuffled[perm] = shuffled
    np.testing.assert_array_equal(unshuffled, base)


def test_query_split_invariance(model):
    u, wi, wo = sample_queries(20000, 6)
    ev = BtfEvaluator(model)
    whole = ev.query_batch(u, wi, wo)
    cut = 7777
    parts = np.concatenate(
        [
            ev.query_batch(u[:cut], wi[:cut], wo[:cut]),
            ev.query_batch(u[cut:], wi[cut:], wo[cut:]),
        ]
    )
    np.testing.assert_array_equal(parts, whole)


def test_hex_equals_hist_at_lattice_origin(model):
    # At a lattice vertex both modes collapse to weight (1, 0, 0) on the
    # same hashed patch, so the full queries agree bitwise.
    u = np.zeros((1, 2))
    wi = np.tile([0.0, 0.0, 1.0], (1, 1))
    hist = BtfEvaluator(model, SynthesisParams(mode=SynthesisMode.HIST_BLEND, seed=9))
    hexe = BtfEvaluator(
        model, SynthesisParams(mode=SynthesisMode.HEX_TILE, seed=9), gauss=hist.gauss
    )
    np.testing.assert_array_equal(
        hist.query_batch(u, wi, wi), hexe.query_batch(u, wi, wi)
    )


# --- histogram mode against the repeat baseline -------------------------------


def quantile_u_plane(h=64, w=64, c=16, seed=30):
    """Per channel: a shuffled, scaled copy of the exact normal quantiles.

    The rank map is then linear, so with lut_size == h * w Gaussianization
    round-trips exactly and a blend with weight 1 must reproduce a plain
    fetch at the hashed patch offset."""
    n = h * w
    q = ndtri((np.arange(n) + 0.5) / n)
    rng = np.random.default_rng(seed)
    chans = [
        q[rng.permutation(n)].reshape(h, w) * (0.4 + 0.05 * k) for k in range(c)
    ]
    data = np.stack(chans, axis=-1).astype(np.float32)
    return FeaturePlane(data, WrapMode.WRAP, WrapMode.WRAP)


def test_hist_blend_at_vertex_matches_repeat_at_hash_offset():
    m = init_model(u_size=(64, 64), seed=7)
    m.plane_u = quantile_u_plane()
    seed = 11
    hist = BtfEvaluator(
        m,
        SynthesisParams(
            mode=SynthesisMode.HIST_BLEND, seed=seed, tileable_border=0, lut_size=4096
        ),
    )
    rep = BtfEvaluator(m, SynthesisParams(mode=SynthesisMode.REPEAT))
    off = lattice_vertex_offsets(np.array(0), np.array(0), seed)
    wi = np.array([[0.3, -0.2, 0.933]])
    wi /= np.linalg.norm(wi)
    a = hist.query_batch(np.zeros((1, 2)), wi, wi)
    b = rep.query_batch(off[None, :], wi, wi)
    np.testing.assert_allclose(a, b, atol=1e-4)


def test_quilted_equals_repeat_on_quilted_plane(model):
    big = FeaturePlane(
        np.random.default_rng(31).normal(size=(32, 32, 16)).astype(np.float32) * 0.1,
        WrapMode.WRAP,
        WrapMode.WRAP,
    )
    u, wi, wo = sample_queries(256, 8)
    q = BtfEvaluator(
        model,
        SynthesisParams(mode=SynthesisMode.QUILTED, quilted_plane=big, quilted_scale=2.0),
    )
    rep_model = init_model(u_size=(32, 32), seed=3)
    rep_model.plane_h = model.plane_h
    rep_model.plane_d = model.plane_d
    rep_model.mlp = model.mlp
    rep_model.plane_u = big
    rep = BtfEvaluator(rep_model, SynthesisParams(mode=SynthesisMode.REPEAT))
    np.testing.assert_array_equal(
        q.query_batch(u, wi, wo), rep.query_batch(u / 2.0, wi, wo)
    )


# --- validation ----------------------------------------------------------------


def test_below_horizon_raises_with_indices(model):
    u, wi, wo = sample_queries(6, 10)
    wi[2] = [0.0, 0.6, -0.8]
    wi[5] = [0.0, 0.6, -0.8]
    ev = BtfEvaluator(model)
    with pytest.raises(OutOfHemisphereError) as err:
        ev.query_batch(u, wi, wo)
    assert list(err.value.indices) == [2, 5]


def test_non_unit_direction_rejected(model):
    u, wi, wo = sample_queries(4, 11)
    wo[1] *= 1.5
    ev = BtfEvaluator(model)
    with pytest.raises(ArgumentError, match="wo"):
        ev.query_batch(u, wi, wo)


def test_bad_u_star_rejected(model):
    u, wi, wo = sample_queries(4, 12)
    ev = BtfEvaluator(model)
    with pytest.raises(ArgumentError):
        ev.query_batch(u[:, :1], wi, wo)
    u[2, 0] = np.nan
    with pytest.raises(ArgumentError):
        ev.query_batch(u, wi, wo)


def test_quilted_mode_requires_plane_at_construction(model):
    with pytest.raises(ConfigError):
        BtfEvaluator(model, SynthesisParams(mode=SynthesisMode.QUILTED))


def test_default_tileable_border(model):
    assert default_tileable_border(model.plane_u) == 1
    assert default_tileable_border(init_model(u_size=(64, 48), seed=0).plane_u) == 3


def test_grid_direction_pairs_evaluate(model):
    # every pair of a realistic acquisition grid passes validation
    dirs = direction_grid(3, 4, 60.0)
    n = dirs.shape[0]
    ii, oo = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    u = np.zeros((n * n, 2))
    out = BtfEvaluator(model).query_batch(u, dirs[ii.ravel()], dirs[oo.ravel()])
    assert out.shape == (n * n, 3)
    assert np.all(np.isfinite(out))
