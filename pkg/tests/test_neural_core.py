import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btfsynth.errors import ArgumentError, CorruptionError, FormatError, VersionError
from btfsynth.neural_core import (
    AdamWState,
    FeaturePlane,
    MlpParams,
    TriplePlaneModel,
    WrapMode,
    adamw_step,
    bilinear_ingredients,
    init_model,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    plane_fetch,
    plane_fetch_backward,
    save_checkpoint,
)


def naive_fetch(plane, u, v):
    """Scalar bilinear reference with explicit wrap/clamp index handling."""
    h, w, c = plane.data.shape
    x = u * w - 0.5
    y = v * h - 0.5
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    fx, fy = x - x0, y - y0

    def ax(i, n, mode):
        return i % n if mode == WrapMode.WRAP else min(max(i, 0), n - 1)

    out = np.zeros(c)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            out += wy * wx * plane.data[ax(y0 + dy, h, plane.wrap_v),
                                        ax(x0 + dx, w, plane.wrap_u)]
    return out


@pytest.fixture
def wrap_plane():
    rng = np.random.default_rng(0)
    return FeaturePlane(
        rng.normal(size=(8, 16, 3)).astype(np.float32), WrapMode.WRAP, WrapMode.WRAP
    )


@pytest.fixture
def clamp_plane():
    rng = np.random.default_rng(1)
    return FeaturePlane(
        rng.normal(size=(8, 16, 3)).astype(np.float32), WrapMode.CLAMP, WrapMode.WRAP
    )


def test_fetch_matches_naive_oracle(wrap_plane, clamp_plane):
    rng = np.random.default_rng(2)
    uv = rng.uniform(-2.0, 3.0, size=(300, 2))
    for plane in (wrap_plane, clamp_plane):
        got = plane_fetch(plane, uv)
        want = np.array([naive_fetch(plane, u, v) for u, v in uv])
        np.testing.assert_allclose(got, want, atol=1e-5)


def test_fetch_texel_centers_exact(wrap_plane):
    # Power-of-two dims keep (i + 0.5)/n exact in float, so the fetch
    # degenerates to a direct read.
    h, w, _ = wrap_plane.data.shape
    ii, jj = np.meshgrid(np.arange(w), np.arange(h))
    uv = np.stack([(ii.ravel() + 0.5) / w, (jj.ravel() + 0.5) / h], axis=-1)
    got = plane_fetch(wrap_plane, uv).reshape(h, w, 3)
    np.testing.assert_array_equal(got, wrap_plane.data)


def test_wrap_periodicity(wrap_plane):
    rng = np.random.default_rng(3)
    uv = rng.random((100, 2))
    base = plane_fetch(wrap_plane, uv)
    for shift in ((1, 0), (0, 1), (-2, 3)):
        np.testing.assert_allclose(
            plane_fetch(wrap_plane, uv + np.array(shift, dtype=float)),
            base,
            atol=1e-5,
        )


def test_wrap_seam_continuity(wrap_plane):
    # Crossing u = 0 must not jump: sample a tight straddle.
    eps = 1e-9
    a = plane_fetch(wrap_plane, np.array([[0.0 - eps, 0.37]]))
    b = plane_fetch(wrap_plane, np.array([[0.0 + eps, 0.37]]))
    np.testing.assert_allclose(a, b, atol=1e-5)


def test_clamp_edges(clamp_plane):
    # Far outside the clamped axis reads the edge column.
    got = plane_fetch(clamp_plane, np.array([[5.0, 0.5 / 8], [-5.0, 0.5 / 8]]))
    np.testing.assert_allclose(got[0], clamp_plane.data[0, -1], atol=1e-6)
    np.testing.assert_allclose(got[1], clamp_plane.data[0, 0], atol=1e-6)


def test_bilinear_weights_partition_of_unity(wrap_plane):
    rng = np.random.default_rng(4)
    uv = rng.uniform(-4.0, 4.0, size=(1000, 2))
    _, w = bilinear_ingredients(wrap_plane, uv)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-6)
    assert np.all(w >= 0.0)


@settings(max_examples=80, deadline=None)
@given(
    u=st.floats(-10.0, 10.0, allow_nan=False),
    v=st.floats(-10.0, 10.0, allow_nan=False),
    seed=st.integers(0, 1000),
)
def test_fetch_is_convex_combination(u, v, seed):
    # Bilinear output must lie inside the hull of the plane's values.
    rng = np.random.default_rng(seed)
    plane = FeaturePlane(rng.normal(size=(3, 5, 2)), WrapMode.WRAP, WrapMode.CLAMP)
    got = plane_fetch(plane, np.array([u, v]))
    lo = plane.data.min(axis=(0, 1)) - 1e-9
    hi = plane.data.max(axis=(0, 1)) + 1e-9
    assert np.all(got >= lo) and np.all(got <= hi)


def test_fetch_backward_is_adjoint(wrap_plane, clamp_plane):
    # <fetch(P, uv), G> == <P, fetch_backward(uv, G)> for any G: the scatter
    # is the exact transpose of the gather.
    rng = np.random.default_rng(5)
    uv = rng.uniform(-1.0, 2.0, size=(64, 2))
    for plane in (wrap_plane, clamp_plane):
        g = rng.normal(size=(64, 3))
        lhs = float(np.sum(plane_fetch(plane, uv).astype(np.float64) * g))
        grad = plane_fetch_backward(plane, uv, g)
        rhs = float(np.sum(plane.data.astype(np.float64) * grad))
        assert abs(lhs - rhs) < 1e-4 * max(1.0, abs(lhs))


def test_fetch_backward_finite_difference():
    rng = np.random.default_rng(6)
    plane = FeaturePlane(rng.normal(size=(4, 4, 2)), WrapMode.WRAP, WrapMode.WRAP)
    uv = rng.random((5, 2))
    g = rng.normal(size=(5, 2))
    grad = plane_fetch_backward(plane, uv, g)
    eps = 1e-6
    for j in range(4):
        for i in range(4):
            for c in range(2):
                d = plane.data.copy()
                d[j, i, c] += eps
                up = np.sum(plane_fetch(FeaturePlane(d, plane.wrap_u, plane.wrap_v), uv) * g)
                d[j, i, c] -= 2 * eps
                dn = np.sum(plane_fetch(FeaturePlane(d, plane.wrap_u, plane.wrap_v), uv) * g)
                fd = (up - dn) / (2 * eps)
                assert abs(fd - grad[j, i, c]) < 1e-5


def tiny_mlp(rng, dims=(4, 6, 5, 2), dtype=np.float64):
    ws = [rng.normal(size=(dims[i + 1], dims[i])).astype(dtype) for i in range(len(dims) - 1)]
    bs = [rng.normal(size=dims[i + 1]).astype(dtype) for i in range(len(dims) - 1)]
    return MlpParams(ws, bs, leaky_slope=0.01, output_activation=False)


def test_mlp_backward_finite_difference():
    rng = np.random.default_rng(7)
    mlp = tiny_mlp(rng)
    x = rng.normal(size=(9, 4))
    r = rng.normal(size=(9, 2))  # loss = sum(y * r)
    y, cache = mlp_forward(mlp, x, want_cache=True)
    w_grads, b_grads, gx = mlp_backward(mlp, cache, r)
    eps = 1e-6

    def loss(m, xx):
        return float(np.sum(mlp_forward(m, xx) * r))

    for li in range(len(mlp.weights)):
        for arr, grad in ((mlp.weights[li], w_grads[li]), (mlp.biases[li], b_grads[li])):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                k = it.multi_index
                old = arr[k]
                arr[k] = old + eps
                up = loss(mlp, x)
                arr[k] = old - eps
                dn = loss(mlp, x)
                arr[k] = old
                fd = (up - dn) / (2 * eps)
                assert abs(fd - grad[k]) < 1e-5 * max(1.0, abs(fd))
    for k in np.ndindex(*x.shape):
        old = x[k]
        x[k] = old + eps
        up = loss(mlp, x)
        x[k] = old - eps
        dn = loss(mlp, x)
        x[k] = old
        assert abs((up - dn) / (2 * eps) - gx[k]) < 1e-5


def test_mlp_zero_weights_yield_bias():
    dims = (4, 3, 2)
    ws = [np.zeros((dims[i + 1], dims[i]), dtype=np.float32) for i in range(2)]
    bs = [np.zeros(3, dtype=np.float32), np.array([0.5, -2.0], dtype=np.float32)]
    mlp = MlpParams(ws, bs)
    y = mlp_forward(mlp, np.random.default_rng(0).normal(size=(10, 4)))
    np.testing.assert_array_equal(y, np.tile(bs[1], (10, 1)))


def test_mlp_forward_chunking_invariance():
    # 8192-row chunks: results at any batch size must be bitwise equal to
    # evaluating rows one by one.
    rng = np.random.default_rng(8)
    mlp = tiny_mlp(rng, dims=(4, 8, 3), dtype=np.float32)
    x = rng.normal(size=(10000, 4)).astype(np.float32)
    full = mlp_forward(mlp, x)
    some = np.array([mlp_forward(mlp, x[i]) for i in range(0, 10000, 997)])
    np.testing.assert_array_equal(full[::997], some)


def test_mlp_output_activation_flag():
    rng = np.random.default_rng(9)
    mlp = tiny_mlp(rng, dims=(4, 6, 2))
    x = rng.normal(size=(30, 4))
    lin = mlp_forward(mlp, x)
    act = MlpParams(mlp.weights, mlp.biases, mlp.leaky_slope, output_activation=True)
    y = mlp_forward(act, x)
    neg = lin < 0
    assert np.any(neg)
    np.testing.assert_allclose(y[neg], lin[neg] * 0.01, rtol=1e-6)
    np.testing.assert_array_equal(y[~neg], lin[~neg])


def test_adamw_first_step_closed_form():
    p0 = np.array([1.0, -2.0, 3.0], dtype=np.float64)
    g = np.array([0.5, -1.5, 2.5])
    params = {"w0": p0.copy()}
    state = AdamWState.zeros_like(params)
    lr, b1, b2, eps, wd = 0.01, 0.9, 0.999, 1e-8, 0.1
    adamw_step(params, {"w0": g}, state, lr, b1, b2, eps, wd, decay_params=("w0",))
    # After bias correction at t=1: m_hat = g, v_hat = g*g.
    want = p0 * (1 - lr * wd) - lr * g / (np.abs(g) + eps)
    np.testing.assert_allclose(params["w0"], want, rtol=1e-12)
    assert state.step == 1


def test_adamw_decay_only_named_params():
    params = {"w0": np.ones(3), "plane_u": np.ones(3)}
    zero = {"w0": np.zeros(3), "plane_u": np.zeros(3)}
    state = AdamWState.zeros_like(params)
    for _ in range(4):
        adamw_step(params, zero, state, 0.1, weight_decay=0.5, decay_params=("w0",))
    np.testing.assert_allclose(params["w0"], (1 - 0.1 * 0.5) ** 4)
    np.testing.assert_array_equal(params["plane_u"], np.ones(3))


def test_adamw_per_name_learning_rates():
    params = {"a": np.zeros(1), "b": np.zeros(1)}
    g = {"a": np.ones(1), "b": np.ones(1)}
    state = AdamWState.zeros_like(params)
    adamw_step(params, g, state, {"a": 0.1, "b": 0.001})
    assert params["a"][0] == pytest.approx(-0.1, rel=1e-6)
    assert params["b"][0] == pytest.approx(-0.001, rel=1e-6)


def test_init_model_shapes_and_wraps():
    m = init_model()
    assert m.plane_u.data.shape == (400, 400, 16)
    assert m.plane_h.data.shape == (20, 20, 8)
    assert m.plane_d.data.shape == (20, 20, 8)
    assert m.plane_u.wrap_u == WrapMode.WRAP and m.plane_u.wrap_v == WrapMode.WRAP
    for p in (m.plane_h, m.plane_d):
        assert p.wrap_u == WrapMode.CLAMP  # theta axis clamps
        assert p.wrap_v == WrapMode.WRAP  # phi axis wraps
    assert m.mlp.dims == [32, 32, 32, 32, 3]
    for b in m.mlp.biases:
        np.testing.assert_array_equal(b, 0.0)
    assert all(w.dtype == np.float32 for w in m.mlp.weights)


def test_model_rejects_channel_mismatch():
    m = init_model(u_size=(8, 8), hd_size=(4, 4))
    with pytest.raises(ArgumentError):
        TriplePlaneModel(m.plane_h, m.plane_h, m.plane_d, m.mlp)


@pytest.mark.parametrize("seed", [0, 1, 17, 2**31 - 1])
def test_checkpoint_round_trip_bitwise(tmp_path, seed):
    m = init_model(u_size=(6, 5), u_channels=4, hd_size=(3, 4), hd_channels=2,
                   hidden=7, hidden_layers=2, seed=seed)
    path = tmp_path / f"m{seed}.tpln"
    save_checkpoint(path, m)
    got = load_checkpoint(path).model
    for (ka, a), (kb, b) in zip(m.params().items(), got.params().items()):
        assert ka == kb
        np.testing.assert_array_equal(a, b)
    assert got.mlp.leaky_slope == np.float32(m.mlp.leaky_slope)
    assert got.plane_u.wrap_u == m.plane_u.wrap_u
    assert got.plane_h.wrap_u == WrapMode.CLAMP


def test_checkpoint_train_state_round_trip(tmp_path):
    m = init_model(u_size=(4, 4), u_channels=3, hd_size=(2, 2), hd_channels=2,
                   hidden=5, hidden_layers=1, seed=0)
    params = m.params()
    state = AdamWState.zeros_like(params)
    rng = np.random.default_rng(0)
    grads = {k: rng.normal(size=p.shape).astype(np.float32) for k, p in params.items()}
    adamw_step(params, grads, state, 1e-3)
    p = tmp_path / "t.tpln"
    save_checkpoint(p, m, train_state=(7, state))
    b = load_checkpoint(p)
    assert b.epoch == 7 and b.opt_state.step == 1
    for k in params:
        np.testing.assert_array_equal(b.opt_state.m[k], state.m[k].astype(np.float32))
        np.testing.assert_array_equal(b.opt_state.v[k], state.v[k].astype(np.float32))


def test_checkpoint_quilted_block(tmp_path):
    m = init_model(u_size=(4, 4), u_channels=3, hd_size=(2, 2), hd_channels=2,
                   hidden=5, hidden_layers=1, seed=1)
    q = FeaturePlane(
        np.random.default_rng(2).normal(size=(12, 12, 3)).astype(np.float32),
        WrapMode.WRAP, WrapMode.WRAP,
    )
    p = tmp_path / "q.tpln"
    save_checkpoint(p, m, quilted=q, quilted_scale=3.0)
    b = load_checkpoint(p)
    np.testing.assert_array_equal(b.quilted.data, q.data)
    assert b.quilted_scale == 3.0


def test_checkpoint_bad_magic(tmp_path):
    p = tmp_path / "x.tpln"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(FormatError):
        load_checkpoint(p)


def test_checkpoint_bad_version(tmp_path):
    m = init_model(u_size=(2, 2), u_channels=2, hd_size=(2, 2), hd_channels=2,
                   hidden=3, hidden_layers=1)
    p = tmp_path / "v.tpln"
    save_checkpoint(p, m)
    raw = bytearray(p.read_bytes())
    raw[4:8] = (99).to_bytes(4, "little")
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionError):
        load_checkpoint(p)


def test_checkpoint_truncation(tmp_path):
    m = init_model(u_size=(2, 2), u_channels=2, hd_size=(2, 2), hd_channels=2,
                   hidden=3, hidden_layers=1)
    p = tmp_path / "t.tpln"
    save_checkpoint(p, m)
    raw = p.read_bytes()
    p.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(CorruptionError):
        load_checkpoint(p)


def test_checkpoint_rejects_nonfinite(tmp_path):
    m = init_model(u_size=(2, 2), u_channels=2, hd_size=(2, 2), hd_channels=2,
                   hidden=3, hidden_layers=1)
    m.plane_u.data[0, 0, 0] = np.nan
    with pytest.raises(ArgumentError):
        save_checkpoint(tmp_path / "n.tpln", m)


def test_plane_validation():
    with pytest.raises(ArgumentError):
        FeaturePlane(np.zeros((4, 4)), WrapMode.WRAP, WrapMode.WRAP)
    with pytest.raises(ArgumentError):
        FeaturePlane(np.full((2, 2, 1), np.inf), WrapMode.WRAP, WrapMode.WRAP)
