"""Command-line verbs, run through main() exactly as a shell user would.

Covers the exit-code contract (0 ok, 2 bad arguments or missing files,
3 malformed data files, 4 numeric blowup) and a small end-to-end
pipeline: generate, train, quilt, render, compare, benchmark.
"""

import numpy as np
import pytest

from btfsynth.btf_data import load_btf
from btfsynth.cli import main
from btfsynth.neural_core import load_checkpoint
from btfsynth.render import load_image, read_pfm


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """A tiny dataset, a trained checkpoint, and a quilted checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data.btfd"
    ckpt = root / "model.tpln"
    quilt = root / "quilt.tpln"
    # 12x12 keeps the images larger than the 11x11 SSIM window
    assert main([
        "gen-synthetic", "--out", str(data), "--width", "12", "--height", "12",
        "--n-theta", "2", "--n-phi", "2", "--theta-max", "45", "--seed", "3",
    ]) == 0
    assert main([
        "train", "--data", str(data), "--out", str(ckpt),
        "--epochs", "2", "--images", "4",
        "--u-size", "8", "8", "--u-channels", "4",
        "--hd-size", "4", "4", "--hd-channels", "3",
    ]) == 0
    assert main([
        "synth-quilt", "--ckpt", str(ckpt), "--out", str(quilt),
        "--scale", "2.0", "--block", "4", "--overlap", "2",
    ]) == 0
    return {"root": root, "data": data, "ckpt": ckpt, "quilt": quilt}


def test_gen_synthetic_writes_loadable_dataset(tmp_path, capsys):
    out = tmp_path / "d.btfd"
    rc, stdout, _ = run(
        capsys, "gen-synthetic", "--out", out,
        "--width", 6, "--height", 5, "--n-theta", 2, "--n-phi", 3,
    )
    assert rc == 0
    assert "wrote" in stdout and "6x5" in stdout and "36" in stdout
    ds = load_btf(str(out))
    assert (ds.width, ds.height, ds.n_pairs) == (6, 5, 36)
    assert np.all(np.isfinite(ds.data))


def test_gen_synthetic_f16_payload_is_smaller(tmp_path):
    a = tmp_path / "full.btfd"
    b = tmp_path / "half.btfd"
    common = ["gen-synthetic", "--width", "8", "--height", "8",
              "--n-theta", "2", "--n-phi", "2"]
    assert main(common + ["--out", str(a)]) == 0
    assert main(common + ["--out", str(b), "--f16"]) == 0
    assert b.stat().st_size < a.stat().st_size
    da, db = load_btf(str(a)), load_btf(str(b))
    assert db.data.dtype == np.float32
    np.testing.assert_allclose(db.data, da.data, atol=1e-2)


def test_train_checkpoint_records_epoch_and_shapes(ws):
    bundle = load_checkpoint(str(ws["ckpt"]))
    assert bundle.model.plane_u.data.shape == (8, 8, 4)
    assert bundle.model.plane_h.data.shape == (4, 4, 3)
    assert bundle.epoch == 2
    assert bundle.opt_state is not None


def test_train_toml_config_and_csv_log(tmp_path, ws, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('epochs = 3\nlr_decay = 0.5\nimages_per_batch = 8\n')
    csv = tmp_path / "log.csv"
    rc, stdout, _ = run(
        capsys, "train", "--data", ws["data"], "--out", tmp_path / "m.tpln",
        "--config", cfg, "--log-csv", csv,
        "--u-size", 8, 8, "--u-channels", 4,
        "--hd-size", 4, 4, "--hd-channels", 3,
    )
    assert rc == 0
    assert "trained 3 epochs" in stdout
    lines = csv.read_text().strip().splitlines()
    assert lines[0] == "epoch,mean_l1,seconds,lr_planes,lr_mlp"
    assert len(lines) == 4
    lrs = [float(row.split(",")[3]) for row in lines[1:]]
    assert lrs[1] == pytest.approx(0.5 * lrs[0])
    assert lrs[2] == pytest.approx(0.25 * lrs[0])


def test_train_cli_flag_overrides_toml(tmp_path, ws):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("epochs = 5\n")
    csv = tmp_path / "log.csv"
    rc = main([
        "train", "--data", str(ws["data"]), "--out", str(tmp_path / "m.tpln"),
        "--config", str(cfg), "--epochs", "2", "--log-csv", str(csv),
        "--u-size", "8", "8", "--u-channels", "4",
        "--hd-size", "4", "4", "--hd-channels", "3",
    ])
    assert rc == 0
    assert len(csv.read_text().strip().splitlines()) == 3


def test_train_unknown_toml_key_rejected(tmp_path, ws, capsys):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("epocs = 3\n")
    rc, _, stderr = run(
        capsys, "train", "--data", ws["data"],
        "--out", tmp_path / "m.tpln", "--config", cfg,
    )
    assert rc == 2
    assert "unknown config keys" in stderr and "epocs" in stderr


def test_train_resume_from_cli(ws, tmp_path):
    out2 = tmp_path / "resumed.tpln"
    rc = main([
        "train", "--data", str(ws["data"]), "--out", str(out2),
        "--resume", str(ws["ckpt"]), "--epochs", "4",
    ])
    assert rc == 0
    assert load_checkpoint(str(out2)).epoch == 4


def test_eval_prints_metrics(ws, capsys):
    rc, stdout, _ = run(
        capsys, "eval", "--ckpt", ws["ckpt"], "--data", ws["data"],
        "--pairs", 4,
    )
    assert rc == 0
    assert "pairs evaluated: 4" in stdout
    vals = {}
    for line in stdout.splitlines():
        if ":" in line:
            key, _, v = line.partition(":")
            try:
                vals[key.strip()] = float(v)
            except ValueError:
                pass
    for key in ("mean L1", "mean RMSE", "mean DSSIM"):
        assert key in vals and np.isfinite(vals[key])


def test_render_pfm(ws, tmp_path, capsys):
    out = tmp_path / "img.pfm"
    rc, stdout, _ = run(
        capsys, "render", "--ckpt", ws["ckpt"], "--out", out,
        "--width", 32, "--height", 32, "--mode", "hist", "--scale", 2.5,
    )
    assert rc == 0
    assert "32x32" in stdout
    img = read_pfm(str(out))
    assert img.shape == (32, 32, 3)
    assert np.all(np.isfinite(img)) and np.all(img >= 0)


def test_render_png(ws, tmp_path):
    out = tmp_path / "img.png"
    rc = main([
        "render", "--ckpt", str(ws["ckpt"]), "--out", str(out),
        "--width", "16", "--height", "16", "--mode", "hex",
    ])
    assert rc == 0
    img = load_image(str(out))
    assert img.shape == (16, 16, 3)
    assert np.all(img >= 0) and np.all(img <= 1)


def test_render_reference_dataset(ws, tmp_path):
    out = tmp_path / "ref.pfm"
    rc = main([
        "render", "--reference", str(ws["data"]), "--out", str(out),
        "--width", "16", "--height", "16",
    ])
    assert rc == 0
    assert np.all(np.isfinite(read_pfm(str(out))))


def test_render_quilt_mode_needs_quilted_checkpoint(ws, tmp_path, capsys):
    out = tmp_path / "q.pfm"
    rc, _, stderr = run(
        capsys, "render", "--ckpt", ws["ckpt"], "--mode", "quilt",
        "--out", out, "--width", 16, "--height", 16,
    )
    assert rc == 2
    assert "synth-quilt" in stderr
    rc2 = main([
        "render", "--ckpt", str(ws["quilt"]), "--mode", "quilt",
        "--out", str(out), "--width", "16", "--height", "16",
    ])
    assert rc2 == 0


def test_render_requires_model_or_reference(tmp_path, capsys):
    rc, _, stderr = run(capsys, "render", "--out", tmp_path / "x.pfm")
    assert rc == 2
    assert "--ckpt" in stderr


def test_render_rejects_unknown_image_extension(ws, tmp_path, capsys):
    rc, _, stderr = run(
        capsys, "render", "--ckpt", ws["ckpt"], "--out", tmp_path / "x.jpg",
    )
    assert rc == 2
    assert ".png or .pfm" in stderr


def test_render_zero_light_direction_rejected(ws, tmp_path, capsys):
    rc, _, stderr = run(
        capsys, "render", "--ckpt", ws["ckpt"], "--out", tmp_path / "x.pfm",
        "--light-dir", 0, 0, 0,
    )
    assert rc == 2
    assert "light-dir" in stderr


def test_synth_quilt_reports_plane_and_storage(ws, tmp_path, capsys):
    out = tmp_path / "q.tpln"
    rc, stdout, _ = run(
        capsys, "synth-quilt", "--ckpt", ws["ckpt"], "--out", out,
        "--scale", 2.0, "--block", 4, "--overlap", 2, "--seed", 9,
    )
    assert rc == 0
    assert "quilted plane 16x16x4" in stdout
    assert "plane storage" in stdout
    bundle = load_checkpoint(str(out))
    assert bundle.quilted is not None
    assert bundle.quilted.data.shape == (16, 16, 4)
    assert bundle.quilted_scale == 2.0


def test_metrics_identical_images(ws, tmp_path, capsys):
    img = tmp_path / "img.pfm"
    assert main([
        "render", "--ckpt", str(ws["ckpt"]), "--out", str(img),
        "--width", "24", "--height", "24",
    ]) == 0
    rc, stdout, _ = run(capsys, "metrics", "--a", img, "--b", img)
    assert rc == 0
    metrics = dict(
        line.split(":") for line in stdout.splitlines() if ":" in line
    )
    assert float(metrics["RMSE"]) == 0.0
    assert float(metrics["DSSIM"]) == 0.0


def test_metrics_model_against_reference(ws, capsys):
    rc, stdout, _ = run(
        capsys, "metrics", "--ckpt", ws["ckpt"], "--data", ws["data"],
        "--width", 16, "--height", 16, "--per-channel",
    )
    assert rc == 0
    lines = {l.split(":")[0].strip(): l for l in stdout.splitlines()}
    dssim = float(lines["DSSIM"].split(":")[1])
    assert 0.0 <= dssim <= 1.0
    assert len(lines["DSSIM per channel"].split(":")[1].split()) == 3


def test_metrics_argument_validation(ws, tmp_path, capsys):
    rc, _, stderr = run(capsys, "metrics")
    assert rc == 2 and "--a/--b or --ckpt/--data" in stderr
    img = tmp_path / "img.pfm"
    assert main([
        "render", "--ckpt", str(ws["ckpt"]), "--out", str(img),
        "--width", "16", "--height", "16",
    ]) == 0
    rc2, _, stderr2 = run(capsys, "metrics", "--a", img)
    assert rc2 == 2 and "both --a and --b" in stderr2


def test_bench_and_scaling_modes(ws, capsys):
    rc, stdout, _ = run(
        capsys, "bench", "--ckpt", ws["ckpt"], "--n", 2000, "--threads", 2,
    )
    assert rc == 0
    assert "2000 queries" in stdout and "2 thread(s)" in stdout
    rc2, stdout2, _ = run(
        capsys, "bench", "--ckpt", ws["ckpt"], "--n", 256, "--scaling",
    )
    assert rc2 == 0
    assert "ratio" in stdout2


def test_missing_files_exit_code_2(tmp_path, capsys):
    rc, _, stderr = run(
        capsys, "eval", "--ckpt", tmp_path / "nope.tpln",
        "--data", tmp_path / "nope.btfd",
    )
    assert rc == 2
    assert "error:" in stderr


def test_corrupt_files_exit_code_3(ws, tmp_path, capsys):
    bad_data = tmp_path / "junk.btfd"
    bad_data.write_bytes(b"not a dataset, just bytes" * 4)
    rc, _, stderr = run(
        capsys, "eval", "--ckpt", ws["ckpt"], "--data", bad_data,
    )
    assert rc == 3
    assert "data error" in stderr

    bad_ckpt = tmp_path / "junk.tpln"
    bad_ckpt.write_bytes(b"\x00" * 64)
    rc2, _, _ = run(
        capsys, "render", "--ckpt", bad_ckpt, "--out", tmp_path / "x.pfm",
    )
    assert rc2 == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_training_exit_code_4(ws, tmp_path, capsys):
    rc, _, stderr = run(
        capsys, "train", "--data", ws["data"], "--out", tmp_path / "m.tpln",
        "--epochs", 2, "--images", 4, "--lr-planes", 1e20, "--lr-mlp", 1e20,
        "--u-size", 8, 8, "--u-channels", 4,
        "--hd-size", 4, 4, "--hd-channels", 3,
    )
    assert rc == 4
    assert "numeric failure" in stderr and "non-finite" in stderr


def test_unknown_verb_exits_via_argparse():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
