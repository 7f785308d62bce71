"""Command-line front end.

Verbs: gen-synthetic, train, eval, render, synth-quilt, metrics, bench.
Exit codes: 0 success, 2 argument/config error, 3 data or file format
error, 4 numeric failure during optimization.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .btf_data import SyntheticBtfSpec, generate_synthetic_btf, load_btf, save_btf
from .errors import ArgumentError, FormatError, NumericError
from .evaluator import BtfEvaluator
from .neural_core import init_model, load_checkpoint, save_checkpoint
from .render import (
    RenderSpec,
    bench,
    bench_scaling,
    compute_dssim,
    compute_rmse,
    load_image,
    render_plane,
    render_reference,
    write_pfm,
    write_png,
)
from .synthesis import (
    SynthesisMode,
    SynthesisParams,
    quilt_synthesize,
    storage_estimate,
)
from .trainer import TrainConfig, evaluate_reconstruction, train

_MODE_NAMES = {
    "repeat": SynthesisMode.REPEAT,
    "hist": SynthesisMode.HIST_BLEND,
    "hex": SynthesisMode.HEX_TILE,
    "quilt": SynthesisMode.QUILTED,
}


def _load_toml(path) -> dict:
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    with open(path, "rb") as f:
        return tomllib.load(f)


def _build_params(args, bundle=None) -> SynthesisParams:
    mode = _MODE_NAMES[args.mode]
    kwargs = {"mode": mode, "seed": args.seed}
    if getattr(args, "grid_scale", None) is not None:
        kwargs["grid_scale"] = args.grid_scale
    if getattr(args, "sharpness", None) is not None:
        kwargs["hex_sharpness"] = args.sharpness
    if getattr(args, "border", None) is not None:
        kwargs["tileable_border"] = args.border
    if mode is SynthesisMode.QUILTED:
        if bundle is None or bundle.quilted is None:
            raise ArgumentError(
                "quilt mode needs a checkpoint with a quilted plane "
                "(run synth-quilt first)"
            )
        kwargs["quilted_plane"] = bundle.quilted
        kwargs["quilted_scale"] = bundle.quilted_scale
    return SynthesisParams(**kwargs)


def _make_evaluator(args) -> BtfEvaluator:
    bundle = load_checkpoint(args.ckpt)
    params = _build_params(args, bundle)
    return BtfEvaluator(bundle.model, params, gauss=bundle.gauss)


def _render_spec(args) -> RenderSpec:
    kwargs = {
        "width": args.width,
        "height": args.height,
        "uv_scale": args.scale,
        "camera": args.camera,
        "light": args.light,
        "exposure": args.exposure,
        "gamma": args.gamma,
    }
    if args.eye is not None:
        kwargs["eye"] = tuple(args.eye)
    if args.target is not None:
        kwargs["target"] = tuple(args.target)
    if args.fov is not None:
        kwargs["fov_deg"] = args.fov
    if args.light_dir is not None:
        d = np.asarray(args.light_dir, dtype=np.float64)
        n = np.linalg.norm(d)
        if n < 1e-8:
            raise ArgumentError("--light-dir must be nonzero")
        kwargs["light_dir"] = tuple((d / n).tolist())
    if args.radiance is not None:
        kwargs["light_radiance"] = tuple(args.radiance)
    if args.light_pos is not None:
        kwargs["light_pos"] = tuple(args.light_pos)
    if args.power is not None:
        kwargs["light_power"] = tuple(args.power)
    return RenderSpec(**kwargs)


def _write_image(path, img, spec: RenderSpec) -> None:
    p = str(path)
    if p.lower().endswith(".pfm"):
        write_pfm(p, img)
    elif p.lower().endswith(".png"):
        write_png(p, img, exposure=spec.exposure, gamma=spec.gamma)
    else:
        raise ArgumentError(f"output must end in .png or .pfm: {p}")


def _cmd_gen_synthetic(args) -> int:
    kwargs = {
        "width": args.width,
        "height": args.height,
        "n_theta": args.n_theta,
        "n_phi": args.n_phi,
        "theta_max_deg": args.theta_max,
        "albedo_seed": args.seed,
        "roughness_seed": args.seed + 1,
        "specular_weight": args.specular_weight,
    }
    if args.albedo_image is not None:
        kwargs["albedo_image"] = load_image(args.albedo_image)
    if args.roughness is not None:
        kwargs["roughness_range"] = (args.roughness, args.roughness)
    from .btf_data import SCALAR_F16, SCALAR_F32

    ds = generate_synthetic_btf(SyntheticBtfSpec(**kwargs))
    save_btf(args.out, ds, scalar_type=SCALAR_F16 if args.f16 else SCALAR_F32)
    print(
        f"wrote {args.out}: {ds.width}x{ds.height}, {ds.n_pairs} direction pairs"
    )
    return 0


def _cmd_train(args) -> int:
    cfg_kwargs = {}
    if args.config:
        cfg_kwargs.update(_load_toml(args.config))
        allowed = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = sorted(set(cfg_kwargs) - allowed)
        if unknown:
            raise ArgumentError(
                f"unknown config keys in {args.config}: {', '.join(unknown)}"
            )
    for key in (
        "epochs",
        "images_per_batch",
        "lr_planes",
        "lr_mlp",
        "lr_decay",
        "weight_decay",
        "seed",
        "loss_space",
        "checkpoint_every",
        "checkpoint_dir",
        "log_csv",
    ):
        v = getattr(args, key)
        if v is not None:
            cfg_kwargs[key] = v
    config = TrainConfig(**cfg_kwargs)
    dataset = load_btf(args.data)
    model = None
    if args.resume is None and (
        args.u_channels or args.hd_size or args.hd_channels or args.u_size
    ):
        u_size = tuple(args.u_size) if args.u_size else (dataset.width, dataset.height)
        model = init_model(
            u_size=u_size,
            u_channels=args.u_channels or 16,
            hd_size=tuple(args.hd_size) if args.hd_size else (20, 20),
            hd_channels=args.hd_channels or 8,
            seed=config.seed,
        )
    model, report = train(
        dataset, config, model=model, resume_from=args.resume, out_path=args.out
    )
    last = report.epoch_losses[-1] if report.epoch_losses else float("nan")
    total = sum(report.epoch_seconds)
    print(f"trained {len(report.epoch_losses)} epochs in {total:.1f}s, final mean L1 {last:.6g}")
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    dataset = load_btf(args.data)
    subset = None
    if args.pairs is not None:
        n = dataset.n_pairs
        subset = np.arange(0, n, max(1, n // args.pairs))
    m = evaluate_reconstruction(bundle.model, dataset, pair_subset=subset)
    print(f"pairs evaluated: {m['pair_subset'].size}")
    print(f"mean L1:    {m['mean_l1']:.6g}")
    print(f"mean RMSE:  {m['mean_rmse']:.6g}")
    print(f"mean DSSIM: {m['mean_dssim']:.6g}")
    return 0


def _cmd_render(args) -> int:
    spec = _render_spec(args)
    if args.reference is not None:
        dataset = load_btf(args.reference)
        img = render_reference(dataset, spec)
    else:
        if args.ckpt is None:
            raise ArgumentError("render needs --ckpt (or --reference)")
        img = render_plane(_make_evaluator(args), spec)
    _write_image(args.out, img, spec)
    print(f"wrote {args.out} ({spec.width}x{spec.height}, uv_scale {spec.uv_scale})")
    return 0


def _cmd_synth_quilt(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    plane = bundle.model.plane_u
    out_w = round(args.scale * plane.width)
    out_h = round(args.scale * plane.height)
    block = args.block or max(8, min(plane.width, plane.height) // 4)
    overlap = args.overlap or max(2, block // 6)
    quilted = quilt_synthesize(
        plane,
        out_w,
        out_h,
        block,
        overlap,
        seed=args.seed,
        candidate_stride=args.stride,
        slack=args.slack,
    )
    train_state = None
    if bundle.opt_state is not None and bundle.epoch is not None:
        train_state = (bundle.epoch, bundle.opt_state)
    save_checkpoint(
        args.out,
        bundle.model,
        gauss=bundle.gauss,
        quilted=quilted,
        quilted_scale=float(args.scale),
        train_state=train_state,
    )
    params = SynthesisParams(
        mode=SynthesisMode.QUILTED, quilted_plane=quilted, quilted_scale=args.scale
    )
    nbytes = storage_estimate(bundle.model, params, args.scale)
    print(
        f"wrote {args.out}: quilted plane {out_w}x{out_h}x{plane.channels} "
        f"(block {block}, overlap {overlap}), plane storage {nbytes} bytes"
    )
    return 0


def _cmd_metrics(args) -> int:
    if args.a is not None or args.b is not None:
        if args.a is None or args.b is None:
            raise ArgumentError("metrics needs both --a and --b")
        ia, ib = load_image(args.a), load_image(args.b)
    else:
        if args.ckpt is None or args.data is None:
            raise ArgumentError("metrics needs --a/--b or --ckpt/--data")
        spec = _render_spec(args)
        ia = render_plane(_make_evaluator(args), spec).data
        ib = render_reference(load_btf(args.data), spec).data
    print(f"RMSE:  {compute_rmse(ia, ib):.6g}")
    print(f"DSSIM: {compute_dssim(ia, ib):.6g}")
    if args.per_channel:
        vals = compute_dssim(ia, ib, per_channel=True)
        print("DSSIM per channel: " + " ".join(f"{v:.6g}" for v in vals))
    return 0


def _cmd_bench(args) -> int:
    ev = _make_evaluator(args)
    if args.scaling:
        r = bench_scaling(ev, args.n, threads=args.threads, seed=args.seed)
        print(
            f"n={r['n']}: {r['time_n'] * 1e3:.1f} ms; "
            f"4n: {r['time_4n'] * 1e3:.1f} ms; ratio {r['ratio']:.2f}"
        )
    else:
        r = bench(ev, args.n, threads=args.threads, seed=args.seed)
        print(
            f"{r['n']} queries, {r['threads']} thread(s): "
            f"{r['seconds'] * 1e3:.1f} ms "
            f"({r['queries_per_sec']:.3g}/s, {r['ns_per_query']:.0f} ns/query)"
        )
    return 0


def _add_eval_mode_flags(p):
    p.add_argument("--ckpt", help="checkpoint file (.tpln)")
    p.add_argument(
        "--mode", choices=sorted(_MODE_NAMES), default="repeat", help="synthesis mode"
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-scale", dest="grid_scale", type=float, default=None)
    p.add_argument("--sharpness", type=float, default=None)
    p.add_argument("--border", type=int, default=None)


def _add_render_flags(p):
    p.add_argument("--scale", type=float, default=1.0, help="UV scale factor")
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--camera", choices=("ortho", "persp"), default="ortho")
    p.add_argument("--eye", type=float, nargs=3, default=None)
    p.add_argument("--target", type=float, nargs=3, default=None)
    p.add_argument("--fov", type=float, default=None)
    p.add_argument("--light", choices=("directional", "point"), default="directional")
    p.add_argument("--light-dir", dest="light_dir", type=float, nargs=3, default=None)
    p.add_argument("--radiance", type=float, nargs=3, default=None)
    p.add_argument("--light-pos", dest="light_pos", type=float, nargs=3, default=None)
    p.add_argument("--power", type=float, nargs=3, default=None)
    p.add_argument("--exposure", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=2.2)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="btf", description="Neural BTF compression, synthesis, and rendering."
    )
    sub = ap.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen-synthetic", help="generate a synthetic BTF dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--height", type=int, default=64)
    # defaults mirror SyntheticBtfSpec so the CLI and the library agree
    g.add_argument(
        "--n-theta", dest="n_theta", type=int, default=SyntheticBtfSpec.n_theta
    )
    g.add_argument("--n-phi", dest="n_phi", type=int, default=SyntheticBtfSpec.n_phi)
    g.add_argument(
        "--theta-max",
        dest="theta_max",
        type=float,
        default=SyntheticBtfSpec.theta_max_deg,
    )
    g.add_argument("--seed", type=int, default=0)
    g.add_argument(
        "--specular-weight",
        dest="specular_weight",
        type=float,
        default=SyntheticBtfSpec.specular_weight,
    )
    g.add_argument("--roughness", type=float, default=None)
    g.add_argument("--albedo-image", dest="albedo_image", default=None)
    g.add_argument("--f16", action="store_true", help="store half-precision payload")
    g.set_defaults(fn=_cmd_gen_synthetic)

    t = sub.add_parser("train", help="fit a model to a BTF dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="TOML file of training settings")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--images", dest="images_per_batch", type=int, default=None)
    t.add_argument("--lr-planes", dest="lr_planes", type=float, default=None)
    t.add_argument("--lr-mlp", dest="lr_mlp", type=float, default=None)
    t.add_argument("--lr-decay", dest="lr_decay", type=float, default=None)
    t.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument(
        "--loss-space", dest="loss_space", choices=("linear", "log1p"), default=None
    )
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument("--checkpoint-dir", dest="checkpoint_dir", default=None)
    t.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)
    t.add_argument("--log-csv", dest="log_csv", default=None)
    t.add_argument("--u-size", dest="u_size", type=int, nargs=2, default=None)
    t.add_argument("--u-channels", dest="u_channels", type=int, default=None)
    t.add_argument("--hd-size", dest="hd_size", type=int, nargs=2, default=None)
    t.add_argument("--hd-channels", dest="hd_channels", type=int, default=None)
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("eval", help="reconstruction metrics against a dataset")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--pairs", type=int, default=None, help="pair subset size")
    e.set_defaults(fn=_cmd_eval)

    r = sub.add_parser("render", help="render the material plane to PNG or PFM")
    _add_eval_mode_flags(r)
    _add_render_flags(r)
    r.add_argument("--out", required=True)
    r.add_argument(
        "--reference", default=None, help="render a BTF dataset directly instead"
    )
    r.set_defaults(fn=_cmd_render)

    q = sub.add_parser("synth-quilt", help="precompute a quilted spatial plane")
    q.add_argument("--ckpt", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--scale", type=float, default=15.0)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--block", type=int, default=None)
    q.add_argument("--overlap", type=int, default=None)
    q.add_argument("--stride", type=int, default=1)
    q.add_argument("--slack", type=float, default=0.1)
    q.set_defaults(fn=_cmd_synth_quilt)

    m = sub.add_parser("metrics", help="RMSE/DSSIM between images or vs ground truth")
    m.add_argument("--a", default=None, help="first image (.png/.pfm)")
    m.add_argument("--b", default=None, help="second image (.png/.pfm)")
    _add_eval_mode_flags(m)
    _add_render_flags(m)
    m.add_argument("--data", default=None, help="dataset for the reference render")
    m.add_argument("--per-channel", dest="per_channel", action="store_true")
    m.set_defaults(fn=_cmd_metrics)

    b = sub.add_parser("bench", help="query throughput measurement")
    _add_eval_mode_flags(b)
    b.add_argument("--n", type=int, default=518400)
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--scaling", action="store_true", help="also time 4n and report ratio")
    b.set_defaults(fn=_cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return args.fn(args)
    except (ArgumentError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
