"""Joint optimization of the feature planes and decoder on a BTF dataset.

The objective is mean absolute error between decoded and measured
reflectance over batches of whole direction-pair images (every texel of
each selected pair exactly once, at texel centers). One epoch walks a
seed-derived permutation of all pairs in groups of `images_per_batch`, so
every pair is visited once per epoch. Learning rates decay by a fixed
factor per epoch; planes and decoder have separate rates. Weight decay
(decoupled) applies to decoder weight matrices only.

`loss_and_grads` is the objective: a forward/backward pass that is
dtype-generic, so verification suites can run it in float64. The training
loop itself uses the same code with float32 arrays and BLAS matmuls; batch
shapes are constant across a run, which keeps run-to-run results (and
checkpoints) bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .btf_data import BtfDataset, select_batch_pairs, texel_center_uv
from .errors import ArgumentError, ConfigError, NumericError
from .halfdiff import halfdiff_to_plane_uv
from .neural_core import (
    AdamWState,
    TriplePlaneModel,
    adamw_step,
    bilinear_ingredients,
    init_model,
    leaky_relu,
    load_checkpoint,
    mlp_backward,
    save_checkpoint,
    scatter_corner_grads,
)

LOSS_SPACES = ("linear", "log1p")

# log1p loss space clips predictions here before the log; keeps the
# gradient finite when the decoder briefly swings very negative.
_LOG_CLIP = -0.5


@dataclass
class TrainConfig:
    epochs: int = 50
    images_per_batch: int = 16
    lr_planes: float = 1e-3
    lr_mlp: float = 3e-4
    lr_decay: float = 0.9
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss_space: str = "linear"
    checkpoint_every: int = 10
    checkpoint_dir: str = None
    log_csv: str = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.images_per_batch < 1:
            raise ConfigError("images_per_batch must be >= 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError("lr_decay must be in (0, 1]")
        if self.lr_planes <= 0 or self.lr_mlp <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.loss_space not in LOSS_SPACES:
            raise ConfigError(f"loss_space must be one of {LOSS_SPACES}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")


@dataclass
class TrainReport:
    epoch_losses: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    lr_history: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    final_metrics: dict = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["epoch", "mean_l1", "seconds", "lr_planes", "lr_mlp"])
            for i, (loss, sec, (lrp, lrm)) in enumerate(
                zip(self.epoch_losses, self.epoch_seconds, self.lr_history), start=1
            ):
                wr.writerow([i, f"{loss:.8g}", f"{sec:.3f}", lrp, lrm])


def _gather(plane, idx, w):
    """Bilinear gather, skipping zero-weight corners (value-identical)."""
    flat = plane.data.reshape(-1, plane.channels)
    out = None
    for k in range(4):
        wk = w[k]
        if not wk.any():
            continue
        term = flat[idx[k]] if np.all(wk == 1.0) else flat[idx[k]] * wk[:, None]
        if out is None:
            out = term  # fancy indexing yields a fresh array, safe to add into
        else:
            out += term
    if out is None:
        out = np.zeros((idx.shape[1], plane.channels), dtype=plane.data.dtype)
    return out


def _mlp_forward_fast(mlp, x):
    """BLAS forward with the cache layout mlp_backward expects."""
    slope = mlp.leaky_slope
    last = len(mlp.weights) - 1
    pre_acts, acts = [], [x]
    h = x
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = h @ w.T
        z += b
        h = leaky_relu(z, slope) if (i < last or mlp.output_activation) else z
        pre_acts.append(z)
        acts.append(h)
    return h, (pre_acts, acts)


def _loss_impl(model, ingredients, target, loss_space):
    """Shared forward/backward. ingredients: per plane (plane, idx, w)."""
    feats = [_gather(plane, idx, w) for plane, idx, w in ingredients]
    x = np.concatenate(feats, axis=1)
    pred, cache = _mlp_forward_fast(model.mlp, x)

    target = np.asarray(target, dtype=pred.dtype)
    if target.shape != pred.shape:
        raise ArgumentError(f"target shape {target.shape} != {pred.shape}")
    if loss_space == "linear":
        diff = pred - target
        loss = float(np.abs(diff).mean())
        dpred = np.sign(diff) / diff.size
    else:
        clipped = np.maximum(pred, pred.dtype.type(_LOG_CLIP))
        diff = np.log1p(clipped) - np.log1p(target)
        loss = float(np.abs(diff).mean())
        dpred = (
            np.sign(diff)
            / diff.size
            * (pred > _LOG_CLIP)
            / (1.0 + clipped)
        ).astype(pred.dtype, copy=False)

    w_grads, b_grads, dx = mlp_backward(model.mlp, cache, dpred)
    grads = {}
    col = 0
    for name, (plane, idx, w) in zip(("plane_u", "plane_h", "plane_d"), ingredients):
        c = plane.channels
        acc = np.zeros((plane.height * plane.width, c), dtype=dx.dtype)
        scatter_corner_grads(acc, idx, w, dx[:, col : col + c])
        grads[name] = acc.reshape(plane.data.shape)
        col += c
    for i, (gw, gb) in enumerate(zip(w_grads, b_grads)):
        grads[f"w{i}"] = gw
        grads[f"b{i}"] = gb
    return loss, grads


def loss_and_grads(model: TriplePlaneModel, uv, uv_h, uv_d, target, loss_space="linear"):
    """The training objective and its full analytic gradient.

    uv, uv_h, uv_d: (B, 2) plane coordinates (spatial, half, difference);
    target: (B, 3). Returns (scalar loss, {param name: gradient array}).
    Dtype follows the model: cast the model to float64 for verification runs.
    """
    if loss_space not in LOSS_SPACES:
        raise ArgumentError(f"loss_space must be one of {LOSS_SPACES}")
    ingredients = [
        (p, *bilinear_ingredients(p, np.asarray(coords)))
        for p, coords in (
            (model.plane_u, uv),
            (model.plane_h, uv_h),
            (model.plane_d, uv_d),
        )
    ]
    return _loss_impl(model, ingredients, target, loss_space)


def train(
    dataset: BtfDataset,
    config: TrainConfig,
    model: TriplePlaneModel = None,
    resume_from=None,
    out_path=None,
):
    """Optimize a model on a dataset. Returns (model, TrainReport).

    Deterministic: a fixed (dataset, config) yields bitwise-identical
    parameters run to run, and resuming from an intermediate checkpoint
    (written with training state) continues the identical trajectory.
    Raises NumericError at the first non-finite loss or parameter.
    """
    n = dataset.n_pairs
    if config.images_per_batch > n:
        raise ConfigError(
            f"images_per_batch {config.images_per_batch} exceeds pair count {n}"
        )
    start_epoch = 0
    state = None
    if resume_from is not None:
        bundle = load_checkpoint(resume_from)
        if bundle.opt_state is None or bundle.epoch is None:
            raise ConfigError("checkpoint has no training state; cannot resume")
        model = bundle.model
        state = bundle.opt_state
        start_epoch = bundle.epoch
        if start_epoch >= config.epochs:
            raise ConfigError(
                f"checkpoint already at epoch {start_epoch} >= epochs {config.epochs}"
            )
    if model is None:
        model = init_model(
            u_size=(dataset.width, dataset.height), seed=config.seed
        )
    params = model.params()
    if state is None:
        state = AdamWState.zeros_like(params)
    decay_names = tuple(name for name in params if name.startswith("w"))

    hd = dataset.half_diff()
    uv_h_all, uv_d_all = halfdiff_to_plane_uv(hd)
    uv_h_all = uv_h_all.astype(np.float32)
    uv_d_all = uv_d_all.astype(np.float32)
    uv1 = texel_center_uv(dataset.width, dataset.height)
    hw = uv1.shape[0]
    images = config.images_per_batch
    uv_batch = np.tile(uv1, (images, 1))
    # The spatial gather pattern repeats every batch; hoist it.
    ing_u = (model.plane_u, *bilinear_ingredients(model.plane_u, uv_batch))
    n_batches = math.ceil(n / images)

    report = TrainReport()
    for epoch in range(start_epoch, config.epochs):
        t0 = time.perf_counter()
        lr_p = config.lr_planes * config.lr_decay**epoch
        lr_m = config.lr_mlp * config.lr_decay**epoch
        lr = {
            name: (lr_p if name.startswith("plane") else lr_m) for name in params
        }
        loss_sum = 0.0
        sample_count = 0
        for b in range(n_batches):
            sel = select_batch_pairs(n, [config.seed, epoch], images, True, b)
            target = dataset.data[sel].reshape(-1, 3)
            uvh = np.repeat(uv_h_all[sel], hw, axis=0)
            uvd = np.repeat(uv_d_all[sel], hw, axis=0)
            ingredients = [
                ing_u,
                (model.plane_h, *bilinear_ingredients(model.plane_h, uvh)),
                (model.plane_d, *bilinear_ingredients(model.plane_d, uvd)),
            ]
            loss, grads = _loss_impl(model, ingredients, target, config.loss_space)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch + 1} batch {b + 1} "
                    f"(lr_planes={lr_p:.3g}, lr_mlp={lr_m:.3g}, pairs={sel.tolist()})"
                )
            adamw_step(
                params,
                grads,
                state,
                lr,
                config.beta1,
                config.beta2,
                config.eps,
                config.weight_decay,
                decay_names,
            )
            loss_sum += loss * target.shape[0]
            sample_count += target.shape[0]
        for name, p in params.items():
            if not np.all(np.isfinite(p)):
                raise NumericError(
                    f"parameter {name} became non-finite after epoch {epoch + 1}"
                )
        report.epoch_losses.append(loss_sum / sample_count)
        report.epoch_seconds.append(time.perf_counter() - t0)
        report.lr_history.append((lr_p, lr_m))
        done = epoch + 1
        if (
            config.checkpoint_dir
            and config.checkpoint_every
            and done % config.checkpoint_every == 0
            and done < config.epochs
        ):
            path = os.path.join(config.checkpoint_dir, f"epoch{done:04d}.tpln")
            save_checkpoint(path, model, train_state=(done, state))
            report.checkpoints.append(path)

    if out_path is not None:
        save_checkpoint(out_path, model, train_state=(config.epochs, state))
        report.checkpoints.append(str(out_path))
    if config.log_csv:
        report.write_csv(config.log_csv)
    return model, report


def evaluate_reconstruction(
    model: TriplePlaneModel, dataset: BtfDataset, pair_subset=None
) -> dict:
    """Reconstruction quality in REPEAT mode against dataset ground truth.

    Renders each selected direction pair at exemplar scale through the
    evaluator and compares to the stored image. pair_subset None picks a
    deterministic spread of ~160 pairs (every ceil(N/160)th).
    Returns mean_l1 / mean_rmse / mean_dssim plus per-pair arrays.
    """
    from .evaluator import BtfEvaluator
    from .render import compute_dssim, compute_rmse

    n = dataset.n_pairs
    if pair_subset is None:
        step = max(1, int(math.ceil(n / 160)))
        pair_subset = np.arange(0, n, step)
    pair_subset = np.asarray(pair_subset, dtype=np.int64)
    if pair_subset.size == 0 or pair_subset.min() < 0 or pair_subset.max() >= n:
        raise ArgumentError("pair_subset out of range")

    ev = BtfEvaluator(model)
    uv1 = texel_center_uv(dataset.width, dataset.height).astype(np.float64)
    hw = uv1.shape[0]
    l1 = np.empty(pair_subset.size)
    rmse = np.empty(pair_subset.size)
    dssim = np.empty(pair_subset.size)
    for k, p in enumerate(pair_subset):
        wi = np.broadcast_to(dataset.pairs[p, 0:3].astype(np.float64), (hw, 3))
        wo = np.broadcast_to(dataset.pairs[p, 3:6].astype(np.float64), (hw, 3))
        img = ev.query_batch(uv1, wi, wo).reshape(
            dataset.height, dataset.width, 3
        )
        ref = dataset.data[p]
        l1[k] = float(np.abs(img - ref).mean())
        rmse[k] = compute_rmse(img, ref)
        dssim[k] = compute_dssim(img, ref)
    return {
        "mean_l1": float(l1.mean()),
        "mean_rmse": float(rmse.mean()),
        "mean_dssim": float(dssim.mean()),
        "per_pair_l1": l1,
        "per_pair_rmse": rmse,
        "per_pair_dssim": dssim,
        "pair_subset": pair_subset,
    }
