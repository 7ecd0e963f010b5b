"""Command-line pipeline: convert, split, augment, train, predict, eval.

Every command is also callable as a plain function (the test suite drives
them directly). Deliberate failures surface as one machine-parsable line
on stderr, `lfsal-error: <kind>: <message>`, and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import image_io
from .augment import AugmentedDataset, Sample, enumerate_variants
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Manifest, RunConfig
from .errors import ConfigurationError, DataError, LfsalError
from .lightfield import (LightField4D, MicroLensArray, assemble_microlens_array,
                         sample_viewpoints)
from .metrics import evaluate_dataset
from .network import SaliencyNet
from .tensor import RngStream, Stream, set_default_dtype

_VIEW_RE = re.compile(r"^view_(\d+)_(\d+)\.png$")


def _load_sample(manifest: Manifest, index: int) -> Sample:
    arr_path, mask_path = manifest.entries[index]
    pixels = image_io.load_image(arr_path)
    mask = image_io.load_mask(mask_path)
    arr = MicroLensArray(pixels, manifest.angular_res)
    if mask.shape != (arr.n_y, arr.n_x):
        raise DataError(f"{mask_path}: mask {mask.shape} does not match "
                        f"array spatial grid ({arr.n_y}, {arr.n_x})")
    return Sample(arr, mask)


def _build_net(config: RunConfig) -> SaliencyNet:
    return SaliencyNet(config.mac_config(), config.backbone_config(), config.aspp_config(),
                       input_mean=config.input_mean, seed=config.seed)


# ---------------------------------------------------------------- convert

def cmd_convert(view_dir, out_path, a_target: int) -> None:
    """Assemble a micro-lens array image from a directory of view PNGs."""
    view_dir = Path(view_dir)
    if not view_dir.is_dir():
        raise DataError(f"missing view directory {view_dir}")
    found = {}
    for p in view_dir.iterdir():
        m = _VIEW_RE.match(p.name)
        if m:
            found[(int(m.group(1)), int(m.group(2)))] = p
    if not found:
        raise DataError(f"no view_{{v}}_{{u}}.png files in {view_dir}")
    grid = max(max(v, u) for v, u in found) + 1
    views = None
    for v in range(grid):
        for u in range(grid):
            if (v, u) not in found:
                raise DataError(f"missing view file view_{v}_{u}.png in {view_dir}")
            img = image_io.load_image(found[(v, u)])
            if views is None:
                views = np.empty((grid, grid) + img.shape, dtype=img.dtype)
            elif img.shape != views.shape[2:]:
                raise DataError(f"view_{v}_{u}.png has size {img.shape[:2]}, "
                                f"expected {views.shape[2:4]}")
            views[v, u] = img
    lf = sample_viewpoints(LightField4D(views), a_target)
    image_io.save_image(out_path, assemble_microlens_array(lf).pixels)


# ------------------------------------------------------------------ split

def cmd_split(manifest_path, out_dir, k: int, seed: int,
              base_config: RunConfig | None = None) -> list:
    """Seeded k-fold split; writes per-fold manifests and configs with fold means."""
    if k < 2:
        raise ConfigurationError(f"fold count must be >= 2, got {k}")
    manifest = Manifest.load(manifest_path)
    if len(manifest) < k:
        raise DataError(f"{len(manifest)} entries cannot make {k} folds")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_config = base_config or RunConfig(angular_res=manifest.angular_res)

    order = RngStream(seed, Stream.SHUFFLE).generator().permutation(len(manifest))
    folds = [sorted(order[i::k].tolist()) for i in range(k)]

    written = []
    for i, val_idx in enumerate(folds):
        val_set = set(val_idx)
        train_idx = [j for j in range(len(manifest)) if j not in val_set]
        means = np.zeros(3, dtype=np.float64)
        for j in train_idx:
            means += image_io.load_image(manifest.entries[j][0]).mean(axis=(0, 1))
        means /= max(len(train_idx), 1)

        train_path = out_dir / f"fold{i}_train.manifest"
        val_path = out_dir / f"fold{i}_val.manifest"
        Manifest.write(train_path, manifest.angular_res,
                       [manifest.entries[j] for j in train_idx])
        Manifest.write(val_path, manifest.angular_res,
                       [manifest.entries[j] for j in val_idx])
        from dataclasses import replace
        cfg = replace(base_config, angular_res=manifest.angular_res, seed=seed,
                      fold_index=i, fold_count=k,
                      input_mean=tuple(round(float(m), 6) for m in means))
        cfg.save(out_dir / f"fold{i}.config")
        written.append((train_path, val_path, out_dir / f"fold{i}.config"))
    return written


# ---------------------------------------------------------------- augment

def cmd_augment(manifest_path, out_dir, config: RunConfig | None = None,
                seed: int | None = None) -> int:
    """Materialize every augmentation variant as image/mask files (_vNN suffix)."""
    manifest = Manifest.load(manifest_path)
    config = config or RunConfig(angular_res=manifest.angular_res)
    seed = config.seed if seed is None else seed
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_written = 0
    for i in range(len(manifest)):
        sample = _load_sample(manifest, i)
        spec = config.augmentation_spec(sample.array.width, sample.array.height)
        stem = manifest.entries[i][0].stem
        for v, variant in enumerate(enumerate_variants(sample, spec, seed, i)):
            image_io.save_image(out_dir / f"{stem}_v{v:02d}.png", variant.array.pixels)
            image_io.save_mask(out_dir / f"{stem}_v{v:02d}_mask.png", variant.mask)
            n_written += 1
    return n_written


# ------------------------------------------------------------------ train

def _shuffled_index(seed: int, epoch: int, n: int) -> np.ndarray:
    return RngStream(seed, Stream.SHUFFLE).generator(epoch).permutation(n)


def cmd_train(config: RunConfig, manifest_path, out_dir,
              resume: str | None = None, iterations: int | None = None) -> Path:
    """Train on the 48x virtual augmented dataset, one sample per step.

    Writes an append-only loss log (iteration,loss,lr) and periodic
    checkpoints; returns the path of the final checkpoint.
    """
    config.validate()
    set_default_dtype(config.precision)
    manifest = Manifest.load(manifest_path)
    if manifest.angular_res != config.angular_res:
        raise ConfigurationError(f"manifest A={manifest.angular_res} but config "
                                 f"A={config.angular_res}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    probe = _load_sample(manifest, 0)
    spec = config.augmentation_spec(probe.array.width, probe.array.height)
    dataset = AugmentedDataset(lambda i: _load_sample(manifest, i), len(manifest),
                               spec, config.seed)

    net = _build_net(config)
    start_iter = 0
    if resume is not None:
        ck_config, start_iter, tensors = load_checkpoint(resume)
        if ck_config.to_text() != config.to_text():
            raise ConfigurationError("checkpoint config does not match the run config")
        net.load_state_arrays(tensors)

    settings = config.train_settings()
    stop = min(iterations if iterations is not None else config.max_iter, config.max_iter)
    log_path = out_dir / "loss.log"
    last_ckpt = out_dir / f"checkpoint_{start_iter:07d}.ckpt"
    if start_iter == 0:
        save_checkpoint(last_ckpt, config, 0, net.state_arrays())

    with open(log_path, "a") as log:
        for it in range(start_iter, stop):
            epoch, pos = divmod(it, len(dataset))
            order = _shuffled_index(config.seed, epoch, len(dataset))
            sample = dataset[int(order[pos])]
            loss = net.train_step(sample.array, sample.mask, it, settings)
            lr = settings.base_lr * (1.0 - it / settings.max_iter) ** settings.poly_power
            log.write(f"{it},{loss:.10g},{lr:.10g}\n")
            log.flush()
            if (it + 1) % config.checkpoint_interval == 0 or it + 1 == stop:
                last_ckpt = out_dir / f"checkpoint_{it + 1:07d}.ckpt"
                save_checkpoint(last_ckpt, config, it + 1, net.state_arrays())
    return last_ckpt


# ---------------------------------------------------------------- predict

def cmd_predict(checkpoint_path, manifest_path, out_dir) -> list:
    """Write one 8-bit grayscale saliency map per manifest entry (eval mode)."""
    config, _, tensors = load_checkpoint(checkpoint_path)
    set_default_dtype(config.precision)
    manifest = Manifest.load(manifest_path)
    if manifest.angular_res != config.angular_res:
        raise ConfigurationError(f"manifest A={manifest.angular_res} but checkpoint "
                                 f"was trained with A={config.angular_res}")
    net = _build_net(config)
    net.load_state_arrays(tensors)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i in range(len(manifest)):
        sample = _load_sample(manifest, i)
        prob = net.predict(sample.array)
        out_path = out_dir / f"{manifest.entries[i][0].stem}.png"
        image_io.save_saliency_map(out_path, prob)
        written.append(out_path)
    return written


# ------------------------------------------------------------------- eval

def cmd_eval(pred_dir, manifest_path, out_report) -> dict:
    """Evaluate predictions against manifest masks; write report + PR curve."""
    manifest = Manifest.load(manifest_path)
    pred_dir = Path(pred_dir)
    preds, gts = [], []
    for arr_path, mask_path in manifest.entries:
        pred_path = pred_dir / f"{arr_path.stem}.png"
        if not pred_path.is_file():
            raise DataError(f"missing prediction file {pred_path}")
        preds.append(image_io.load_gray(pred_path))
        gts.append(image_io.load_mask(mask_path))
    report = evaluate_dataset(preds, gts)

    out_report = Path(out_report)
    out_report.parent.mkdir(parents=True, exist_ok=True)
    scalars = {
        "f_measure": report.f_measure,
        "f_max": report.f_max,
        "wf_measure": report.wf_measure,
        "mae": report.mae,
        "ap": report.ap,
    }
    out_report.write_text(json.dumps(scalars, indent=2) + "\n")
    curve_path = out_report.with_name(out_report.stem + "_pr.csv")
    with open(curve_path, "w") as fh:
        fh.write("threshold,precision,recall\n")
        for t, p, r in zip(report.curve.thresholds, report.curve.precision,
                           report.curve.recall):
            fh.write(f"{t},{p:.10g},{r:.10g}\n")
    return scalars


# ------------------------------------------------------------------- main

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lfsal", description="light-field saliency pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", help="assemble a micro-lens array from view images")
    c.add_argument("view_dir")
    c.add_argument("out_path")
    c.add_argument("--angular", type=int, default=9)

    s = sub.add_parser("split", help="k-fold split with per-fold training means")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config")

    a = sub.add_parser("augment", help="materialize augmentation variants")
    a.add_argument("--manifest", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--config")
    a.add_argument("--seed", type=int)

    t = sub.add_parser("train", help="train a saliency network")
    t.add_argument("--config", required=True)
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--resume")
    t.add_argument("--iterations", type=int)
    t.add_argument("--seed", type=int)

    pr = sub.add_parser("predict", help="write saliency maps for a manifest")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--manifest", required=True)
    pr.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--report", required=True)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "convert":
            cmd_convert(args.view_dir, args.out_path, args.angular)
        elif args.command == "split":
            base = RunConfig.load(args.config) if args.config else None
            cmd_split(args.manifest, args.out, args.folds, args.seed, base)
        elif args.command == "augment":
            cfg = RunConfig.load(args.config) if args.config else None
            cmd_augment(args.manifest, args.out, cfg, args.seed)
        elif args.command == "train":
            cfg = RunConfig.load(args.config)
            if args.seed is not None:
                from dataclasses import replace
                cfg = replace(cfg, seed=args.seed)
            cmd_train(cfg, args.manifest, args.out, args.resume, args.iterations)
        elif args.command == "predict":
            cmd_predict(args.checkpoint, args.manifest, args.out)
        elif args.command == "eval":
            scalars = cmd_eval(args.pred, args.manifest, args.report)
            print(json.dumps(scalars))
    except LfsalError as exc:
        print(f"lfsal-error: {exc.kind}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
