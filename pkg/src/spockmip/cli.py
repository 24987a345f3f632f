"""Command-line entry point: phantom generation, label prep, training,
prediction, evaluation, cross-validation, and MIP overlay figures."""

from __future__ import annotations

import csv
import dataclasses
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from .config import ConfigError, load_run_config
from .infer import InferenceConfig, binarize, sliding_window_predict
from .labelprep import MorphologyParams, area_closing, area_opening
from .losses import MipMode
from .model import build_model
from .phantom import CorruptionConfig, PhantomConfig, corrupt_labels, generate_phantom
from .train import kfold_split, load_checkpoint, train
from .volumes import Axis, BinaryMask, load_volume, mip, save_volume

_MODE_FLAGS = {
    "none": MipMode.NONE,
    "single_mip": MipMode.SINGLE,
    "multi_mip": MipMode.MULTI,
}


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Patch-based 3D vessel segmentation with MIP-loss supervision."""


@main.command("phantom")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--n-volumes", type=int, default=1)
@click.option("--drop-fraction", type=float, default=0.05)
def cmd_phantom(config_path, out_dir, seed, n_volumes, drop_fraction):
    """Write image/label/corrupt-label volumes plus a config manifest."""
    try:
        cfg = (
            load_run_config(config_path)["phantom"]
            if config_path
            else PhantomConfig()
        ) or PhantomConfig()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = []
        base_seed = seed if seed is not None else cfg.seed
        for i in range(n_volumes):
            vcfg = dataclasses.replace(cfg, seed=base_seed + i)
            image, label = generate_phantom(vcfg)
            corrupt = corrupt_labels(
                label, CorruptionConfig(drop_fraction=drop_fraction, seed=base_seed + i)
            )
            suffix = f"_{i}" if n_volumes > 1 else ""
            save_volume(image, out / f"image{suffix}.nii.gz")
            save_volume(label, out / f"label_clean{suffix}.nii.gz")
            save_volume(corrupt, out / f"label_corrupt{suffix}.nii.gz")
            manifest.append(
                {
                    "volume_id": f"phantom{suffix or '_0'}",
                    "image_path": f"image{suffix}.nii.gz",
                    "label_path": f"label_corrupt{suffix}.nii.gz",
                    "clean_label_path": f"label_clean{suffix}.nii.gz",
                    "config": {**dataclasses.asdict(vcfg)},
                    "drop_fraction": drop_fraction,
                }
            )
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
        click.echo(f"wrote {n_volumes} phantom(s) to {out}")
    except Exception as exc:
        _fail(str(exc))


@main.command("labelprep")
@click.option("--mask", "mask_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--open-area", type=int, default=7)
@click.option("--open-connectivity", type=int, default=2)
@click.option("--close-area", type=int, default=60)
@click.option("--close-connectivity", type=int, default=4)
def cmd_labelprep(mask_path, out_path, open_area, open_connectivity, close_area,
                  close_connectivity):
    """Area opening then area closing on a binary label volume."""
    try:
        params = MorphologyParams(
            open_area=open_area,
            open_connectivity=open_connectivity,
            close_area=close_area,
            close_connectivity=close_connectivity,
        )
        mask = load_volume(mask_path, as_mask=True)
        cleaned = area_closing(area_opening(mask, params), params)
        save_volume(cleaned, out_path)
        click.echo(f"wrote cleaned labels to {out_path}")
    except Exception as exc:
        _fail(str(exc))


def _records_from_manifest(manifest_path, sampler_cfg):
    entries = data_mod.load_manifest(manifest_path)
    return data_mod.build_volume_records(
        entries, sampler_cfg, base_dir=Path(manifest_path).parent
    ), entries


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--val-manifest", type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(sorted(_MODE_FLAGS)), default=None)
@click.option("--run-dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
@click.option("--resume", type=click.Path(exists=True))
def cmd_train(config_path, manifest, val_manifest, mode, run_dir, seed, max_steps,
              resume):
    """Train a model on the volumes listed in a dataset manifest."""
    try:
        sections = load_run_config(config_path)
        cfg = sections["train"]
        if mode is not None:
            cfg = dataclasses.replace(cfg, mode=_MODE_FLAGS[mode])
        if seed is not None:
            cfg = dataclasses.replace(
                cfg, seed=seed, sampler=dataclasses.replace(cfg.sampler, seed=seed)
            )
        train_records, _ = _records_from_manifest(manifest, cfg.sampler)
        val_records = []
        if val_manifest:
            val_records, _ = _records_from_manifest(val_manifest, cfg.sampler)
        result = train(train_records, val_records, cfg, run_dir=run_dir,
                       max_steps=max_steps, resume_from=resume)
        click.echo(
            f"trained {len(result.history)} logged steps; "
            f"best_val={result.best_val_loss}; checkpoints in {run_dir}"
        )
    except Exception as exc:
        _fail(str(exc))


@main.command("crossval")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=5)
@click.option("--mode", type=click.Choice(sorted(_MODE_FLAGS)), default=None)
@click.option("--run-dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None)
@click.option("--max-steps", type=int, default=None)
def cmd_crossval(config_path, manifest, k, mode, run_dir, seed, max_steps):
    """k-fold cross-validation over the manifest volumes."""
    try:
        sections = load_run_config(config_path)
        cfg = sections["train"]
        if mode is not None:
            cfg = dataclasses.replace(cfg, mode=_MODE_FLAGS[mode])
        if seed is not None:
            cfg = dataclasses.replace(cfg, seed=seed)
        records, _ = _records_from_manifest(manifest, cfg.sampler)
        by_id = {r.volume_id: r for r in records}
        splits = kfold_split(sorted(by_id), k=k, seed=cfg.seed)
        summary = []
        for fold, (train_ids, val_ids) in enumerate(splits):
            fold_dir = Path(run_dir) / f"fold{fold}"
            result = train(
                [by_id[i] for i in train_ids],
                [by_id[i] for i in val_ids],
                cfg,
                run_dir=fold_dir,
                max_steps=max_steps,
            )
            summary.append(
                {"fold": fold, "val_ids": val_ids, "best_val": result.best_val_loss}
            )
        (Path(run_dir) / "crossval.json").write_text(json.dumps(summary, indent=2))
        click.echo(f"cross-validation summary written to {run_dir}/crossval.json")
    except Exception as exc:
        _fail(str(exc))


@main.command("predict")
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--image", "image_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--patch-size", type=int, default=None)
@click.option("--stride", type=int, default=None)
@click.option("--threshold", type=float, default=0.5)
def cmd_predict(checkpoint, image_path, out_dir, patch_size, stride, threshold):
    """Sliding-window whole-volume prediction; writes prob and mask volumes."""
    try:
        ckpt = load_checkpoint(checkpoint)
        model = build_model(ckpt["model_config"])
        model.load_state_dict(ckpt["model_state"])
        volume = load_volume(image_path)
        if isinstance(volume, BinaryMask):
            volume = load_volume(image_path, as_mask=False)
        ps = patch_size or min(64, *volume.dims)
        st = stride or max(1, ps // 2)
        cfg = InferenceConfig(patch_size=ps, stride=(st, st, st), threshold=threshold)
        prob = sliding_window_predict(model, volume, cfg)
        mask = binarize(prob, cfg.threshold)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_volume(prob, out / "prob.nii.gz")
        save_volume(mask, out / "mask.nii.gz")
        click.echo(f"wrote prob.nii.gz and mask.nii.gz to {out}")
    except Exception as exc:
        _fail(str(exc))


@main.command("evaluate")
@click.option("--pred", "pred_paths", type=click.Path(exists=True), multiple=True,
              required=True)
@click.option("--gt", "gt_paths", type=click.Path(exists=True), multiple=True,
              required=True)
@click.option("--prob", "prob_paths", type=click.Path(exists=True), multiple=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--summary-csv", type=click.Path())
def cmd_evaluate(pred_paths, gt_paths, prob_paths, out_path, summary_csv):
    """Evaluate prediction/ground-truth pairs; JSON per pair + CSV summary."""
    try:
        if len(pred_paths) != len(gt_paths):
            raise ValueError(
                f"{len(pred_paths)} predictions vs {len(gt_paths)} ground truths"
            )
        reports = []
        for i, (pp, gp) in enumerate(zip(pred_paths, gt_paths)):
            pred = load_volume(pp, as_mask=True)
            gt = load_volume(gp, as_mask=True)
            prob = None
            if prob_paths:
                prob_vol = load_volume(prob_paths[i])
                from .volumes import ProbabilityVolume

                prob = ProbabilityVolume(data=prob_vol.data.astype(np.float32),
                                         spacing=prob_vol.spacing)
            reports.append(metrics_mod.evaluate_pair(prob, pred, gt))
        if len(reports) == 1:
            Path(out_path).write_text(reports[0].to_json())
        else:
            out = Path(out_path)
            out.mkdir(parents=True, exist_ok=True)
            for i, rep in enumerate(reports):
                (out / f"report_{i}.json").write_text(rep.to_json())
        if summary_csv:
            _write_summary_csv(reports, summary_csv)
        click.echo(f"wrote {len(reports)} report(s) to {out_path}")
    except Exception as exc:
        _fail(str(exc))


def _write_summary_csv(reports, path):
    fields = ["dice", "auc", "sensitivity", "volumetric_similarity",
              "mutual_information", "mahalanobis_distance"]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "median", "variance", "n"])
        for name in fields:
            values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
            if values:
                writer.writerow(
                    [name, float(np.median(values)), float(np.var(values)), len(values)]
                )
            else:
                writer.writerow([name, "", "", 0])


@main.command("mipfig")
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True)
@click.option("--gt", "gt_path", type=click.Path(exists=True), required=True)
@click.option("--axis", type=click.Choice(["x", "y", "z"]), default="z")
@click.option("--out", "out_path", type=click.Path(), required=True)
def cmd_mipfig(pred_path, gt_path, axis, out_path):
    """Overlay of prediction vs ground-truth MIPs: white TP, red FN, blue FP."""
    try:
        pred = load_volume(pred_path, as_mask=True)
        gt = load_volume(gt_path, as_mask=True)
        img = render_mip_overlay(pred, gt, Axis[axis.upper()])
        from PIL import Image

        Image.fromarray(img).save(out_path)
        click.echo(f"wrote overlay to {out_path}")
    except Exception as exc:
        _fail(str(exc))


def render_mip_overlay(pred: BinaryMask, gt: BinaryMask, axis: Axis) -> np.ndarray:
    """RGB uint8 overlay of the axis MIPs: TP white, FN red, FP blue, TN black."""
    if pred.dims != gt.dims:
        raise ValueError(f"dimension mismatch: {pred.dims} vs {gt.dims}")
    p = mip(pred, axis).data.astype(bool)
    g = mip(gt, axis).data.astype(bool)
    img = np.zeros((*p.shape, 3), dtype=np.uint8)
    img[p & g] = (255, 255, 255)
    img[~p & g] = (255, 0, 0)
    img[p & ~g] = (0, 0, 255)
    return img


if __name__ == "__main__":
    main()
