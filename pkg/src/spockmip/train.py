"""Deterministic patch-based training loop with Adam, gradient clipping,
optional learnable loss weight, checkpointing, and k-fold splits.

Each epoch's batch sequence is a pure function of (config.seed, epoch), so
identical configs reproduce loss curves bitwise and a mid-run checkpoint
resume is transparent.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import VolumeRecord, compute_label_mips, make_sample, sample_epoch, SamplerConfig
from .losses import LossConfig, MipMode, combined_loss
from .model import ModelConfig, UNet3d, build_model
from .volumes import Axis

CHECKPOINT_VERSION = 1

_MODE_AXES = {
    MipMode.NONE: (),
    MipMode.SINGLE: (Axis.Z,),
    MipMode.MULTI: (Axis.X, Axis.Y, Axis.Z),
}


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; message carries the offending batch ids."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 50
    batch_size: int = 15
    grad_clip_norm: float = 1.0
    seed: int = 0
    mode: MipMode = MipMode.NONE
    loss: LossConfig = field(default_factory=LossConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0 or self.grad_clip_norm <= 0:
            raise ValueError("learning_rate and grad_clip_norm must be > 0")


@dataclass
class TrainResult:
    model: UNet3d
    history: list[dict]
    best_val_loss: float | None
    best_checkpoint: str | None
    last_checkpoint: str | None
    learned_mu: float | None


def _epoch_seed(seed: int, epoch: int) -> int:
    return (seed * 1_000_003 + epoch) % 2**31


def _num_workers() -> int:
    try:
        return max(0, int(os.environ.get("SPOCKMIP_NUM_WORKERS", "0")))
    except ValueError:
        return 0


def _assemble_batch(records_by_id, draws, axes):
    def build(item):
        vid, box = item
        rec = records_by_id[vid]
        return make_sample(rec.image, rec.label, rec.label_mips, box, vid)

    workers = _num_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(build, draws))
    else:
        samples = [build(item) for item in draws]

    images = torch.from_numpy(
        np.stack([s.image_patch.data for s in samples])
    ).float().unsqueeze(1)
    labels = torch.from_numpy(
        np.stack([s.label_patch.data for s in samples])
    ).float().unsqueeze(1)
    mips = {
        axis: torch.from_numpy(
            np.stack([s.label_mip_patches[axis] for s in samples])
        ).float().unsqueeze(1)
        for axis in axes
    }
    return images, labels, mips


def _prepare_records(records: list[VolumeRecord], axes) -> dict[str, VolumeRecord]:
    out = {}
    for rec in records:
        missing = [a for a in axes if a not in rec.label_mips]
        if missing:
            rec.label_mips.update(compute_label_mips(rec.label, missing))
        out[rec.volume_id] = rec
    return out


def save_checkpoint(
    path: str | Path,
    model: UNet3d,
    optimizer: torch.optim.Optimizer,
    epoch: int,
    step_in_epoch: int,
    global_step: int,
    best_val: float | None,
    mu_rho: torch.nn.Parameter | None,
) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_VERSION,
            "model_config": model.config,
            "model_state": model.state_dict(),
            "optimizer_state": optimizer.state_dict(),
            "epoch": epoch,
            "step_in_epoch": step_in_epoch,
            "global_step": global_step,
            "best_val": best_val,
            "mu_rho": None if mu_rho is None else float(mu_rho.detach()),
            "torch_rng": torch.get_rng_state(),
        },
        path,
    )


def load_checkpoint(path: str | Path) -> dict:
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    version = ckpt.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {version}")
    return ckpt


def train(
    train_records: list[VolumeRecord],
    val_records: list[VolumeRecord],
    config: TrainConfig,
    run_dir: str | Path | None = None,
    max_steps: int | None = None,
    resume_from: str | Path | None = None,
) -> TrainResult:
    if not train_records:
        raise ValueError("need at least one training volume")
    axes = _MODE_AXES[config.mode]
    train_by_id = _prepare_records(train_records, axes)
    val_by_id = _prepare_records(val_records, axes)

    torch.manual_seed(config.seed)
    model = build_model(config.model)
    params = list(model.parameters())
    mu_rho = None
    if config.loss.learnable_mu:
        init = math.log(config.loss.mu / (1.0 - config.loss.mu))
        mu_rho = torch.nn.Parameter(torch.tensor(init, dtype=torch.float32))
        params.append(mu_rho)
    optimizer = torch.optim.Adam(params, lr=config.learning_rate)

    start_epoch, skip_steps, global_step = 0, 0, 0
    best_val: float | None = None
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        model.load_state_dict(ckpt["model_state"])
        optimizer.load_state_dict(ckpt["optimizer_state"])
        start_epoch = ckpt["epoch"]
        skip_steps = ckpt["step_in_epoch"]
        global_step = ckpt["global_step"]
        best_val = ckpt["best_val"]
        if mu_rho is not None and ckpt["mu_rho"] is not None:
            with torch.no_grad():
                mu_rho.fill_(ckpt["mu_rho"])
        torch.set_rng_state(ckpt["torch_rng"])

    run_path = Path(run_dir) if run_dir is not None else None
    log_file = None
    if run_path is not None:
        run_path.mkdir(parents=True, exist_ok=True)
        log_file = (run_path / "train_log.jsonl").open("a")

    boxes_train = {vid: rec.boxes for vid, rec in train_by_id.items()}
    history: list[dict] = []
    best_path = last_path = None
    done = False

    try:
        for epoch in range(start_epoch, config.epochs):
            model.train()
            draws = sample_epoch(
                boxes_train,
                config.sampler.samples_per_epoch,
                _epoch_seed(config.seed, epoch),
            )
            n_batches = len(draws) // config.batch_size
            for b in range(n_batches):
                if epoch == start_epoch and b < skip_steps:
                    continue
                batch_draws = draws[b * config.batch_size : (b + 1) * config.batch_size]
                images, labels, mips = _assemble_batch(train_by_id, batch_draws, axes)

                preds = model(images)
                mu_t = torch.sigmoid(mu_rho) if mu_rho is not None else None
                loss, parts = combined_loss(
                    preds, labels, mips or None, config.loss, config.mode, mu=mu_t
                )
                if not torch.isfinite(loss):
                    ids = [(vid, box.origin) for vid, box in batch_draws]
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch} step {b}; batch={ids}"
                    )
                optimizer.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(params, config.grad_clip_norm)
                optimizer.step()

                global_step += 1
                entry = {"step": global_step, "epoch": epoch, **parts}
                history.append(entry)
                if log_file is not None:
                    log_file.write(json.dumps(entry) + "\n")
                if max_steps is not None and global_step >= max_steps:
                    if run_path is not None:
                        last_path = run_path / "last.pt"
                        save_checkpoint(last_path, model, optimizer, epoch, b + 1,
                                        global_step, best_val, mu_rho)
                    done = True
                    break
            skip_steps = 0
            if done:
                break

            val_loss = None
            if val_by_id:
                val_loss = validate(model, val_by_id, config, axes, mu_rho)
                history.append(
                    {"step": global_step, "epoch": epoch, "val_loss": val_loss}
                )
                if log_file is not None:
                    log_file.write(
                        json.dumps({"step": global_step, "epoch": epoch,
                                    "val_loss": val_loss}) + "\n"
                    )

            if run_path is not None:
                last_path = run_path / "last.pt"
                save_checkpoint(last_path, model, optimizer, epoch + 1, 0,
                                global_step, best_val, mu_rho)
                if val_loss is not None and (best_val is None or val_loss < best_val):
                    best_val = val_loss
                    best_path = run_path / "best.pt"
                    save_checkpoint(best_path, model, optimizer, epoch + 1, 0,
                                    global_step, best_val, mu_rho)
            elif val_loss is not None and (best_val is None or val_loss < best_val):
                best_val = val_loss
    finally:
        if log_file is not None:
            log_file.close()

    return TrainResult(
        model=model,
        history=history,
        best_val_loss=best_val,
        best_checkpoint=str(best_path) if best_path else None,
        last_checkpoint=str(last_path) if last_path else None,
        learned_mu=float(torch.sigmoid(mu_rho.detach())) if mu_rho is not None else None,
    )


def validate(
    model: UNet3d,
    val_by_id: dict[str, VolumeRecord],
    config: TrainConfig,
    axes,
    mu_rho=None,
    max_patches: int = 150,
) -> float:
    """Mean loss over a fixed, seeded sample of validation patches."""
    boxes = {vid: rec.boxes for vid, rec in val_by_id.items()}
    total_boxes = sum(len(b) for b in boxes.values())
    draws = sample_epoch(
        boxes, min(max_patches, total_boxes), _epoch_seed(config.seed, -1)
    )
    model.eval()
    losses = []
    with torch.no_grad():
        for start in range(0, len(draws), config.batch_size):
            chunk = draws[start : start + config.batch_size]
            images, labels, mips = _assemble_batch(val_by_id, chunk, axes)
            preds = model(images)
            mu_t = torch.sigmoid(mu_rho) if mu_rho is not None else None
            loss, _ = combined_loss(
                preds, labels, mips or None, config.loss, config.mode, mu=mu_t
            )
            losses.append(float(loss))
    model.train()
    return float(np.mean(losses))


def kfold_split(
    volume_ids: list[str], k: int = 5, seed: int = 0
) -> list[tuple[list[str], list[str]]]:
    """Deterministic k folds whose validation sets partition the ids as
    evenly as possible."""
    if k > len(volume_ids):
        raise ValueError(f"k={k} exceeds {len(volume_ids)} volume ids")
    rng = np.random.default_rng(seed)
    order = [volume_ids[i] for i in rng.permutation(len(volume_ids))]
    folds = [list(chunk) for chunk in np.array_split(np.array(order, dtype=object), k)]
    splits = []
    for i in range(k):
        val_ids = [str(v) for v in folds[i]]
        train_ids = [str(v) for j, f in enumerate(folds) if j != i for v in f]
        splits.append((train_ids, val_ids))
    return splits
