import dataclasses

import numpy as np
import pytest
import torch

from conftest import make_record
from spockmip.data import SamplerConfig
from spockmip.losses import LossConfig, MipMode
from spockmip.model import ModelConfig
from spockmip.train import (
    TrainConfig,
    TrainingDivergedError,
    kfold_split,
    load_checkpoint,
    train,
)
from spockmip.volumes import Axis


def tiny_config(**kwargs):
    defaults = dict(
        learning_rate=1e-3,
        epochs=2,
        batch_size=4,
        seed=7,
        mode=MipMode.SINGLE,
        sampler=SamplerConfig(patch_size=8, stride=(4, 4, 4),
                              samples_per_epoch=16, seed=7),
        model=ModelConfig(base_features=2, depth=3, mss_levels=3),
    )
    defaults.update(kwargs)
    return TrainConfig(**defaults)


@pytest.fixture(scope="module")
def records():
    return [make_record("a", seed=1), make_record("b", seed=2)]


class TestTrain:
    def test_deterministic_weights(self, records):
        cfg = tiny_config()
        r1 = train(records[:1], [], cfg, max_steps=6)
        r2 = train(records[:1], [], cfg, max_steps=6)
        for p1, p2 in zip(r1.model.parameters(), r2.model.parameters()):
            assert torch.equal(p1, p2)
        losses1 = [h["total"] for h in r1.history]
        losses2 = [h["total"] for h in r2.history]
        assert losses1 == losses2

    def test_loss_decreases(self, records):
        finals, firsts = [], []
        for seed in (1, 2, 3):
            cfg = tiny_config(seed=seed, epochs=20, mode=MipMode.NONE)
            result = train(records[:1], [], cfg, max_steps=60)
            steps = [h["total"] for h in result.history if "total" in h]
            firsts.append(steps[0])
            finals.append(steps[-1])
        assert np.median(finals) < np.median(firsts)

    def test_learnable_mu_stays_in_unit_interval(self, records):
        cfg = tiny_config(loss=LossConfig(learnable_mu=True))
        result = train(records[:1], [], cfg, max_steps=8)
        mus = [h["mu"] for h in result.history if "mu" in h]
        assert mus and all(0.0 < m < 1.0 for m in mus)
        assert 0.0 < result.learned_mu < 1.0

    def test_validation_and_best_checkpoint(self, records, tmp_path):
        cfg = tiny_config(epochs=2)
        result = train(records[:1], records[1:], cfg, run_dir=tmp_path)
        assert result.best_val_loss is not None
        assert (tmp_path / "best.pt").exists()
        assert (tmp_path / "last.pt").exists()
        assert (tmp_path / "train_log.jsonl").exists()

    def test_nan_abort_names_batch(self, records, monkeypatch):
        def bad_loss(*args, **kwargs):
            return torch.tensor(float("nan")), {}

        monkeypatch.setattr("spockmip.train.combined_loss", bad_loss)
        with pytest.raises(TrainingDivergedError, match="batch="):
            train(records[:1], [], tiny_config(), max_steps=2)

    def test_requires_training_volume(self):
        with pytest.raises(ValueError, match="at least one"):
            train([], [], tiny_config())


class TestCheckpointResume:
    def test_resume_is_transparent(self, records, tmp_path):
        cfg = tiny_config(epochs=3)
        straight = train(records[:1], [], cfg, max_steps=6)

        half_dir = tmp_path / "half"
        train(records[:1], [], cfg, run_dir=half_dir, max_steps=3)
        resumed = train(records[:1], [], cfg, max_steps=6,
                        resume_from=half_dir / "last.pt")

        for p1, p2 in zip(straight.model.parameters(), resumed.model.parameters()):
            assert torch.equal(p1, p2)
        tail = [h["total"] for h in straight.history if "total" in h][3:]
        resumed_steps = [h["total"] for h in resumed.history if "total" in h]
        assert tail == resumed_steps

    def test_checkpoint_version_enforced(self, records, tmp_path):
        cfg = tiny_config()
        train(records[:1], [], cfg, run_dir=tmp_path, max_steps=1)
        ckpt = torch.load(tmp_path / "last.pt", weights_only=False)
        ckpt["format_version"] = 99
        torch.save(ckpt, tmp_path / "bad.pt")
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(tmp_path / "bad.pt")


class TestGradientClipping:
    def test_global_norm_bounded(self, records):
        # replicate one training step by hand and check the post-clip norm
        from spockmip.data import sample_epoch
        from spockmip.model import build_model
        from spockmip.train import _assemble_batch, _prepare_records
        from spockmip.losses import combined_loss

        cfg = tiny_config()
        by_id = _prepare_records(records[:1], (Axis.Z,))
        draws = sample_epoch({"a": records[0].boxes}, cfg.batch_size, seed=3)
        images, labels, mips = _assemble_batch(by_id, draws, (Axis.Z,))
        torch.manual_seed(0)
        model = build_model(cfg.model)
        loss, _ = combined_loss(model(images), labels, mips, cfg.loss, cfg.mode)
        loss.backward()
        params = list(model.parameters())
        torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip_norm)
        norm = torch.sqrt(sum((p.grad**2).sum() for p in params if p.grad is not None))
        assert float(norm) <= cfg.grad_clip_norm + 1e-6


class TestKfold:
    def test_fourteen_ids_five_folds(self):
        ids = [f"v{i}" for i in range(14)]
        splits = kfold_split(ids, k=5, seed=0)
        sizes = sorted(len(val) for _, val in splits)
        assert sizes == [2, 3, 3, 3, 3]

    def test_partition_properties(self):
        ids = [f"v{i}" for i in range(14)]
        splits = kfold_split(ids, k=5, seed=3)
        all_val = [v for _, val in splits for v in val]
        assert sorted(all_val) == sorted(ids)
        for train_ids, val_ids in splits:
            assert not set(train_ids) & set(val_ids)
            assert sorted(train_ids + val_ids) == sorted(ids)

    def test_leave_one_out(self):
        ids = ["a", "b", "c"]
        splits = kfold_split(ids, k=3, seed=1)
        assert all(len(val) == 1 for _, val in splits)

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            kfold_split(["a"], k=2)

    def test_deterministic(self):
        ids = [f"v{i}" for i in range(10)]
        assert kfold_split(ids, 5, seed=9) == kfold_split(ids, 5, seed=9)
