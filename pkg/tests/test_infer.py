import numpy as np
import pytest
import torch

from spockmip.infer import InferenceConfig, binarize, sliding_window_predict
from spockmip.volumes import ProbabilityVolume, ScalarVolume, VolumeError


class ConstantModel:
    """Stub mapping any batch to a constant full-resolution probability."""

    def __init__(self, value):
        self.value = value

    def __call__(self, batch):
        return [torch.full_like(batch, self.value)]


class MeanStampModel:
    """Stub returning the per-patch mean intensity everywhere."""

    def __call__(self, batch):
        means = batch.mean(dim=(2, 3, 4), keepdim=True)
        return [torch.ones_like(batch) * means]


def test_constant_model_any_stride():
    vol = ScalarVolume(data=np.random.default_rng(0).random((20, 20, 20)).astype(np.float32))
    for stride in (4, 5, 8):
        cfg = InferenceConfig(patch_size=8, stride=(stride, stride, stride))
        prob = sliding_window_predict(ConstantModel(0.3), vol, cfg)
        assert np.allclose(prob.data, 0.3, atol=1e-6)


def test_disjoint_cover_equals_per_patch_outputs():
    data = np.zeros((16, 8, 8), dtype=np.float32)
    data[:8] = 0.2
    data[8:] = 0.6
    vol = ScalarVolume(data=data)
    cfg = InferenceConfig(patch_size=8, stride=(8, 8, 8))
    prob = sliding_window_predict(MeanStampModel(), vol, cfg)
    assert np.allclose(prob.data[:8], 0.2, atol=1e-6)
    assert np.allclose(prob.data[8:], 0.6, atol=1e-6)


def test_mean_fusion_of_two_patches():
    # two overlapping patches produce 0.2 and 0.6; the overlap averages to 0.4
    data = np.zeros((12, 8, 8), dtype=np.float32)
    data[:8] = 0.2  # patch at z=0 has mean 0.2
    # patch at z=4 covers z 4..12: mean = (4*0.2 + 4*x)/8; choose x so mean 0.6
    data[8:] = 1.0
    vol = ScalarVolume(data=data)
    cfg = InferenceConfig(patch_size=8, stride=(4, 8, 8))
    prob = sliding_window_predict(MeanStampModel(), vol, cfg)
    # overlap region z 4..8 covered by both patches
    assert np.allclose(prob.data[4:8], 0.5 * (0.2 + 0.6), atol=1e-6)
    assert np.allclose(prob.data[:4], 0.2, atol=1e-6)
    assert np.allclose(prob.data[8:], 0.6, atol=1e-6)


def test_probabilities_stay_bounded():
    vol = ScalarVolume(data=np.random.default_rng(1).random((16, 16, 16)).astype(np.float32))
    cfg = InferenceConfig(patch_size=8, stride=(4, 4, 4))
    prob = sliding_window_predict(ConstantModel(1.0), vol, cfg)
    assert prob.data.min() >= 0 and prob.data.max() <= 1


def test_volume_too_small():
    vol = ScalarVolume(data=np.zeros((4, 4, 4), dtype=np.float32))
    with pytest.raises(VolumeError, match="smaller"):
        sliding_window_predict(ConstantModel(0.5), vol,
                               InferenceConfig(patch_size=8, stride=(8, 8, 8)))


def test_stride_validation():
    with pytest.raises(ValueError, match="stride"):
        InferenceConfig(patch_size=8, stride=(16, 8, 8))


class TestBinarize:
    def test_boundary_convention(self):
        prob = ProbabilityVolume(data=np.array([0.49, 0.5, 0.51]).reshape(1, 1, 3))
        mask = binarize(prob, 0.5)
        assert mask.data.ravel().tolist() == [0, 1, 1]

    def test_all_zero(self):
        prob = ProbabilityVolume(data=np.zeros((2, 2, 2)))
        assert binarize(prob, 0.5).data.sum() == 0

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        prob = ProbabilityVolume(data=rng.random((4, 4, 4)))
        once = binarize(prob, 0.5)
        twice = binarize(ProbabilityVolume(data=once.data.astype(float)), 0.5)
        assert np.array_equal(once.data, twice.data)
