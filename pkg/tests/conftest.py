import numpy as np
import pytest

from spockmip.data import SamplerConfig, compute_label_mips, enumerate_patch_boxes
from spockmip.data import VolumeRecord
from spockmip.phantom import PhantomConfig, generate_phantom
from spockmip.volumes import Axis


def make_record(volume_id, dims=(16, 16, 16), seed=0, patch_size=8,
                stride=(4, 4, 4), axes=(Axis.Z,), n_vessels=3):
    image, label = generate_phantom(
        PhantomConfig(dims=dims, n_vessels=n_vessels, seed=seed,
                      radius_range=(1.0, 2.0))
    )
    return VolumeRecord(
        volume_id=volume_id,
        image=image,
        label=label,
        label_mips=compute_label_mips(label, axes),
        boxes=enumerate_patch_boxes(dims, patch_size, stride),
    )


@pytest.fixture()
def tiny_sampler():
    return SamplerConfig(patch_size=8, stride=(4, 4, 4), samples_per_epoch=16, seed=0)
