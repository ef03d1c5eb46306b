import numpy as np
import pytest
import torch

from hijacklab import synth
from hijacklab.data import DatasetRole, ImageBatch, LabeledDataset
from hijacklab.features import train_small_extractor

SIZE = 32


@pytest.fixture(scope="session")
def objects10():
    return synth.synth_objects(300, size=SIZE, seed=100, class_count=10)


@pytest.fixture(scope="session")
def objects8():
    return synth.synth_objects(300, size=SIZE, seed=100, class_count=8)


@pytest.fixture(scope="session")
def digits10():
    return synth.synth_digits(300, size=SIZE, seed=101, class_count=10)


@pytest.fixture(scope="session")
def faces8():
    ds, _ = synth.synth_faces(300, size=SIZE, seed=102)
    return ds


@pytest.fixture(scope="session")
def original_train(objects10):
    return objects10.subset(range(200), role=DatasetRole.ORIGINAL)


@pytest.fixture(scope="session")
def original_test(objects10):
    return objects10.subset(range(200, 300), role=DatasetRole.ORIGINAL)


@pytest.fixture(scope="session")
def hijacking_train(digits10):
    return digits10.subset(range(200), role=DatasetRole.HIJACKING)


@pytest.fixture(scope="session")
def hijacking_test(digits10):
    return digits10.subset(range(200, 300), role=DatasetRole.HIJACKING)


@pytest.fixture(scope="session")
def extractor(original_train):
    # one quick scratch extractor shared by every test that needs features
    return train_small_extractor(
        original_train, epochs=1, batch_size=64, lr=1e-3, seed=30
    )


def rand_batch(n, c, h, w, seed=0, value_range="symmetric"):
    g = torch.Generator().manual_seed(seed)
    data = torch.rand(n, c, h, w, generator=g)
    if value_range == "symmetric":
        data = data * 2 - 1
    return ImageBatch(data, value_range)
