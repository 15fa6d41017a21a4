import numpy as np
import pytest

from cocnn.datagen import GenSpec, generate_dataset
from cocnn.nn import ArchConfig, ModelParams, init_model


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(GenSpec(total=700, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch():
    return ArchConfig(input_rows=9, input_cols=8, conv_filters=(2, 3))


def with_random_biases(model, rng, scale=0.1):
    tensors = {k: v.copy() for k, v in model.items()}
    for name in tensors:
        if name.endswith(".b"):
            tensors[name] = rng.normal(0.0, scale, tensors[name].shape)
    return ModelParams(model.arch, tensors)


@pytest.fixture
def tiny_model(tiny_arch, rng):
    return with_random_biases(init_model(tiny_arch, 7), rng)
