import pytest

from progiqa.data import load_all
from progiqa.presets import toy_model_config, toy_train_config
from progiqa.synthetic import SyntheticSpec, make_synthetic


@pytest.fixture(scope="session")
def blur_dataset(tmp_path_factory):
    """Small deterministic blur dataset shared across tests."""
    out = tmp_path_factory.mktemp("blur_ds")
    manifest, csv_path = make_synthetic(
        SyntheticSpec(num_images=12, image_size=64, seed=101), out
    )
    return manifest, csv_path


@pytest.fixture(scope="session")
def blur_samples(blur_dataset):
    manifest, _ = blur_dataset
    return load_all(manifest, "train", crop_size=56, resize_short_side=64)


@pytest.fixture(scope="session")
def hundred_dataset(tmp_path_factory):
    """100 tiny images for split-statistics tests."""
    out = tmp_path_factory.mktemp("hundred_ds")
    manifest, _ = make_synthetic(
        SyntheticSpec(num_images=100, image_size=32, seed=202), out
    )
    return manifest


@pytest.fixture
def toy_configs():
    return toy_model_config(), toy_train_config(max_epochs=3)
