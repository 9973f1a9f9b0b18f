import numpy as np
import pytest

from milvse.data.dataset import PairedDataset
from milvse.data.synthetic import SyntheticSpec, generate_synthetic, write_synthetic
from milvse.encoder.config import EncoderConfig
from milvse.trainer.config import TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    return SyntheticSpec(
        pairs=20,
        concepts=4,
        per_modality=2,
        shared=1,
        video_dim=5,
        sentence_dim=4,
        min_len=3,
        max_len=9,
        noise=0.05,
        seed=3,
    )


@pytest.fixture
def tiny_dataset(tiny_spec):
    data = generate_synthetic(tiny_spec)
    return PairedDataset(data.manifest, data.videos, data.sentences)


@pytest.fixture
def tiny_manifest(tmp_path, tiny_spec):
    """The tiny planted dataset written to disk; returns the manifest path."""
    return write_synthetic(generate_synthetic(tiny_spec), tmp_path / "data")


@pytest.fixture
def make_config(tiny_dataset):
    def factory(**changes) -> TrainConfig:
        encoder = {"d": 8, "K": 2, "dropout_rate": 0.0, "max_len": 6}
        cfg = TrainConfig(
            video=EncoderConfig(tiny_dataset.video_dim, **encoder),
            sentence=EncoderConfig(tiny_dataset.sentence_dim, **encoder),
            learning_rate=1e-3,
            epochs=2,
            batch_size=8,
        )
        return cfg.variant(**changes)

    return factory
