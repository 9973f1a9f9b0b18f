import json
import struct

import numpy as np
import pytest

from milvse.encoder.config import EncoderConfig, init_model_params, modality_view
from milvse.encoder.encode import encode
from milvse.numerics.params import adam_step
from milvse.numerics.tensor import backward
from milvse.objective.config import LossConfig
from milvse.objective.losses import TripletEmbeddings, total_objective
from milvse.retrieval.index import evaluate_split
from milvse.retrieval.metrics import report_from_ranks
from milvse.trainer.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from milvse.trainer.config import ABLATION_ROWS, AblationSpec, GridSpec, TrainConfig
from milvse.trainer.experiments import (
    ExperimentResult,
    grid_search,
    relative_improvement,
    run_ablation,
    sweep_k,
)
from milvse.trainer.train import LOSS_LOG_FILE, train
from milvse.utils.errors import CheckpointError, ConfigError, DimensionError


def test_last_states_forces_a_single_embedding(make_config):
    cfg = make_config(pooling_kind="last_states")
    assert cfg.K == 1
    assert cfg.variant(pooling_kind="attention", K=4).K == 4
    with pytest.raises(ConfigError):
        make_config(batch_size=0)
    with pytest.raises(ConfigError):
        make_config(precision="float16")


def test_config_survives_a_dict_round_trip(make_config):
    cfg = make_config(grid=GridSpec(d=[8], K=[2], alpha_exponents=[2]))
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_ablation_rows_add_one_feature_at_a_time(make_config):
    rows = dict(AblationSpec(K=4).configs(make_config()))
    assert list(rows) == list(ABLATION_ROWS)
    assert rows["deviseq"].loss.loss_kind == "hinge" and rows["base"].loss.loss_kind == "pseudo_huber"
    assert rows["deviseq"].K == rows["base"].K == rows["sa"].K == 1
    assert rows["sa_me"].K == rows["mivise"].K == 4
    assert rows["sa_me"].loss.similarity_kind == "concat"
    assert rows["mivise"].loss.similarity_kind == "mil_max"
    assert AblationSpec(rows=["mivise", "base"]).rows == ["base", "mivise"]
    with pytest.raises(ConfigError):
        AblationSpec(rows=["transformer"])


def test_loss_swap_keeps_parameter_shapes(make_config):
    deviseq = dict(AblationSpec().configs(make_config()))["deviseq"]
    hinge = init_model_params(deviseq.video, deviseq.sentence, 0, deviseq.pooling_kind)
    swapped = deviseq.variant(loss_kind="pseudo_huber")
    huber = init_model_params(swapped.video, swapped.sentence, 0, swapped.pooling_kind)
    assert {n: p.shape for n, p in hinge.items()} == {n: p.shape for n, p in huber.items()}


def test_grid_points_in_order():
    points = GridSpec(d=[8, 16], K=[2], alpha_exponents=[1, 3]).points()
    assert [(d, k) for d, k, _ in points] == [(8, 2), (8, 2), (16, 2), (16, 2)]
    assert [alpha for _, _, alpha in points] == pytest.approx([0.1, 0.001, 0.1, 0.001])


def test_zero_learning_rate_keeps_parameters(tiny_dataset, make_config):
    cfg = make_config(learning_rate=0.0, epochs=2, eval_every=0)
    result = train(tiny_dataset, cfg)
    initial = init_model_params(cfg.video, cfg.sentence, cfg.seed, cfg.pooling_kind, cfg.dtype)
    for name, value in initial.items():
        assert np.array_equal(result.last.params[name], value)


def test_identical_seeds_give_identical_loss_logs(tiny_dataset, make_config):
    cfg = make_config(dropout_rate=0.0, epochs=2)
    first = train(tiny_dataset, cfg)
    second = train(tiny_dataset, cfg)
    assert [e.loss for e in first.log] == [e.loss for e in second.log]
    assert [e.val_nmr for e in first.log] == [e.val_nmr for e in second.log]
    assert all(e.val_nmr is not None for e in first.log)


def test_training_writes_checkpoint_and_loss_log(tmp_path, tiny_dataset, make_config):
    result = train(tiny_dataset, make_config(epochs=2), tmp_path)
    log = json.loads((tmp_path / LOSS_LOG_FILE).read_text(encoding="utf-8"))
    assert [entry["epoch"] for entry in log] == [1, 2]
    loaded = load_checkpoint(tmp_path / "checkpoint.mvck")
    assert loaded.epoch == result.best.epoch
    assert loaded.config == result.best.config


def test_feature_width_mismatch_is_reported(tiny_dataset, make_config):
    cfg = make_config()
    wrong = cfg.variant()
    wrong.video.input_dim = 99
    with pytest.raises(DimensionError):
        train(tiny_dataset, wrong)


def test_single_triplet_overfits(rng):
    cfg = make_triplet_config()
    store = init_model_params(cfg.video, cfg.sentence, seed=0, dtype=np.float64)
    video, positive, negative = (rng.standard_normal((4, 3)) for _ in range(3))

    def objective():
        leaves = store.leaves()
        v, s = modality_view(leaves, "video"), modality_view(leaves, "sentence")
        triplet = TripletEmbeddings(
            encode(video, 4, v, cfg.video)[None],
            encode(positive, 4, s, cfg.sentence)[None],
            encode(negative, 4, s, cfg.sentence)[None],
        )
        return total_objective(triplet, cfg.loss), leaves

    initial, _ = objective()
    for _ in range(200):
        loss, leaves = objective()
        adam_step(store, backward(loss, leaves), lr=1e-2)
    final, _ = objective()
    assert final.item() < initial.item()


def make_triplet_config() -> TrainConfig:
    encoder = EncoderConfig(input_dim=3, d=8, K=2, dropout_rate=0.0)
    return TrainConfig(video=encoder, sentence=encoder, loss=LossConfig(alpha=0.0))


def test_checkpoint_round_trip_reproduces_embeddings(tmp_path, make_config, rng):
    cfg = make_config()
    params = init_model_params(cfg.video, cfg.sentence, 5, cfg.pooling_kind, cfg.dtype)
    path = save_checkpoint(Checkpoint(params, cfg, epoch=3, loss=0.25), tmp_path / "model.mvck")
    loaded = load_checkpoint(path)
    assert (loaded.epoch, loaded.loss, loaded.config) == (3, 0.25, cfg)
    features = rng.standard_normal((5, cfg.video.input_dim)).astype(np.float32)
    before = encode(features, 5, modality_view(params.leaves(False), "video"), cfg.video)
    after = encode(features, 5, modality_view(loaded.params.leaves(False), "video"), cfg.video)
    assert before.phi.data.tobytes() == after.phi.data.tobytes()


def test_corrupt_checkpoints_raise(tmp_path, make_config):
    cfg = make_config()
    params = init_model_params(cfg.video, cfg.sentence, 0, cfg.pooling_kind)
    path = save_checkpoint(Checkpoint(params, cfg, 1, 0.0), tmp_path / "model.mvck")
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)
    path.write_bytes(b"MVFT" + blob[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)
    path.write_bytes(b"MVCK" + struct.pack("<III", 1, 1, 2) + b"\xff\xfe")
    with pytest.raises(CheckpointError, match="UTF-8"):
        load_checkpoint(path)


def test_single_row_ablation_matches_direct_training(tiny_dataset, make_config):
    base = make_config(epochs=1)
    (row,) = run_ablation(tiny_dataset, base, AblationSpec(rows=["base"], K=2))
    direct = train(tiny_dataset, dict(AblationSpec(rows=["base"], K=2).configs(base))["base"])
    assert row.report == evaluate_split(tiny_dataset, direct.best, "test")


def test_relative_improvement_against_the_row_above(make_config):
    cfg = make_config()
    rows = [
        ExperimentResult("a", cfg, [report_from_ranks([4, 4], 10)]),
        ExperimentResult("b", cfg, [report_from_ranks([3, 3], 10)]),
    ]
    assert relative_improvement(rows) == [None, pytest.approx(25.0)]


def test_k_sweep_trains_one_model_per_value(tiny_dataset, make_config):
    with pytest.raises(ConfigError):
        sweep_k(tiny_dataset, make_config(), [1, 2])
    results = sweep_k(tiny_dataset, make_config(epochs=1), [2, 3])
    assert [r.name for r in results] == ["K=2", "K=3"]
    assert [r.config.K for r in results] == [2, 3]
    assert all(r.report.N == 2 for r in results)


def test_grid_search_keeps_the_first_lowest_validation_point(tiny_dataset, make_config):
    grid = GridSpec(d=[8], K=[2], alpha_exponents=[1, 2])
    result = grid_search(tiny_dataset, make_config(epochs=1), grid)
    assert len(result.results) == 2
    lowest = min(r.nmr for r in result.results)
    first_lowest = next(r for r in result.results if r.nmr == lowest)
    assert result.best == first_lowest.config
    assert result.best.loss.alpha == pytest.approx(0.1 if first_lowest is result.results[0] else 0.01)
