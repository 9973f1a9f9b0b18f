import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from milvse.data.dataset import PairedDataset
from milvse.data.manifest import PairRecord
from milvse.encoder.batching import collate
from milvse.encoder.config import init_model_params, modality_view
from milvse.encoder.encode import encode_batch
from milvse.encoder.pooling import EmbeddingSet
from milvse.numerics.params import ParamStore, adam_step
from milvse.numerics.tensor import Tensor, backward
from milvse.objective.losses import TripletEmbeddings, total_objective
from milvse.retrieval.index import evaluate_split
from milvse.trainer.checkpoint import Checkpoint, save_checkpoint
from milvse.trainer.config import TrainConfig
from milvse.trainer.sampling import (
    DROPOUT_STREAM,
    SHUFFLE_STREAM,
    SUBSAMPLE_STREAM,
    TripletRecord,
    epoch_rng,
    resample_negatives,
    subsample_sequence,
)
from milvse.utils.errors import DatasetError, DimensionError, TrainingDivergedError
from milvse.utils.graceful_exit import on_exit
from milvse.utils.logger import logger


CHECKPOINT_FILE = "checkpoint.mvck"
LOSS_LOG_FILE = "loss_log.json"


@dataclass
class EpochLog:
    epoch: int
    loss: float  # mean objective per triplet
    val_nmr: float | None = None


@dataclass
class TrainResult:
    best: Checkpoint  # lowest validation nMR, or the last epoch without validation
    last: Checkpoint
    log: list[EpochLog]


def training_pairs(dataset: PairedDataset) -> list[PairRecord]:
    """The train split; an untagged manifest trains on every pair."""
    if all(not r.split for r in dataset.manifest.records):
        logger.warning("Manifest has no split tags; training on every pair.")
        return list(dataset.manifest.records)
    pairs = dataset.pairs("train")
    if not pairs:
        raise DatasetError("The train split is empty.")
    return pairs


def _subsampled(sequences: Sequence[np.ndarray], max_len: int, rng: np.random.Generator):
    return [subsample_sequence(s, max_len, "train", rng) for s in sequences]


def batch_objective(
    leaves: dict[str, Tensor],
    triplets: Sequence[TripletRecord],
    dataset: PairedDataset,
    cfg: TrainConfig,
    subsample_rng: np.random.Generator,
    dropout_rng: np.random.Generator,
) -> Tensor:
    """Summed objective of one minibatch of triplets."""
    videos = _subsampled([dataset.videos[t.video_id] for t in triplets], cfg.video.max_len, subsample_rng)
    sentences = _subsampled(
        [dataset.sentences[t.positive_id] for t in triplets]
        + [dataset.sentences[t.negative_id] for t in triplets],
        cfg.sentence.max_len,
        subsample_rng,
    )

    video = encode_batch(
        collate(videos, cfg.dtype), modality_view(leaves, "video"), cfg.video,
        cfg.pooling_kind, training=True, rng=dropout_rng,
    )
    # Positives and negatives share one sentence batch, split afterwards
    both = encode_batch(
        collate(sentences, cfg.dtype), modality_view(leaves, "sentence"), cfg.sentence,
        cfg.pooling_kind, training=True, rng=dropout_rng,
    )
    count = len(triplets)
    positive = EmbeddingSet(both.phi[:count], both.attention[:count])
    negative = EmbeddingSet(both.phi[count:], both.attention[count:])
    return total_objective(
        TripletEmbeddings(video, positive, negative), cfg.loss, regularize=cfg.regularized()
    )


def run_epoch(
    store: ParamStore,
    pairs: Sequence[PairRecord],
    dataset: PairedDataset,
    cfg: TrainConfig,
    epoch: int,
) -> float:
    """One pass over fresh triplets; returns the mean objective per triplet."""
    triplets = resample_negatives(pairs, epoch, cfg.seed)
    order = epoch_rng(cfg.seed, epoch, SHUFFLE_STREAM).permutation(len(triplets))
    subsample_rng = epoch_rng(cfg.seed, epoch, SUBSAMPLE_STREAM)
    dropout_rng = epoch_rng(cfg.seed, epoch, DROPOUT_STREAM)

    total = 0.0
    for batch_number, start in enumerate(range(0, len(order), cfg.batch_size)):
        batch = [triplets[i] for i in order[start : start + cfg.batch_size]]
        leaves = store.leaves()
        loss = batch_objective(leaves, batch, dataset, cfg, subsample_rng, dropout_rng)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDivergedError(
                f"Objective became {value} at epoch {epoch}, batch {batch_number}"
            )
        adam_step(store, backward(loss, leaves), cfg.learning_rate)
        total += value
    return total / len(triplets)


def _check_widths(dataset: PairedDataset, cfg: TrainConfig) -> None:
    if dataset.video_dim != cfg.video.input_dim:
        raise DimensionError(
            f"Video features have width {dataset.video_dim}, config expects {cfg.video.input_dim}"
        )
    if dataset.sentence_dim != cfg.sentence.input_dim:
        raise DimensionError(
            f"Sentence features have width {dataset.sentence_dim}, config expects {cfg.sentence.input_dim}"
        )


def write_loss_log(log: Sequence[EpochLog], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as file:
        json.dump([asdict(entry) for entry in log], file, indent=2, ensure_ascii=False)
    logger.info(f"Loss log written to {path}")
    return path


def train(
    dataset: PairedDataset, cfg: TrainConfig, out_dir: Path | None = None
) -> TrainResult:
    """ADAM on the summed triplet objective; keeps the best model by validation nMR."""
    pairs = training_pairs(dataset)
    _check_widths(dataset, cfg)
    validate = cfg.eval_every > 0 and bool(dataset.pairs("val"))

    store = init_model_params(cfg.video, cfg.sentence, cfg.seed, cfg.pooling_kind, cfg.dtype)
    log: list[EpochLog] = []
    best: Checkpoint | None = None
    best_nmr = np.inf

    def snapshot(epoch: int, loss: float) -> Checkpoint:
        return Checkpoint(store.copy(), cfg, epoch, loss)

    def save_outputs(checkpoint: Checkpoint) -> None:
        if out_dir is None:
            return
        save_checkpoint(checkpoint, Path(out_dir) / CHECKPOINT_FILE)
        write_loss_log(log, Path(out_dir) / LOSS_LOG_FILE)

    if out_dir is not None:
        on_exit(
            lambda: save_outputs(best or snapshot(len(log), log[-1].loss if log else np.nan)),
            "Training interrupted. Saving the checkpoint and loss log...",
        )

    logger.info(
        f"Training on {len(pairs)} pairs: pooling={cfg.pooling_kind}, K={cfg.K}, d={cfg.d}, "
        f"loss={cfg.loss.loss_kind}, similarity={cfg.loss.similarity_kind}, seed={cfg.seed}"
    )
    for epoch in range(1, cfg.epochs + 1):
        loss = run_epoch(store, pairs, dataset, cfg, epoch)
        entry = EpochLog(epoch, loss)

        if validate and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            entry.val_nmr = evaluate_split(dataset, Checkpoint(store, cfg, epoch, loss), "val").nMR
            if entry.val_nmr < best_nmr:
                best_nmr = entry.val_nmr
                best = snapshot(epoch, loss)
        log.append(entry)

        marker = " *" if best is not None and best.epoch == epoch else ""
        val = f", val nMR={entry.val_nmr:.2f}" if entry.val_nmr is not None else ""
        logger.info(f"Epoch {epoch}/{cfg.epochs}: loss={loss:.6f}{val}{marker}")

    last = snapshot(cfg.epochs, log[-1].loss)
    result = TrainResult(best or last, last, log)
    save_outputs(result.best)
    return result
