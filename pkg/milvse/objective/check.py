"""Finite-difference check of the full training objective on a toy problem."""

from dataclasses import dataclass, replace

import numpy as np

from milvse.encoder.batching import SequenceBatch
from milvse.encoder.config import EncoderConfig, init_model_params, modality_view
from milvse.encoder.encode import encode_batch
from milvse.numerics.gradcheck import GradReport, check_gradients
from milvse.numerics.tensor import Tensor
from milvse.objective.config import LOSS_KINDS, SIMILARITY_KINDS, LossConfig
from milvse.objective.losses import TripletEmbeddings, total_objective
from milvse.utils.logger import logger


@dataclass
class ToyProblem:
    triplets: int = 2
    steps: int = 3
    input_dim: int = 3
    d: int = 4
    K: int = 2
    seed: int = 0


def toy_batches(problem: ToyProblem) -> tuple[SequenceBatch, SequenceBatch, SequenceBatch]:
    """Random video/positive/negative batches; the last item of each is one step short."""
    rng = np.random.default_rng(problem.seed)
    lengths = np.full(problem.triplets, problem.steps)
    if problem.steps > 1:
        lengths[-1] = problem.steps - 1

    def batch() -> SequenceBatch:
        features = rng.standard_normal((problem.triplets, problem.steps, problem.input_dim))
        features[np.arange(problem.steps)[None, :] >= lengths[:, None]] = 0.0
        return SequenceBatch(features, lengths)

    return batch(), batch(), batch()


def objective_gradcheck(
    problem: ToyProblem, loss: LossConfig, pooling: str = "attention"
) -> GradReport:
    """check_gradients over every encoder weight, in float64 with dropout off."""
    encoder = EncoderConfig(
        input_dim=problem.input_dim, d=problem.d, K=problem.K if pooling == "attention" else 1,
        dropout_rate=0.0, max_len=problem.steps,
    )
    params = init_model_params(encoder, encoder, problem.seed, pooling, dtype=np.float64)
    video, positive, negative = toy_batches(problem)

    def build_loss(leaves: dict[str, Tensor]) -> Tensor:
        video_params = modality_view(leaves, "video")
        sentence_params = modality_view(leaves, "sentence")
        triplets = TripletEmbeddings(
            encode_batch(video, video_params, encoder, pooling),
            encode_batch(positive, sentence_params, encoder, pooling),
            encode_batch(negative, sentence_params, encoder, pooling),
        )
        return total_objective(triplets, loss, regularize=pooling == "attention")

    return check_gradients(build_loss, params, seed=problem.seed)


def objective_gradchecks(
    problem: ToyProblem, base: LossConfig | None = None
) -> dict[str, GradReport]:
    """Every loss kind x similarity kind combination with attention pooling."""
    base = base or LossConfig()
    reports = {}
    for loss_kind in LOSS_KINDS:
        for similarity_kind in SIMILARITY_KINDS:
            name = f"{loss_kind}+{similarity_kind}"
            cfg = replace(base, loss_kind=loss_kind, similarity_kind=similarity_kind)
            reports[name] = objective_gradcheck(problem, cfg)
            logger.info(f"gradcheck {name}: {reports[name].summary()}")
    return reports
