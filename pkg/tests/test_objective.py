import numpy as np
import pytest

from milvse.encoder.pooling import EmbeddingSet
from milvse.numerics.tensor import Tensor, backward
from milvse.objective.check import ToyProblem, objective_gradcheck, objective_gradchecks
from milvse.objective.config import LossConfig
from milvse.objective.losses import (
    TripletEmbeddings,
    attention_penalty,
    hinge_loss,
    pseudo_huber_loss,
    total_objective,
)
from milvse.objective.similarity import (
    bag_max,
    best_instance,
    concat_similarity,
    instance_bag,
    similarity,
)
from milvse.utils.errors import ConfigError, ContractError, DegenerateRowError

E = np.eye(3)


def test_closed_form_loss_values():
    assert pseudo_huber_loss(0.0, rho=1.0, slope=1.0).item() == pytest.approx(np.sqrt(2) - 1, abs=1e-9)
    assert pseudo_huber_loss(1.0, rho=1.0, slope=1.0).item() == 0.0
    assert hinge_loss(0.6, rho=1.0).item() == 0.4
    assert hinge_loss(1.7, rho=1.0).item() == 0.0


def test_pseudo_huber_is_symmetric_in_the_residual():
    for r in (0.3, 1.2, 4.0):
        above = pseudo_huber_loss(1.0 + r, rho=1.0, slope=0.5).item()
        below = pseudo_huber_loss(1.0 - r, rho=1.0, slope=0.5).item()
        assert above == pytest.approx(below, rel=1e-12)


def test_pseudo_huber_is_smooth_at_the_margin():
    delta = Tensor(np.array(1.0), requires_grad=True)
    grad = backward(pseudo_huber_loss(delta, rho=1.0, slope=1.0), {"d": delta})["d"]
    assert float(grad) == 0.0


def test_uniform_attention_penalty():
    A = np.full((2, 4), 0.25)
    assert attention_penalty(A, beta=0.5).item() == pytest.approx(0.5, abs=1e-9)


def test_orthogonal_one_hot_rows_have_zero_penalty_at_beta_one():
    A = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    assert attention_penalty(A, beta=1.0).item() == 0.0


def test_mil_max_picks_the_best_pair():
    query = np.stack([E[0], E[1]])
    item = np.stack([0.6 * E[0] + 0.8 * E[1], E[2]])
    assert bag_max(instance_bag(query, item)).item() == pytest.approx(0.8)
    assert bag_max(instance_bag(query, np.stack([E[2], E[2]]))).item() == pytest.approx(0.0)
    assert bag_max(instance_bag(item, item)).item() == pytest.approx(1.0)
    assert best_instance(query, item) == (1, 0, pytest.approx(0.8))


def test_bag_is_symmetric_and_scale_invariant(rng):
    phi, psi = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    forward = similarity(phi, psi, "mil_max").item()
    assert similarity(psi, phi, "mil_max").item() == pytest.approx(forward, abs=1e-12)
    scaled = phi * np.array([[2.0], [0.1], [7.0]])
    assert similarity(scaled, psi, "mil_max").item() == pytest.approx(forward, abs=1e-12)


def test_concat_similarity_is_cosine_of_flattened_sets(rng):
    phi, psi = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
    a, b = phi.ravel(), psi.ravel()
    expected = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    assert concat_similarity(phi, psi).item() == pytest.approx(expected, abs=1e-12)


def test_zero_row_is_rejected_with_its_index():
    phi = np.stack([E[0], np.zeros(3)])
    with pytest.raises(DegenerateRowError, match="row 1"):
        instance_bag(phi, np.stack([E[1], E[2]]))


def test_mil_gradient_reaches_only_the_winning_rows(rng):
    phi = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    psi = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    grads = backward(bag_max(instance_bag(phi, psi)), {"phi": phi, "psi": psi})
    i, j, _ = best_instance(phi.data, psi.data)
    assert np.count_nonzero(np.abs(grads["phi"]).sum(axis=1)) == 1
    assert np.abs(grads["phi"][i]).sum() > 0
    assert np.abs(grads["psi"][j]).sum() > 0


def triplets_from(rng, batch=3, K=2, d=4, T=5):
    def embedding_set():
        logits = rng.standard_normal((batch, K, T))
        A = np.exp(logits) / np.exp(logits).sum(axis=-1, keepdims=True)
        return EmbeddingSet(Tensor(rng.standard_normal((batch, K, d))), Tensor(A))

    return TripletEmbeddings(embedding_set(), embedding_set(), embedding_set())


def test_total_objective_sums_per_triplet_terms(rng):
    triplets = triplets_from(rng)
    cfg = LossConfig(alpha=0.1)
    total = total_objective(triplets, cfg).item()
    expected = 0.0
    for n in range(3):
        delta = similarity(triplets.video.phi.data[n], triplets.positive.phi.data[n], "mil_max").item() - similarity(
            triplets.video.phi.data[n], triplets.negative.phi.data[n], "mil_max"
        ).item()
        expected += pseudo_huber_loss(delta, 1.0, 1.0).item()
        for side in (triplets.video, triplets.positive, triplets.negative):
            expected += 0.1 * attention_penalty(side.attention.data[n], 0.5).item()
    assert total == pytest.approx(expected, rel=1e-12)
    without = total_objective(triplets, cfg, regularize=False).item()
    assert without < total


def test_duplicated_triplets_double_the_objective(rng):
    triplets = triplets_from(rng)

    def doubled(side: EmbeddingSet) -> EmbeddingSet:
        return EmbeddingSet(
            Tensor(np.concatenate([side.phi.data, side.phi.data])),
            Tensor(np.concatenate([side.attention.data, side.attention.data])),
        )

    twice = TripletEmbeddings(
        doubled(triplets.video), doubled(triplets.positive), doubled(triplets.negative)
    )
    for cfg in (LossConfig(alpha=0.1), LossConfig(loss_kind="hinge", alpha=0.0)):
        single = total_objective(triplets, cfg).item()
        assert total_objective(twice, cfg).item() == pytest.approx(2 * single, rel=1e-12)


def test_empty_batch_and_bad_config_are_rejected():
    empty = EmbeddingSet(Tensor(np.zeros((0, 2, 3))), Tensor(np.zeros((0, 2, 4))))
    with pytest.raises(ContractError):
        total_objective(TripletEmbeddings(empty, empty, empty), LossConfig())
    with pytest.raises(ConfigError):
        LossConfig(loss_kind="huber")
    with pytest.raises(ConfigError):
        LossConfig(beta=1.5)


def test_full_objective_gradients_pass_for_every_variant():
    reports = objective_gradchecks(ToyProblem(), LossConfig(alpha=0.1))
    assert set(reports) == {
        "hinge+concat", "hinge+mil_max", "pseudo_huber+concat", "pseudo_huber+mil_max"
    }
    for name, report in reports.items():
        assert report.passed, f"{name}: {report.summary()}"


def test_last_states_objective_gradients_pass():
    report = objective_gradcheck(ToyProblem(seed=4), LossConfig(similarity_kind="concat"), "last_states")
    assert report.passed, report.summary()
