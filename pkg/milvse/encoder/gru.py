"""Gated recurrent units and the bidirectional encoder over a sequence."""

from typing import Mapping

import numpy as np

from milvse.numerics.functional import activation
from milvse.numerics.tensor import Tensor, concat, stack
from milvse.utils.errors import ContractError, DimensionError


def gru_cell(x: Tensor, h_prev: Tensor, cell: Mapping[str, Tensor]) -> Tensor:
    """One GRU step for a single direction's weights (keys W_z ... b_h).

    Works on vectors or on batches of row vectors.
    """
    x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=cell["W_z"].dtype))
    h_prev = (
        h_prev
        if isinstance(h_prev, Tensor)
        else Tensor(np.asarray(h_prev, dtype=cell["U_z"].dtype))
    )
    if x.shape[-1] != cell["W_z"].shape[1] or h_prev.shape[-1] != cell["U_z"].shape[0]:
        raise DimensionError(
            f"gru_cell got x {x.shape} and h {h_prev.shape} for "
            f"W {cell['W_z'].shape} and U {cell['U_z'].shape}"
        )
    projected = [x @ cell[f"W_{g}"].T + cell[f"b_{g}"] for g in ("z", "r", "h")]
    return _gru_update(*projected, h_prev, cell)


def _gru_update(
    xz: Tensor, xr: Tensor, xh: Tensor, h_prev: Tensor, cell: Mapping[str, Tensor]
) -> Tensor:
    z = activation(xz + h_prev @ cell["U_z"].T, "sigmoid")
    r = activation(xr + h_prev @ cell["U_r"].T, "sigmoid")
    h_tilde = activation(xh + (r * h_prev) @ cell["U_h"].T, "tanh")
    return (1.0 - z) * h_prev + z * h_tilde


def direction_slice(params: Mapping[str, Tensor], direction: str) -> dict[str, Tensor]:
    prefix = f"gru.{direction}."
    return {k[len(prefix) :]: v for k, v in params.items() if k.startswith(prefix)}


def run_direction(
    inputs: Tensor,
    cell: Mapping[str, Tensor],
    step_mask: np.ndarray | None,
    reverse: bool,
) -> tuple[list[Tensor], Tensor]:
    """Runs one direction over B x T x D inputs.

    Returns the per-step states in time order and the state after the last
    processed step. Where `step_mask` is 0 the state is carried unchanged, so a
    forward pass freezes after each sequence's end and a backward pass stays at
    zero until it enters the valid prefix.
    """
    batch, steps = inputs.shape[0], inputs.shape[1]
    hidden = cell["U_z"].shape[0]
    projected = [inputs @ cell[f"W_{g}"].T + cell[f"b_{g}"] for g in ("z", "r", "h")]

    h = Tensor(np.zeros((batch, hidden), dtype=cell["U_z"].dtype))
    states: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        h_new = _gru_update(*(p[:, t, :] for p in projected), h, cell)
        if step_mask is not None:
            keep = step_mask[:, t, None]
            h = h_new * keep + h * (1.0 - keep)
        else:
            h = h_new
        states[t] = h
    return states, h


def bigru_batch(
    inputs: Tensor, lengths: np.ndarray, params: Mapping[str, Tensor]
) -> tuple[Tensor, Tensor]:
    """Bidirectional pass over a padded batch.

    Returns H (B x d x T, zero at padded columns) and the concatenated last
    states [h_T forward ; h_1 backward] (B x d).
    """
    batch, steps = inputs.shape[0], inputs.shape[1]
    lengths = np.asarray(lengths)
    if np.any(lengths < 1):
        raise ContractError("Cannot encode a zero-length sequence.")
    step_mask = None
    if np.any(lengths < steps):
        step_mask = (np.arange(steps)[None, :] < lengths[:, None]).astype(inputs.dtype)

    fwd_states, fwd_last = run_direction(
        inputs, direction_slice(params, "fwd"), step_mask, reverse=False
    )
    bwd_states, bwd_last = run_direction(
        inputs, direction_slice(params, "bwd"), step_mask, reverse=True
    )
    H = concat([stack(fwd_states, axis=-1), stack(bwd_states, axis=-1)], axis=-2)
    if step_mask is not None:
        H = H * step_mask[:, None, :]
    return H, concat([fwd_last, bwd_last], axis=-1)


def bigru_encode(
    features: np.ndarray, length: int, params: Mapping[str, Tensor]
) -> Tensor:
    """H (d x length) for a single sequence; steps beyond `length` are ignored."""
    if length < 1:
        raise ContractError("Cannot encode a zero-length sequence.")
    dtype = params["gru.fwd.W_z"].dtype
    valid = np.asarray(features, dtype=dtype)[:length]
    H, _ = bigru_batch(Tensor(valid[None]), np.array([length]), params)
    return H[0]
