from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from milvse.numerics.params import ParamStore
from milvse.numerics.tensor import Tensor, backward
from milvse.utils.errors import ContractError
from milvse.utils.logger import logger


LossBuilder = Callable[[Mapping[str, Tensor]], Tensor]

DEFAULT_TOLERANCE = 1e-4
MIN_COORDS = 25
# Denominator floor: below this magnitude the error is effectively absolute
ERROR_FLOOR = 1e-4


@dataclass
class GradReport:
    errors: dict[str, float]
    passed: bool
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max_rel_err={self.max_error:.3e} tol={self.tolerance:g}"


def check_gradients(
    build_loss: LossBuilder,
    params: ParamStore,
    eps: float = 1e-5,
    coords: int = MIN_COORDS,
    tolerance: float = DEFAULT_TOLERANCE,
    seed: int = 0,
) -> GradReport:
    """Compares backward() against central finite differences (64-bit only)."""
    if params.dtype != np.float64:
        raise ContractError("Gradient checking needs float64 parameters.")
    leaves = params.leaves()
    analytic = backward(build_loss(leaves), leaves)
    return compare_gradients(analytic, build_loss, params, eps, coords, tolerance, seed)


def compare_gradients(
    analytic: Mapping[str, np.ndarray],
    build_loss: LossBuilder,
    params: ParamStore,
    eps: float = 1e-5,
    coords: int = MIN_COORDS,
    tolerance: float = DEFAULT_TOLERANCE,
    seed: int = 0,
) -> GradReport:
    if eps <= 0:
        raise ContractError("Finite-difference step must be positive.")
    rng = np.random.default_rng(seed)

    def evaluate() -> float:
        return build_loss(params.leaves(requires_grad=False)).item()

    errors: dict[str, float] = {}
    for name in params:
        value = params[name]
        flat = value.reshape(-1)
        picks = (
            np.arange(flat.size)
            if flat.size <= coords
            else rng.choice(flat.size, size=coords, replace=False)
        )
        worst = 0.0
        for index in picks:
            original = flat[index]
            flat[index] = original + eps
            plus = evaluate()
            flat[index] = original - eps
            minus = evaluate()
            flat[index] = original

            numeric = (plus - minus) / (2 * eps)
            exact = float(analytic[name].reshape(-1)[index])
            scale = max(abs(exact), abs(numeric), ERROR_FLOOR)
            worst = max(worst, abs(exact - numeric) / scale)
        errors[name] = worst
        logger.debug(f"gradcheck {name}: max relative error {worst:.3e}")

    passed = all(error < tolerance for error in errors.values())
    return GradReport(errors=errors, passed=passed, tolerance=tolerance)
