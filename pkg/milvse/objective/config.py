from dataclasses import asdict, dataclass

from milvse.utils.errors import ConfigError


LOSS_KINDS = ("hinge", "pseudo_huber")
SIMILARITY_KINDS = ("concat", "mil_max")


@dataclass
class LossConfig:
    rho: float = 1.0
    delta: float = 1.0
    # Also the grid's "regularization weight" 10^-p
    alpha: float = 1e-4
    beta: float = 0.5
    loss_kind: str = "pseudo_huber"
    similarity_kind: str = "mil_max"

    def __post_init__(self):
        if self.rho <= 0:
            raise ConfigError(f"rho must be > 0, got {self.rho}")
        if self.delta <= 0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss_kind must be one of {LOSS_KINDS}, got '{self.loss_kind}'")
        if self.similarity_kind not in SIMILARITY_KINDS:
            raise ConfigError(
                f"similarity_kind must be one of {SIMILARITY_KINDS}, got '{self.similarity_kind}'"
            )

    def to_dict(self) -> dict:
        return asdict(self)
