from dataclasses import asdict, dataclass, field, replace

import numpy as np

from milvse.encoder.config import D_GRID, POOLING_KINDS, EncoderConfig
from milvse.objective.config import LossConfig
from milvse.utils.errors import ConfigError


PRECISIONS = ("float32", "float64")
K_GRID = (2, 4, 6, 8, 10, 12)
ALPHA_EXPONENTS = (1, 2, 3, 4)
ENCODER_FIELDS = ("d", "K", "u", "dropout_rate", "max_len")


@dataclass
class GridSpec:
    """Hyperparameter grid: d x K x alpha = 10^-p."""

    d: list[int] = field(default_factory=lambda: list(D_GRID))
    K: list[int] = field(default_factory=lambda: list(K_GRID))
    alpha_exponents: list[int] = field(default_factory=lambda: list(ALPHA_EXPONENTS))

    def __post_init__(self):
        if not (self.d and self.K and self.alpha_exponents):
            raise ConfigError("Every grid axis needs at least one value.")
        if any(p < 1 for p in self.alpha_exponents):
            raise ConfigError(f"Alpha exponents must be >= 1, got {self.alpha_exponents}")
        if any(k < 1 for k in self.K):
            raise ConfigError(f"Grid K values must be >= 1, got {self.K}")

    def points(self) -> list[tuple[int, int, float]]:
        """(d, K, alpha) in grid order: d outermost, alpha innermost."""
        return [
            (d, k, 10.0 ** -p) for d in self.d for k in self.K for p in self.alpha_exponents
        ]


@dataclass
class TrainConfig:
    video: EncoderConfig
    sentence: EncoderConfig
    loss: LossConfig = field(default_factory=LossConfig)
    learning_rate: float = 2e-4
    epochs: int = 500
    batch_size: int = 100
    seed: int = 0
    grid: GridSpec | None = None
    pooling_kind: str = "attention"
    precision: str = "float32"
    # Validation retrieval every n epochs; 0 disables model selection
    eval_every: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.pooling_kind not in POOLING_KINDS:
            raise ConfigError(f"pooling_kind must be one of {POOLING_KINDS}, got '{self.pooling_kind}'")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}, got '{self.precision}'")
        if self.eval_every < 0 or self.workers < 1:
            raise ConfigError("eval_every must be >= 0 and workers >= 1")
        if self.pooling_kind == "last_states":
            self.video = replace(self.video, K=1)
            self.sentence = replace(self.sentence, K=1)
        if (self.video.d, self.video.K) != (self.sentence.d, self.sentence.K):
            raise ConfigError("Video and sentence encoders must share d and K.")

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.precision)

    @property
    def K(self) -> int:
        return self.video.K

    @property
    def d(self) -> int:
        return self.video.d

    def regularized(self) -> bool:
        return self.pooling_kind == "attention"

    def variant(self, **changes) -> "TrainConfig":
        """A copy with encoder, loss or schedule fields changed.

        Encoder fields (d, K, u, dropout_rate, max_len) apply to both encoders;
        loss fields (alpha, loss_kind, similarity_kind, ...) go to the LossConfig.
        """
        encoder_changes = {k: changes.pop(k) for k in ENCODER_FIELDS if k in changes}
        if "d" in encoder_changes and "u" not in encoder_changes:
            encoder_changes["u"] = encoder_changes["d"]
        loss_fields = set(LossConfig.__dataclass_fields__)
        loss_changes = {k: changes.pop(k) for k in list(changes) if k in loss_fields}
        return replace(
            self,
            video=replace(self.video, **encoder_changes),
            sentence=replace(self.sentence, **encoder_changes),
            loss=replace(self.loss, **loss_changes),
            **changes,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        try:
            values = dict(data)
            values["video"] = EncoderConfig(**values["video"])
            values["sentence"] = EncoderConfig(**values["sentence"])
            values["loss"] = LossConfig(**values["loss"])
            if values.get("grid") is not None:
                values["grid"] = GridSpec(**values["grid"])
            return cls(**values)
        except (KeyError, TypeError) as e:
            raise ConfigError(f"Malformed training config: {e}") from e


# Each row adds one feature to the one above it
ABLATION_ROWS: dict[str, dict] = {
    "deviseq": {"loss_kind": "hinge", "pooling_kind": "last_states", "similarity_kind": "concat"},
    "base": {"loss_kind": "pseudo_huber", "pooling_kind": "last_states", "similarity_kind": "concat"},
    "sa": {"loss_kind": "pseudo_huber", "pooling_kind": "attention", "similarity_kind": "concat", "K": 1},
    "sa_me": {"loss_kind": "pseudo_huber", "pooling_kind": "attention", "similarity_kind": "concat"},
    "mivise": {"loss_kind": "pseudo_huber", "pooling_kind": "attention", "similarity_kind": "mil_max"},
}


@dataclass
class AblationSpec:
    rows: list[str] = field(default_factory=lambda: list(ABLATION_ROWS))
    K: int = 8  # for the multiple-embedding rows
    seeds: list[int] = field(default_factory=lambda: [0])

    def __post_init__(self):
        unknown = [row for row in self.rows if row not in ABLATION_ROWS]
        if unknown:
            raise ConfigError(f"Unknown ablation rows: {unknown}; known: {list(ABLATION_ROWS)}")
        if len(set(self.rows)) != len(self.rows):
            raise ConfigError(f"Duplicate ablation rows: {self.rows}")
        if self.K < 2:
            raise ConfigError(f"Multiple-embedding rows need K >= 2, got {self.K}")
        if not self.seeds:
            raise ConfigError("An ablation needs at least one seed.")
        self.rows = [row for row in ABLATION_ROWS if row in self.rows]

    def configs(self, base: TrainConfig) -> list[tuple[str, TrainConfig]]:
        """Row configs in canonical table order, derived from `base`."""
        configs = []
        for row in self.rows:
            changes = {"K": self.K, **ABLATION_ROWS[row]}
            configs.append((row, base.variant(**changes)))
        return configs
