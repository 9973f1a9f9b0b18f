from dataclasses import asdict, dataclass

import numpy as np

from milvse.numerics.params import ParamStore
from milvse.utils.errors import ConfigError


POOLING_KINDS = ("attention", "last_states")
D_GRID = (128, 256, 512)


@dataclass
class EncoderConfig:
    """Shape and regularization settings of one modality's encoder."""

    input_dim: int
    d: int = 256
    u: int | None = None  # attention hidden width, defaults to d
    K: int = 8
    dropout_rate: float = 0.2
    max_len: int = 32

    def __post_init__(self):
        if self.u is None:
            self.u = self.d
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.d < 2 or self.d % 2:
            raise ConfigError(f"d must be even and >= 2, got {self.d}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if self.u < 1:
            raise ConfigError(f"u must be >= 1, got {self.u}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {self.max_len}")

    @property
    def hidden(self) -> int:
        """Hidden width of one GRU direction."""
        return self.d // 2

    def to_dict(self) -> dict:
        return asdict(self)


GATES = ("z", "r", "h")
DIRECTIONS = ("fwd", "bwd")


def init_encoder_params(
    cfg: EncoderConfig, rng: np.random.Generator, pooling: str = "attention"
) -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if pooling not in POOLING_KINDS:
        raise ConfigError(f"Unknown pooling kind '{pooling}'.")

    def uniform(rows: int, cols: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols))

    params: dict[str, np.ndarray] = {}
    for direction in DIRECTIONS:
        prefix = f"gru.{direction}"
        for gate in GATES:
            params[f"{prefix}.W_{gate}"] = uniform(cfg.hidden, cfg.input_dim)
        for gate in GATES:
            params[f"{prefix}.U_{gate}"] = uniform(cfg.hidden, cfg.hidden)
        for gate in GATES:
            params[f"{prefix}.b_{gate}"] = np.zeros(cfg.hidden)

    if pooling == "attention":
        params["attn.W1"] = uniform(cfg.u, cfg.d)
        params["attn.W2"] = uniform(cfg.K, cfg.u)
    return params


def init_model_params(
    video: EncoderConfig,
    sentence: EncoderConfig,
    seed: int,
    pooling: str = "attention",
    dtype=np.float32,
) -> ParamStore:
    """Both encoders in one store, names prefixed with 'video.' / 'sentence.'."""
    if (video.d, video.K) != (sentence.d, sentence.K):
        raise ConfigError("Video and sentence encoders must share d and K.")
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for modality, cfg in (("video", video), ("sentence", sentence)):
        for name, value in init_encoder_params(cfg, rng, pooling).items():
            store.add(f"{modality}.{name}", value.astype(dtype))
    return store


def modality_view(leaves, modality: str) -> dict:
    """The leaves of one modality with the modality prefix stripped."""
    prefix = f"{modality}."
    return {
        name[len(prefix) :]: leaf for name, leaf in leaves.items() if name.startswith(prefix)
    }
