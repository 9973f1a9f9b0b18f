"""Flat dotted-key run configuration.

Precedence, lowest first: DEFAULTS, the JSON file given with --config,
repeated --set key=value flags, dedicated flags such as --out-dir.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from milvse.data.sentences import DEFAULT_TABLE_MEMBER, DEFAULT_TABLE_URL
from milvse.data.synthetic import SyntheticSpec
from milvse.encoder.config import D_GRID, EncoderConfig
from milvse.objective.config import LossConfig
from milvse.trainer.config import (
    ABLATION_ROWS,
    ALPHA_EXPONENTS,
    K_GRID,
    AblationSpec,
    GridSpec,
    TrainConfig,
)
from milvse.utils.errors import ConfigError
from milvse.utils.logger import logger


RESOLVED_CONFIG_FILE = "resolved_config.json"

DEFAULTS: dict[str, Any] = {
    "run.out_dir": "runs",
    "run.checkpoint": "",
    "data.manifest": "",
    "data.embeddings": "",
    "data.embeddings_limit": 0,
    "model.d": 256,
    "model.K": 8,
    "model.u": 0,  # 0 means u = d
    "model.dropout": 0.2,
    "model.max_len": 32,
    "model.pooling": "attention",
    "loss.rho": 1.0,
    "loss.delta": 1.0,
    "loss.alpha": 1e-4,
    "loss.beta": 0.5,
    "loss.kind": "pseudo_huber",
    "loss.similarity": "mil_max",
    "train.learning_rate": 2e-4,
    "train.epochs": 500,
    "train.batch_size": 100,
    "train.seed": 0,
    "train.precision": "float32",
    "train.eval_every": 1,
    "train.workers": 1,
    "grid.d": list(D_GRID),
    "grid.K": list(K_GRID),
    "grid.alpha_exponents": list(ALPHA_EXPONENTS),
    "ablate.rows": list(ABLATION_ROWS),
    "ablate.K": 8,
    "ablate.seeds": [0],
    "sweep.K": list(K_GRID),
    "synth.pairs": 2000,
    "synth.concepts": 8,
    "synth.per_modality": 3,
    "synth.shared": 1,
    "synth.video_dim": 32,
    "synth.sentence_dim": 16,
    "synth.min_len": 6,
    "synth.max_len": 24,
    "synth.noise": 0.1,
    "synth.seed": 0,
    "gradcheck.triplets": 2,
    "gradcheck.steps": 3,
    "gradcheck.input_dim": 3,
    "gradcheck.d": 4,
    "gradcheck.K": 2,
    "gradcheck.seed": 0,
    "eval.split": "",  # eval: test; query: every video; export-attention: the pair's split
    "query.sentence": "",
    "query.sentence_id": "",
    "query.top": 10,
    "export.pair": "",
    "fetch.url": DEFAULT_TABLE_URL,
    "fetch.member": DEFAULT_TABLE_MEMBER,
}


def coerce(key: str, value: Any) -> Any:
    """Casts `value` to the type of the key's default, or raises ConfigError."""
    if key not in DEFAULTS:
        raise ConfigError(f"Unknown config key '{key}'")
    default = DEFAULTS[key]

    def fail() -> ConfigError:
        return ConfigError(f"Config key '{key}' expects {type(default).__name__}, got {value!r}")

    if isinstance(default, list):
        if isinstance(value, str):
            value = [item.strip() for item in value.split(",") if item.strip()]
        if not isinstance(value, list):
            raise fail()
        kind = type(default[0]) if default else str
        try:
            return [kind(item) for item in value]
        except (TypeError, ValueError):
            raise fail() from None
    if isinstance(value, bool):
        raise fail()
    if isinstance(default, int):
        if isinstance(value, str):
            try:
                value = int(value)
            except ValueError:
                raise fail() from None
        if not isinstance(value, int):
            raise fail()
        return value
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise fail() from None
    if not isinstance(value, str):
        raise fail()
    return value


def parse_assignment(text: str) -> tuple[str, Any]:
    """'key=value' with the value read as JSON when it parses, else as text."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"Expected key=value, got '{text}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


@dataclass
class RunConfig:
    values: dict[str, Any] = field(default_factory=lambda: dict(DEFAULTS))

    def __getitem__(self, key: str) -> Any:
        if key not in self.values:
            raise ConfigError(f"Unknown config key '{key}'")
        return self.values[key]

    def update(self, changes: Mapping[str, Any]) -> "RunConfig":
        for key, value in changes.items():
            self.values[key] = coerce(key, value)
        return self

    @property
    def out_dir(self) -> Path:
        return Path(self["run.out_dir"])

    def encoder(self, input_dim: int) -> EncoderConfig:
        return EncoderConfig(
            input_dim=input_dim,
            d=self["model.d"],
            u=self["model.u"] or None,
            K=self["model.K"],
            dropout_rate=self["model.dropout"],
            max_len=self["model.max_len"],
        )

    def loss(self) -> LossConfig:
        return LossConfig(
            rho=self["loss.rho"],
            delta=self["loss.delta"],
            alpha=self["loss.alpha"],
            beta=self["loss.beta"],
            loss_kind=self["loss.kind"],
            similarity_kind=self["loss.similarity"],
        )

    def grid(self) -> GridSpec:
        return GridSpec(self["grid.d"], self["grid.K"], self["grid.alpha_exponents"])

    def train_config(self, video_dim: int, sentence_dim: int) -> TrainConfig:
        return TrainConfig(
            video=self.encoder(video_dim),
            sentence=self.encoder(sentence_dim),
            loss=self.loss(),
            learning_rate=self["train.learning_rate"],
            epochs=self["train.epochs"],
            batch_size=self["train.batch_size"],
            seed=self["train.seed"],
            grid=self.grid(),
            pooling_kind=self["model.pooling"],
            precision=self["train.precision"],
            eval_every=self["train.eval_every"],
            workers=self["train.workers"],
        )

    def ablation(self) -> AblationSpec:
        return AblationSpec(self["ablate.rows"], self["ablate.K"], self["ablate.seeds"])

    def synthetic(self) -> SyntheticSpec:
        return SyntheticSpec(
            pairs=self["synth.pairs"],
            concepts=self["synth.concepts"],
            per_modality=self["synth.per_modality"],
            shared=self["synth.shared"],
            video_dim=self["synth.video_dim"],
            sentence_dim=self["synth.sentence_dim"],
            min_len=self["synth.min_len"],
            max_len=self["synth.max_len"],
            noise=self["synth.noise"],
            seed=self["synth.seed"],
        )

    def write(self, out_dir: Path | None = None) -> Path:
        out_dir = Path(out_dir or self.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / RESOLVED_CONFIG_FILE
        with path.open("w", encoding="utf-8") as file:
            json.dump(self.values, file, indent=2, ensure_ascii=False)
        logger.info(f"Resolved config written to {path}")
        return path


def read_config_file(path: Path) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object of dotted keys")
    return data


def resolve_config(
    config_path: Path | None = None,
    assignments: Iterable[str] = (),
    flags: Mapping[str, Any] | None = None,
) -> RunConfig:
    cfg = RunConfig()
    if config_path is not None:
        cfg.update(read_config_file(config_path))
    cfg.update(dict(parse_assignment(text) for text in assignments))
    cfg.update({key: value for key, value in (flags or {}).items() if value is not None})
    return cfg
