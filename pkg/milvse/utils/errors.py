"""Exception types raised across milvse."""


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class ContractError(ValueError):
    """An operation was called outside its precondition."""


class DegenerateRowError(ValueError):
    """A softmax row has no unmasked entry, or an embedding row has ~zero norm."""


class DegenerateVectorError(ValueError):
    """A vector norm is at or below the cosine guard."""


class InvalidAttentionError(ValueError):
    """An attention map row is not a probability distribution."""


class FeatureFileError(ValueError):
    """A feature file could not be read or written."""


class BadMagicError(FeatureFileError):
    pass


class TruncatedFileError(FeatureFileError):
    pass


class DuplicateIdError(FeatureFileError):
    pass


class EmptySentenceError(ValueError):
    """A sentence produced no in-vocabulary tokens."""


class DatasetError(ValueError):
    """A manifest, split or generated dataset is inconsistent."""


class CheckpointError(ValueError):
    """A checkpoint file is malformed or incompatible."""


class ConfigError(ValueError):
    """A configuration key or value is invalid."""


class TrainingDivergedError(RuntimeError):
    """The training objective became non-finite."""
