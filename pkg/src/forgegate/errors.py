"""Exception types shared across the toolkit."""


class ForgegateError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ForgegateError):
    """Tensor shapes incompatible with the requested operation."""


class ConfigurationError(ForgegateError):
    """An architecture or pipeline configuration is invalid."""


class ContractError(ForgegateError):
    """A caller violated an operation's precondition."""


class DegenerateBatchError(ContractError):
    """Batch statistics requested over fewer than two elements."""


class DivergenceError(ForgegateError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, g_loss: float, d_loss: float):
        super().__init__(f"{message} (epoch={epoch}, g_loss={g_loss}, d_loss={d_loss})")
        self.epoch = epoch
        self.g_loss = g_loss
        self.d_loss = d_loss


class SnapshotFormatError(ForgegateError):
    """A named-tensor snapshot file is malformed."""


class CheckpointFormatError(SnapshotFormatError):
    """A training checkpoint file is malformed or inconsistent with its config."""


class WeightLoadError(ForgegateError):
    """A weight bundle does not match the model it is loaded into."""


class ManifestError(ForgegateError):
    """A dataset source manifest is malformed."""


class DecodeError(ForgegateError):
    """An image file could not be decoded."""


class SplitError(ForgegateError):
    """A dataset split request cannot be satisfied."""


class BoundsError(ForgegateError):
    """A rectangle or window falls outside its image."""


class GeometryError(ForgegateError):
    """A scaled feature escapes its detection window."""


class UsageError(ForgegateError):
    """Bad command line usage (maps to exit code 2)."""
