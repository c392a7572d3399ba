"""Exception types shared across the package."""


class DomainError(ValueError):
    """A coordinate fell outside the unit-interval domain."""


class ShapeMismatchError(ValueError):
    """Tensor-ring operands with incompatible mode sizes or weights."""


class DegenerateConditionalError(RuntimeError):
    """A conditional CDF had zero total mass during sampling."""

    def __init__(self, dim: int):
        self.dim = dim
        super().__init__(f"degenerate conditional density at dimension {dim}")


class CheckpointError(ValueError):
    """Malformed, truncated, or version-incompatible checkpoint file."""


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value)."""
