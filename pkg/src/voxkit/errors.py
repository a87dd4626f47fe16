"""Exception types shared across the toolkit."""


class VoxkitError(Exception):
    """Base class for all voxkit errors."""


class CubeFormatError(VoxkitError):
    """Malformed cube header, or data file inconsistent with its header."""


class OutsideDomainError(VoxkitError):
    """A sample point lies outside the field's physical bounding box."""


class ExprSyntaxError(VoxkitError):
    """Expression text does not parse. Carries a 1-based character offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class EvalError(VoxkitError):
    """Expression cannot be evaluated against the supplied fields."""


class AtlasError(VoxkitError):
    """Atlas image and metadata are inconsistent, or a channel is unassigned."""


class MeshFormatError(VoxkitError):
    """Mesh file cannot be parsed or uses an unsupported format."""
