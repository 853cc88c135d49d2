"""Exception types shared across the package."""


class BimsynthError(Exception):
    """Base class for all package errors."""


class DegenerateCloud(BimsynthError):
    """Point cloud is too isotropic for a meaningful principal axis."""

    def __init__(self, ratio: float, message: str | None = None):
        self.ratio = ratio
        super().__init__(message or f"near-isotropic cloud, eigenvalue ratio {ratio:.4f} < 1.2")


class InvalidDepth(BimsynthError):
    """A depth value required for back-projection is missing or non-positive."""

    def __init__(self, message: str, pixel: tuple[int, int] | None = None):
        self.pixel = pixel
        super().__init__(message)


class EmptyMask(BimsynthError):
    """Object mask has no set pixels."""


class EmptyDemo(BimsynthError):
    """Demonstration has fewer than two samples."""


class Unreachable(BimsynthError):
    """Inverse kinematics failed to converge from every seed."""

    def __init__(self, position_residual: float, rotation_residual: float):
        self.position_residual = position_residual
        self.rotation_residual = rotation_residual
        super().__init__(
            "no IK solution: best residual "
            f"{position_residual:.3e} m / {rotation_residual:.3e} rad"
        )


class LimitsViolated(BimsynthError):
    """A joint configuration lies outside the arm's limits."""


class NotPositiveSemiDefinite(BimsynthError):
    """Assembled coordination covariance could not be factorized."""


class OutOfFrustum(BimsynthError):
    """One or more scene objects project outside the camera image."""

    def __init__(self, object_ids: list[str]):
        self.object_ids = list(object_ids)
        super().__init__(f"objects outside camera frustum: {', '.join(self.object_ids)}")


class FormatError(BimsynthError):
    """A file does not conform to its documented format."""

    def __init__(self, message: str, *, path: str | None = None, offset: int | None = None):
        self.path = path
        self.offset = offset
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if offset is not None:
            detail = f"{detail} (byte offset {offset})"
        super().__init__(detail)


class SinkFailure(BimsynthError):
    """Writing a dataset artifact failed; the run directory was cleaned up."""
