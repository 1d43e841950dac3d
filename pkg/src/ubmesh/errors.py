"""Exception hierarchy shared by every module."""


class UBMeshError(Exception):
    """Base class; ``kind`` is the stable tag emitted in CLI error JSON."""

    kind = "error"

    def __init__(self, message: str = "", *, violations: list[str] | None = None, context: dict | None = None):
        super().__init__(message)
        self.violations = list(violations or [])
        self.context = dict(context or {})

    def to_dict(self):
        out = {"error": self.kind, "message": str(self)}
        if self.violations:
            out["violations"] = self.violations
        if self.context:
            out["context"] = self.context
        return out


class InvalidShapeError(UBMeshError):
    kind = "invalid-shape"


class UnsupportedArchError(UBMeshError):
    kind = "unsupported-arch"


class NoRouteError(UBMeshError):
    kind = "no-route"


class HeaderError(UBMeshError):
    kind = "sr-header"


class MalformedHeaderError(HeaderError):
    kind = "malformed-header"


class InfeasibleVLError(UBMeshError):
    kind = "vl-infeasible"


class NotMeshEmbeddableError(UBMeshError):
    kind = "not-mesh-embeddable"


class GroupTooSmallError(UBMeshError):
    kind = "group-too-small"


class InvalidConfigError(UBMeshError):
    kind = "invalid-config"


class InfeasibleParallelismError(UBMeshError):
    kind = "infeasible-parallelism"


class UnrecoverableRackError(UBMeshError):
    kind = "unrecoverable-rack"


class ScaleMismatchError(UBMeshError):
    kind = "scale-mismatch"
