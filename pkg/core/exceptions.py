class CutFEMError(Exception):
    """Base class for all errors raised by the solver library."""


class MeshError(CutFEMError, ValueError):
    pass


class GeometryError(CutFEMError, ValueError):
    pass


class SpaceError(CutFEMError, ValueError):
    pass


class QuadratureConfigError(CutFEMError, ValueError):
    pass


class ConfigError(CutFEMError, ValueError):
    pass


class SlabSolveError(CutFEMError, RuntimeError):
    """Raised when a slab system cannot be solved to the requested residual."""

    def __init__(self, message: str, slab: int, level=None):
        self.slab = slab
        self.level = level
        where = f"slab {slab}" if level is None else f"level {level}, slab {slab}"
        super().__init__(f"{message} ({where})")
