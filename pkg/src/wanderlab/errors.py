"""Exception types shared across the package."""


class WanderlabError(Exception):
    pass


class DomainError(WanderlabError, ValueError):
    """A point or parameter lies outside the region where an operation is defined."""


class PreconditionError(WanderlabError, ValueError):
    pass


class UnreachableError(WanderlabError):
    """Two grid endpoints lie in different connected components."""


class IllConditionedError(WanderlabError):
    """A query point sits too close to a curve for its winding number to be trusted."""


class StructuralError(WanderlabError):
    """The interpolation setup is invalid (a boundary curve has the wrong winding)."""


class PoleError(WanderlabError, ZeroDivisionError):
    pass
