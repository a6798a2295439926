"""Numerical laboratory for internal hyperbolic dynamics of wandering domains.

Submodules: :mod:`hypgeo` (hyperbolic and quasi-hyperbolic geometry),
:mod:`blaschke` (non-autonomous Blaschke compositions), :mod:`wander`
(translated-disc chain model and orbit-pair classification), :mod:`surgery`
(Joukowski transplant and dilatation certification) and :mod:`cli`.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DomainError,
    IllConditionedError,
    PoleError,
    PreconditionError,
    StructuralError,
    UnreachableError,
    WanderlabError,
)

__all__ = [
    "__version__",
    "WanderlabError",
    "DomainError",
    "PreconditionError",
    "UnreachableError",
    "IllConditionedError",
    "StructuralError",
    "PoleError",
]
