"""Joint Laplace transform of a Wishart process and its time integral."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DomainError,
    InputError,
    InvalidModel,
    WishartError,
)
from .model import LaplaceQuery, WishartModel, load_model  # noqa: E402
from .transform_cm import TransformResult, cm_transform, cm_transform_general  # noqa: E402
from .transform_ode import (  # noqa: E402
    MethodConfig,
    RiccatiProblem,
    laplace_transform,
    linearization_transform,
    rk4_transform,
    solve_are,
    variation_of_constants_transform,
)

__all__ = [
    "__version__",
    "WishartError",
    "InputError",
    "DomainError",
    "InvalidModel",
    "WishartModel",
    "LaplaceQuery",
    "load_model",
    "TransformResult",
    "cm_transform",
    "cm_transform_general",
    "MethodConfig",
    "RiccatiProblem",
    "laplace_transform",
    "linearization_transform",
    "rk4_transform",
    "solve_are",
    "variation_of_constants_transform",
]
