from .gradcheck import fd_check, relative_error
from .ops import ConvSpec, ShapeError, as_tensor
from .rng import make_rng
from .tape import GradTape, backward

__all__ = [
    "ConvSpec",
    "GradTape",
    "ShapeError",
    "as_tensor",
    "backward",
    "fd_check",
    "make_rng",
    "relative_error",
]
