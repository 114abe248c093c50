from src.numcore.tensor import (  # noqa: F401
    ComputationTape,
    NumericalError,
    ShapeError,
    TapeError,
    Tensor,
    active_tape,
)
from src.numcore import ops  # noqa: F401
from src.numcore.gradcheck import finite_difference_check, finite_difference_report  # noqa: F401
