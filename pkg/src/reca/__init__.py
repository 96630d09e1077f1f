"""ReCA parametric activation with a small numpy training engine and verification harness."""
from reca.activations import (
    ALPHA_MIN, DomainError, NonFiniteInputError, RecaParams, baseline_forward, baseline_input_grad,
    baseline_param_grads, prelu_param_grad, reca_forward, reca_input_grad, reca_param_grads,
)

__version__ = "0.1.0"

__all__ = [
    "ALPHA_MIN", "DomainError", "NonFiniteInputError", "RecaParams", "baseline_forward",
    "baseline_input_grad", "baseline_param_grads", "prelu_param_grad", "reca_forward",
    "reca_input_grad", "reca_param_grads",
]
