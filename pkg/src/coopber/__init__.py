"""BER analysis of relayed and network-coded links over Rayleigh fading.

Monte Carlo simulators, impulse (sampling-property) closed forms and an
adaptive quadrature oracle to check one against the other.
"""

from .kernels import BACKEND
from .numerics import DomainError, RngStream, db_to_linear, linear_to_db, q_function, q_inverse

__version__ = "0.1.0"

__all__ = ["BACKEND", "DomainError", "RngStream", "db_to_linear", "linear_to_db",
           "q_function", "q_inverse", "__version__"]
