"""Partial Bell polynomials as A-hypergeometric polynomials.

Evaluation by exact enumeration, a log-space recurrence, the holonomic
gradient method and its difference variant, plus large-size asymptotics,
maximum-likelihood estimation and sampling for the distribution
``q(s; x) = x^s / (s! Z_{n,k}(x))`` on partitions of n into k parts.
"""

from .asymptotics import *  # noqa: F401,F403
from .errors import (  # noqa: F401
    BellHGMError,
    CapacityError,
    ConvergenceError,
    DomainError,
    NumericError,
    SingularityError,
    StepSizeError,
)
from .inference import *  # noqa: F401,F403
from .partitions import *  # noqa: F401,F403
from .pfaffian import *  # noqa: F401,F403
from .recurrence import *  # noqa: F401,F403
from .sampling import *  # noqa: F401,F403
from .scaled import *  # noqa: F401,F403

__version__ = "0.1.0"
