"""Numerical laboratory for quasi-homogeneous Cowen-Douglas operators."""

__version__ = "0.1.0"

from .bergman import (KernelParam, SectionVector, TruncatedOperator, build_atom, build_connector,  # noqa: E402
                      kernel_value, pochhammer_coeff, section, shift_weight)
from .errors import (CdlabError, ConfigError, ConsistencyError, DomainError, NumericalError,  # noqa: E402
                     UnboundedEntry, ValencyTooSmall)
from .model import (BoundednessVerdict, CoefficientTable, ModelSpec, assemble, check_intertwining,  # noqa: E402
                    classify_boundedness, is_homogeneous, m_to_mu, mu_to_m)

__all__ = [
    "KernelParam", "SectionVector", "TruncatedOperator", "build_atom", "build_connector", "kernel_value",
    "pochhammer_coeff", "section", "shift_weight", "CdlabError", "ConfigError", "ConsistencyError",
    "DomainError", "NumericalError", "UnboundedEntry", "ValencyTooSmall", "BoundednessVerdict",
    "CoefficientTable", "ModelSpec", "assemble", "check_intertwining", "classify_boundedness",
    "is_homogeneous", "m_to_mu", "mu_to_m",
]
