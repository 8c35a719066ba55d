"""Sharp constants for the growth of plurisubharmonic functions of lower order rho."""

__version__ = "0.1.0"

from .constants import j_sup, k2_closed, k_n, p_n  # noqa: E402
from .deriv_core import ProblemParams, build_stack, phi_deriv, psi  # noqa: E402
from .sign_analysis import analyse  # noqa: E402

__all__ = ["ProblemParams", "build_stack", "phi_deriv", "psi", "analyse", "p_n", "j_sup", "k_n",
           "k2_closed", "__version__"]
