"""Group-sparse solvers sharing :class:`SolverResult`."""

from .result import SolverResult
from .l1 import L1Config, solve_group_lasso, solve_irl1, solve_l1, prox_group
from .sbl import SblConfig, solve_sbl
from .mcmc import McmcConfig, solve_mcmc

__all__ = ["SolverResult", "L1Config", "solve_group_lasso", "solve_irl1", "solve_l1", "prox_group",
           "SblConfig", "solve_sbl", "McmcConfig", "solve_mcmc"]
