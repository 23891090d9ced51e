"""Common result container for the group-sparse solvers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..regression import GroupedRegressionProblem

__all__ = ["SolverResult"]


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass
class SolverResult:
    """Estimated weights plus diagnostics.

    ``active`` flags large groups; ``info`` carries method-specific
    diagnostics (noise variances, evidence trace, inclusion probabilities,
    acceptance rates, ...), serialized as top-level JSON fields.
    """

    method: str
    weights: np.ndarray
    group_norms: np.ndarray
    active: np.ndarray
    iterations: int
    converged: bool
    objective_trace: list = field(default_factory=list)
    primal_residuals: list = field(default_factory=list)
    dual_residuals: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))

    def experiment_active(self, problem: GroupedRegressionProblem) -> np.ndarray:
        """``L x M`` flags: small group ``w_k^[l]`` is nonzero.

        Read straight off the weights, so it shows whether the group-level
        zero pattern really carried over to every experiment.
        """
        flags = np.zeros((problem.L, problem.M), dtype=bool)
        for k, sl in enumerate(problem.group_slices()):
            blocks = self.weights[sl].reshape(problem.L, problem.rho[k])
            flags[:, k] = np.any(blocks != 0.0, axis=1)
        return flags

    def to_dict(self) -> dict:
        d = {
            "schema": "dynet/v1",
            "type": "solver_result",
            "method": self.method,
            "weights": self.weights,
            "group_norms": self.group_norms,
            "active": self.active.astype(bool),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "objective_trace": self.objective_trace,
            "residual_traces": {"primal": self.primal_residuals, "dual": self.dual_residuals},
        }
        d.update(self.info)
        return _plain(d)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverResult":
        if d.get("type") != "solver_result":
            raise ValueError("expected a solver_result document")
        core = {"schema", "type", "method", "weights", "group_norms", "active", "iterations",
                "converged", "objective_trace", "residual_traces"}
        res = d.get("residual_traces", {})
        return cls(d["method"], np.asarray(d["weights"], dtype=float),
                   np.asarray(d["group_norms"], dtype=float),
                   np.asarray(d["active"], dtype=bool), int(d["iterations"]),
                   bool(d["converged"]), list(d.get("objective_trace", [])),
                   list(res.get("primal", [])), list(res.get("dual", [])),
                   {k: v for k, v in d.items() if k not in core})
