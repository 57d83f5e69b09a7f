from pydantic import BaseModel, Field
from typing import Any, Dict, Optional, Type

from gw_border.errors import InsufficientAcceptanceError
from gw_border.sampler import EstimateReport, GWConfig, conditioned_estimate, mean_protected
from gw_border.tools.base import BorderTool, FamilyInput, ToolResult
from gw_border.utils import format_float


class SimulationInput(FamilyInput):
    """Input schema for the Monte Carlo tools."""
    n: int = Field(..., ge=1, description="Target tree size (must be ≡ 1 mod Q)")
    k: int = Field(..., ge=0, description="Border depth k")
    samples: int = Field(10000, ge=1, description="Number of accepted trees to collect")
    seed: int = Field(0, ge=0, description="Seed of the Philox streams")
    threads: int = Field(1, ge=1, description="Worker processes")
    t: Optional[float] = Field(None, gt=0, description="Tilt parameter (default: the apex τ)")
    max_attempts: Optional[int] = Field(None, ge=1, description="Attempt budget (default: derived from P(#T = n))")
    node_cap: Optional[int] = Field(None, ge=1, description="Node cap per attempt (default 10·n); required when t is beyond the apex")


def _config(fam, n, k, samples, seed, threads, t, max_attempts, node_cap) -> GWConfig:
    return GWConfig(family=fam, target_n=n, k=k, samples=samples, seed=seed, threads=threads, t=t,
                    max_attempts=max_attempts, node_cap=node_cap)


def _status(report: EstimateReport) -> Dict[str, Any]:
    if not report.insufficient:
        return {"exit_code": 0, "message": None}
    return {
        "exit_code": InsufficientAcceptanceError.exit_code,
        "message": f"insufficient acceptance: {report.accepted} of {report.samples} trees within "
                   f"{report.attempts} attempts",
    }


class ConditionedSimulationTool(BorderTool):
    """Tool estimating P(∂(T_n) ≥ k) by simulating T_t and rejecting on the size."""

    name: str = "conditioned_simulation_tool"
    command: str = "simulate"
    description: str = (
        "Runs the Galton-Watson process at tilt t (default the apex), keeps trees of exactly n nodes, "
        "and reports the estimate of P(∂ ≥ k | size n) with a 95% half-width next to the exact value."
    )
    args_schema: Type[BaseModel] = SimulationInput

    def compute(self, n: int, k: int, samples: int = 10000, seed: int = 0, threads: int = 1,
                t: Optional[float] = None, max_attempts: Optional[int] = None, node_cap: Optional[int] = None,
                family: Optional[str] = None, psi_file: Optional[str] = None, trunc: int = 256) -> ToolResult:
        fam = self.load_family(family, psi_file, trunc)
        report = conditioned_estimate(_config(fam, n, k, samples, seed, threads, t, max_attempts, node_cap))
        header = ["n", "k", "samples", "accepted", "attempts", "p_hat", "ci95", "exact", "exact_float",
                  "limit_constant", "insufficient"]
        row = [str(n), str(k), str(samples), str(report.accepted), str(report.attempts), format_float(report.p_hat),
               format_float(report.ci_half_width), report.exact or "", format_float(report.exact_float),
               format_float(report.limit_constant), "true" if report.insufficient else "false"]
        body = {
            "p_hat": report.p_hat,
            "ci95": report.ci_half_width,
            "accepted": report.accepted,
            "attempts": report.attempts,
            "exact": report.exact,
            "exact_float": report.exact_float,
            "limit_constant": report.limit_constant,
            "target": {"n": n, "k": k},
            "t": report.t,
            "seed": seed,
            "expected_attempts": report.expected_attempts,
            "mean_protected": report.mean_protected,
            "border_histogram": {str(d): c for d, c in report.border_histogram.items()},
            "insufficient": report.insufficient,
        }
        return self.result(fam, header, [row], body, **_status(report))


class MeanProtectedTool(BorderTool):
    """Tool estimating the mean proportion of nodes at distance ≥ k from the border."""

    name: str = "mean_protected_tool"
    command: str = "mean-protected"
    description: str = (
        "Samples size-n trees by rejection and averages #{v : ∂_v ≥ k} / n, the proportion of "
        "k-protected nodes, with a 95% half-width; the limit constant c_k is shown for comparison."
    )
    args_schema: Type[BaseModel] = SimulationInput

    def compute(self, n: int, k: int, samples: int = 10000, seed: int = 0, threads: int = 1,
                t: Optional[float] = None, max_attempts: Optional[int] = None, node_cap: Optional[int] = None,
                family: Optional[str] = None, psi_file: Optional[str] = None, trunc: int = 256) -> ToolResult:
        fam = self.load_family(family, psi_file, trunc)
        report = mean_protected(_config(fam, n, k, samples, seed, threads, t, max_attempts, node_cap))
        header = ["n", "k", "samples", "accepted", "attempts", "mean_protected", "ci95", "limit_constant",
                  "insufficient"]
        row = [str(n), str(k), str(samples), str(report.accepted), str(report.attempts),
               format_float(report.mean_protected), format_float(report.mean_protected_ci),
               format_float(report.limit_constant), "true" if report.insufficient else "false"]
        body = {
            "mean_protected": report.mean_protected,
            "ci95": report.mean_protected_ci,
            "accepted": report.accepted,
            "attempts": report.attempts,
            "limit_constant": report.limit_constant,
            "target": {"n": n, "k": k},
            "t": report.t,
            "seed": seed,
            "insufficient": report.insufficient,
        }
        return self.result(fam, header, [row], body, **_status(report))
