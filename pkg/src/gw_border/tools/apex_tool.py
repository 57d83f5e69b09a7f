from pydantic import BaseModel
from typing import Optional, Type

from gw_border.family import apex
from gw_border.tools.base import BorderTool, FamilyInput, ToolResult
from gw_border.utils import format_float, round_sig


class ApexInput(FamilyInput):
    """Input schema for Apex Tool."""
    pass


class ApexTool(BorderTool):
    """Tool reporting the apex τ of a family and the constants derived from it."""

    name: str = "apex_tool"
    command: str = "apex"
    description: str = (
        "Solves tψ'(t)/ψ(t) = 1 for the apex τ of an offspring family and reports "
        "ρ = τ/ψ(τ), ψ(τ), σ(τ), the support gcd Q and membership of K*. "
        "Families without an apex (degree 1) are rejected with exit code 2."
    )
    args_schema: Type[BaseModel] = ApexInput

    def compute(self, family: Optional[str] = None, psi_file: Optional[str] = None, trunc: int = 256) -> ToolResult:
        fam = self.load_family(family, psi_file, trunc)
        k = apex(fam)
        header = ["tau", "rho", "psi_tau", "sigma_tau", "Q", "in_k_star", "tau_exact"]
        row = [format_float(k.tau), format_float(k.rho), format_float(k.psi_tau), format_float(k.sigma_tau),
               str(k.q), "true", k.tau_exact or ""]
        body = {
            "psi": fam.describe(),
            "tau": round_sig(k.tau),
            "rho": round_sig(k.rho),
            "psi_tau": round_sig(k.psi_tau),
            "sigma_tau": round_sig(k.sigma_tau),
            "Q": k.q,
            "in_k_star": True,
            "tau_exact": k.tau_exact,
        }
        return self.result(fam, header, [row], body)
