from pydantic import BaseModel, Field
from typing import List, Optional, Type

from gw_border.border import generalized_scheme, limit_constant, limit_constant_generalized
from gw_border.family import solve_g
from gw_border.tools.base import BorderTool, FamilyInput, ToolResult
from gw_border.utils import format_exact, format_float, round_sig


class LimitConstantInput(FamilyInput):
    """Input schema for Limit Constant Tool."""
    k: int = Field(..., ge=0, description="Border depth k")


class LimitConstantTool(BorderTool):
    """Tool computing the limit c_k = lim P(∂(T_n) ≥ k) from the scalar recurrence."""

    name: str = "limit_constant_tool"
    command: str = "limit"
    description: str = (
        "Computes c_k = ρ^k ∏ ψ'(g_j(ρ)) along the trajectory started at the apex, "
        "side by side with the closed form for the cayley, plane and binary families."
    )
    args_schema: Type[BaseModel] = LimitConstantInput

    def compute(self, k: int, family: Optional[str] = None, psi_file: Optional[str] = None,
                trunc: int = 256) -> ToolResult:
        fam = self.load_family(family, psi_file, trunc)
        result = limit_constant(fam, k)
        header = ["k", "c_k", "closed_form", "rho", "tau", "underflow"]
        row = [str(k), format_float(result.c_k), format_float(result.closed_form), format_float(result.rho),
               format_float(result.tau), "true" if result.underflow else "false"]
        body = {
            "k": k,
            "c_k": round_sig(result.c_k),
            "closed_form": round_sig(result.closed_form),
            "rho": round_sig(result.rho),
            "tau": round_sig(result.tau),
            "underflow": result.underflow,
            "trajectory": [round_sig(x) for x in result.trajectory],
        }
        return self.result(fam, header, [row], body)


class GeneralizedLimitInput(FamilyInput):
    """Input schema for Generalized Limit Tool."""
    index_set: List[int] = Field(..., min_length=1, description="Indices I kept in ψ_I; must contain 0")
    m: int = Field(..., ge=0, description="Number of iterations")
    n_max: int = Field(20, ge=1, description="Largest tree size in the coefficient table")


class GeneralizedLimitTool(BorderTool):
    """Tool for the generalised scheme f_j = z(ψ - ψ_I)(f_{j-1}) and its limit constant."""

    name: str = "generalized_limit_tool"
    command: str = "generalized"
    description: str = (
        "Iterates f_j = z(ψ - ψ_I)(f_{j-1}) from the tree function g for an index set I containing 0, "
        "tabulates [z^n] f_m / A_n exactly and reports the limit ρ^m ∏ (ψ' - ψ_I')(f_j(ρ))."
    )
    args_schema: Type[BaseModel] = GeneralizedLimitInput

    def compute(self, index_set: List[int], m: int, n_max: int = 20, family: Optional[str] = None,
                psi_file: Optional[str] = None, trunc: int = 256) -> ToolResult:
        fam = self.load_family(family, psi_file, max(trunc, n_max))
        limit = limit_constant_generalized(fam, index_set, m)
        g = solve_g(fam, n_max)
        f_m = generalized_scheme(fam, index_set, m, n_max)
        rows, records = [], []
        for n in range(1, n_max + 1):
            a_n = g.coeff(n)
            if a_n == 0:
                continue
            ratio = f_m.coeff(n) / a_n
            gap = round_sig(abs(float(ratio) - limit.c_k))
            rows.append([str(n), format_exact(a_n), format_exact(f_m.coeff(n)), format_exact(ratio), format_float(gap)])
            records.append({"n": n, "a_n": format_exact(a_n), "f_n": format_exact(f_m.coeff(n)),
                            "ratio": format_exact(ratio), "ratio_float": round_sig(float(ratio)), "gap": gap})
        body = {
            "index_set": sorted(set(index_set)),
            "m": m,
            "c": round_sig(limit.c_k),
            "underflow": limit.underflow,
            "rows": records,
        }
        return self.result(fam, ["n", "A_n", "F_n", "ratio", "gap"], rows, body)
