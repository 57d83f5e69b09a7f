from pydantic import BaseModel, Field
from typing import Optional, Type

from gw_border.border import convergence_table
from gw_border.tools.base import BorderTool, FamilyInput, ToolResult
from gw_border.utils import round_sig


class CoefficientTableInput(FamilyInput):
    """Input schema for Coefficient Table Tool."""
    k: int = Field(..., ge=0, description="Border depth k")
    n_max: int = Field(..., ge=1, description="Largest tree size in the table")


class CoefficientTableTool(BorderTool):
    """Tool tabulating A_n, A_n^(k) and their exact ratio against the limit c_k."""

    name: str = "coefficient_table_tool"
    command: str = "coeffs"
    description: str = (
        "Computes the exact coefficients A_n of the tree function and A_n^(k) of the k-th border "
        "iterate for every valid size n ≤ n_max, their ratio P(∂ ≥ k | size n) as p/q, "
        "and the gap to the limit constant c_k."
    )
    args_schema: Type[BaseModel] = CoefficientTableInput

    def compute(self, k: int, n_max: int, family: Optional[str] = None, psi_file: Optional[str] = None,
                trunc: int = 256) -> ToolResult:
        fam = self.load_family(family, psi_file, max(trunc, n_max))
        table = convergence_table(fam, k, n_max)
        body = {
            "k": k,
            "n_max": n_max,
            "c_k": round_sig(table.c_k),
            "rows": [row.model_dump() for row in table.rows],
        }
        return self.result(fam, ["n", "A_n", "A_n_k", "ratio", "gap"], table.csv_rows(), body)
