from pydantic import BaseModel, Field
from typing import Optional, Type

from gw_border.border import border_distribution
from gw_border.tools.base import BorderTool, FamilyInput, ToolResult
from gw_border.utils import format_exact, format_float, round_sig


class BorderDistributionInput(FamilyInput):
    """Input schema for Border Distribution Tool."""
    n: int = Field(..., ge=1, description="Tree size (must be ≡ 1 mod Q)")


class BorderDistributionTool(BorderTool):
    """Tool giving the exact law of the root's distance to the border for trees of size n."""

    name: str = "border_distribution_tool"
    command: str = "distribution"
    description: str = (
        "Computes P(∂ = k | size n) = (A_n^(k) - A_n^(k+1)) / A_n exactly for every k, "
        "the full law of the distance from the root to the nearest leaf."
    )
    args_schema: Type[BaseModel] = BorderDistributionInput

    def compute(self, n: int, family: Optional[str] = None, psi_file: Optional[str] = None,
                trunc: int = 256) -> ToolResult:
        fam = self.load_family(family, psi_file, max(trunc, n))
        law = border_distribution(fam, n)
        # trailing zero-probability depths carry no information
        last = max((k for k, p in enumerate(law) if p != 0), default=0)
        rows = [[str(k), format_exact(p), format_float(float(p))] for k, p in enumerate(law[: last + 1])]
        body = {
            "n": n,
            "law": [{"k": k, "probability": format_exact(p), "probability_float": round_sig(float(p))}
                    for k, p in enumerate(law[: last + 1])],
        }
        return self.result(fam, ["k", "probability", "probability_float"], rows, body)
