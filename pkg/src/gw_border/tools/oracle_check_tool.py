from pydantic import BaseModel, Field
from typing import Optional, Type

from gw_border.errors import CrossCheckMismatchError
from gw_border.oracle import cross_check, dump_trees
from gw_border.tools.base import BorderTool, FamilyInput, ToolResult
from gw_border.utils import get_family_file_path


class OracleCheckInput(FamilyInput):
    """Input schema for Oracle Check Tool."""
    n_max: int = Field(..., ge=1, le=14, description="Largest tree size to enumerate")
    k: int = Field(..., ge=0, description="Largest border depth to compare")
    dump: bool = Field(False, description="Also write the size-n_max trees as JSON lines")
    output_dir: Optional[str] = Field(None, description="Base directory for the dump (default: outputs)")


class OracleCheckTool(BorderTool):
    """Tool comparing brute-force enumeration against the exact series coefficients."""

    name: str = "oracle_check_tool"
    command: str = "oracle"
    description: str = (
        "Enumerates every plane tree with at most n_max nodes, sums the ψ-weights of all trees and of "
        "those with ∂ ≥ k', and compares them with A_n and A_n^(k') for every k' ≤ k. "
        "Any difference is reported with exit code 3."
    )
    args_schema: Type[BaseModel] = OracleCheckInput

    def compute(self, n_max: int, k: int, dump: bool = False, output_dir: Optional[str] = None,
                family: Optional[str] = None, psi_file: Optional[str] = None, trunc: int = 256) -> ToolResult:
        fam = self.load_family(family, psi_file, max(trunc, n_max))
        report = cross_check(fam, n_max, k)
        rows = [[str(c.n), str(c.k), c.oracle_total, c.oracle_border, c.series_total, c.series_border,
                 "true" if c.match else "false"] for c in report.checks]
        dump_path = None
        if dump:
            dump_path = get_family_file_path(fam.name, f"trees_n{n_max}.jsonl", output_dir)
            with open(dump_path, "w", encoding="utf-8", newline="") as handle:
                dump_trees(fam, n_max, handle)
        mismatches = report.mismatches
        if mismatches:
            message = f"MISMATCH: {len(mismatches)} of {len(report.checks)} coefficients differ"
            exit_code = CrossCheckMismatchError.exit_code
        else:
            message = "OK: all coefficients match"
            exit_code = 0
        body = {
            "n_max": n_max,
            "k_max": k,
            "status": message,
            "checks": len(report.checks),
            "mismatches": [c.model_dump() for c in mismatches],
            "dump": dump_path,
        }
        header = ["n", "k", "oracle_total", "oracle_border", "series_total", "series_border", "match"]
        return self.result(fam, header, rows, body, exit_code=exit_code, message=message)
