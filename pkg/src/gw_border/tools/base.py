from crewai.tools import BaseTool
from pydantic import BaseModel, ConfigDict, Field
from typing import Any, Dict, List, Literal, Optional
import json

from gw_border.errors import GWBorderError
from gw_border.family import OffspringFamily, resolve_family
from gw_border.utils import envelope, render_csv, render_json


class FamilyInput(BaseModel):
    """Fields shared by every gw_border tool."""
    family: Optional[str] = Field(None, description="Built-in family: cayley, plane, binary, motzkin or unary")
    psi_file: Optional[str] = Field(None, description="Path to a JSON custom family, e.g. {\"coeffs\": [\"1\", \"0\", \"1\"]}")
    trunc: int = Field(256, ge=1, description="Truncation order for exact series work")
    output_format: Literal["csv", "json"] = Field("json", description="Rendering of the result")


class ToolResult(BaseModel):
    """A computed table plus its JSON body, ready to render."""
    model_config = ConfigDict(frozen=True)

    command: str
    family: str
    header: List[str]
    rows: List[List[str]]
    body: Dict[str, Any]
    exit_code: int = 0
    message: Optional[str] = None


class BorderTool(BaseTool):
    """Shared rendering and error handling for the gw_border tools."""

    command: str = ""

    def load_family(self, family: Optional[str], psi_file: Optional[str], trunc: int) -> OffspringFamily:
        return resolve_family(family, psi_file, trunc)

    def compute(self, **kwargs) -> ToolResult:
        raise NotImplementedError

    def result(self, fam: OffspringFamily, header: List[str], rows: List[List[str]], body: Dict[str, Any],
               exit_code: int = 0, message: Optional[str] = None) -> ToolResult:
        return ToolResult(command=self.command, family=fam.name, header=header, rows=rows, body=body,
                          exit_code=exit_code, message=message)

    def render(self, result: ToolResult, output_format: str = "csv") -> str:
        if output_format == "json":
            return render_json(envelope(result.command, result.family, result.body))
        if output_format == "csv":
            return render_csv(result.header, result.rows)
        raise ValueError(f"Unknown output format {output_format!r}")

    def _run(self, **kwargs) -> str:
        """
        Compute and render; failures come back as a JSON error object instead of raising.

        Returns:
            Rendered table, or JSON with success=false and the exit code
        """
        output_format = kwargs.pop("output_format", "json")
        try:
            return self.render(self.compute(**kwargs), output_format)
        except GWBorderError as e:
            return json.dumps({"success": False, "error": str(e), "exit_code": e.exit_code}, indent=2)
        except Exception as e:
            return json.dumps({"success": False, "error": f"Unexpected error: {str(e)}", "exit_code": 1}, indent=2)
