# src/mcp_server.py - MCP Server exposing the DP-IADMM experiment tools

import asyncio
import json
import math
import sys
from pathlib import Path
from typing import Any, Dict, List

import mcp.types as types
from mcp.server import Server
from mcp.server.models import InitializationOptions
from mcp.server.lowlevel import NotificationOptions
import mcp.server.stdio

from config import config
from errors import UsageError
from harness import (
    AUDIT_SAMPLES,
    aggregate_runs,
    audit_dp,
    audit_failures,
    check_bounds,
    parse_config,
    parse_config_text,
    run_experiment,
)


def _float_list(values, name: str) -> List[float]:
    """Accept numbers or strings such as "inf" from JSON arguments."""
    if not isinstance(values, list) or not values:
        raise UsageError(f"{name} must be a non-empty list")
    try:
        return [float(v) for v in values]
    except (TypeError, ValueError) as e:
        raise UsageError(f"{name} must hold numbers: {e}") from e


def _text(payload: Any) -> list[types.TextContent]:
    return [types.TextContent(type="text", text=json.dumps(payload, indent=2, default=str))]


class DPIADMMMCPServer:
    """MCP Server for private federated ADMM experiments."""

    def __init__(self):
        self.server = Server(config.server_name)
        self._setup_handlers()

    def _setup_handlers(self):
        """Register list_tools and call_tool with the MCP server."""

        @self.server.list_tools()
        async def handle_list_tools() -> list[types.Tool]:
            return self._get_tool_definitions()

        @self.server.call_tool()
        async def handle_call_tool(name: str, arguments: dict) -> list[types.TextContent]:
            print(f"🛠️ Executing tool: {name}", file=sys.stderr)
            return await self.call_tool_direct(name, arguments or {})

    async def _handle_run_experiment(self, arguments: dict) -> list[types.TextContent]:
        """Run every seed of an experiment config and report the written files."""
        if "config_path" not in arguments:
            raise UsageError("config_path is required")
        result = await asyncio.to_thread(
            run_experiment,
            arguments["config_path"],
            output_dir=arguments.get("output_dir"),
            threads=arguments.get("threads"),
        )
        return _text({
            "output_dir": str(result.output_dir),
            "run_files": [str(p) for p in result.run_files],
            "aggregate_file": str(result.aggregate_file),
            "summary_file": str(result.summary_file),
            "final_test_error": {str(r.seed): r.final_test_error for r in result.runs},
            "best_test_error": {str(r.seed): r.best_test_error for r in result.runs},
        })

    async def _handle_aggregate_runs(self, arguments: dict) -> list[types.TextContent]:
        if "directory" not in arguments:
            raise UsageError("directory is required")
        aggregate_file, summary_file = await asyncio.to_thread(aggregate_runs, arguments["directory"])
        return _text({"aggregate_file": str(aggregate_file), "summary_file": str(summary_file)})

    async def _handle_check_bounds(self, arguments: dict) -> list[types.TextContent]:
        """Run the expected-gap checks and return one row per (regime, eps_bar)."""
        results = await asyncio.to_thread(
            check_bounds,
            regimes=arguments.get("regimes", ["smooth", "nonsmooth", "strong"]),
            eps_values=_float_list(arguments.get("eps_values", [1.0, math.inf]), "eps_values"),
            runs=int(arguments.get("runs", 50)),
            T=int(arguments.get("T", 1000)),
            E=int(arguments.get("E", 1)),
            seed=int(arguments.get("seed", 0)),
            out=arguments.get("out"),
        )
        rows = []
        for result in results:
            row = result.to_row()
            row["gamma"] = result.gamma
            row["lambda_within_gamma"] = result.lambda_within_gamma
            rows.append(row)
        return _text({"all_passed": all(r.passed for r in results), "results": rows})

    async def _handle_audit_dp(self, arguments: dict) -> list[types.TextContent]:
        frame = await asyncio.to_thread(
            audit_dp,
            eps_values=_float_list(arguments.get("eps_values", [0.5, 1.0, 2.0]), "eps_values"),
            shift_ratios=_float_list(arguments.get("shift_ratios", [0.0, 0.5, 1.0]), "shift_ratios"),
            samples=int(arguments.get("samples", AUDIT_SAMPLES)),
            seed=int(arguments.get("seed", 0)),
            out=arguments.get("out"),
        )
        return _text({
            "all_passed": audit_failures(frame) == 0,
            "inconclusive": int(frame["inconclusive"].sum()),
            "results": frame.to_dict(orient="records")})

    async def _handle_describe_config(self, arguments: dict) -> list[types.TextContent]:
        """Parse a config file (or inline text) and return its resolved form."""
        if "config_path" in arguments:
            cfg = parse_config(arguments["config_path"])
        elif "text" in arguments:
            cfg = parse_config_text(arguments["text"], source="<inline>")
        else:
            raise UsageError("config_path or text is required")
        return _text({
            "mechanism": cfg.mechanism.value,
            "E": cfg.E,
            "eps_bar": cfg.eps_bar,
            "resolved": cfg.to_text(),
        })

    def _get_tool_definitions(self):
        """Get the tool definitions advertised to MCP clients."""
        return [
            types.Tool(
                name="run_experiment",
                description="Run a DP-IADMM experiment config for every listed seed. Writes run_seed<seed>.csv, aggregate.csv and summary.csv into the output directory.",
                inputSchema={
                    "type": "object",
                    "properties": {
                        "config_path": {
                            "type": "string",
                            "description": "Path to the key=value experiment config"
                        },
                        "output_dir": {
                            "type": "string",
                            "description": "Output directory (default: DPIADMM_OUTPUT_DIR/<config name>)"
                        },
                        "threads": {
                            "type": "integer",
                            "description": "Worker threads for the per-agent local rounds",
                            "minimum": 1
                        }
                    },
                    "required": ["config_path"]
                }
            ),
            types.Tool(
                name="aggregate_runs",
                description="Recompute aggregate.csv (per-iteration mean and 20th/80th percentiles across seeds) and summary.csv from the run_seed*.csv files in a directory",
                inputSchema={
                    "type": "object",
                    "properties": {
                        "directory": {
                            "type": "string",
                            "description": "Experiment output directory"
                        }
                    },
                    "required": ["directory"]
                }
            ),
            types.Tool(
                name="check_bounds",
                description="Monte-Carlo check of the expected optimality-gap bounds on toy federations with a known optimum",
                inputSchema={
                    "type": "object",
                    "properties": {
                        "regimes": {
                            "type": "array",
                            "items": {"type": "string", "enum": ["smooth", "nonsmooth", "strong"]},
                            "description": "Regimes to check (default: all three)"
                        },
                        "eps_values": {
                            "type": "array",
                            "items": {"type": ["number", "string"]},
                            "description": "Privacy budgets per inner step; \"inf\" disables noise (default: [1, \"inf\"])"
                        },
                        "runs": {"type": "integer", "minimum": 1, "description": "Seeded runs per check (default: 50)"},
                        "T": {"type": "integer", "minimum": 1, "description": "Outer iterations (default: 1000)"},
                        "E": {"type": "integer", "minimum": 1, "description": "Local updates (default: 1)"},
                        "seed": {"type": "integer", "description": "Base seed (default: 0)"},
                        "out": {"type": "string", "description": "Optional CSV report path"}
                    },
                    "required": []
                }
            ),
            types.Tool(
                name="audit_dp",
                description="Histogram likelihood-ratio audit of the Laplace mechanism over a grid of privacy budgets and input shifts",
                inputSchema={
                    "type": "object",
                    "properties": {
                        "eps_values": {
                            "type": "array",
                            "items": {"type": "number"},
                            "description": "Privacy budgets (default: [0.5, 1, 2])"
                        },
                        "shift_ratios": {
                            "type": "array",
                            "items": {"type": "number"},
                            "description": "Input shifts as a fraction of the sensitivity (default: [0, 0.5, 1])"
                        },
                        "samples": {"type": "integer", "minimum": 1, "description": f"Draws per distribution (default: {AUDIT_SAMPLES})"},
                        "seed": {"type": "integer", "description": "Base seed (default: 0)"},
                        "out": {"type": "string", "description": "Optional CSV report path"}
                    },
                    "required": []
                }
            ),
            types.Tool(
                name="describe_config",
                description="Parse and validate an experiment config; returns every key with its resolved value",
                inputSchema={
                    "type": "object",
                    "properties": {
                        "config_path": {"type": "string", "description": "Path to the config file"},
                        "text": {"type": "string", "description": "Config contents, used when config_path is absent"}
                    },
                    "required": []
                }
            ),
        ]

    async def get_tools_list(self):
        """Get list of available tools."""
        return self._get_tool_definitions()

    async def call_tool_direct(self, name: str, arguments: Dict[str, Any]):
        """Call a tool by name; errors come back as text instead of raising."""
        try:
            if name == "run_experiment":
                return await self._handle_run_experiment(arguments)
            elif name == "aggregate_runs":
                return await self._handle_aggregate_runs(arguments)
            elif name == "check_bounds":
                return await self._handle_check_bounds(arguments)
            elif name == "audit_dp":
                return await self._handle_audit_dp(arguments)
            elif name == "describe_config":
                return await self._handle_describe_config(arguments)
            else:
                raise UsageError(f"Unknown tool: {name}")
        except Exception as e:
            return [types.TextContent(
                type="text",
                text=f"Error executing {name}: {str(e)}"
            )]

    async def run(self):
        """Run the MCP server."""
        config_errors = config.validate_config()
        if config_errors:
            error_msg = f"Configuration errors: {', '.join(config_errors)}"
            print(f"❌ {error_msg}", file=sys.stderr)
            raise UsageError(f"Invalid configuration - stopping server. {error_msg}")
        elif config.debug:
            print(f"Configuration loaded: {config}", file=sys.stderr)

        config.setup_logging()
        Path(config.output_dir).mkdir(parents=True, exist_ok=True)
        try:
            print("Starting MCP server on stdio...", file=sys.stderr)
            async with mcp.server.stdio.stdio_server() as (read_stream, write_stream):
                await self.server.run(
                    read_stream,
                    write_stream,
                    InitializationOptions(
                        server_name=config.server_name,
                        server_version=config.server_version,
                        capabilities=self.server.get_capabilities(
                            notification_options=NotificationOptions(),
                            experimental_capabilities={},
                        ),
                    ),
                )
        except KeyboardInterrupt:
            print("\n🔄 Received shutdown signal", file=sys.stderr)
        except Exception as e:
            print(f"❌ Server runtime error: {e}", file=sys.stderr)
            if config.debug:
                import traceback
                traceback.print_exc(file=sys.stderr)
            raise


async def main():
    """Main entry point."""
    server = DPIADMMMCPServer()
    await server.run()


if __name__ == "__main__":
    asyncio.run(main())
