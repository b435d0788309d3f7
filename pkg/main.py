#!/usr/bin/env python3
# main.py - Entry point for the DP-IADMM federated learning toolkit

"""
DP-IADMM Federated Learning

Differentially private inexact ADMM with multiple local updates. Runs experiment
configs, aggregates multi-seed results, checks the convergence bounds on toy
problems, audits the Laplace mechanism, and serves all of it as MCP tools.

Usage:
    python main.py run configs/mnist_objp.conf [--output-dir runs/objp]
    python main.py aggregate runs/objp
    python main.py check-bounds [--regimes smooth nonsmooth strong] [--eps 1 inf] [--runs 50] [--T 1000] [--E 1] [--out bounds.csv]
    python main.py audit-dp [--eps 0.5 1 2] [--shifts 0 0.5 1] [--samples 10000000] [--seed 0] [--out audit.csv]
    python main.py serve

Environment Variables:
    DPIADMM_OUTPUT_DIR: Default parent directory for experiment outputs (default: runs)
    DPIADMM_DATA_DIR: Directory relative dataset paths are resolved against (default: data)
    DPIADMM_THREADS: Worker threads for the per-agent local rounds (default: 1)
    DPIADMM_LOG_LEVEL: Logging level on stderr (default: INFO)
    DPIADMM_DEBUG: Print full tracebacks on failure (true/false, default: false)
"""

import argparse
import asyncio
import os
import sys
import traceback
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from config import config  # noqa: E402
from errors import CheckFailedError, DPIADMMError  # noqa: E402


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="main.py", description="DP-IADMM federated learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every seed of an experiment config")
    run.add_argument("config", help="path to the key=value experiment config")
    run.add_argument("--output-dir", default=None, help="output directory (default: DPIADMM_OUTPUT_DIR/<config name>)")
    run.add_argument("--threads", type=int, default=None, help="worker threads for the local rounds")

    aggregate = sub.add_parser("aggregate", help="recompute aggregate.csv and summary.csv")
    aggregate.add_argument("directory", help="experiment output directory")

    bounds = sub.add_parser("check-bounds", help="expected optimality-gap bound checks")
    bounds.add_argument("--regimes", nargs="+", default=["smooth", "nonsmooth", "strong"],
                        choices=["smooth", "nonsmooth", "strong"])
    bounds.add_argument("--eps", nargs="+", type=float, default=[1.0, float("inf")])
    bounds.add_argument("--runs", type=int, default=50)
    bounds.add_argument("--T", type=int, default=1000)
    bounds.add_argument("--E", type=int, default=1)
    bounds.add_argument("--seed", type=int, default=0)
    bounds.add_argument("--out", default="bounds.csv")

    audit = sub.add_parser("audit-dp", help="likelihood-ratio audit of the Laplace mechanism")
    audit.add_argument("--eps", nargs="+", type=float, default=[0.5, 1.0, 2.0])
    audit.add_argument("--shifts", nargs="+", type=float, default=[0.0, 0.5, 1.0])
    audit.add_argument("--samples", type=int, default=None, help="draws per distribution (default: 10000000)")
    audit.add_argument("--seed", type=int, default=0)
    audit.add_argument("--out", default="audit.csv")

    sub.add_parser("serve", help="MCP server on stdio")
    return parser


def check_requirements() -> list[str]:
    """Check if all requirements are met."""
    return config.validate_config()


def dispatch(args: argparse.Namespace) -> int:
    """Run one subcommand; returns the process exit code on success."""
    from harness import AUDIT_SAMPLES, aggregate_runs, audit_dp, audit_failures, check_bounds, run_experiment

    if args.command == "run":
        result = run_experiment(args.config, output_dir=args.output_dir, threads=args.threads)
        print(f"✅ {len(result.runs)} seed(s) written to {result.output_dir}", file=sys.stderr)
        for run in result.runs:
            print(f"   • seed {run.seed}: final test error {run.final_test_error:.4f}, "
                  f"best {run.best_test_error:.4f}", file=sys.stderr)
    elif args.command == "aggregate":
        aggregate_file, summary_file = aggregate_runs(args.directory)
        print(f"✅ Wrote {aggregate_file} and {summary_file}", file=sys.stderr)
    elif args.command == "check-bounds":
        results = check_bounds(regimes=args.regimes, eps_values=args.eps, runs=args.runs, T=args.T,
                               E=args.E, seed=args.seed, out=args.out, threads=config.threads or 1)
        for r in results:
            mark = "✅" if r.passed else "❌"
            print(f"{mark} {r.regime.value} eps={r.eps_bar}: lhs={r.lhs:.4g} rhs={r.rhs:.4g}", file=sys.stderr)
            if not r.lambda_within_gamma:
                print(f"⚠️ max ||lambda|| {r.max_lambda_norm:.4g} exceeded gamma {r.gamma:.4g}", file=sys.stderr)
        failed = [r for r in results if not r.passed]
        if failed:
            raise CheckFailedError(f"{len(failed)} of {len(results)} bound checks failed (report: {args.out})")
    elif args.command == "audit-dp":
        samples = AUDIT_SAMPLES if args.samples is None else args.samples
        frame = audit_dp(eps_values=args.eps, shift_ratios=args.shifts, samples=samples,
                         seed=args.seed, out=args.out)
        for row in frame.to_dict(orient="records"):
            mark = "⚠️" if row["inconclusive"] else ("✅" if row["pass"] else "❌")
            print(f"{mark} eps={row['eps_bar']} shift={row['shift_ratio']}: "
                  f"max log-ratio {row['max_log_ratio']:.4f} <= {row['bound']:.4f}", file=sys.stderr)
        failed = audit_failures(frame)
        inconclusive = int(frame["inconclusive"].sum())
        if inconclusive:
            print(f"⚠️ {inconclusive} of {len(frame)} audit cells inconclusive; raise --samples", file=sys.stderr)
        if failed:
            raise CheckFailedError(f"{failed} of {len(frame)} audit cells failed (report: {args.out})")
    elif args.command == "serve":
        print("🔗 Client Support:", file=sys.stderr)
        print("   • MCP clients: stdio connection", file=sys.stderr)
        print("Starting MCP server... Press Ctrl+C to stop", file=sys.stderr)
        print("=" * 30, file=sys.stderr)
        from mcp_server import main as server_main
        asyncio.run(server_main())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    print("🚀 DP-IADMM Federated Learning", file=sys.stderr)
    print("=" * 30, file=sys.stderr)

    errors = check_requirements()
    if errors:
        print("❌ Requirements check failed:", file=sys.stderr)
        for error in errors:
            print(f"   • {error}", file=sys.stderr)
        print("\nPlease fix the above issues and try again.", file=sys.stderr)
        return 2
    config.setup_logging()

    try:
        return dispatch(args)
    except KeyboardInterrupt:
        print("\n👋 Stopped by user", file=sys.stderr)
        return 0
    except DPIADMMError as e:
        print(f"❌ {e.category}: {e}", file=sys.stderr)
        if config.debug:
            traceback.print_exc(file=sys.stderr)
        return e.exit_code
    except Exception as e:
        print(f"\n❌ internal: {e}", file=sys.stderr)
        if config.debug:
            print("Full traceback:", file=sys.stderr)
            traceback.print_exc(file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
