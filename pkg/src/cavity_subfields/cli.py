"""Command-line interface for subfield decompositions and truncation diagnostics."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

from cavity_subfields import __version__
from cavity_subfields.config import (
    ConfigError,
    ScenarioConfig,
    default_output_dir,
    merge,
    parse_overrides,
    read_document,
)
from cavity_subfields.export import (
    PROBABILITY_COLUMNS,
    SPECTRUM_COLUMNS,
    SUBFIELD_COLUMNS,
    RunManifest,
    probability_rows,
    spectrum_rows,
    subfield_rows,
    write_csv,
    write_line_plot,
    write_manifest,
)
from cavity_subfields.figures import FIGURES, build_figure
from cavity_subfields.geometry import SpectrumTooLargeError, enumerate_spectrum
from cavity_subfields.response import ConvergenceError, transition_probability
from cavity_subfields.storage import RunStore
from cavity_subfields.subfields import decompose, mass_cutoff_for_count

logger = logging.getLogger("cavity-subfields")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3

# Formatter registry: list of (predicate, formatter) tuples
# Order matters - first match wins
_FORMATTERS: list[tuple[callable, callable]] = []


def _register_formatter(predicate: callable):
    """Decorator to register a formatter with its predicate."""

    def decorator(formatter: callable):
        _FORMATTERS.append((predicate, formatter))
        return formatter

    return decorator


def _outputs_lines(data: dict) -> list[str]:
    lines = ["", f"Outputs in {data['out_dir']}:"]
    lines.extend(f"  {name}" for name in data.get("outputs", []))
    return lines


@_register_formatter(lambda d: "p_plus" in d and "p_minus" in d)
def _format_probability(data: dict) -> list[str]:
    status = "converged" if data["converged"] else f"NOT converged (tail {data['tail_estimate']:.2e})"
    lines = [
        f"Transition probabilities for {data['name']} (per g^2/hbar^2, lengths in {data['length_unit']})",
        "",
        f"P+ (excitation): {data['p_plus']:.12e}   ln P+ = {data['log_p_plus']:.10g}",
        f"P- (emission):   {data['p_minus']:.12e}   ln P- = {data['log_p_minus']:.10g}",
        f"Subfields summed: {data['subfield_count']} ({status})",
    ]
    if data.get("leading"):
        lines += ["", "Leading subfields:"]
        for row in data["leading"]:
            lines.append(
                f"  j={row['j']:<5} {row['label']:<18} M={row['M_j']:.6g}  "
                f"P+ share={row['share_plus']:.3e}  P- share={row['share_minus']:.3e}"
            )
    return lines + _outputs_lines(data)


@_register_formatter(lambda d: "mode_count" in d)
def _format_spectrum(data: dict) -> list[str]:
    lines = [
        f"Transverse spectrum of {data['name']} up to lambda = {data['cutoff']:.6g}",
        "",
        f"Modes: {data['mode_count']}",
    ]
    if data["mode_count"]:
        lines.append(f"Largest lambda / Weyl estimate: {data['last_weyl_ratio']:.4f}")
    return lines + _outputs_lines(data)


@_register_formatter(lambda d: "coupled_count" in d)
def _format_decompose(data: dict) -> list[str]:
    lines = [
        f"Subfield decomposition of {data['name']}",
        "",
        f"Modes projected: {data['projected_count']} (coupled: {data['coupled_count']})",
    ]
    if data.get("final_delta_l2") is not None:
        lines.append(f"delta_L2 after {data['rows']} subfields: {data['final_delta_l2']:.3e}")
    return lines + _outputs_lines(data)


@_register_formatter(lambda d: "figure" in d)
def _format_figure(data: dict) -> list[str]:
    lines = [f"{data['figure']}: {data['title']}", "", f"Rows: {data['rows']}"]
    for key, value in sorted(data.get("parameters", {}).items()):
        if isinstance(value, dict) and "needed_subfields" in value:
            lines.append(f"  {key}: subfields for 1% = {value['needed_subfields']}")
    return lines + _outputs_lines(data)


@_register_formatter(lambda d: "runs" in d)
def _format_runs(data: dict) -> list[str]:
    lines = [f"Recent runs ({data['db_path']})", ""]
    if not data["runs"]:
        lines.append("  (none)")
    for run in data["runs"]:
        lines.append(
            f"  {run['timestamp']}  {run['command']:<11} {run['config_name'] or '-':<16} "
            f"exit={run['exit_status']}  {run['config_hash'][:12]}  {run['out_dir']}"
        )
    return lines


def format_output(data: dict, json_output: bool = False) -> str:
    """Format output as JSON or human-readable."""
    if json_output:
        return json.dumps(data, indent=2, default=str)
    for predicate, formatter in _FORMATTERS:
        if predicate(data):
            return "\n".join(formatter(data))
    return json.dumps(data, indent=2, default=str)


def _load_config(args) -> ScenarioConfig:
    overrides = parse_overrides(getattr(args, "set", None))
    if args.config:
        config = ScenarioConfig.load(args.config, overrides)
    elif args.preset:
        config = ScenarioConfig.preset(args.preset, overrides)
    else:
        raise ConfigError("pass --config <file> or --preset <name>")
    return config.with_threads(args.threads)


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(
    args,
    command: str,
    out_dir: Path,
    outputs: list[Path],
    config_hash: str,
    config_name: str = "",
    length_unit: str = "",
    parameters: dict | None = None,
    exit_status: int = EXIT_OK,
) -> RunManifest:
    """Write manifest.json and index the run."""
    manifest = RunManifest(
        command=command,
        config_hash=config_hash,
        tool_version=__version__,
        config_name=config_name,
        length_unit=length_unit,
        parameters=parameters or {},
    )
    for path in outputs:
        manifest.add(path)
    write_manifest(out_dir, manifest)
    if not getattr(args, "no_index", False):
        try:
            RunStore().record(manifest, out_dir, exit_status)
        except OSError as exc:
            logger.warning(f"Could not index run: {exc}")
    return manifest


def cmd_spectrum(args) -> int:
    """Sorted eigenvalue table with the Weyl ratio column."""
    config = _load_config(args)
    cs = config.scenario.cavity.cross_section
    if not args.cutoff > 0:
        raise ConfigError(f"cutoff must be > 0, got {args.cutoff}", field="cutoff")
    spectrum = enumerate_spectrum(cs, args.cutoff)
    rows = spectrum_rows(spectrum)
    out_dir = _out_dir(args)
    path = write_csv(out_dir / "spectrum.csv", SPECTRUM_COLUMNS, rows)
    _finish(
        args,
        "spectrum",
        out_dir,
        [path],
        config.config_hash,
        config.name,
        config.length_unit,
        {"cutoff": args.cutoff},
    )
    result = {
        "name": config.name,
        "cutoff": args.cutoff,
        "mode_count": len(rows),
        "last_weyl_ratio": rows[-1]["weyl_ratio"] if rows else None,
        "out_dir": str(out_dir),
        "outputs": [path.name, "manifest.json"],
    }
    print(format_output(result, args.json))
    return EXIT_OK


def cmd_decompose(args) -> int:
    """Per-subfield masses, effective-smearing norms and cumulative delta_L2."""
    config = _load_config(args)
    scenario = config.scenario
    smearing = scenario.detector.smearing
    cutoff = args.cutoff
    if cutoff is None and smearing.kind != "gaussian":
        cutoff = mass_cutoff_for_count(scenario.cavity, 4 * max(args.subfields or 16, 16))
    decomposition = decompose(
        scenario.cavity, smearing, cutoff, spec=scenario.quadrature, threads=config.threads
    )
    rows = subfield_rows(decomposition, args.subfields)
    out_dir = _out_dir(args)
    path = write_csv(out_dir / "subfields.csv", SUBFIELD_COLUMNS, rows)
    _finish(
        args,
        "decompose",
        out_dir,
        [path],
        config.config_hash,
        config.name,
        config.length_unit,
        {"subfields": args.subfields, "cutoff": decomposition.cutoff_eigenvalue},
    )
    final = rows[-1]["cumulative_delta_l2"] if rows else None
    result = {
        "name": config.name,
        "projected_count": len(decomposition),
        "coupled_count": len(decomposition.coupled()),
        "rows": len(rows),
        "final_delta_l2": None if final is None or math.isnan(final) else final,
        "out_dir": str(out_dir),
        "outputs": [path.name, "manifest.json"],
    }
    print(format_output(result, args.json))
    return EXIT_OK


def cmd_probability(args) -> int:
    """P_+ and P_- with the per-subfield breakdown; exit 3 when not converged."""
    config = _load_config(args)
    result = transition_probability(config.scenario, config.controls)
    rows = probability_rows(result)
    out_dir = _out_dir(args)
    path = write_csv(out_dir / "probability.csv", PROBABILITY_COLUMNS, rows)
    status = EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    _finish(
        args,
        "probability",
        out_dir,
        [path],
        config.config_hash,
        config.name,
        config.length_unit,
        {
            "p_plus": result.p_plus,
            "p_minus": result.p_minus,
            "log_p_plus": result.log_p_plus,
            "log_p_minus": result.log_p_minus,
            "converged": result.converged,
            "tail_estimate": result.tail_estimate,
        },
        status,
    )
    leading = [
        {
            "j": c.index,
            "label": c.label,
            "M_j": c.mass,
            "share_plus": math.exp(c.log_plus - result.log_p_plus) if result.p_plus > 0 else 0.0,
            "share_minus": math.exp(c.log_minus - result.log_p_minus) if result.p_minus > 0 else 0.0,
        }
        for c in list(result.per_subfield.values())[: args.top]
    ]
    summary = {
        "name": config.name,
        "length_unit": config.length_unit,
        "p_plus": result.p_plus,
        "p_minus": result.p_minus,
        "log_p_plus": result.log_p_plus,
        "log_p_minus": result.log_p_minus,
        "converged": result.converged,
        "tail_estimate": result.tail_estimate,
        "subfield_count": len(result.per_subfield),
        "leading": leading,
        "out_dir": str(out_dir),
        "outputs": [path.name, "manifest.json"],
    }
    print(format_output(summary, args.json))
    if status != EXIT_OK:
        print(
            f"error: mode sum not converged (tail estimate {result.tail_estimate:.3e})",
            file=sys.stderr,
        )
    return status


def cmd_figure(args) -> int:
    """CSV and SVG for a named figure; a config file or --set values override the defaults."""
    if args.name not in FIGURES:
        raise ConfigError(f"unknown figure {args.name!r}; choose one of {sorted(FIGURES)}", field="name")
    overrides = read_document(args.config) if args.config else {}
    for key in ("name", "preset"):
        overrides.pop(key, None)
    overrides = merge(overrides, parse_overrides(args.set))
    options = {"points": args.points}
    if args.max_subfields is not None:
        options["max_subfields"] = args.max_subfields
    figure = build_figure(args.name, overrides, threads=args.threads or 1, **options)

    out_dir = _out_dir(args)
    csv_path = write_csv(out_dir / f"{figure.name}.csv", figure.columns, figure.rows)
    svg_path = write_line_plot(
        out_dir / f"{figure.name}.svg",
        figure.curves(),
        figure.title,
        figure.x_label,
        figure.y_label,
        figure.log_x,
        figure.log_y,
    )
    canonical = json.dumps({"figure": figure.name, "overrides": overrides, **options}, sort_keys=True)
    _finish(
        args,
        "figure",
        out_dir,
        [csv_path, svg_path],
        hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        figure.name,
        "",
        figure.parameters,
    )
    result = {
        "figure": figure.name,
        "title": figure.title,
        "rows": len(figure.rows),
        "parameters": figure.parameters,
        "out_dir": str(out_dir),
        "outputs": [csv_path.name, svg_path.name, "manifest.json"],
    }
    print(format_output(result, args.json))
    return EXIT_OK


def cmd_runs(args) -> int:
    """List recently indexed runs."""
    store = RunStore()
    runs = [r.to_dict() for r in store.recent_runs(limit=args.limit)]
    print(format_output({"db_path": str(store.db_path), "runs": runs}, args.json))
    return EXIT_OK


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stderr,
    )
    if verbose or os.environ.get("DEV_MODE"):
        logger.setLevel(logging.DEBUG)


def _add_scenario_args(sub: argparse.ArgumentParser) -> None:
    source = sub.add_mutually_exclusive_group()
    source.add_argument("--config", help="Scenario file (YAML, or JSON by .json suffix)")
    source.add_argument("--preset", help="Named preset instead of a file")
    sub.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="Override a config value (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    epilog = """
Examples:
  cavity-subfields spectrum --config square.yaml --cutoff 60
  cavity-subfields decompose --preset fig2-yellow --subfields 40
  cavity-subfields probability --preset superconducting --threads 4
  cavity-subfields figure fig2 --out figures/
  cavity-subfields runs --limit 10

Every command writes manifest.json next to its outputs.
Output directory defaults to $CAVITY_SUBFIELDS_OUT (else ./cavity-subfields-out).
"""
    parser = argparse.ArgumentParser(
        description="Subfield decomposition of cavity fields and detector truncation errors",
        prog="cavity-subfields",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="Output directory")
    common.add_argument("--threads", type=int, help="Cap on worker threads")
    common.add_argument("--json", action="store_true", help="Output as JSON")
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    common.add_argument("--no-index", action="store_true", help="Do not record the run")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # spectrum
    sub = subparsers.add_parser("spectrum", parents=[common], help="Enumerate transverse modes")
    _add_scenario_args(sub)
    sub.add_argument("--cutoff", type=float, required=True, help="Largest eigenvalue lambda")
    sub.set_defaults(func=cmd_spectrum)

    # decompose
    sub = subparsers.add_parser("decompose", parents=[common], help="Project the smearing onto subfields")
    _add_scenario_args(sub)
    sub.add_argument("--subfields", type=int, help="Rows to write (default: all coupled)")
    sub.add_argument("--cutoff", type=float, help="Eigenvalue cutoff (default from sigma)")
    sub.set_defaults(func=cmd_decompose)

    # probability
    sub = subparsers.add_parser("probability", parents=[common], help="Transition probabilities")
    _add_scenario_args(sub)
    sub.add_argument("--top", type=int, default=5, help="Subfields shown in the summary (default: 5)")
    sub.set_defaults(func=cmd_probability)

    # figure
    sub = subparsers.add_parser("figure", parents=[common], help="Reproduce a convergence figure")
    sub.add_argument("name", choices=sorted(FIGURES), help="Figure to build")
    sub.add_argument("--config", help="Scenario file whose sections override the figure defaults")
    sub.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="Override a value")
    sub.add_argument("--points", type=int, default=13, help="Omega T grid points (default: 13)")
    sub.add_argument("--max-subfields", type=int, help="Largest N_sub on convergence curves")
    sub.set_defaults(func=cmd_figure)

    # runs
    sub = subparsers.add_parser("runs", help="List recorded runs")
    sub.add_argument("--limit", type=int, default=20, help="Max runs (default: 20)")
    sub.add_argument("--json", action="store_true", help="Output as JSON")
    sub.add_argument("--verbose", action="store_true", help="Debug logging")
    sub.set_defaults(func=cmd_runs)

    return parser


def main(argv: list[str] | None = None) -> int:
    """CLI entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpectrumTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"error: {exc} (tail estimate {exc.result.tail_estimate:.3e})", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    raise SystemExit(main())
