"""Command-line interface.

    evmscope analyze FILE [options]    analyze one contract
    evmscope batch DIR [options]       analyze every fixture in a directory

Exit codes: 0 = analyzed, no violations; 2 = violations found;
1 = input or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from fractions import Fraction
from pathlib import Path

from .analyzers import PropertyId
from .disasm import HexError, load_contract
from .isa import load_gas_overrides
from .pathgen import PathBounds
from .ranker import RankConfig
from .report import AnalysisConfig, analyze, build_registry, dump_cfg_dot, emit, to_json

_PROPERTY_NAMES = {p.value: p for p in PropertyId}
_ALPHA_NAMES = {
    "transferlimit": PropertyId.TRANSFER_LIMIT,
    "transfer_limit": PropertyId.TRANSFER_LIMIT,
    "nonexistingaddress": PropertyId.NON_EXISTING_ADDRESS,
    "non_existing_address": PropertyId.NON_EXISTING_ADDRESS,
    "guardsuicide": PropertyId.GUARD_SUICIDE,
    "guard_suicide": PropertyId.GUARD_SUICIDE,
    "blackhole": PropertyId.BLACK_HOLE,
    "black_hole": PropertyId.BLACK_HOLE,
}


class CliError(Exception):
    pass


def _parse_property(name: str) -> PropertyId:
    key = name.strip().lower()
    if key in _ALPHA_NAMES:
        return _ALPHA_NAMES[key]
    if key in _PROPERTY_NAMES:
        return _PROPERTY_NAMES[key]
    raise CliError(f"unknown property {name!r}")


def _apply_ranking_file(rank: RankConfig, path: str) -> None:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise CliError(f"cannot read config file {path}")
    if not parser.has_section("ranking"):
        return
    section = parser["ranking"]
    for key, value in section.items():
        if key == "threshold":
            rank.threshold = Fraction(value)
        elif key == "epsilon":
            rank.epsilon = Fraction(value)
        elif key.startswith("alpha."):
            rank.override_alpha(_parse_property(key[len("alpha."):]), Fraction(value))
        else:
            raise CliError(f"unknown [ranking] key {key!r}")
    if rank.epsilon <= 0:
        raise CliError("epsilon must be positive")


def _build_config(args: argparse.Namespace) -> AnalysisConfig:
    try:
        bounds = PathBounds(
            call_depth=args.call_bound,
            loop_bound=args.loop_bound,
            max_blocks=args.max_blocks,
            wall_time=args.wall_time,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    rank = RankConfig()
    if args.config:
        _apply_ranking_file(rank, args.config)
    if args.threshold is not None:
        rank.threshold = Fraction(args.threshold)
    if args.epsilon is not None:
        if Fraction(args.epsilon) <= 0:
            raise CliError("epsilon must be positive")
        rank.epsilon = Fraction(args.epsilon)
    for override in args.alpha or []:
        if "=" not in override:
            raise CliError(f"--alpha expects PROP=N, got {override!r}")
        name, _, value = override.partition("=")
        try:
            rank.override_alpha(_parse_property(name), Fraction(value))
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    disabled = set()
    for chunk in (args.disable or "").split(","):
        if chunk.strip():
            disabled.add(_parse_property(chunk))
    gas_overrides = {}
    if args.gas_schedule:
        try:
            gas_overrides = load_gas_overrides(Path(args.gas_schedule).read_text())
        except (OSError, ValueError) as exc:
            raise CliError(f"gas schedule: {exc}") from exc
    return AnalysisConfig(
        bounds=bounds,
        rank=rank,
        transfer_limit=args.transfer_limit,
        registry_mode=args.registry_mode,
        registry_fixture=args.registry_fixture,
        registry_cache=args.registry_cache,
        solver_timeout_ms=args.solver_timeout,
        workers=args.workers,
        disabled=disabled,
        include_reentrant=args.reentrant_paths,
        include_timing=not args.no_timing,
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--call-bound", type=int, default=3,
                        help="max function calls per path (default 3)")
    parser.add_argument("--loop-bound", type=int, default=5,
                        help="max traversals of any back-edge per call segment (default 5)")
    parser.add_argument("--max-blocks", type=int, default=60,
                        help="max blocks per path (default 60)")
    parser.add_argument("--wall-time", type=float, default=60.0,
                        help="global time budget in seconds (default 60)")
    parser.add_argument("--solver-timeout", type=int, default=100,
                        help="per-query solver timeout in ms (default 100)")
    parser.add_argument("--transfer-limit", type=int, default=None,
                        help="wei limit for the transfer-limit property "
                             "(absent = checker disabled)")
    parser.add_argument("--threshold", type=str, default=None,
                        help="criticalness gate threshold (default 10)")
    parser.add_argument("--epsilon", type=str, default=None,
                        help="criticalness length scale (default 1)")
    parser.add_argument("--alpha", action="append", metavar="PROP=N",
                        help="override a property weight (repeatable)")
    parser.add_argument("--disable", default="",
                        help="comma-separated properties to switch off")
    parser.add_argument("--registry-mode", choices=["online", "offline", "disabled"],
                        default="offline")
    parser.add_argument("--registry-fixture", default=None,
                        help="address table for offline mode")
    parser.add_argument("--registry-cache", default=None,
                        help="persistent cache file for address lookups")
    parser.add_argument("--registry-deep", action="store_true",
                        help="reserved: also query internal transactions "
                             "(not implemented)")
    parser.add_argument("--workers", type=int, default=1,
                        help="symbolic-execution worker threads")
    parser.add_argument("--reentrant-paths", action="store_true",
                        help="also fork paths at external-call callback edges")
    parser.add_argument("--config", default=None, help="INI file with a [ranking] section")
    parser.add_argument("--gas-schedule", default=None,
                        help="gas override table (MNEMONIC GAS per line)")
    parser.add_argument("--no-timing", action="store_true",
                        help="omit wall-clock timing from reports (reproducible output)")
    parser.add_argument("--output", choices=["json", "html", "both"], default="json")
    parser.add_argument("--out", default=None, help="output path base")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evmscope")
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="analyze a single contract")
    p_an.add_argument("file", help="hex file or JSON envelope")
    _add_common(p_an)
    p_an.add_argument("--dump-cfg", default=None, metavar="PATH",
                      help="write the CFG in DOT format and continue")

    p_batch = sub.add_parser("batch", help="analyze every contract in a directory")
    p_batch.add_argument("dir")
    _add_common(p_batch)
    return parser


def _run_analyze(args: argparse.Namespace) -> int:
    config = _build_config(args)
    try:
        contract = load_contract(args.file)
    except (OSError, HexError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.dump_cfg:
        Path(args.dump_cfg).write_text(dump_cfg_dot(contract))
    report = analyze(contract, config)
    if args.out:
        written = emit(report, args.output, args.out, contract.source)
        for path in written:
            print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(to_json(report))
    return 2 if report.has_violations else 0


def _run_batch(args: argparse.Namespace) -> int:
    config = _build_config(args)
    # batch reports must be byte-identical across runs
    config.include_timing = False
    directory = Path(args.dir)
    if not directory.is_dir():
        print(f"error: {directory} is not a directory", file=sys.stderr)
        return 1
    out_dir = Path(args.out) if args.out else directory / "reports"
    out_dir.mkdir(parents=True, exist_ok=True)
    registry = build_registry(config)
    files = sorted(p for p in directory.iterdir()
                   if p.suffix in (".json", ".hex") and p.is_file())
    if not files:
        print("error: no contract fixtures found", file=sys.stderr)
        return 1
    summary = []
    any_violation = False
    for path in files:
        try:
            contract = load_contract(path)
        except (HexError, ValueError, json.JSONDecodeError) as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return 1
        report = analyze(contract, config, registry=registry)
        emit(report, args.output, out_dir / path.stem, contract.source)
        any_violation = any_violation or report.has_violations
        summary.append({
            "contract": contract.name,
            "file": path.name,
            "paths_enumerated": report.statistics["paths_enumerated"],
            "paths_money_related": report.statistics["paths_money_related"],
            "paths_symbolically_executed":
                report.statistics["paths_symbolically_executed"],
            "violation_counts": report.statistics["violation_counts"],
            "timed_out": report.statistics["timed_out"],
        })
        print(f"{contract.name}: "
              f"{sum(report.statistics['violation_counts'].values())} warning(s)",
              file=sys.stderr)
    totals: dict[str, int] = {}
    for entry in summary:
        for prop, count in entry["violation_counts"].items():
            totals[prop] = totals.get(prop, 0) + count
    corpus = {
        "schema": 1,
        "contracts": summary,
        "totals": dict(sorted(totals.items())),
    }
    (out_dir / "corpus_summary.json").write_text(json.dumps(corpus, indent=2) + "\n")
    return 2 if any_violation else 0


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            return _run_analyze(args)
        return _run_batch(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
