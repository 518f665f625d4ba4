"""Pipeline orchestration and report generation.

Runs the six stages (disassemble, CFG recovery, bounded path enumeration
with money filtering, per-path property analysis, criticalness ranking with
the threshold gate, symbolic-execution feasibility filtering) and assembles
machine-readable (JSON) and human-readable (HTML) reports.
"""

from __future__ import annotations

import concurrent.futures
import html
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import isa
from .analyzers import (
    GasEstimator,
    PropertyId,
    PropertyViolation,
    check_address_existence,
    check_black_hole,
    check_guard_suicide,
    check_transfer_limit,
    detect_payable_entries,
)
from .cfg import Cfg, FALLBACK, build_cfg, to_dot
from .disasm import ContractCode, disassemble
from .pathgen import (
    PathBounds,
    ProgramPath,
    VIA_EXTERNAL_CALLBACK,
    enumerate_paths,
    filter_money,
)
from .ranker import RankConfig, RankedPath, make_ranked, rank_and_gate
from .registry import AddressRegistry
from .solver import BoundedSolver, default_solver
from .symexec import (
    Feasibility,
    FeasibilityStatus,
    SymbolicState,
    Word,
    execute_path,
    refine_transfer_values,
    run_constructor,
    trace_path,
)

SCHEMA_VERSION = 1

FEAS_FEASIBLE = "feasible"
FEAS_UNKNOWN = "unknown"
FEAS_NOT_CHECKED = "not_checked"


@dataclass
class AnalysisConfig:
    bounds: PathBounds = field(default_factory=PathBounds)
    rank: RankConfig = field(default_factory=RankConfig)
    transfer_limit: int | None = None
    registry_mode: str = "offline"
    registry_fixture: str | None = None
    registry_cache: str | None = None
    solver_timeout_ms: int = 100
    workers: int = 1
    disabled: set[PropertyId] = field(default_factory=set)
    include_reentrant: bool = False
    time_guard_suffices: bool = False
    include_timing: bool = True
    gas_overrides: dict[int, int] = field(default_factory=dict)


@dataclass
class CriticalPath:
    rank: int
    ranked: RankedPath
    call_sequence: list[str]
    feasibility: str
    witness: dict[str, int] | None
    gas: int
    source_lines: list[int]

    def as_dict(self) -> dict:
        score = self.ranked.score
        return {
            "rank": self.rank,
            "score": float(score),
            "score_exact": f"{score.numerator}/{score.denominator}",
            "length": self.ranked.length,
            "call_sequence": self.call_sequence,
            "violations": [v.as_dict() for v in self.ranked.violations],
            "feasibility": self.feasibility,
            "witness": _witness_dict(self.witness),
            "gas": self.gas,
            "blocks": list(self.ranked.path.blocks),
            "source_lines": self.source_lines,
        }


def _witness_dict(witness: dict[str, int] | None) -> dict[str, str] | None:
    if witness is None:
        return None
    return {name: (str(v) if v < (1 << 53) else hex(v))
            for name, v in sorted(witness.items())}


@dataclass
class Report:
    contract_name: str
    statistics: dict
    critical_paths: list[CriticalPath]
    diagnostics: list[str]
    config_echo: dict
    block_labels: dict[int, str]

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "contract": self.contract_name,
            "gas_schedule": isa.GAS_SCHEDULE_NAME,
            "config": self.config_echo,
            "statistics": self.statistics,
            "critical_paths": [self._path_dict(cp) for cp in self.critical_paths],
            "diagnostics": self.diagnostics,
        }

    def _path_dict(self, cp: CriticalPath) -> dict:
        d = cp.as_dict()
        d["blocks"] = [self.block_labels.get(b, str(b)) for b in cp.ranked.path.blocks]
        return d

    @property
    def has_violations(self) -> bool:
        return any(cp.ranked.violations for cp in self.critical_paths)


def _config_echo(config: AnalysisConfig) -> dict:
    return {
        "call_bound": config.bounds.call_depth,
        "loop_bound": config.bounds.loop_bound,
        "max_blocks": config.bounds.max_blocks,
        "wall_time_s": config.bounds.wall_time,
        "solver_timeout_ms": config.solver_timeout_ms,
        "transfer_limit": config.transfer_limit,
        "threshold": float(config.rank.threshold),
        "epsilon": float(config.rank.epsilon),
        "alpha": {p.value: float(a) for p, a in sorted(
            config.rank.alpha.items(), key=lambda kv: kv[0].value)},
        "registry_mode": config.registry_mode,
        "disabled": sorted(p.value for p in config.disabled),
        "reentrant_paths": config.include_reentrant,
    }


def _function_display(contract: ContractCode, sel) -> str:
    if sel is None:
        return "<unknown>"
    if sel == FALLBACK:
        return "<fallback>"
    meta = contract.functions.get(sel)
    if meta and meta.get("signature"):
        return meta["signature"]
    return f"0x{sel:08x}"


def to_call_sequence(path: ProgramPath, contract: ContractCode,
                     witness: dict[str, int] | None = None) -> list[str]:
    """Render the path as the function-call sequence it represents.

    With a witness, decoded calldata words become concrete arguments and a
    nonzero message value is shown; re-entrant segments carry a marker.
    """
    out: list[str] = []
    for txn, (sel, via) in enumerate(path.functions, start=1):
        name = _function_display(contract, sel)
        extras = ""
        if witness:
            args = [(int(k.split("@")[1]), v) for k, v in witness.items()
                    if k.startswith("CALLDATA#") and f"#{txn}@" in k
                    and int(k.split("@")[1]) >= 4]
            if args:
                rendered = ", ".join(str(v) for _off, v in sorted(args))
                extras += f" args=[{rendered}]"
            value = witness.get(f"CALLVALUE#{txn}", 0)
            if value:
                extras += f" {{value: {value}}}"
        marker = "↩" if via == VIA_EXTERNAL_CALLBACK else ""
        out.append(f"{marker}{name}{extras}")
    return out


def _source_lines(path: ProgramPath, cfg: Cfg, source_map: dict[int, int]) -> list[int]:
    if not source_map:
        return []
    lines = set()
    for block_id in path.blocks:
        for ins in cfg.blocks[block_id].instructions:
            if ins.offset in source_map:
                lines.add(source_map[ins.offset])
    return sorted(lines)


def build_registry(config: AnalysisConfig) -> AddressRegistry:
    fixture = {}
    if config.registry_fixture:
        from .registry import load_fixture_table
        fixture = load_fixture_table(config.registry_fixture)
    return AddressRegistry(
        mode=config.registry_mode,
        fixture=fixture,
        cache_path=config.registry_cache,
    )


def analyze(contract: ContractCode, config: AnalysisConfig,
            registry: AddressRegistry | None = None,
            solver: BoundedSolver | None = None) -> Report:
    """Run the whole pipeline on one contract."""
    started = time.monotonic()
    deadline = started + config.bounds.wall_time
    if registry is None:
        registry = build_registry(config)
    if solver is None:
        solver = default_solver()
    gas_table = isa.GasTable(config.gas_overrides) if config.gas_overrides else isa.DEFAULT_GAS

    instructions = disassemble(contract.runtime_code)
    if not instructions:
        raise ValueError("runtime code is empty")
    cfg = build_cfg(instructions)
    diagnostics = [f"{d.code}: {d.message}" for d in cfg.diagnostics]

    base_storage: dict[Word, Word] = {}
    if contract.creation_code:
        creation_cfg = build_cfg(disassemble(contract.creation_code))
        base_storage, ctor_diags = run_constructor(creation_cfg, contract.creation_code)
        diagnostics.extend(ctor_diags)

    payable, payable_details = detect_payable_entries(cfg, instructions)

    enumeration = enumerate_paths(cfg, config.bounds,
                                  include_reentrant=config.include_reentrant,
                                  deadline=deadline)
    all_paths = list(enumeration)
    money_paths = list(filter_money(iter(all_paths), cfg, payable))

    estimator = GasEstimator(cfg, gas_table)
    max_gas = 0
    max_gas_path: ProgramPath | None = None
    for p in all_paths:
        g = estimator.path_gas(p)
        if g > max_gas:
            max_gas, max_gas_path = g, p

    violations_by_path: list[tuple[ProgramPath, list[PropertyViolation], SymbolicState | None]] = []
    selfdestruct_blocks = {
        b.id for b in cfg.blocks.values()
        if any(i.mnemonic == "SELFDESTRUCT" for i in b.instructions)
    }

    def enabled(prop: PropertyId) -> bool:
        return prop not in config.disabled

    if not cfg.money_blocks:
        if enabled(PropertyId.BLACK_HOLE):
            for path, violation in check_black_hole(cfg, money_paths, payable):
                violations_by_path.append((path, [violation], None))
    else:
        check_limit = config.transfer_limit is not None and enabled(PropertyId.TRANSFER_LIMIT)
        check_addr = registry.mode != "disabled" and enabled(PropertyId.NON_EXISTING_ADDRESS)
        check_suicide = enabled(PropertyId.GUARD_SUICIDE)
        for path in money_paths:
            needs_trace = (check_limit or check_addr
                           or (check_suicide and any(b in selfdestruct_blocks
                                                     for b in path.blocks)))
            if not needs_trace:
                continue
            state = trace_path(cfg, contract.runtime_code, path, base_storage, gas_table)
            live_records = [r for r in state.records if not r.reverted]
            found: list[PropertyViolation] = []
            if check_limit:
                transfers = [(rec, amount) for rec, amount
                             in refine_transfer_values(state) if not rec.reverted]
                v = check_transfer_limit(path, config.transfer_limit, transfers)
                if v:
                    found.append(v)
            if check_addr:
                addr_violations, addr_warnings = check_address_existence(
                    path, live_records, registry)
                found.extend(addr_violations)
                diagnostics.extend(addr_warnings)
            if check_suicide:
                v = check_guard_suicide(path, state, config.time_guard_suffices)
                if v:
                    found.append(v)
            if found:
                violations_by_path.append((path, found, state))

    ranked = [make_ranked(path, viols, config.rank)
              for path, viols, _state in violations_by_path]
    plan = rank_and_gate(ranked, config.rank)

    feasibility: dict[tuple, tuple[str, dict[str, int] | None, str]] = {}
    executed = 0

    def run_one(rp: RankedPath) -> Feasibility:
        _state, feas = execute_path(cfg, contract.runtime_code, rp.path, base_storage,
                                    solver, gas_table, config.solver_timeout_ms)
        return feas

    timed_out = enumeration.timed_out
    work = list(plan.queue)
    while work:
        if time.monotonic() > deadline:
            timed_out = True
            break
        batch, work = work[:max(config.workers, 1)], work[max(config.workers, 1):]
        if config.workers > 1 and len(batch) > 1:
            with concurrent.futures.ThreadPoolExecutor(config.workers) as pool:
                results = list(pool.map(run_one, batch))
        else:
            results = [run_one(rp) for rp in batch]
        executed += len(batch)
        for rp, feas in zip(batch, results):
            key = rp.path.blocks
            if feas.status is FeasibilityStatus.FEASIBLE:
                feasibility[key] = (FEAS_FEASIBLE, feas.witness, feas.reason)
            elif feas.status is FeasibilityStatus.INFEASIBLE:
                feasibility[key] = ("infeasible", None, feas.reason)
                promoted = plan.promote(rp.property_set)
                if promoted is not None:
                    work.append(promoted)
            else:
                feasibility[key] = (FEAS_UNKNOWN, None, feas.reason)

    critical: list[CriticalPath] = []
    rank_no = 0
    for rp in plan.ordered:
        key = rp.path.blocks
        status, witness, reason = feasibility.get(key, (FEAS_NOT_CHECKED, None, ""))
        if status == "infeasible":
            continue  # proven-impossible paths never reach the report
        rank_no += 1
        critical.append(CriticalPath(
            rank=rank_no,
            ranked=rp,
            call_sequence=to_call_sequence(rp.path, contract, witness),
            feasibility=status,
            witness=witness,
            gas=estimator.path_gas(rp.path),
            source_lines=_source_lines(rp.path, cfg, contract.source_map),
        ))

    elapsed_ms = int((time.monotonic() - started) * 1000)
    violation_counts: dict[str, int] = {}
    for cp in critical:
        for v in cp.ranked.violations:
            violation_counts[v.property.value] = violation_counts.get(v.property.value, 0) + 1

    statistics = {
        "total_time_ms": elapsed_ms if config.include_timing else None,
        "paths_enumerated": len(all_paths),
        "paths_money_related": len(money_paths),
        "paths_gated": len(plan.admitted),
        "paths_symbolically_executed": executed,
        "timed_out": timed_out,
        "violation_counts": dict(sorted(violation_counts.items())),
        "max_gas": {
            "gas": max_gas,
            "call_sequence": (to_call_sequence(max_gas_path, contract)
                              if max_gas_path else []),
        },
        "payable_entries": sorted(
            (_function_display(contract, name) for name in payable), key=str),
    }

    block_labels = {b.id: b.label for b in cfg.blocks.values()}
    return Report(
        contract_name=contract.name,
        statistics=statistics,
        critical_paths=critical,
        diagnostics=diagnostics,
        config_echo=_config_echo(config),
        block_labels=block_labels,
    )


def dump_cfg_dot(contract: ContractCode) -> str:
    return to_dot(build_cfg(disassemble(contract.runtime_code)))


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def to_json(report: Report) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


_HTML_STYLE = """
body { font-family: sans-serif; margin: 2em; }
table { border-collapse: collapse; margin: 1em 0; }
td, th { border: 1px solid #999; padding: 0.3em 0.8em; text-align: left; }
.violation { color: #a00; font-weight: bold; }
.path { border: 1px solid #ccc; margin: 1em 0; padding: 0.5em 1em; }
.blocks { color: #666; font-size: smaller; }
mark { background: #ffd; }
pre.source { background: #f6f6f6; padding: 0.5em; }
"""


def to_html(report: Report, source: str | None = None) -> str:
    """Single self-contained page: statistics, then the ranked path list."""
    e = html.escape
    doc = ["<!DOCTYPE html>", "<html lang=\"en\">", "<head>",
           "<meta charset=\"utf-8\">",
           f"<title>evmscope report: {e(report.contract_name)}</title>",
           f"<style>{_HTML_STYLE}</style>", "</head>", "<body>"]
    doc.append(f"<h1>evmscope report: {e(report.contract_name)}</h1>")
    doc.append(f"<p>Gas schedule: {e(isa.GAS_SCHEDULE_NAME)} (static lower-bound estimate)</p>")

    doc.append("<h2>Statistics</h2><table>")
    stats = report.statistics
    rows = [
        ("Paths enumerated", stats["paths_enumerated"]),
        ("Money-related paths", stats["paths_money_related"]),
        ("Paths past the gate", stats["paths_gated"]),
        ("Paths symbolically executed", stats["paths_symbolically_executed"]),
        ("Timed out", stats["timed_out"]),
        ("Max gas", stats["max_gas"]["gas"]),
    ]
    if stats["total_time_ms"] is not None:
        rows.insert(0, ("Total time (ms)", stats["total_time_ms"]))
    for label, value in rows:
        doc.append(f"<tr><th>{e(str(label))}</th><td>{e(str(value))}</td></tr>")
    for prop, count in stats["violation_counts"].items():
        doc.append(f"<tr><th>Warnings: {e(prop)}</th><td>{e(str(count))}</td></tr>")
    doc.append("</table>")

    doc.append("<h2>Critical paths</h2>")
    if not report.critical_paths:
        doc.append("<p>No property-violating paths.</p>")
    source_lines = source.splitlines() if source else []
    for cp in report.critical_paths:
        doc.append('<div class="path">')
        seq = " &rarr; ".join(e(s) for s in cp.call_sequence)
        doc.append(f"<h3>#{cp.rank} (score {float(cp.ranked.score):g}): {seq}</h3>")
        for v in cp.ranked.violations:
            ev = ", ".join(f"{k}={v2}" for k, v2 in sorted(
                ((k, sorted(x) if isinstance(x, (set, frozenset)) else x)
                 for k, x in v.evidence.items())))
            doc.append(f'<p class="violation">{e(v.property.value)}: {e(ev)}</p>')
        doc.append(f"<p>Feasibility: {e(cp.feasibility)}; gas: {cp.gas}; "
                   f"length: {cp.ranked.length}</p>")
        labels = " ".join(e(report.block_labels.get(b, str(b)))
                          for b in cp.ranked.path.blocks)
        doc.append(f'<p class="blocks">{labels}</p>')
        if cp.source_lines and source_lines:
            doc.append('<pre class="source">')
            for n in cp.source_lines:
                if 1 <= n <= len(source_lines):
                    doc.append(f"<mark>{n:4}: {e(source_lines[n - 1])}</mark>")
            doc.append("</pre>")
        doc.append("</div>")
    doc.append("</body>")
    doc.append("</html>")
    return "\n".join(doc) + "\n"


def emit(report: Report, fmt: str, out_base: str | Path,
         source: str | None = None) -> list[Path]:
    """Write the report in the requested format(s); returns written paths."""
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        path = out_base.with_suffix(".json")
        path.write_text(to_json(report))
        written.append(path)
    if fmt in ("html", "both"):
        path = out_base.with_suffix(".html")
        path.write_text(to_html(report, source))
        written.append(path)
    return written
