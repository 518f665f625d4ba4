import json
from html.parser import HTMLParser
from pathlib import Path

from evmscope.cli import main as cli_main
from evmscope.keccak import selector
from evmscope.pathgen import PathBounds, enumerate_paths
from evmscope.report import (
    AnalysisConfig,
    analyze,
    to_call_sequence,
    to_html,
    to_json,
)

from conftest import FIXTURES, REGISTRY_TXT, get_cfg, get_contract

VOID_ELEMENTS = {"meta", "br", "img", "hr", "input", "link"}


class StrictHtmlChecker(HTMLParser):
    def __init__(self):
        super().__init__()
        self.stack = []
        self.errors = []
        self.saw_doctype = False

    def handle_decl(self, decl):
        if decl.lower().startswith("doctype html"):
            self.saw_doctype = True

    def handle_starttag(self, tag, attrs):
        if tag not in VOID_ELEMENTS:
            self.stack.append(tag)

    def handle_endtag(self, tag):
        if not self.stack or self.stack[-1] != tag:
            self.errors.append(f"unbalanced </{tag}>")
        else:
            self.stack.pop()


def assert_valid_html(text: str) -> None:
    checker = StrictHtmlChecker()
    checker.feed(text)
    checker.close()
    assert checker.saw_doctype, "missing doctype"
    assert checker.errors == [], checker.errors
    assert checker.stack == [], f"unclosed tags: {checker.stack}"


def _config(**kwargs) -> AnalysisConfig:
    kwargs.setdefault("registry_fixture", str(REGISTRY_TXT))
    kwargs.setdefault("include_timing", False)
    return AnalysisConfig(**kwargs)


# -- end-to-end per fixture -----------------------------------------------------

def test_toydao_top_path_is_double_withdraw():
    report = analyze(get_contract("toydao"),
                     _config(bounds=PathBounds(call_depth=2), transfer_limit=30))
    assert report.statistics["violation_counts"] == {"transfer_limit": 4}
    top = report.critical_paths[0]
    assert top.call_sequence == ["withdraw()", "withdraw()"]
    assert top.ranked.violations[0].property.value == "transfer_limit"


def test_enjinbuyer_non_existing_address():
    report = analyze(get_contract("enjinbuyer"), _config())
    assert set(report.statistics["violation_counts"]) == {"non_existing_address"}
    assert all("purchase_tokens()" in cp.call_sequence for cp in report.critical_paths)


def test_bitway_black_hole_warning():
    report = analyze(get_contract("bitway"), _config())
    assert set(report.statistics["violation_counts"]) == {"black_hole"}


def test_statistics_consistency_chain():
    for name in ("toydao", "bitway", "enjinbuyer", "problematic", "micarstoken"):
        report = analyze(get_contract(name), _config(transfer_limit=30))
        s = report.statistics
        assert (s["paths_symbolically_executed"] <= s["paths_gated"]
                <= s["paths_money_related"] <= s["paths_enumerated"]), name


def test_no_infeasible_path_in_report():
    for name in ("bitway", "problematic"):
        report = analyze(get_contract(name), _config(bounds=PathBounds(call_depth=1)))
        assert all(cp.feasibility != "infeasible" for cp in report.critical_paths)


def test_violation_evidence_matches_property():
    expectations = {
        "transfer_limit": {"limit", "remaining"},
        "non_existing_address": {"address", "instruction_offset", "note"},
        "guard_suicide": {"selfdestruct_offset", "missing_guards", "present_guards"},
        "black_hole": {"payable_entry"},
    }
    for name in ("toydao", "enjinbuyer", "bitway", "problematic"):
        report = analyze(get_contract(name),
                         _config(bounds=PathBounds(call_depth=2), transfer_limit=30))
        for cp in report.critical_paths:
            for violation in cp.ranked.violations:
                assert set(violation.evidence) == expectations[violation.property.value]


def test_disable_flag_switches_off_analyzer():
    from evmscope.analyzers import PropertyId
    report = analyze(get_contract("enjinbuyer"),
                     _config(disabled={PropertyId.NON_EXISTING_ADDRESS}))
    assert report.statistics["violation_counts"] == {}


# -- call sequences ---------------------------------------------------------------

def test_call_sequence_fallback_rendering():
    contract = get_contract("fallback_only")
    cfg = get_cfg("fallback_only")
    path = next(iter(enumerate_paths(cfg, PathBounds(call_depth=1))))
    assert to_call_sequence(path, contract) == ["<fallback>"]


def test_call_sequence_with_witness_value():
    contract = get_contract("bitway")
    cfg = get_cfg("bitway")
    ct_sel = selector("createTokens()")
    path = next(p for p in enumerate_paths(cfg, PathBounds(call_depth=1))
                if p.functions[0][0] == ct_sel
                and cfg.blocks[p.blocks[-1]].last.mnemonic == "STOP")
    seq = to_call_sequence(path, contract, witness={"CALLVALUE#1": 301})
    assert seq == ["createTokens() {value: 301}"]


def test_call_sequence_decodes_calldata_arguments():
    contract = get_contract("problematic")
    cfg = get_cfg("problematic")
    path = next(p for p in enumerate_paths(cfg, PathBounds(call_depth=1))
                if p.money_related)
    seq = to_call_sequence(path, contract,
                           witness={"CALLDATA#1@4": 777, "CALLVALUE#1": 0})
    assert seq == ["destroycontract(address) args=[777]"]


def test_call_sequence_unknown_selector_rendered_as_hex():
    contract = get_contract("toydao")
    contract_stripped = type(contract)(
        runtime_code=contract.runtime_code, name="anon")
    cfg = get_cfg("toydao")
    path = next(p for p in enumerate_paths(cfg, PathBounds(call_depth=1))
                if p.money_related)
    seq = to_call_sequence(path, contract_stripped)
    assert seq == [f"0x{selector('withdraw()'):08x}"]


def test_reentrant_segment_gets_marker():
    contract = get_contract("toydao")
    cfg = get_cfg("toydao")
    path = next(p for p in enumerate_paths(cfg, PathBounds(call_depth=2),
                                           include_reentrant=True)
                if any(via == "external_callback" for _s, via in p.functions))
    seq = to_call_sequence(path, contract)
    assert any(part.startswith("↩") for part in seq)


# -- emission -----------------------------------------------------------------------

def test_json_matches_golden_byte_for_byte():
    config = _config(bounds=PathBounds(call_depth=2), transfer_limit=30)
    report = analyze(get_contract("toydao"), config)
    golden = (FIXTURES / "golden" / "toydao_report.json").read_text()
    assert to_json(report) == golden


def test_json_empty_report_is_valid():
    report = analyze(get_contract("safe_token_0"), _config())
    doc = json.loads(to_json(report))
    assert doc["schema"] == 1
    assert doc["critical_paths"] == []
    assert doc["statistics"]["violation_counts"] == {}


def test_html_well_formed_for_all_named_fixtures():
    for name in ("toydao", "bitway", "enjinbuyer", "problematic",
                 "micarstoken", "gigstoken", "safe_token_0"):
        contract = get_contract(name)
        report = analyze(contract, _config(bounds=PathBounds(call_depth=2),
                                           transfer_limit=30))
        assert_valid_html(to_html(report, contract.source))


def test_html_highlights_source_lines():
    contract = get_contract("toydao")
    report = analyze(contract, _config(bounds=PathBounds(call_depth=2),
                                       transfer_limit=30))
    html_text = to_html(report, contract.source)
    assert "<mark>" in html_text
    assert "msg.sender.call.value" in html_text


# -- CLI ----------------------------------------------------------------------------

def test_cli_exit_zero_without_violations(tmp_path, capsys):
    rc = cli_main(["analyze", str(FIXTURES / "safe_token_0.json"),
                   "--registry-fixture", str(REGISTRY_TXT), "--no-timing"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["contract"] == "safe_token_0"


def test_cli_exit_two_with_violations(tmp_path):
    out = tmp_path / "report"
    rc = cli_main(["analyze", str(FIXTURES / "toydao.json"),
                   "--call-bound", "2", "--transfer-limit", "30",
                   "--registry-fixture", str(REGISTRY_TXT),
                   "--out", str(out), "--output", "both"])
    assert rc == 2
    assert (tmp_path / "report.json").exists()
    assert (tmp_path / "report.html").exists()
    assert_valid_html((tmp_path / "report.html").read_text())


def test_cli_exit_one_on_bad_input(tmp_path):
    bad = tmp_path / "bad.hex"
    bad.write_text("60 0g")
    assert cli_main(["analyze", str(bad)]) == 1


def test_cli_exit_one_on_bad_config(tmp_path):
    assert cli_main(["analyze", str(FIXTURES / "toydao.json"),
                     "--call-bound", "0"]) == 1
    assert cli_main(["analyze", str(FIXTURES / "toydao.json"),
                     "--alpha", "nosuch=3"]) == 1
    assert cli_main(["analyze", str(FIXTURES / "toydao.json"),
                     "--epsilon", "0"]) == 1


def test_cli_dump_cfg(tmp_path):
    dot = tmp_path / "graph.dot"
    rc = cli_main(["analyze", str(FIXTURES / "toydao.json"),
                   "--registry-fixture", str(REGISTRY_TXT),
                   "--dump-cfg", str(dot), "--out", str(tmp_path / "r")])
    assert rc in (0, 2)
    text = dot.read_text()
    assert text.startswith("digraph")
    assert "Node_112_162" in text


def test_cli_alpha_and_threshold_overrides(tmp_path, capsys):
    rc = cli_main(["analyze", str(FIXTURES / "problematic.json"),
                   "--call-bound", "1",
                   "--registry-fixture", str(REGISTRY_TXT),
                   "--alpha", "guard_suicide=27", "--threshold", "26",
                   "--no-timing"])
    assert rc == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["config"]["alpha"]["guard_suicide"] == 27.0
    assert doc["statistics"]["paths_gated"] >= 1


def test_cli_config_file_ranking_section(tmp_path, capsys):
    ini = tmp_path / "scope.ini"
    ini.write_text("[ranking]\nthreshold = 3\nepsilon = 2\nalpha.black_hole = 24\n")
    rc = cli_main(["analyze", str(FIXTURES / "bitway.json"),
                   "--registry-fixture", str(REGISTRY_TXT),
                   "--config", str(ini), "--call-bound", "1", "--no-timing"])
    assert rc == 2
    doc = json.loads(capsys.readouterr().out)
    assert doc["config"]["alpha"]["black_hole"] == 24.0
    assert doc["config"]["threshold"] == 3.0
    assert doc["config"]["epsilon"] == 2.0


def test_cli_gas_schedule_override(tmp_path, capsys):
    table = tmp_path / "gas.txt"
    table.write_text("CALL 40\n")
    rc = cli_main(["analyze", str(FIXTURES / "toydao.json"),
                   "--registry-fixture", str(REGISTRY_TXT),
                   "--gas-schedule", str(table), "--no-timing"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["statistics"]["max_gas"]["gas"] > 0


def test_batch_mode_reports_and_summary(tmp_path):
    out = tmp_path / "reports"
    rc = cli_main(["batch", str(FIXTURES), "--registry-fixture", str(REGISTRY_TXT),
                   "--out", str(out), "--call-bound", "2"])
    assert rc == 2
    reports = sorted(p.name for p in out.glob("*.json"))
    assert "toydao.json" in reports
    assert "corpus_summary.json" in reports
    summary = json.loads((out / "corpus_summary.json").read_text())
    assert summary["totals"].get("black_hole", 0) > 0
    assert len(summary["contracts"]) == 31


def test_workers_flag_gives_same_results(tmp_path):
    base = analyze(get_contract("bitway"),
                   _config(bounds=PathBounds(call_depth=1)))
    parallel = analyze(get_contract("bitway"),
                       _config(bounds=PathBounds(call_depth=1), workers=4))
    assert to_json(base) == to_json(parallel)
