import time

import pytest

from evmscope.cfg import build_cfg
from evmscope.disasm import disassemble, parse_hex
from evmscope.keccak import selector
from evmscope.pathgen import (
    PathBounds,
    VIA_EXTERNAL_CALLBACK,
    VIA_NEW_TRANSACTION,
    enumerate_paths,
    filter_money,
)

from conftest import get_cfg


def _paths(name, **bounds):
    cfg = get_cfg(name)
    return list(enumerate_paths(cfg, PathBounds(**bounds)))


def test_bounds_must_be_positive():
    with pytest.raises(ValueError):
        PathBounds(call_depth=0)
    with pytest.raises(ValueError):
        PathBounds(loop_bound=-1)
    with pytest.raises(ValueError):
        PathBounds(wall_time=0)


def test_toydao_six_paths_at_bound_one():
    paths = _paths("toydao", call_depth=1)
    assert len(paths) == 6
    assert all(p.call_count == 1 for p in paths)


def test_toydao_money_filter_bound_one():
    cfg = get_cfg("toydao")
    paths = _paths("toydao", call_depth=1)
    money = list(filter_money(iter(paths), cfg))
    assert len(money) == 2
    assert all(112 in p.blocks for p in money)


def test_toydao_1296_paths_at_bound_four():
    assert len(_paths("toydao", call_depth=4)) == 1296


def test_single_stop_one_path_any_bound():
    cfg = build_cfg(disassemble(bytes([0x00])))
    for depth in (1, 2, 5):
        paths = list(enumerate_paths(cfg, PathBounds(call_depth=depth)))
        assert len(paths) == 1
        assert paths[0].call_count == depth


def test_filter_output_is_subset_of_enumeration():
    cfg = get_cfg("toydao")
    paths = _paths("toydao", call_depth=2)
    kept = set(p.blocks for p in filter_money(iter(paths), cfg))
    everything = set(p.blocks for p in paths)
    assert kept <= everything


def test_money_flag_matches_block_contents():
    cfg = get_cfg("toydao")
    money_blocks = cfg.money_blocks
    for p in _paths("toydao", call_depth=2):
        assert p.money_related == any(b in money_blocks for b in p.blocks)


def test_no_path_exceeds_bounds():
    bounds = PathBounds(call_depth=3, loop_bound=5, max_blocks=60)
    for name in ("toydao", "bitway", "enjinbuyer"):
        for p in enumerate_paths(get_cfg(name), bounds):
            assert p.call_count <= bounds.call_depth
            assert len(p.blocks) <= bounds.max_blocks


def test_prefix_extension_against_brute_force():
    """Every (k-1)-bound path extended by one transaction appears at bound k,
    and bound-k paths truncated at the last boundary are bound-(k-1) paths."""
    cfg = get_cfg("toydao")
    shorter = {p.blocks for p in enumerate_paths(cfg, PathBounds(call_depth=1))}
    longer = {p.blocks for p in enumerate_paths(cfg, PathBounds(call_depth=2))}
    one_txn = shorter  # brute-force oracle: all single-transaction walks
    for long_path in longer:
        boundary = max(i for i, b in enumerate(long_path) if b == cfg.root)
        prefix, suffix = long_path[:boundary], long_path[boundary:]
        assert prefix in shorter
        assert suffix in one_txn
    for p in shorter:
        extensions = {p + q for q in one_txn}
        assert extensions <= longer


def test_loop_bound_enforced():
    # 0: JUMPDEST; PUSH1 0; PUSH1 0; JUMPI(->0); STOP  -- self-loop via cond jump
    code = parse_hex("5b600160005700")
    # taken branch loops back to 0; fallthrough stops
    cfg = build_cfg(disassemble(code))
    paths = list(enumerate_paths(cfg, PathBounds(call_depth=1, loop_bound=5)))
    # iterations 0..5 of the back-edge, each ending at STOP
    assert len(paths) == 6
    longest = max(paths, key=lambda p: len(p.blocks))
    back_edge_count = sum(1 for b in longest.blocks if b == 0) - 1
    assert back_edge_count == 5


def test_block_cap_truncates_path():
    code = parse_hex("5b600160005700")
    cfg = build_cfg(disassemble(code))
    paths = list(enumerate_paths(cfg, PathBounds(call_depth=4, max_blocks=5)))
    assert paths
    for p in paths:
        assert len(p.blocks) <= 5
    assert any(p.block_capped for p in paths)


def test_wall_time_truncation_sets_flag():
    cfg = get_cfg("toydao")
    enum = enumerate_paths(cfg, PathBounds(call_depth=4),
                           deadline=time.monotonic() - 1)
    paths = list(enum)
    assert enum.timed_out
    assert len(paths) < 1296


def test_functions_recorded_per_segment():
    cfg = get_cfg("toydao")
    wsel = selector("withdraw()")
    for p in enumerate_paths(cfg, PathBounds(call_depth=2)):
        assert len(p.functions) == p.call_count
        assert p.functions[0][1] == "initial"
        assert all(via == VIA_NEW_TRANSACTION for _s, via in p.functions[1:])
    withdraw_paths = [p for p in enumerate_paths(cfg, PathBounds(call_depth=1))
                      if 112 in p.blocks]
    assert all(p.functions[0][0] == wsel for p in withdraw_paths)


def test_reentrant_unfolding_is_optional():
    cfg = get_cfg("toydao")
    plain = list(enumerate_paths(cfg, PathBounds(call_depth=2)))
    reentrant = list(enumerate_paths(cfg, PathBounds(call_depth=2),
                                     include_reentrant=True))
    assert len(plain) == 36
    assert len(reentrant) > len(plain)
    callback_paths = [p for p in reentrant
                      if any(via == VIA_EXTERNAL_CALLBACK for _s, via in p.functions)]
    assert callback_paths
    # a callback re-entry truncates the withdraw body at the CALL block
    assert all(p.blocks[p.blocks.index(112) + 1] == cfg.root for p in callback_paths)


def test_passthrough_for_moneyless_contract():
    cfg = get_cfg("bitway")
    assert not cfg.money_blocks
    paths = list(enumerate_paths(cfg, PathBounds(call_depth=1)))
    ct = selector("createTokens()")
    kept = list(filter_money(iter(paths), cfg, payable_entries={ct, "<fallback>"}))
    assert kept
    assert all(any(sel in (ct, "<fallback>") for sel, _ in p.functions) for p in kept)
    none_kept = list(filter_money(iter(paths), cfg, payable_entries=set()))
    assert none_kept == []
