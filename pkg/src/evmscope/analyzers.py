"""Per-path property checkers: transfer limit, non-existing address, guarded
suicide, black hole, and static gas estimation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from . import isa
from .cfg import Cfg
from .disasm import Instruction
from .pathgen import ProgramPath
from .registry import AddressRegistry, RegistryUnavailable
from .symexec import (
    ExternalRecord,
    SymbolicState,
    UNKNOWN_AMOUNT,
    Word,
    concretize,
    contains_op,
    contains_var_prefix,
    walk,
)

ADDRESS_MASK = (1 << 160) - 1


class PropertyId(enum.Enum):
    TRANSFER_LIMIT = "transfer_limit"
    NON_EXISTING_ADDRESS = "non_existing_address"
    GUARD_SUICIDE = "guard_suicide"
    BLACK_HOLE = "black_hole"
    MAX_GAS = "max_gas"  # informational only, never a violation


@dataclass(frozen=True)
class PropertyViolation:
    property: PropertyId
    evidence: dict

    def as_dict(self) -> dict:
        ev = {}
        for key, value in sorted(self.evidence.items()):
            if isinstance(value, (set, frozenset)):
                ev[key] = sorted(value)
            else:
                ev[key] = value
        return {"property": self.property.value, "evidence": ev}


@dataclass
class TransferLedger:
    """Remaining transfer allowance along one path; only ever decreases."""
    limit: int
    remaining: int = field(init=False)
    exact: bool = field(init=False, default=True)

    def __post_init__(self) -> None:
        self.remaining = self.limit

    def spend(self, amount: int | str) -> None:
        if amount == UNKNOWN_AMOUNT:
            # an amount we cannot bound may always break the limit
            self.exact = False
            return
        assert isinstance(amount, int) and amount >= 0
        self.remaining -= amount

    @property
    def violated(self) -> bool:
        return self.remaining < 0 or not self.exact


def check_transfer_limit(path: ProgramPath, limit: int,
                         transfers: list[tuple[ExternalRecord, int | str]],
                         ) -> PropertyViolation | None:
    """Violation iff the summed outgoing amounts can exceed the limit."""
    ledger = TransferLedger(limit)
    for _rec, amount in transfers:
        if isinstance(amount, int) and amount == 0:
            continue
        ledger.spend(amount)
    if not ledger.violated:
        return None
    return PropertyViolation(PropertyId.TRANSFER_LIMIT, {
        "limit": limit,
        "remaining": ledger.remaining if ledger.exact else UNKNOWN_AMOUNT,
    })


def check_address_existence(path: ProgramPath,
                            records: list[ExternalRecord],
                            registry: AddressRegistry,
                            ) -> tuple[list[PropertyViolation], list[str]]:
    """Flag transfers whose constant 160-bit target is not registered.

    Non-constant targets are skipped: there is no evidence either way.  A
    registry outage degrades to a warning, never a violation.
    """
    violations: list[PropertyViolation] = []
    warnings: list[str] = []
    seen: set[tuple[int, int]] = set()
    for rec in records:
        if rec.kind not in ("CALL", "CALLCODE", "SELFDESTRUCT"):
            continue
        resolved = concretize(rec.target)
        if resolved is None:
            continue
        address = resolved & ADDRESS_MASK
        if (rec.offset, address) in seen:
            continue
        seen.add((rec.offset, address))
        try:
            if not registry.exists(address):
                violations.append(PropertyViolation(PropertyId.NON_EXISTING_ADDRESS, {
                    "address": f"0x{address:040x}",
                    "instruction_offset": rec.offset,
                    "note": ("sending to an unregistered address loses the funds; "
                             "first use also costs at least 25,000 extra to create "
                             "the account"),
                }))
        except RegistryUnavailable as exc:
            warnings.append(
                f"address registry unavailable for 0x{address:040x} at offset "
                f"{rec.offset}: {exc}")
    return violations, warnings


def _is_ownership_guard(cond: Word) -> bool:
    """A comparison with the caller on one side and a storage read on the other."""
    for node in walk(cond):
        if node.op not in ("EQ", "LT", "GT", "SLT", "SGT"):
            continue
        left, right = node.args
        for a, b in ((left, right), (right, left)):
            caller_side = contains_var_prefix(a, "CALLER")
            storage_side = (contains_op(b, "sload")
                            or contains_var_prefix(b, "STORAGE@"))
            if caller_side and storage_side:
                return True
    return False


def _is_time_guard(cond: Word) -> bool:
    return (contains_var_prefix(cond, "TIMESTAMP")
            or contains_var_prefix(cond, "NUMBER"))


def check_guard_suicide(path: ProgramPath, state: SymbolicState,
                        time_guard_suffices: bool = False,
                        ) -> PropertyViolation | None:
    """Violation when a self-destruct is reachable without an ownership guard.

    A date/height constraint is recorded but by itself does not make the
    destruction safe (anyone can wait); set `time_guard_suffices` to accept
    it as sufficient.
    """
    destructs = [r for r in state.records if r.kind == "SELFDESTRUCT" and not r.reverted]
    if not destructs:
        return None
    has_ownership = any(_is_ownership_guard(c) for c in state.path_condition)
    has_time = any(_is_time_guard(c) for c in state.path_condition)
    if has_ownership or (time_guard_suffices and has_time):
        return None
    missing = {"ownership"}
    if not has_time:
        missing.add("time_or_height")
    return PropertyViolation(PropertyId.GUARD_SUICIDE, {
        "selfdestruct_offset": destructs[0].offset,
        "missing_guards": missing,
        "present_guards": {"time_or_height"} if has_time else set(),
    })


# The template the compiler inserts in front of a non-payable function body.
_PREAMBLE = ("CALLVALUE", "ISZERO", "PUSH", "JUMPI", "PUSH1", "DUP1", "REVERT")


def _matches_preamble(instructions: list[Instruction], start: int) -> bool:
    seq = instructions[start:start + len(_PREAMBLE)]
    if len(seq) < len(_PREAMBLE):
        return False
    for ins, expected in zip(seq, _PREAMBLE):
        name = ins.mnemonic
        if expected == "PUSH":
            if name not in ("PUSH1", "PUSH2"):  # jump-target width varies
                return False
        elif expected == "PUSH1":
            if name not in ("PUSH1", "PUSH2") or ins.immediate != 0:
                return False
        elif name != expected:
            return False
    return True


def _unconditional_revert(instructions: list[Instruction], start: int) -> bool:
    """A stub that rejects every call can never receive Ether."""
    for ins in instructions[start:start + 8]:
        name = ins.mnemonic
        if name == "REVERT":
            return True
        if name in ("JUMP", "JUMPI", "CALLVALUE", "STOP", "RETURN", "SELFDESTRUCT",
                    "CALL", "INVALID"):
            return False
    return False


def detect_payable_entries(cfg: Cfg, instructions: list[Instruction],
                           ) -> tuple[set[int | str], dict[int | str, dict]]:
    """Classify each function entry as payable or not.

    Non-payable entries carry the compiler's CALLVALUE-check template right
    after the entry JUMPDEST; an entry that unconditionally reverts cannot
    receive Ether either.  Everything else is treated as payable.
    """
    index_by_offset = {ins.offset: i for i, ins in enumerate(instructions)}
    payable: set[int | str] = set()
    details: dict[int | str, dict] = {}
    for name, entry_block in cfg.function_entries.items():
        block = cfg.blocks[entry_block]
        idx = index_by_offset[block.first_offset]
        if block.instructions[0].mnemonic == "JUMPDEST":
            idx += 1
        if _matches_preamble(instructions, idx):
            start = instructions[idx].offset
            end = instructions[idx + len(_PREAMBLE) - 1].offset
            details[name] = {"payable": False, "preamble_span": (start, end)}
        elif _unconditional_revert(instructions, idx):
            details[name] = {"payable": False, "preamble_span": None}
        else:
            payable.add(name)
            details[name] = {"payable": True, "preamble_span": None}
    return payable, details


def check_black_hole(cfg: Cfg, paths: Iterable[ProgramPath],
                     payable_entries: set[int | str],
                     ) -> list[tuple[ProgramPath, PropertyViolation]]:
    """For a contract that can never send Ether out, flag every path that
    can take Ether in.

    A path takes Ether in when some call segment enters a payable entry and
    does not revert (a reverted transaction returns the value).
    """
    if cfg.money_blocks:
        raise ValueError("black-hole analysis applies only to contracts "
                         "without money-related opcodes")
    if not payable_entries:
        return []
    out = []
    for path in paths:
        entry = None
        for segment, (sel, _via) in zip(path.segments(), path.functions):
            if sel is None or sel not in payable_entries:
                continue
            if cfg.blocks[segment[-1]].last.mnemonic == "REVERT":
                continue
            entry = sel
            break
        if entry is None:
            continue
        display = entry if isinstance(entry, str) else f"0x{entry:08x}"
        out.append((path, PropertyViolation(PropertyId.BLACK_HOLE, {
            "payable_entry": display,
        })))
    return out


class GasEstimator:
    """Static per-path gas: the sum of every instruction's scheduled cost."""

    def __init__(self, cfg: Cfg, gas_table: isa.GasTable = isa.DEFAULT_GAS):
        self.block_costs = {
            block_id: sum(gas_table.cost(ins.info.byte_value)
                          for ins in block.instructions)
            for block_id, block in cfg.blocks.items()
        }

    def path_gas(self, path: ProgramPath) -> int:
        return sum(self.block_costs[b] for b in path.blocks)


def estimate_gas(instructions: Iterable[Instruction],
                 gas_table: isa.GasTable = isa.DEFAULT_GAS) -> int:
    return sum(gas_table.cost(ins.info.byte_value) for ins in instructions)
