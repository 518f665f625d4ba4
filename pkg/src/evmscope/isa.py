"""EVM instruction-set table: mnemonics, immediates, stack effects, gas, classification.

The table is frozen at the Byzantium/Constantinople era (no PUSH0, no
SHL/SHR-free Constantinople subset removed): the bundled fixtures are
2017-2018 compiler output.  Gas values are the static per-opcode charges of
that fee schedule; memory expansion, cold/warm access and refunds are out of
scope, so every figure is a static lower bound.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Kind(enum.Enum):
    TERMINAL = "terminal"
    JUMP = "jump"
    COND_JUMP = "cond_jump"
    JUMP_DEST = "jump_dest"
    CALL = "call"
    MONEY_RELATED = "money_related"
    ENV_READ = "env_read"
    ARITHMETIC = "arithmetic"
    OTHER = "other"


# The four opcodes through which Ether can leave an account.
MONEY_OPCODES = frozenset({0xF0, 0xF1, 0xF4, 0xFF})  # CREATE, CALL, DELEGATECALL, SELFDESTRUCT

# Opcodes that halt execution of the current code.
TERMINAL_OPCODES = frozenset({0x00, 0xF3, 0xFD, 0xFF, 0xFE})  # STOP, RETURN, REVERT, SELFDESTRUCT, INVALID

# Opcodes that invoke foreign code; the instruction after them starts a new
# basic block and the block gets a callback edge to the CFG root.
CALL_OPCODES = frozenset({0xF0, 0xF1, 0xF2, 0xF4, 0xFA})  # CREATE, CALL, CALLCODE, DELEGATECALL, STATICCALL


@dataclass(frozen=True)
class OpcodeInfo:
    byte_value: int
    mnemonic: str
    immediate_bytes: int
    stack_pops: int
    stack_pushes: int
    static_gas: int
    kind: Kind

    @property
    def is_money_related(self) -> bool:
        return self.byte_value in MONEY_OPCODES and self.mnemonic != "INVALID"

    @property
    def is_terminal(self) -> bool:
        return self.byte_value in TERMINAL_OPCODES or self.mnemonic == "INVALID"

    @property
    def is_call(self) -> bool:
        return self.byte_value in CALL_OPCODES and self.mnemonic != "INVALID"

    @property
    def is_push(self) -> bool:
        return 0x60 <= self.byte_value <= 0x7F and self.immediate_bytes > 0

    @property
    def size(self) -> int:
        return 1 + self.immediate_bytes


# Static gas tiers of the era fee schedule.
G_ZERO = 0
G_BASE = 2
G_VERYLOW = 3
G_LOW = 5
G_MID = 8
G_HIGH = 10
G_JUMPDEST = 1
G_SLOAD = 200
G_SSTORE = 5000      # reset charge; the 20000 set charge is value-dependent
G_BALANCE = 400
G_SHA3 = 30
G_CALL = 700
G_EXTCODE = 700
G_CREATE = 32000
G_SELFDESTRUCT = 5000
G_LOG = 375
G_EXP = 10
G_BLOCKHASH = 20

GAS_SCHEDULE_NAME = "byzantium-static"

# (byte, mnemonic, pops, pushes, gas, kind)
_DEFS = [
    (0x00, "STOP", 0, 0, G_ZERO, Kind.TERMINAL),
    (0x01, "ADD", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x02, "MUL", 2, 1, G_LOW, Kind.ARITHMETIC),
    (0x03, "SUB", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x04, "DIV", 2, 1, G_LOW, Kind.ARITHMETIC),
    (0x05, "SDIV", 2, 1, G_LOW, Kind.ARITHMETIC),
    (0x06, "MOD", 2, 1, G_LOW, Kind.ARITHMETIC),
    (0x07, "SMOD", 2, 1, G_LOW, Kind.ARITHMETIC),
    (0x08, "ADDMOD", 3, 1, G_MID, Kind.ARITHMETIC),
    (0x09, "MULMOD", 3, 1, G_MID, Kind.ARITHMETIC),
    (0x0A, "EXP", 2, 1, G_EXP, Kind.ARITHMETIC),
    (0x0B, "SIGNEXTEND", 2, 1, G_LOW, Kind.ARITHMETIC),
    (0x10, "LT", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x11, "GT", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x12, "SLT", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x13, "SGT", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x14, "EQ", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x15, "ISZERO", 1, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x16, "AND", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x17, "OR", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x18, "XOR", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x19, "NOT", 1, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x1A, "BYTE", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x1B, "SHL", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x1C, "SHR", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x1D, "SAR", 2, 1, G_VERYLOW, Kind.ARITHMETIC),
    (0x20, "SHA3", 2, 1, G_SHA3, Kind.ARITHMETIC),
    (0x30, "ADDRESS", 0, 1, G_BASE, Kind.ENV_READ),
    (0x31, "BALANCE", 1, 1, G_BALANCE, Kind.ENV_READ),
    (0x32, "ORIGIN", 0, 1, G_BASE, Kind.ENV_READ),
    (0x33, "CALLER", 0, 1, G_BASE, Kind.ENV_READ),
    (0x34, "CALLVALUE", 0, 1, G_BASE, Kind.ENV_READ),
    (0x35, "CALLDATALOAD", 1, 1, G_VERYLOW, Kind.ENV_READ),
    (0x36, "CALLDATASIZE", 0, 1, G_BASE, Kind.ENV_READ),
    (0x37, "CALLDATACOPY", 3, 0, G_VERYLOW, Kind.ENV_READ),
    (0x38, "CODESIZE", 0, 1, G_BASE, Kind.ENV_READ),
    (0x39, "CODECOPY", 3, 0, G_VERYLOW, Kind.ENV_READ),
    (0x3A, "GASPRICE", 0, 1, G_BASE, Kind.ENV_READ),
    (0x3B, "EXTCODESIZE", 1, 1, G_EXTCODE, Kind.ENV_READ),
    (0x3C, "EXTCODECOPY", 4, 0, G_EXTCODE, Kind.ENV_READ),
    (0x3D, "RETURNDATASIZE", 0, 1, G_BASE, Kind.ENV_READ),
    (0x3E, "RETURNDATACOPY", 3, 0, G_VERYLOW, Kind.ENV_READ),
    (0x40, "BLOCKHASH", 1, 1, G_BLOCKHASH, Kind.ENV_READ),
    (0x41, "COINBASE", 0, 1, G_BASE, Kind.ENV_READ),
    (0x42, "TIMESTAMP", 0, 1, G_BASE, Kind.ENV_READ),
    (0x43, "NUMBER", 0, 1, G_BASE, Kind.ENV_READ),
    (0x44, "DIFFICULTY", 0, 1, G_BASE, Kind.ENV_READ),
    (0x45, "GASLIMIT", 0, 1, G_BASE, Kind.ENV_READ),
    (0x50, "POP", 1, 0, G_BASE, Kind.OTHER),
    (0x51, "MLOAD", 1, 1, G_VERYLOW, Kind.OTHER),
    (0x52, "MSTORE", 2, 0, G_VERYLOW, Kind.OTHER),
    (0x53, "MSTORE8", 2, 0, G_VERYLOW, Kind.OTHER),
    (0x54, "SLOAD", 1, 1, G_SLOAD, Kind.OTHER),
    (0x55, "SSTORE", 2, 0, G_SSTORE, Kind.OTHER),
    (0x56, "JUMP", 1, 0, G_MID, Kind.JUMP),
    (0x57, "JUMPI", 2, 0, G_HIGH, Kind.COND_JUMP),
    (0x58, "PC", 0, 1, G_BASE, Kind.OTHER),
    (0x59, "MSIZE", 0, 1, G_BASE, Kind.OTHER),
    (0x5A, "GAS", 0, 1, G_BASE, Kind.OTHER),
    (0x5B, "JUMPDEST", 0, 0, G_JUMPDEST, Kind.JUMP_DEST),
    (0xA0, "LOG0", 2, 0, G_LOG, Kind.OTHER),
    (0xA1, "LOG1", 3, 0, G_LOG * 2, Kind.OTHER),
    (0xA2, "LOG2", 4, 0, G_LOG * 3, Kind.OTHER),
    (0xA3, "LOG3", 5, 0, G_LOG * 4, Kind.OTHER),
    (0xA4, "LOG4", 6, 0, G_LOG * 5, Kind.OTHER),
    (0xF0, "CREATE", 3, 1, G_CREATE, Kind.MONEY_RELATED),
    (0xF1, "CALL", 7, 1, G_CALL, Kind.MONEY_RELATED),
    (0xF2, "CALLCODE", 7, 1, G_CALL, Kind.CALL),
    (0xF3, "RETURN", 2, 0, G_ZERO, Kind.TERMINAL),
    (0xF4, "DELEGATECALL", 6, 1, G_CALL, Kind.MONEY_RELATED),
    (0xFA, "STATICCALL", 6, 1, G_CALL, Kind.CALL),
    (0xFD, "REVERT", 2, 0, G_ZERO, Kind.TERMINAL),
    (0xFE, "INVALID", 0, 0, G_ZERO, Kind.TERMINAL),
    (0xFF, "SELFDESTRUCT", 1, 0, G_SELFDESTRUCT, Kind.TERMINAL),
]


def _build_table() -> tuple[OpcodeInfo, ...]:
    table: list[OpcodeInfo | None] = [None] * 256
    for byte, name, pops, pushes, gas, kind in _DEFS:
        table[byte] = OpcodeInfo(byte, name, 0, pops, pushes, gas, kind)
    for i in range(32):
        byte = 0x60 + i
        table[byte] = OpcodeInfo(byte, f"PUSH{i + 1}", i + 1, 0, 1, G_VERYLOW, Kind.OTHER)
    for i in range(16):
        byte = 0x80 + i
        table[byte] = OpcodeInfo(byte, f"DUP{i + 1}", 0, i + 1, i + 2, G_VERYLOW, Kind.OTHER)
    for i in range(16):
        byte = 0x90 + i
        table[byte] = OpcodeInfo(byte, f"SWAP{i + 1}", 0, i + 2, i + 2, G_VERYLOW, Kind.OTHER)
    for byte in range(256):
        if table[byte] is None:
            # Undefined bytes decode as INVALID: execution halts on them.
            table[byte] = OpcodeInfo(byte, "INVALID", 0, 0, 0, G_ZERO, Kind.TERMINAL)
    return tuple(table)  # type: ignore[arg-type]


TABLE: tuple[OpcodeInfo, ...] = _build_table()

_BY_MNEMONIC: dict[str, OpcodeInfo] = {}
for _info in TABLE:
    _BY_MNEMONIC.setdefault(_info.mnemonic, _info)


def lookup(byte_value: int) -> OpcodeInfo:
    """Total over 0x00-0xFF; undefined bytes return the INVALID entry."""
    return TABLE[byte_value & 0xFF]


def by_mnemonic(name: str) -> OpcodeInfo:
    return _BY_MNEMONIC[name.upper()]


def is_money_related(info: OpcodeInfo) -> bool:
    return info.is_money_related


def load_gas_overrides(text: str) -> dict[int, int]:
    """Parse a "MNEMONIC GAS" table; returns byte->gas overrides.

    Blank lines and '#' comments are skipped.  Unknown mnemonics raise
    ValueError so a typo cannot silently leave the default cost in place.
    """
    overrides: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"gas override line {lineno}: expected 'MNEMONIC GAS'")
        name, gas = parts[0].upper(), int(parts[1])
        if gas < 0:
            raise ValueError(f"gas override line {lineno}: negative gas")
        if name not in _BY_MNEMONIC:
            raise ValueError(f"gas override line {lineno}: unknown mnemonic {name!r}")
        if name.startswith("PUSH") and name != "PUSH":
            overrides[_BY_MNEMONIC[name].byte_value] = gas
        else:
            for info in TABLE:
                if info.mnemonic == name:
                    overrides[info.byte_value] = gas
    return overrides


class GasTable:
    """Per-opcode static gas, optionally with user overrides applied."""

    def __init__(self, overrides: dict[int, int] | None = None):
        self._costs = [info.static_gas for info in TABLE]
        if overrides:
            for byte, gas in overrides.items():
                self._costs[byte & 0xFF] = gas

    def cost(self, byte_value: int) -> int:
        return self._costs[byte_value & 0xFF]


DEFAULT_GAS = GasTable()
