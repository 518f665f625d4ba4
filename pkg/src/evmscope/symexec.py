"""Bounded symbolic execution of program paths.

Words are finite terms over per-transaction free variables (caller, call
value, calldata, timestamp, block number, balances, foreign-call returns,
unknown storage) and the EVM operator set, modular 2**256.  Executing a path
walks its block sequence, asserting each branch condition (or its negation)
into the path condition; crossing a transaction boundary introduces a fresh
environment while storage persists.  Feasibility is decided by a pluggable
constraint backend; a satisfying witness is re-validated by replaying the
path concretely.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import isa
from .cfg import Cfg, Terminator
from .disasm import Instruction
from .keccak import keccak256

WORD_MOD = 1 << 256
WORD_MAX = WORD_MOD - 1
SIGN_BIT = 1 << 255
STACK_LIMIT = 1024


class SymExecError(Exception):
    pass


class StackUnderflow(SymExecError):
    pass


class StackOverflow(SymExecError):
    pass


class ConstructorDiverged(SymExecError):
    pass


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Word:
    op: str                      # "const", "var", "sha3", "sload", "ite", or an operator
    args: tuple["Word", ...] = ()
    value: int | None = None     # const payload
    name: str | None = None      # var payload
    meta: int | str | None = None

    @property
    def is_concrete(self) -> bool:
        return self.op == "const"

    def __str__(self) -> str:
        if self.op == "const":
            return hex(self.value or 0)
        if self.op == "var":
            return self.name or "?"
        inner = ", ".join(str(a) for a in self.args)
        return f"{self.op}({inner})"


def const(value: int) -> Word:
    return Word("const", value=value % WORD_MOD)


def var(name: str) -> Word:
    return Word("var", name=name)


ZERO = const(0)
ONE = const(1)


def _signed(x: int) -> int:
    return x - WORD_MOD if x >= SIGN_BIT else x


def concrete_op(name: str, vals: list[int]) -> int:
    """Concrete semantics of one EVM operator, result reduced mod 2**256."""
    a = vals[0] if vals else 0
    b = vals[1] if len(vals) > 1 else 0
    if name == "ADD":
        return (a + b) % WORD_MOD
    if name == "MUL":
        return (a * b) % WORD_MOD
    if name == "SUB":
        return (a - b) % WORD_MOD
    if name == "DIV":
        return a // b if b else 0
    if name == "SDIV":
        if b == 0:
            return 0
        sa, sb = _signed(a), _signed(b)
        q = abs(sa) // abs(sb)
        if (sa < 0) != (sb < 0):
            q = -q
        return q % WORD_MOD
    if name == "MOD":
        return a % b if b else 0
    if name == "SMOD":
        if b == 0:
            return 0
        sa, sb = _signed(a), _signed(b)
        r = abs(sa) % abs(sb)
        if sa < 0:
            r = -r
        return r % WORD_MOD
    if name == "ADDMOD":
        n = vals[2]
        return (a + b) % n if n else 0
    if name == "MULMOD":
        n = vals[2]
        return (a * b) % n if n else 0
    if name == "EXP":
        return pow(a, b, WORD_MOD)
    if name == "SIGNEXTEND":
        if a >= 32:
            return b
        bit = 8 * a + 7
        mask = (1 << (bit + 1)) - 1
        if b & (1 << bit):
            return (b | (WORD_MAX ^ mask)) % WORD_MOD
        return b & mask
    if name == "LT":
        return int(a < b)
    if name == "GT":
        return int(a > b)
    if name == "SLT":
        return int(_signed(a) < _signed(b))
    if name == "SGT":
        return int(_signed(a) > _signed(b))
    if name == "EQ":
        return int(a == b)
    if name == "ISZERO":
        return int(a == 0)
    if name == "AND":
        return a & b
    if name == "OR":
        return a | b
    if name == "XOR":
        return a ^ b
    if name == "NOT":
        return a ^ WORD_MAX
    if name == "BYTE":
        return (b >> (8 * (31 - a))) & 0xFF if a < 32 else 0
    if name == "SHL":
        return (b << a) % WORD_MOD if a < 256 else 0
    if name == "SHR":
        return b >> a if a < 256 else 0
    if name == "SAR":
        sb_ = _signed(b)
        if a >= 256:
            return WORD_MAX if sb_ < 0 else 0
        return (sb_ >> a) % WORD_MOD
    raise SymExecError(f"no concrete semantics for {name}")


def mk(op: str, *args: Word) -> Word:
    """Build an operator term, folding constants and a few identities."""
    if all(a.is_concrete for a in args):
        return const(concrete_op(op, [a.value or 0 for a in args]))
    if op in ("SUB", "XOR") and len(args) == 2 and args[0] == args[1]:
        return ZERO
    if op == "EQ" and args[0] == args[1]:
        return ONE
    if op == "ISZERO" and args[0].op == "ISZERO" and args[0].args[0].op == "ISZERO":
        return args[0].args[0]
    if op == "AND" and len(args) == 2:
        for i in (0, 1):
            if args[i].is_concrete and args[i].value == WORD_MAX:
                return args[1 - i]
    if op == "ADD" and len(args) == 2:
        for i in (0, 1):
            if args[i].is_concrete and args[i].value == 0:
                return args[1 - i]
    return Word(op, args)


def eval_word(w: Word, env: dict[str, int]) -> int:
    """Concrete evaluation; unassigned variables read as zero."""
    if w.op == "const":
        return w.value or 0
    if w.op == "var":
        return env.get(w.name or "", 0) % WORD_MOD
    if w.op == "sload":
        return eval_word(w.args[0], env)
    if w.op == "ite":
        return eval_word(w.args[1] if eval_word(w.args[0], env) else w.args[2], env)
    if w.op == "sha3":
        length = int(w.meta or 0)
        data = b"".join(eval_word(a, env).to_bytes(32, "big") for a in w.args)
        return int.from_bytes(keccak256(data[:length]), "big")
    return concrete_op(w.op, [eval_word(a, env) for a in w.args])


def walk(w: Word):
    yield w
    for a in w.args:
        yield from walk(a)


def free_vars(w: Word) -> set[str]:
    return {n.name for n in walk(w) if n.op == "var" and n.name}


def concretize(w: Word | None) -> int | None:
    """The term's single possible value, or None if any free variable remains.

    Resolves storage-read wrappers and folds closed terms (including hashes
    of fully concrete data)."""
    if w is None:
        return None
    if w.is_concrete:
        return w.value or 0
    if free_vars(w):
        return None
    return eval_word(w, {})


def contains_var_prefix(w: Word, prefix: str) -> bool:
    return any(n.op == "var" and n.name and n.name.startswith(prefix) for n in walk(w))


def contains_op(w: Word, op: str) -> bool:
    return any(n.op == op for n in walk(w))


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

class FeasibilityStatus(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class Feasibility:
    status: FeasibilityStatus
    witness: dict[str, int] | None = None
    reason: str = ""

    @property
    def is_infeasible(self) -> bool:
        return self.status is FeasibilityStatus.INFEASIBLE


@dataclass
class ExternalRecord:
    """One money/call event observed along a path."""
    kind: str            # CALL, CALLCODE, DELEGATECALL, STATICCALL, CREATE, SELFDESTRUCT
    offset: int
    txn: int
    target: Word | None
    value: Word | None
    reverted: bool = False


@dataclass
class SymbolicState:
    stack: list[Word] = field(default_factory=list)
    memory: dict[int, Word] = field(default_factory=dict)
    storage_writes: list[tuple[Word, Word]] = field(default_factory=list)
    base_storage: dict[Word, Word] = field(default_factory=dict)
    path_condition: list[Word] = field(default_factory=list)
    gas_used: int = 0
    balance: Word = field(default_factory=lambda: var("BALANCE0"))
    txn: int = 0
    txn_prefix: str = ""
    records: list[ExternalRecord] = field(default_factory=list)
    fresh_counter: int = 0
    storage_var_cache: dict[Word, Word] = field(default_factory=dict)

    @property
    def txn_label(self) -> str:
        return f"{self.txn_prefix}{self.txn}"

    def push(self, w: Word) -> None:
        if len(self.stack) >= STACK_LIMIT:
            raise StackOverflow("stack limit exceeded")
        self.stack.append(w)

    def pop(self) -> Word:
        if not self.stack:
            raise StackUnderflow("pop from empty stack")
        return self.stack.pop()

    def fresh(self, tag: str) -> Word:
        self.fresh_counter += 1
        return var(f"{tag}.{self.fresh_counter}")

    def assert_cond(self, w: Word) -> None:
        if w.is_concrete and w.value:
            return  # trivially true
        self.path_condition.append(w)

    def sload(self, key: Word) -> Word:
        for wkey, wval in reversed(self.storage_writes):
            if wkey == key:
                return Word("sload", (wval,), meta=str(key))
            if wkey.is_concrete and key.is_concrete:
                continue  # distinct concrete keys
            # cannot statically separate the keys: conditional read
            older = self._sload_before(key, self.storage_writes.index((wkey, wval)))
            cond = mk("EQ", wkey, key)
            return Word("sload", (Word("ite", (cond, wval, older)),), meta=str(key))
        return Word("sload", (self._base_read(key),), meta=str(key))

    def _sload_before(self, key: Word, idx: int) -> Word:
        for wkey, wval in reversed(self.storage_writes[:idx]):
            if wkey == key:
                return wval
            if wkey.is_concrete and key.is_concrete:
                continue
            cond = mk("EQ", wkey, key)
            older = self._sload_before(key, self.storage_writes.index((wkey, wval)))
            return Word("ite", (cond, wval, older))
        return self._base_read(key)

    def _base_read(self, key: Word) -> Word:
        if key in self.base_storage:
            return self.base_storage[key]
        if key not in self.storage_var_cache:
            self.storage_var_cache[key] = var(f"STORAGE@{key}")
        return self.storage_var_cache[key]

    def sstore(self, key: Word, value: Word) -> None:
        self.storage_writes.append((key, value))

    def storage_snapshot(self) -> int:
        return len(self.storage_writes)

    def storage_rollback(self, mark: int) -> None:
        del self.storage_writes[mark:]

    def final_storage(self) -> dict[Word, Word]:
        merged = dict(self.base_storage)
        for key, value in self.storage_writes:
            merged[key] = value
        return merged


# ---------------------------------------------------------------------------
# Interpreter
# ---------------------------------------------------------------------------

class Interpreter:
    """Executes instructions over a SymbolicState.

    In symbolic mode environment reads produce per-transaction variables; in
    concrete (replay) mode they evaluate immediately under a witness, so
    every branch condition folds to a constant and the walk is deterministic.
    """

    def __init__(self, code: bytes, state: SymbolicState,
                 gas_table: isa.GasTable = isa.DEFAULT_GAS,
                 witness: dict[str, int] | None = None):
        self.code = code
        self.state = state
        self.gas = gas_table
        self.witness = witness
        self._mem_unknown = False

    # -- environment ------------------------------------------------------

    def _env(self, tag: str, per_txn: bool = True) -> Word:
        name = f"{tag}#{self.state.txn_label}" if per_txn else tag
        w = var(name)
        if self.witness is not None:
            return const(self.witness.get(name, 0))
        return w

    def begin_transaction(self) -> None:
        self.state.txn += 1
        self.state.stack = []
        self.state.memory = {}
        self._mem_unknown = False
        self.state.balance = mk("ADD", self.state.balance, self._env("CALLVALUE"))

    # -- memory -----------------------------------------------------------

    def _mstore(self, offset: Word, value: Word) -> None:
        if offset.is_concrete:
            self.state.memory[offset.value or 0] = value
        else:
            # write through an unknown pointer: all recorded words are stale
            self.state.memory.clear()
            self._mem_unknown = True

    def _mload(self, offset: Word) -> Word:
        if offset.is_concrete and (offset.value or 0) in self.state.memory:
            return self.state.memory[offset.value or 0]
        # fresh-counter use must match between symbolic and replay runs
        return self._fresh_or_zero(f"MEM#{self.state.txn_label}")

    def _mem_words(self, offset: int, length: int) -> list[Word]:
        words = []
        for i in range(0, max(length, 0), 32):
            word = self.state.memory.get(offset + i)
            if word is None:
                if self.witness is not None or not self._mem_unknown:
                    word = ZERO
                else:
                    word = self.state.fresh(f"MEM#{self.state.txn_label}")
            words.append(word)
        return words

    # -- instruction dispatch ----------------------------------------------

    def step(self, ins: Instruction) -> None:
        state = self.state
        info = ins.info
        name = info.mnemonic
        state.gas_used += self.gas.cost(info.byte_value)

        if info.is_push:
            state.push(const(ins.immediate or 0))
            return
        if name.startswith("DUP"):
            n = info.byte_value - 0x80 + 1
            if len(state.stack) < n:
                raise StackUnderflow(name)
            state.push(state.stack[-n])
            return
        if name.startswith("SWAP"):
            n = info.byte_value - 0x90 + 1
            if len(state.stack) < n + 1:
                raise StackUnderflow(name)
            state.stack[-1], state.stack[-n - 1] = state.stack[-n - 1], state.stack[-1]
            return
        if name == "POP":
            state.pop()
            return
        if name in ("JUMPDEST", "STOP", "INVALID"):
            return
        if name in ("ADD", "MUL", "SUB", "DIV", "SDIV", "MOD", "SMOD", "EXP",
                    "SIGNEXTEND", "LT", "GT", "SLT", "SGT", "EQ", "AND", "OR",
                    "XOR", "BYTE", "SHL", "SHR", "SAR"):
            a, b = state.pop(), state.pop()
            state.push(mk(name, a, b))
            return
        if name in ("ADDMOD", "MULMOD"):
            a, b, n = state.pop(), state.pop(), state.pop()
            state.push(mk(name, a, b, n))
            return
        if name in ("ISZERO", "NOT"):
            state.push(mk(name, state.pop()))
            return
        if name == "SHA3":
            offset, length = state.pop(), state.pop()
            if offset.is_concrete and length.is_concrete:
                words = self._mem_words(offset.value or 0, length.value or 0)
                term = Word("sha3", tuple(words), meta=(length.value or 0))
                if all(w.is_concrete for w in words):
                    state.push(const(eval_word(term, {})))
                else:
                    state.push(term)
            else:
                state.push(state.fresh(f"SHA3#{state.txn_label}"))
            return
        if name == "ADDRESS":
            # always the same symbolic constant, so the self-balance check
            # below behaves identically in symbolic and replay runs
            state.push(var("ADDRESS"))
            return
        if name == "BALANCE":
            target = state.pop()
            if target.op == "var" and target.name == "ADDRESS":
                state.push(state.balance)
            else:
                state.push(self._fresh_or_zero(f"EXTBAL#{state.txn_label}"))
            return
        if name in ("ORIGIN", "CALLER", "CALLVALUE", "CALLDATASIZE", "GASPRICE",
                    "COINBASE", "TIMESTAMP", "NUMBER", "DIFFICULTY", "GASLIMIT"):
            state.push(self._env(name))
            return
        if name == "CALLDATALOAD":
            offset = state.pop()
            if offset.is_concrete:
                word_name = f"CALLDATA#{state.txn_label}@{offset.value}"
                if self.witness is not None:
                    state.push(const(self.witness.get(word_name, 0)))
                else:
                    state.push(var(word_name))
            else:
                state.push(self._fresh_or_zero(f"CALLDATA#{state.txn_label}"))
            return
        if name in ("CODESIZE",):
            state.push(const(len(self.code)))
            return
        if name == "CODECOPY":
            dest, src, length = state.pop(), state.pop(), state.pop()
            if dest.is_concrete and src.is_concrete and length.is_concrete:
                self._copy_code(dest.value or 0, src.value or 0, length.value or 0)
            else:
                self.state.memory.clear()
                self._mem_unknown = True
            return
        if name in ("CALLDATACOPY", "RETURNDATACOPY", "EXTCODECOPY"):
            pops = info.stack_pops
            for _ in range(pops):
                state.pop()
            self.state.memory.clear()
            self._mem_unknown = self.witness is None
            return
        if name in ("EXTCODESIZE", "BLOCKHASH"):
            state.pop()
            state.push(self._fresh_or_zero(name))
            return
        if name in ("RETURNDATASIZE", "MSIZE", "GAS"):
            state.push(self._fresh_or_zero(name))
            return
        if name == "PC":
            state.push(const(ins.offset))
            return
        if name == "MLOAD":
            state.push(self._mload(state.pop()))
            return
        if name == "MSTORE":
            offset, value = state.pop(), state.pop()
            self._mstore(offset, value)
            return
        if name == "MSTORE8":
            offset, value = state.pop(), state.pop()
            if offset.is_concrete:
                aligned = (offset.value or 0) & ~31
                self.state.memory[aligned] = self._fresh_or_zero(f"MEM#{state.txn_label}")
            return
        if name == "SLOAD":
            key = state.pop()
            loaded = state.sload(key)
            if self.witness is not None:
                state.push(const(eval_word(loaded, self.witness)))
            else:
                state.push(loaded)
            return
        if name == "SSTORE":
            key, value = state.pop(), state.pop()
            state.sstore(key, value)
            return
        if name.startswith("LOG"):
            for _ in range(info.stack_pops):
                state.pop()
            return
        if name in ("CALL", "CALLCODE"):
            gas_w, target, value = state.pop(), state.pop(), state.pop()
            for _ in range(4):
                state.pop()
            state.records.append(ExternalRecord(name, ins.offset, state.txn, target, value))
            if name == "CALL":
                state.balance = mk("SUB", state.balance, value)
            state.push(self._fresh_or_zero(f"XRET#{state.txn_label}"))
            return
        if name in ("DELEGATECALL", "STATICCALL"):
            state.pop()
            target = state.pop()
            for _ in range(4):
                state.pop()
            state.records.append(ExternalRecord(name, ins.offset, state.txn, target, None))
            state.push(self._fresh_or_zero(f"XRET#{state.txn_label}"))
            return
        if name == "CREATE":
            value = state.pop()
            state.pop(), state.pop()
            state.records.append(ExternalRecord(name, ins.offset, state.txn, None, value))
            state.push(self._fresh_or_zero(f"XADDR#{state.txn_label}"))
            return
        if name == "SELFDESTRUCT":
            target = state.pop()
            state.records.append(ExternalRecord(name, ins.offset, state.txn,
                                                target, state.balance))
            return
        if name in ("RETURN", "REVERT"):
            state.pop(), state.pop()
            return
        if name in ("JUMP", "JUMPI"):
            raise SymExecError("jumps are handled by the block walker")
        raise SymExecError(f"unhandled opcode {name}")

    def _fresh_or_zero(self, tag: str) -> Word:
        w = self.state.fresh(tag)
        if self.witness is not None:
            return const(self.witness.get(w.name or "", 0))
        return w

    def _copy_code(self, dest: int, src: int, length: int) -> None:
        data = self.code[src:src + length]
        data = data + b"\x00" * (length - len(data))
        for i in range(0, length, 32):
            chunk = data[i:i + 32]
            chunk = chunk + b"\x00" * (32 - len(chunk))
            self.state.memory[dest + i] = const(int.from_bytes(chunk, "big"))


# ---------------------------------------------------------------------------
# Path execution
# ---------------------------------------------------------------------------

def _run_block(interp: Interpreter, block, next_offset: int | None,
               is_new_txn_next: bool) -> None:
    """Execute a block's instructions and assert its exit condition."""
    state = interp.state
    for ins in block.instructions[:-1]:
        interp.step(ins)
    last = block.instructions[-1]
    name = last.mnemonic

    if name == "JUMP":
        state.gas_used += interp.gas.cost(last.info.byte_value)
        target = state.pop()
        if next_offset is not None and not is_new_txn_next:
            if target.is_concrete:
                if (target.value or 0) != next_offset:
                    raise SymExecError(
                        f"path claims jump to {next_offset} but target is {target.value}")
            else:
                state.assert_cond(mk("EQ", target, const(next_offset)))
    elif name == "JUMPI":
        state.gas_used += interp.gas.cost(last.info.byte_value)
        target = state.pop()
        cond = state.pop()
        if next_offset is None or is_new_txn_next:
            return
        fallthrough = block.last_offset + 1
        taken = target.is_concrete and (target.value or 0) == next_offset
        if not taken and next_offset != fallthrough:
            if target.is_concrete:
                raise SymExecError(
                    f"path leaves JUMPI at {block.last_offset} for {next_offset}, "
                    f"which is neither the target nor the fallthrough")
            # symbolic target and the path goes somewhere other than the
            # fallthrough: it must be the taken branch
            state.assert_cond(mk("EQ", target, const(next_offset)))
            taken = True
        state.assert_cond(cond if taken else mk("ISZERO", cond))
    else:
        interp.step(last)


def execute_blocks(cfg: Cfg, code: bytes, blocks: tuple[int, ...],
                   base_storage: dict[Word, Word],
                   gas_table: isa.GasTable = isa.DEFAULT_GAS,
                   witness: dict[str, int] | None = None) -> SymbolicState:
    """Interpret a block sequence; transaction boundaries reset environments."""
    state = SymbolicState(base_storage=dict(base_storage))
    interp = Interpreter(code, state, gas_table, witness)
    interp.begin_transaction()
    root = blocks[0]
    revert_mark = state.storage_snapshot()
    for i, block_id in enumerate(blocks):
        block = cfg.blocks[block_id]
        nxt = blocks[i + 1] if i + 1 < len(blocks) else None
        new_txn_next = nxt == root and block.terminator is Terminator.TERMINAL
        _run_block(interp, block, nxt, new_txn_next)
        if block.terminator is Terminator.TERMINAL:
            if block.last.mnemonic == "REVERT":
                state.storage_rollback(revert_mark)
                for rec in state.records:
                    if rec.txn == state.txn:
                        rec.reverted = True
            if new_txn_next:
                interp.begin_transaction()
                revert_mark = state.storage_snapshot()
    return state


def trace_path(cfg: Cfg, code: bytes, path, base_storage: dict[Word, Word],
               gas_table: isa.GasTable = isa.DEFAULT_GAS) -> SymbolicState:
    """Symbolic walk without any solving; used by the per-path analyzers."""
    return execute_blocks(cfg, code, path.blocks, base_storage, gas_table)


def replay_blocks(cfg: Cfg, code: bytes, witness: dict[str, int],
                  base_storage: dict[Word, Word], call_count: int,
                  max_blocks: int = 4096) -> tuple[int, ...]:
    """Run concretely under a witness and report the block sequence taken."""
    state = SymbolicState(base_storage=dict(base_storage))
    interp = Interpreter(code, state, witness=witness)
    interp.begin_transaction()
    root = cfg.root
    taken: list[int] = [root]
    block_id = root
    revert_mark = state.storage_snapshot()
    while len(taken) <= max_blocks:
        block = cfg.blocks[block_id]
        for ins in block.instructions[:-1]:
            interp.step(ins)
        last = block.instructions[-1]
        name = last.mnemonic
        if name == "JUMP":
            target = state.pop()
            block_id = eval_word(target, witness)
        elif name == "JUMPI":
            target = state.pop()
            cond = state.pop()
            if eval_word(cond, witness):
                block_id = eval_word(target, witness)
            else:
                block_id = last.offset + 1
        elif block.terminator is Terminator.TERMINAL:
            if name == "REVERT":
                state.storage_rollback(revert_mark)
            if state.txn >= call_count:
                return tuple(taken)
            interp.begin_transaction()
            revert_mark = state.storage_snapshot()
            block_id = root
        elif block.terminator in (Terminator.CALL, Terminator.FALL_THROUGH):
            interp.step(last)
            block_id = last.next_offset
        else:
            raise SymExecError(f"unexpected terminator {block.terminator}")
        if block.terminator is Terminator.TERMINAL and block_id == root:
            taken.append(block_id)
            continue
        if block_id not in cfg.blocks:
            raise SymExecError(f"replay jumped to unknown offset {block_id}")
        taken.append(block_id)
    raise SymExecError("replay exceeded block budget")


def execute_path(cfg: Cfg, code: bytes, path,
                 base_storage: dict[Word, Word], solver,
                 gas_table: isa.GasTable = isa.DEFAULT_GAS,
                 solver_timeout_ms: int = 100) -> tuple[SymbolicState | None, Feasibility]:
    """Execute one gated path and decide its feasibility."""
    try:
        state = execute_blocks(cfg, code, path.blocks, base_storage, gas_table)
    except (StackUnderflow, StackOverflow) as exc:
        return None, Feasibility(FeasibilityStatus.INFEASIBLE, reason=f"malformed path: {exc}")
    except SymExecError as exc:
        return None, Feasibility(FeasibilityStatus.INFEASIBLE, reason=str(exc))

    result = solver.check(state.path_condition, solver_timeout_ms)
    if result.status == "unsat":
        return state, Feasibility(FeasibilityStatus.INFEASIBLE, reason=result.reason)
    if result.status == "sat":
        witness = dict(result.model or {})
        for cond in state.path_condition:
            if eval_word(cond, witness) == 0:
                return state, Feasibility(FeasibilityStatus.UNKNOWN,
                                          reason="witness failed re-check")
        try:
            taken = replay_blocks(cfg, code, witness, base_storage, path.call_count)
        except SymExecError as exc:
            return state, Feasibility(FeasibilityStatus.UNKNOWN,
                                      reason=f"witness replay failed: {exc}")
        if taken != path.blocks:
            return state, Feasibility(FeasibilityStatus.UNKNOWN,
                                      reason="witness replay diverged from path")
        return state, Feasibility(FeasibilityStatus.FEASIBLE, witness=witness)
    return state, Feasibility(FeasibilityStatus.UNKNOWN, reason=result.reason)


# ---------------------------------------------------------------------------
# Constructor pre-run
# ---------------------------------------------------------------------------

def run_constructor(creation_cfg: Cfg | None, code: bytes | None,
                    max_steps: int = 4096) -> tuple[dict[Word, Word], list[str]]:
    """Execute the constructor's main path; returns (storage, diagnostics).

    Constructor arguments stay symbolic.  At a branch with a symbolic
    condition the walk prefers the branch that does not revert.  If the walk
    exceeds its budget the result is empty (all-symbolic) storage.
    """
    if creation_cfg is None or code is None:
        return {}, []
    state = SymbolicState(txn_prefix="c")
    # constructor runs in its own deployment transaction, in its own namespace
    interp = Interpreter(code, state)
    interp.begin_transaction()
    diagnostics: list[str] = []
    block_id = creation_cfg.root
    steps = 0
    visited_guard: dict[int, int] = {}
    try:
        while True:
            steps += 1
            if steps > max_steps:
                raise ConstructorDiverged("constructor walk exceeded step budget")
            visited_guard[block_id] = visited_guard.get(block_id, 0) + 1
            if visited_guard[block_id] > 64:
                raise ConstructorDiverged("constructor walk looped")
            block = creation_cfg.blocks[block_id]
            for ins in block.instructions[:-1]:
                interp.step(ins)
            last = block.instructions[-1]
            name = last.mnemonic
            if name == "JUMP":
                target = state.pop()
                if not target.is_concrete:
                    raise ConstructorDiverged("symbolic jump in constructor")
                block_id = target.value or 0
            elif name == "JUMPI":
                target = state.pop()
                cond = state.pop()
                if cond.is_concrete:
                    branch_taken = bool(cond.value)
                else:
                    taken_block = creation_cfg.blocks.get(target.value or 0) \
                        if target.is_concrete else None
                    fall_block = creation_cfg.blocks.get(last.offset + 1)
                    branch_taken = not (taken_block is not None
                                        and taken_block.last.mnemonic == "REVERT") \
                        and (fall_block is None or fall_block.last.mnemonic == "REVERT"
                             or taken_block is not None)
                if branch_taken:
                    if not target.is_concrete:
                        raise ConstructorDiverged("symbolic branch target in constructor")
                    block_id = target.value or 0
                else:
                    block_id = last.offset + 1
            elif name in ("RETURN", "STOP"):
                return state.final_storage(), diagnostics
            elif name in ("REVERT", "INVALID", "SELFDESTRUCT"):
                raise ConstructorDiverged(f"constructor main path ends in {name}")
            else:
                interp.step(last)
                block_id = last.next_offset
            if block_id not in creation_cfg.blocks:
                raise ConstructorDiverged(f"constructor jumped outside code ({block_id})")
    except (ConstructorDiverged, StackUnderflow, StackOverflow, SymExecError) as exc:
        diagnostics.append(f"constructor pre-run abandoned: {exc}")
        return {}, diagnostics


# ---------------------------------------------------------------------------
# Transfer-value refinement
# ---------------------------------------------------------------------------

UNKNOWN_AMOUNT = "unknown"


def refine_transfer_values(state: SymbolicState) -> list[tuple[ExternalRecord, int | str]]:
    """Resolve each outgoing transfer to a concrete amount where possible."""
    out: list[tuple[ExternalRecord, int | str]] = []
    for rec in state.records:
        if rec.kind in ("CALL", "CALLCODE", "CREATE"):
            resolved = concretize(rec.value)
            if resolved is not None:
                out.append((rec, resolved))
            else:
                out.append((rec, UNKNOWN_AMOUNT))
        elif rec.kind in ("DELEGATECALL", "SELFDESTRUCT"):
            out.append((rec, UNKNOWN_AMOUNT))
        else:  # STATICCALL cannot move value
            out.append((rec, 0))
    return out
