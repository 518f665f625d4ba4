"""Control-flow-graph recovery for EVM bytecode.

Construction runs in four stages: linear disassembly is split into basic
blocks; statically decidable edges are wired (constant jump targets, fall
throughs, the new-transaction edge from every terminating block back to the
root, and the callback edge from every external-call block back to the root);
indirect jumps are then resolved by simulating the operand stack along
root-to-block paths; resolution repeats to a fixpoint because each resolved
jump can make further dangling blocks reachable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from . import isa
from .disasm import Instruction

WORD_MOD = 1 << 256

# Guard against pathological dispatchers: stack simulation enumerates at most
# this many acyclic root-to-block paths per dangling block.
MAX_SIM_PATHS = 10_000

TOP = object()  # lattice top: statically unknown stack slot


class EdgeKind(enum.Enum):
    SEQUENTIAL = "sequential"
    DIRECT_JUMP = "direct_jump"
    INDIRECT_JUMP = "indirect_jump"
    COND_TAKEN = "cond_taken"
    COND_FALLTHROUGH = "cond_fallthrough"
    EXTERNAL_CALLBACK = "external_callback"
    NEW_TRANSACTION = "new_transaction"


class Terminator(enum.Enum):
    FALL_THROUGH = "fall_through"
    JUMP = "jump"
    COND_JUMP = "cond_jump"
    CALL = "call"
    TERMINAL = "terminal"


FALLBACK = "<fallback>"


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass
class BasicBlock:
    id: int  # first_offset doubles as the identifier
    first_offset: int
    last_offset: int
    instructions: list[Instruction]
    terminator: Terminator

    @property
    def label(self) -> str:
        return f"Node_{self.first_offset}_{self.last_offset}"

    @property
    def last(self) -> Instruction:
        return self.instructions[-1]

    @property
    def is_money_related(self) -> bool:
        return any(ins.info.is_money_related for ins in self.instructions)

    def __repr__(self) -> str:
        return f"<BasicBlock {self.label}>"


@dataclass
class Diagnostic:
    code: str
    message: str
    offset: int | None = None

    def as_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "offset": self.offset}


@dataclass
class Cfg:
    blocks: dict[int, BasicBlock]
    root: int
    edges: set[Edge]
    function_entries: dict[int | str, int] = field(default_factory=dict)
    dangling: set[int] = field(default_factory=set)
    diagnostics: list[Diagnostic] = field(default_factory=list)
    _succ: dict[int, list[Edge]] = field(default_factory=dict, repr=False)

    def successors(self, block_id: int) -> list[Edge]:
        return self._succ.get(block_id, [])

    def add_edge(self, src: int, dst: int, kind: EdgeKind) -> bool:
        edge = Edge(src, dst, kind)
        if edge in self.edges:
            return False
        self.edges.add(edge)
        self._succ.setdefault(src, []).append(edge)
        return True

    def add_diagnostic(self, code: str, message: str, offset: int | None = None) -> None:
        for d in self.diagnostics:
            if (d.code, d.message, d.offset) == (code, message, offset):
                return
        self.diagnostics.append(Diagnostic(code, message, offset))

    def block_at(self, offset: int) -> BasicBlock | None:
        return self.blocks.get(offset)

    def reachable_from_root(self) -> set[int]:
        seen: set[int] = set()
        stack = [self.root]
        while stack:
            b = stack.pop()
            if b in seen:
                continue
            seen.add(b)
            for e in self.successors(b):
                if e.dst not in seen:
                    stack.append(e.dst)
        return seen

    @property
    def money_blocks(self) -> set[int]:
        return {b.id for b in self.blocks.values() if b.is_money_related}


def build_blocks(instructions: list[Instruction]) -> dict[int, BasicBlock]:
    """Split the disassembly into basic blocks.

    Boundaries: JUMP/JUMPI and terminal instructions end a block; JUMPDEST
    starts one; the instruction after a call-class opcode starts one.  The
    entry block begins at offset 0 whether or not that is a JUMPDEST.
    """
    if not instructions:
        raise ValueError("cannot build blocks from an empty instruction list")
    blocks: dict[int, BasicBlock] = {}
    current: list[Instruction] = []

    def flush(terminator: Terminator) -> None:
        nonlocal current
        if not current:
            return
        first = current[0].offset
        blocks[first] = BasicBlock(
            id=first,
            first_offset=first,
            last_offset=current[-1].offset,
            instructions=current,
            terminator=terminator,
        )
        current = []

    for ins in instructions:
        info = ins.info
        if info.kind is isa.Kind.JUMP_DEST and current:
            flush(Terminator.FALL_THROUGH)
        current.append(ins)
        if info.kind is isa.Kind.JUMP:
            flush(Terminator.JUMP)
        elif info.kind is isa.Kind.COND_JUMP:
            flush(Terminator.COND_JUMP)
        elif info.is_terminal:
            flush(Terminator.TERMINAL)
        elif info.is_call:
            flush(Terminator.CALL)
    flush(Terminator.FALL_THROUGH)
    return blocks


def connect_static(blocks: dict[int, BasicBlock]) -> Cfg:
    """Wire all edges that are decidable without simulating the stack."""
    root = min(blocks)
    cfg = Cfg(blocks=blocks, root=root, edges=set())
    ordered = sorted(blocks)
    next_block: dict[int, int | None] = {}
    for i, off in enumerate(ordered):
        next_block[off] = ordered[i + 1] if i + 1 < len(ordered) else None

    for block in blocks.values():
        last = block.last
        follower = next_block[block.id]
        if block.terminator is Terminator.TERMINAL:
            # A finished transaction can always be followed by a new one.
            cfg.add_edge(block.id, root, EdgeKind.NEW_TRANSACTION)
        elif block.terminator is Terminator.CALL:
            # The foreign callee may call back into any function of this
            # contract, so the call block targets the root as well.
            cfg.add_edge(block.id, root, EdgeKind.EXTERNAL_CALLBACK)
            if follower is not None:
                cfg.add_edge(block.id, follower, EdgeKind.SEQUENTIAL)
        elif block.terminator is Terminator.FALL_THROUGH:
            if follower is not None:
                cfg.add_edge(block.id, follower, EdgeKind.SEQUENTIAL)
            else:
                # Code ends without a terminator; execution would run off the
                # end and stop, so treat like a terminal block.
                cfg.add_edge(block.id, root, EdgeKind.NEW_TRANSACTION)
        elif block.terminator in (Terminator.JUMP, Terminator.COND_JUMP):
            is_cond = block.terminator is Terminator.COND_JUMP
            if is_cond and follower is not None:
                cfg.add_edge(block.id, follower, EdgeKind.COND_FALLTHROUGH)
            target = _static_target(block)
            if target is None:
                cfg.dangling.add(block.id)
                continue
            kind = EdgeKind.COND_TAKEN if is_cond else EdgeKind.DIRECT_JUMP
            if not _is_jumpdest(blocks, target):
                cfg.diagnostics.append(Diagnostic(
                    "malformed_target",
                    f"{block.label} jumps to 0x{target:x} which is not a JUMPDEST",
                    block.last_offset,
                ))
                cfg.add_edge(block.id, root, EdgeKind.NEW_TRANSACTION)
                continue
            cfg.add_edge(block.id, target, kind)
    return cfg


def _static_target(block: BasicBlock) -> int | None:
    """Constant jump target when the preceding instruction pushes it."""
    if len(block.instructions) < 2:
        return None
    prev = block.instructions[-2]
    if prev.info.is_push:
        return prev.immediate or 0
    return None


def _is_jumpdest(blocks: dict[int, BasicBlock], offset: int) -> bool:
    target = blocks.get(offset)
    return (target is not None
            and target.instructions[0].info.kind is isa.Kind.JUMP_DEST)


def _simulate_block(block: BasicBlock, stack: list) -> tuple[list, object]:
    """Apply a block's stack effect in the {constant, TOP} lattice.

    Constants propagate exactly (arithmetic folds mod 2**256); anything the
    lattice cannot express becomes TOP.  Underflow slots read as TOP: the
    initial stack of a path suffix is unknown.  Returns the resulting stack
    and the popped jump target when the block ends in JUMP/JUMPI.
    """
    stack = list(stack)
    target: object = None

    def pop() -> object:
        return stack.pop() if stack else TOP

    for ins in block.instructions:
        info = ins.info
        name = info.mnemonic
        if info.is_push:
            stack.append(ins.immediate or 0)
        elif name.startswith("DUP"):
            n = info.byte_value - 0x80 + 1
            stack.append(stack[-n] if len(stack) >= n else TOP)
        elif name.startswith("SWAP"):
            n = info.byte_value - 0x90 + 1
            if len(stack) >= n + 1:
                stack[-1], stack[-n - 1] = stack[-n - 1], stack[-1]
            else:
                # depth unknown below the modelled part: havoc what we have
                stack = [TOP] * len(stack)
        elif name == "JUMP":
            target = pop()
        elif name == "JUMPI":
            target = pop()
            pop()  # condition
        else:
            args = [pop() for _ in range(info.stack_pops)]
            if info.stack_pushes:
                folded = _fold(name, args)
                stack.extend([folded] * info.stack_pushes)
    return stack, target


def _fold(name: str, args: list) -> object:
    if any(a is TOP for a in args):
        return TOP
    vals = [int(a) for a in args]  # type: ignore[arg-type]
    try:
        if name == "ADD":
            return (vals[0] + vals[1]) % WORD_MOD
        if name == "SUB":
            return (vals[0] - vals[1]) % WORD_MOD
        if name == "MUL":
            return (vals[0] * vals[1]) % WORD_MOD
        if name == "DIV":
            return vals[0] // vals[1] if vals[1] else 0
        if name == "MOD":
            return vals[0] % vals[1] if vals[1] else 0
        if name == "EXP":
            return pow(vals[0], vals[1], WORD_MOD)
        if name == "AND":
            return vals[0] & vals[1]
        if name == "OR":
            return vals[0] | vals[1]
        if name == "XOR":
            return vals[0] ^ vals[1]
        if name == "NOT":
            return vals[0] ^ (WORD_MOD - 1)
        if name == "LT":
            return int(vals[0] < vals[1])
        if name == "GT":
            return int(vals[0] > vals[1])
        if name == "EQ":
            return int(vals[0] == vals[1])
        if name == "ISZERO":
            return int(vals[0] == 0)
        if name == "SHL":
            return (vals[1] << vals[0]) % WORD_MOD if vals[0] < 256 else 0
        if name == "SHR":
            return vals[1] >> vals[0] if vals[0] < 256 else 0
    except (OverflowError, ValueError):
        return TOP
    return TOP


def _paths_to_block(cfg: Cfg, target: int, cap: int) -> list[list[int]] | None:
    """All acyclic root-to-target block paths, or None when the cap is hit."""
    paths: list[list[int]] = []
    stack: list[tuple[int, list[int]]] = [(cfg.root, [cfg.root])]
    while stack:
        node, path = stack.pop()
        if node == target:
            paths.append(path)
            if len(paths) > cap:
                return None
            continue
        for edge in cfg.successors(node):
            # new-transaction/callback edges restart at the root: the operand
            # stack does not survive them, so they never carry a jump target
            if edge.kind in (EdgeKind.NEW_TRANSACTION, EdgeKind.EXTERNAL_CALLBACK):
                continue
            if edge.dst in path:
                continue
            stack.append((edge.dst, path + [edge.dst]))
    return paths


def stack_simulate(cfg: Cfg) -> Cfg:
    """Resolve dangling indirect jumps by constant propagation along paths.

    Repeats until no further progress, because adding an indirect-jump edge
    can make new blocks (and new dangling blocks) reachable from the root.
    A block whose target is unknown on some path keeps any edges that were
    found, stays in the dangling set, and is reported once.
    """
    while True:
        reachable = cfg.reachable_from_root()
        progress = False
        for block_id in sorted(cfg.dangling):
            if block_id not in reachable:
                continue
            block = cfg.blocks[block_id]
            paths = _paths_to_block(cfg, block_id, MAX_SIM_PATHS)
            if paths is None:
                cfg.add_diagnostic(
                    "unresolved_indirect_jump",
                    f"{block.label}: more than {MAX_SIM_PATHS} paths during stack "
                    f"simulation; jump left unresolved",
                    block.last_offset)
                continue
            targets: set[int] = set()
            unresolved = False
            for path in paths:
                stack: list = []
                for node in path[:-1]:
                    stack, _ = _simulate_block(cfg.blocks[node], stack)
                _, top = _simulate_block(block, stack)
                if top is TOP or top is None:
                    unresolved = True
                else:
                    targets.add(int(top))  # type: ignore[arg-type]
            for target in sorted(targets):
                if _is_jumpdest(cfg.blocks, target):
                    if cfg.add_edge(block_id, target, EdgeKind.INDIRECT_JUMP):
                        progress = True
                else:
                    cfg.add_diagnostic(
                        "malformed_target",
                        f"{block.label}: simulated target 0x{target:x} is not a JUMPDEST",
                        block.last_offset)
            if unresolved:
                cfg.add_diagnostic(
                    "unresolved_indirect_jump",
                    f"{block.label}: jump target is statically unknown on some path",
                    block.last_offset)
            else:
                cfg.dangling.discard(block_id)
                progress = True
        if not progress:
            break
    return cfg


_SELECTOR_MASK = 0xFFFFFFFF


def _dispatch_selector(block: BasicBlock) -> int | None:
    """Selector compared in a dispatcher block (PUSH4 k ... EQ ... JUMPI)."""
    if block.terminator is not Terminator.COND_JUMP:
        return None
    push4 = None
    saw_eq = False
    for ins in block.instructions:
        if ins.mnemonic == "PUSH4" and ins.immediate != _SELECTOR_MASK:
            push4 = ins.immediate
        elif ins.mnemonic == "EQ" and push4 is not None:
            saw_eq = True
    return push4 if saw_eq else None


def discover_functions(cfg: Cfg) -> dict[int | str, int]:
    """Walk the compiler's dispatcher template from the root.

    Each block comparing the calldata selector against a PUSH4 constant maps
    that selector to its conditional-jump target; the chain's final fall
    through (or the short-calldata jump target) is the fallback entry.
    """
    entries: dict[int | str, int] = {}
    block_id = cfg.root
    fallback: int | None = None
    visited: set[int] = set()
    found_dispatch = False
    while block_id not in visited:
        visited.add(block_id)
        block = cfg.blocks[block_id]
        taken = next((e.dst for e in cfg.successors(block_id)
                      if e.kind in (EdgeKind.COND_TAKEN, EdgeKind.INDIRECT_JUMP)), None)
        fall = next((e.dst for e in cfg.successors(block_id)
                     if e.kind in (EdgeKind.COND_FALLTHROUGH, EdgeKind.SEQUENTIAL)), None)
        if block.terminator is Terminator.COND_JUMP:
            sel = _dispatch_selector(block)
            if sel is not None and taken is not None:
                entries[sel] = taken
                found_dispatch = True
            elif fallback is None and taken is not None:
                # calldatasize check: the taken branch is the fallback path
                fallback = taken
            if fall is None:
                break
            block_id = fall
            continue
        if block.terminator is Terminator.JUMP and not found_dispatch and taken is not None:
            block_id = taken
            continue
        # no further comparisons: this block starts the fallback body
        fallback = block_id if found_dispatch or fallback is None else fallback
        break
    if not found_dispatch:
        cfg.diagnostics.append(Diagnostic(
            "no_dispatcher", "no selector dispatch template found; treating all code as fallback"))
        entries = {FALLBACK: cfg.root}
    else:
        entries[FALLBACK] = fallback if fallback is not None else cfg.root
    cfg.function_entries = entries
    return entries


def build_cfg(instructions: list[Instruction]) -> Cfg:
    """Full pipeline: blocks, static edges, stack simulation, function map."""
    blocks = build_blocks(instructions)
    cfg = connect_static(blocks)
    stack_simulate(cfg)
    discover_functions(cfg)
    return cfg


def to_dot(cfg: Cfg) -> str:
    """DOT rendering; money-related nodes are filled black like the figures."""
    lines = ["digraph cfg {", '  node [shape=box, fontname="monospace"];']
    reachable = cfg.reachable_from_root()
    for block_id in sorted(cfg.blocks):
        if block_id not in reachable:
            continue
        block = cfg.blocks[block_id]
        style = ""
        if block.is_money_related:
            style = ', style=filled, fillcolor=black, fontcolor=white'
        elif block_id == cfg.root:
            style = ', shape=diamond, color=red'
        elif block_id in cfg.function_entries.values():
            style = ', color=blue'
        lines.append(f'  n{block_id} [label="{block.label}"{style}];')
    for edge in sorted(cfg.edges, key=lambda e: (e.src, e.dst, e.kind.value)):
        if edge.src not in reachable:
            continue
        attr = {
            EdgeKind.NEW_TRANSACTION: ' [style=dashed, color=red]',
            EdgeKind.EXTERNAL_CALLBACK: ' [style=dotted, color=red]',
        }.get(edge.kind, "")
        lines.append(f"  n{edge.src} -> n{edge.dst}{attr};")
    lines.append("}")
    return "\n".join(lines) + "\n"
