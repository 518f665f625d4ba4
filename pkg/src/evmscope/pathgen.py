"""Bounded unfolding of the CFG into concrete program paths.

A path is a walk from the root that crosses a new-transaction boundary each
time a terminating block finishes, until the call-depth budget is spent; the
walk then ends at its final terminating block.  Loop traversal is limited by
counting back-edges within each call segment, and the total block count per
path is capped.  Re-entrant callback edges exist in the CFG but are not
forked into separate paths by default: a re-entrant call sequence visits the
same blocks as the equivalent chain of whole transactions, which the
unfolding already covers (storage persists across segments downstream).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterator

from .cfg import Cfg, EdgeKind, Terminator

VIA_INITIAL = "initial"
VIA_NEW_TRANSACTION = "new_transaction"
VIA_EXTERNAL_CALLBACK = "external_callback"


@dataclass(frozen=True)
class PathBounds:
    call_depth: int = 3
    loop_bound: int = 5
    max_blocks: int = 60
    wall_time: float = 60.0

    def __post_init__(self) -> None:
        for name in ("call_depth", "loop_bound", "max_blocks"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.wall_time <= 0:
            raise ValueError("wall_time must be positive")


@dataclass(frozen=True)
class ProgramPath:
    blocks: tuple[int, ...]
    call_count: int
    functions: tuple[tuple[int | str | None, str], ...]  # (selector/fallback/None, via)
    money_related: bool
    block_capped: bool = False  # ended early because max_blocks forbade another segment

    @property
    def length(self) -> int:
        """Ranking length: the number of function calls in the path."""
        return self.call_count

    def segments(self) -> list[tuple[int, ...]]:
        root = self.blocks[0]
        out: list[tuple[int, ...]] = []
        current: list[int] = []
        for b in self.blocks:
            if b == root and current:
                out.append(tuple(current))
                current = []
            current.append(b)
        if current:
            out.append(tuple(current))
        return out


class PathEnumeration:
    """Iterator over ProgramPath; inspect `timed_out` after exhaustion."""

    def __init__(self, cfg: Cfg, bounds: PathBounds,
                 include_reentrant: bool = False,
                 deadline: float | None = None):
        self.cfg = cfg
        self.bounds = bounds
        self.include_reentrant = include_reentrant
        self.deadline = deadline
        self.timed_out = False
        self.emitted = 0
        self._entry_names: dict[int, int | str] = {
            block: name for name, block in cfg.function_entries.items()
        }
        self._money = cfg.money_blocks
        self._steps = 0

    def __iter__(self) -> Iterator[ProgramPath]:
        yield from self._walk(
            self.cfg.root,
            blocks=[],
            call_count=1,
            functions=[(None, VIA_INITIAL)],
            seg_visited=set(),
            seg_edge_counts={},
        )

    def _expired(self) -> bool:
        if self.timed_out:
            return True
        self._steps += 1
        if self.deadline is not None and (self._steps & 0xFF) == 0:
            if time.monotonic() > self.deadline:
                self.timed_out = True
        return self.timed_out

    def _emit(self, blocks: list[int], call_count: int,
              functions: list[tuple[int | str | None, str]],
              block_capped: bool) -> ProgramPath:
        self.emitted += 1
        return ProgramPath(
            blocks=tuple(blocks),
            call_count=call_count,
            functions=tuple(functions),
            money_related=any(b in self._money for b in blocks),
            block_capped=block_capped,
        )

    def _walk(self, block_id: int, blocks: list[int], call_count: int,
              functions: list[tuple[int | str | None, str]],
              seg_visited: set[int],
              seg_edge_counts: dict[tuple[int, int], int]) -> Iterator[ProgramPath]:
        if self._expired():
            return
        blocks = blocks + [block_id]
        seg_visited = seg_visited | {block_id}
        if functions[-1][0] is None and block_id in self._entry_names:
            functions = functions[:-1] + [(self._entry_names[block_id], functions[-1][1])]

        block = self.cfg.blocks[block_id]
        bounds = self.bounds

        if block.terminator is Terminator.TERMINAL:
            if (call_count >= bounds.call_depth
                    or len(blocks) + 1 > bounds.max_blocks):
                yield self._emit(blocks, call_count, functions,
                                 block_capped=call_count < bounds.call_depth)
            else:
                yield from self._walk(
                    self.cfg.root, blocks, call_count + 1,
                    functions + [(None, VIA_NEW_TRANSACTION)],
                    seg_visited=set(), seg_edge_counts={})
            return

        for edge in sorted(self.cfg.successors(block_id),
                           key=lambda e: (e.dst, e.kind.value)):
            if edge.kind is EdgeKind.NEW_TRANSACTION:
                continue
            if edge.kind is EdgeKind.EXTERNAL_CALLBACK:
                if (self.include_reentrant
                        and call_count < bounds.call_depth
                        and len(blocks) + 1 <= bounds.max_blocks):
                    yield from self._walk(
                        edge.dst, blocks, call_count + 1,
                        functions + [(None, VIA_EXTERNAL_CALLBACK)],
                        seg_visited=set(), seg_edge_counts={})
                continue
            if len(blocks) + 1 > bounds.max_blocks:
                continue
            if edge.dst in seg_visited:
                key = (edge.src, edge.dst)
                count = seg_edge_counts.get(key, 0) + 1
                if count > bounds.loop_bound:
                    continue
                counts = dict(seg_edge_counts)
                counts[key] = count
                yield from self._walk(edge.dst, blocks, call_count,
                                      functions, seg_visited, counts)
            else:
                yield from self._walk(edge.dst, blocks, call_count,
                                      functions, seg_visited, seg_edge_counts)


def enumerate_paths(cfg: Cfg, bounds: PathBounds,
                    include_reentrant: bool = False,
                    deadline: float | None = None) -> PathEnumeration:
    return PathEnumeration(cfg, bounds, include_reentrant, deadline)


def filter_money(paths: Iterator[ProgramPath], cfg: Cfg,
                 payable_entries: set[int | str] | None = None) -> Iterator[ProgramPath]:
    """Keep money-related paths.

    When the contract contains no money-related opcode at all, the contract
    can never send Ether; paths reaching a payable entry are passed through
    instead so the black-hole analyzer can inspect them.
    """
    has_money = bool(cfg.money_blocks)
    payable = payable_entries or set()
    for path in paths:
        if has_money:
            if path.money_related:
                yield path
        else:
            if any(sel in payable for sel, _via in path.functions if sel is not None):
                yield path
