"""Compile a choose-tree plus primitive barriers into linear rows on the control.

For a specification over p primitives the compiler always emits exactly p rows

    lgh_k . u  >=  -alpha(h + |h_k - h|) - lfh_k        for k in 0..p-1

where h is the tree's pivot at the current state.  Nesting changes only the
pivot, never the row count.  Rows for values at or above the pivot reduce to
the classical per-barrier condition hdot_k >= -alpha(h_k); rows below the
pivot are progressively relaxed by the absolute-value term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .logic import Choose, Leaf, LogicTree, evaluate_pivot, validate
from .primitives import ClassKappa, ControlAffineSystem, PrimitiveBarrier, lie_derivatives

__all__ = [
    "ConstraintRow",
    "barrier_values",
    "build_rows",
    "build_rows_mcbf_diag",
    "build_indefinite_rows",
    "per_level_values",
]


@dataclass(frozen=True)
class ConstraintRow:
    """One inequality a . u >= b; ``source_index`` is the primitive it guards."""

    a: np.ndarray
    b: float
    source_index: int

    def slack_at(self, u: np.ndarray) -> float:
        return float(self.a @ np.asarray(u, dtype=float)) - self.b


def barrier_values(barriers: Sequence[PrimitiveBarrier], x: np.ndarray) -> np.ndarray:
    """Evaluate all primitive values at x, rejecting non-finite results by name."""
    x = np.asarray(x, dtype=float)
    vals = np.empty(len(barriers))
    for k, bar in enumerate(barriers):
        v = float(bar.h(x))
        if not np.isfinite(v):
            raise ValueError(f"primitive {k} ({bar.label or 'unnamed'}) returned "
                             f"non-finite value {v}")
        vals[k] = v
    return vals


def _require_tree(tree: LogicTree, count: int) -> None:
    report = validate(tree, count)
    if not report.ok:
        from .logic import TreeValidationError
        raise TreeValidationError(report)


def build_rows(tree: LogicTree, barriers: Sequence[PrimitiveBarrier],
               system: ControlAffineSystem, alpha: ClassKappa, x: np.ndarray,
               margin: float = 0.0,
               values: np.ndarray | None = None) -> list[ConstraintRow]:
    """One row per primitive for the tree's pivot condition at state x.

    ``margin`` >= 0 tightens every row by being added to b (the default 0
    enforces the condition exactly).  ``values`` may pass in precomputed
    primitive values to avoid re-evaluating the barriers.
    """
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    _require_tree(tree, len(barriers))
    if values is None:
        values = barrier_values(barriers, x)
    pivot = evaluate_pivot(tree, values).pivot
    rows = []
    for k, bar in enumerate(barriers):
        lie = lie_derivatives(bar, system, x)
        b = -alpha(pivot + abs(values[k] - pivot)) - lie.lfh + margin
        rows.append(ConstraintRow(a=lie.lgh, b=b, source_index=k))
    return rows


def build_rows_mcbf_diag(tree: LogicTree,
                         diag_entries: Sequence[Sequence[PrimitiveBarrier]],
                         system: ControlAffineSystem, alpha: ClassKappa,
                         x: np.ndarray, margin: float = 0.0) -> list[ConstraintRow]:
    """Rows for a choose-tree over the eigenvalues of diagonal barrier matrices.

    Each block is a diagonal matrix whose entries are scalar primitives, so its
    eigenvalues are the entry values sorted ascending.  The tree is indexed by
    eigenvalue slots (blocks concatenated, each ascending); the emitted rows
    stay in original entry order, one per entry, with right-hand side
    -alpha(h + |h - lambda|) - lfh.  Matrices that are not built from scalar
    diagonals are not supported here (that enforcement needs a semidefinite
    program, which is out of scope).
    """
    entries: list[PrimitiveBarrier] = []
    block_values: list[np.ndarray] = []
    for bi, block in enumerate(diag_entries):
        block = list(block)
        if not block:
            raise ValueError(f"block {bi} is empty")
        for e in block:
            if not isinstance(e, PrimitiveBarrier):
                raise ValueError(f"block {bi} must contain scalar primitives "
                                 f"(diagonal structure); got {type(e).__name__}")
        entries.extend(block)
        block_values.append(barrier_values(block, x))
    slot_values = np.concatenate([np.sort(bv) for bv in block_values])
    _require_tree(tree, len(entries))
    pivot = evaluate_pivot(tree, slot_values).pivot
    flat_values = np.concatenate(block_values)
    rows = []
    for k, bar in enumerate(entries):
        lie = lie_derivatives(bar, system, x)
        b = -alpha(pivot + abs(pivot - flat_values[k])) - lie.lfh + margin
        rows.append(ConstraintRow(a=lie.lgh, b=b, source_index=k))
    return rows


def build_indefinite_rows(diag_entries: Sequence[PrimitiveBarrier],
                          alpha: ClassKappa, c_perp: float,
                          system: ControlAffineSystem,
                          x: np.ndarray) -> list[ConstraintRow]:
    """Rows enforcing only the largest entry's nonnegativity (the OR case).

    For a diagonal block with entry values h_j and largest value lam_p, each
    row reads hdot_j >= -alpha(lam_p) - c_perp * (lam_p - h_j): entries below
    the top get an extra relaxation proportional to their distance from it.
    """
    c_perp = float(c_perp)
    if c_perp < 0:
        raise ValueError(f"c_perp must be nonnegative, got {c_perp}")
    entries = list(diag_entries)
    if not entries:
        raise ValueError("need at least one entry")
    values = barrier_values(entries, x)
    lam_p = float(np.max(values))
    rows = []
    for j, bar in enumerate(entries):
        lie = lie_derivatives(bar, system, x)
        b = -alpha(lam_p) - c_perp * (lam_p - values[j]) - lie.lfh
        rows.append(ConstraintRow(a=lie.lgh, b=b, source_index=j))
    return rows


def per_level_values(tree: LogicTree, barriers: Sequence[PrimitiveBarrier],
                     x: np.ndarray,
                     values: np.ndarray | None = None) -> dict[int, list[float]]:
    """Node values grouped by level, each level sorted descending.

    Level 0 holds the leaf (primitive) values; a Choose node sits one level
    above its tallest child.  For a flat tree level 0 is therefore the full
    list of order statistics, which is what the simulator audits the
    per-order-statistic decay bound against.
    """
    _require_tree(tree, len(barriers))
    if values is None:
        values = barrier_values(barriers, x)
    result = evaluate_pivot(tree, values)

    heights: dict[tuple[int, ...], int] = {}

    def height(node: LogicTree, path: tuple[int, ...]) -> int:
        if isinstance(node, Leaf):
            h = 0
        else:
            h = 1 + max(height(ch, path + (i,)) for i, ch in enumerate(node.children))
        heights[path] = h
        return h

    height(tree, ())
    levels: dict[int, list[float]] = {}
    for path, v in result.per_node_values.items():
        levels.setdefault(heights[path], []).append(v)
    return {lvl: sorted(vs, reverse=True) for lvl, vs in sorted(levels.items())}
