"""Nested p-choose-r constraint trees: pivot evaluation and combinatorial helpers.

A specification tree has two node kinds: ``Leaf(k)`` references the k-th
primitive constraint, and ``Choose(r, children)`` requires at least ``r`` of
its children to hold.  The pivot of a tree over a vector of primitive values
is the recursive r-th-largest reduction; it is nonnegative exactly when the
nested requirement is met, which is what lets a p-leaf specification be
enforced with p inequality rows instead of an exponential clause expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence, Union

__all__ = [
    "Leaf",
    "Choose",
    "LogicTree",
    "leaf",
    "choose",
    "Violation",
    "ValidationReport",
    "TreeValidationError",
    "validate",
    "kth_largest",
    "PivotResult",
    "evaluate_pivot",
    "membership_oracle",
    "naive_combination_count",
    "tree_to_json",
    "tree_from_json",
]


@dataclass(frozen=True)
class Leaf:
    """References primitive constraint ``index`` (0-based)."""

    index: int


@dataclass(frozen=True)
class Choose:
    """Requires at least ``r`` of ``children`` to hold."""

    r: int
    children: tuple["LogicTree", ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))


LogicTree = Union[Leaf, Choose]


def leaf(index: int) -> Leaf:
    return Leaf(int(index))


def choose(r: int, children: Iterable[LogicTree]) -> Choose:
    return Choose(int(r), tuple(children))


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


class TreeValidationError(ValueError):
    """Raised when an operation receives a tree that fails validation."""

    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__("; ".join(str(v) for v in report.violations))


def _walk_violations(node: LogicTree, primitive_count: int | None, path: str,
                     out: list[Violation]) -> None:
    if isinstance(node, Leaf):
        if primitive_count is not None and not 0 <= node.index < primitive_count:
            out.append(Violation(path, f"leaf index out of range: {node.index} "
                                       f"(primitive count {primitive_count})"))
        elif node.index < 0:
            out.append(Violation(path, f"leaf index out of range: {node.index}"))
        return
    if isinstance(node, Choose):
        if not node.children:
            out.append(Violation(path, "empty children"))
            return
        if node.r < 1:
            out.append(Violation(path, f"r must be positive, got {node.r}"))
        elif node.r > len(node.children):
            out.append(Violation(path, f"r exceeds child count: {node.r} > "
                                       f"{len(node.children)}"))
        for i, ch in enumerate(node.children):
            _walk_violations(ch, primitive_count, f"{path}/{i}", out)
        return
    out.append(Violation(path, f"not a tree node: {type(node).__name__}"))


def validate(tree: LogicTree, primitive_count: int) -> ValidationReport:
    """Check r-ranges, child lists, and leaf index bounds; report violations by node path."""
    out: list[Violation] = []
    _walk_violations(tree, int(primitive_count), "root", out)
    return ValidationReport(tuple(out))


def _require_valid(tree: LogicTree, primitive_count: int | None) -> None:
    out: list[Violation] = []
    _walk_violations(tree, primitive_count, "root", out)
    if out:
        raise TreeValidationError(ValidationReport(tuple(out)))


_SORT_CUTOFF = 32


def kth_largest(values: Sequence[float], r: int) -> float:
    """r-th largest element counted with multiplicity (so the (p-r+1)-th smallest).

    Sorts outright up to 32 values; larger inputs use a deterministic
    median-of-three quickselect.
    """
    vals = [float(v) for v in values]
    p = len(vals)
    if r < 1 or r > p:
        raise ValueError(f"r={r} out of range for {p} values")
    if p <= _SORT_CUTOFF:
        return sorted(vals, reverse=True)[r - 1]
    return _select_descending(vals, r - 1)


def _select_descending(vals: list[float], k: int) -> float:
    # Dutch-flag quickselect; pivot is the median of (lo, mid, hi) so the
    # recursion is input-determined, never randomized.
    lo, hi = 0, len(vals) - 1
    while True:
        if lo >= hi:
            return vals[lo]
        pivot = sorted((vals[lo], vals[(lo + hi) // 2], vals[hi]))[1]
        lt, i, gt = lo, lo, hi
        while i <= gt:
            v = vals[i]
            if v > pivot:
                vals[i], vals[lt] = vals[lt], vals[i]
                lt += 1
                i += 1
            elif v < pivot:
                vals[i], vals[gt] = vals[gt], vals[i]
                gt -= 1
            else:
                i += 1
        if k < lt:
            hi = lt - 1
        elif k > gt:
            lo = gt + 1
        else:
            return pivot


@dataclass(frozen=True)
class PivotResult:
    """Pivot value plus every intermediate node value keyed by tree path.

    Paths are tuples of child positions from the root: ``()`` is the root,
    ``(0, 2)`` the third child of the first child.
    """

    pivot: float
    per_node_values: Mapping[tuple[int, ...], float]


def evaluate_pivot(tree: LogicTree, primitive_values: Sequence[float]) -> PivotResult:
    """Bottom-up pivot: a Leaf takes its primitive value, a Choose the r-th largest child value."""
    vals = [float(v) for v in primitive_values]
    _require_valid(tree, len(vals))
    node_values: dict[tuple[int, ...], float] = {}

    def rec(node: LogicTree, path: tuple[int, ...]) -> float:
        if isinstance(node, Leaf):
            v = vals[node.index]
        else:
            v = kth_largest([rec(ch, path + (i,)) for i, ch in enumerate(node.children)],
                            node.r)
        node_values[path] = v
        return v

    pivot = rec(tree, ())
    return PivotResult(pivot, node_values)


def membership_oracle(tree: LogicTree, primitive_values: Sequence[float]) -> bool:
    """Brute-force satisfaction: a Leaf holds iff its value is >= 0, a Choose iff
    at least r children hold.  Independent of the pivot arithmetic; used as the
    ground truth it is checked against.
    """
    vals = [float(v) for v in primitive_values]
    _require_valid(tree, len(vals))

    def rec(node: LogicTree) -> bool:
        if isinstance(node, Leaf):
            return vals[node.index] >= 0.0
        return sum(1 for ch in node.children if rec(ch)) >= node.r

    return rec(tree)


def naive_combination_count(tree: LogicTree) -> int:
    """Clause count a direct AND/OR encoding would enumerate.

    A Choose node over n children expands to sum_{k=r}^{n} C(n,k) subsets;
    nesting multiplies by the dominant (largest) child count, which is the
    arithmetic the avoided-blow-up figures quote.  The pivot formulation
    replaces all of this with one row per leaf.
    """
    _require_valid(tree, None)

    def rec(node: LogicTree) -> int:
        if isinstance(node, Leaf):
            return 1
        n = len(node.children)
        own = sum(math.comb(n, k) for k in range(node.r, n + 1))
        return own * max(rec(ch) for ch in node.children)

    return rec(tree)


def tree_to_json(tree: LogicTree) -> dict:
    """Canonical JSON form: ``{"leaf": k}`` or ``{"choose": r, "of": [...]}``."""
    if isinstance(tree, Leaf):
        return {"leaf": tree.index}
    if isinstance(tree, Choose):
        return {"choose": tree.r, "of": [tree_to_json(ch) for ch in tree.children]}
    raise TypeError(f"not a tree node: {type(tree).__name__}")


def tree_from_json(obj: object, path: str = "tree") -> LogicTree:
    """Parse the canonical JSON form; rejects unknown or missing keys."""
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: expected an object, got {type(obj).__name__}")
    keys = set(obj)
    if keys == {"leaf"}:
        idx = obj["leaf"]
        if not isinstance(idx, int) or isinstance(idx, bool):
            raise ValueError(f"{path}.leaf: expected an integer index")
        return Leaf(idx)
    if keys == {"choose", "of"}:
        r = obj["choose"]
        if not isinstance(r, int) or isinstance(r, bool):
            raise ValueError(f"{path}.choose: expected an integer r")
        of = obj["of"]
        if not isinstance(of, list) or not of:
            raise ValueError(f"{path}.of: expected a non-empty list")
        children = tuple(tree_from_json(ch, f"{path}.of[{i}]") for i, ch in enumerate(of))
        return Choose(r, children)
    raise ValueError(f"{path}: expected keys {{'leaf'}} or {{'choose', 'of'}}, got {sorted(keys)}")
