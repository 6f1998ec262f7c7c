"""Built-in demo scenarios, embedded so the experiments run with no external files.

Shapes follow the standard construction: a rectangle is the AND of four
halfspaces, a corner the OR of two, an L-shape the AND of both, and the
patrolling task stacks eleven agents with two L-shaped regions that must each
hold at least four agents.  Region placement, gains, amplitudes, and
frequencies are documented reconstructions chosen so every run starts safely;
they are not measured data.
"""

from __future__ import annotations

import math

__all__ = ["DEMO_NAMES", "demo_scenario"]


def _hs(ax: float, ay: float, b: float, agent: int | None = None) -> dict:
    d: dict = {"halfspace": {"a": [ax, ay], "b": b}}
    if agent is not None:
        d["agent"] = agent
    return d


def _leaf(k: int) -> dict:
    return {"leaf": k}


def _choose(r: int, of: list) -> dict:
    return {"choose": r, "of": of}


# Halfspace families (ax, ay, b) for the two L-shaped regions: four rectangle
# walls then the two corner halfspaces whose union carves the notch.
_L1_WALLS = [(1.0, 0.0, 6.0), (-1.0, 0.0, -1.0), (0.0, 1.0, 2.0), (0.0, -1.0, 2.0),
             (-1.0, 0.0, -4.5), (0.0, -1.0, 0.0)]
_L2_WALLS = [(1.0, 0.0, -1.0), (-1.0, 0.0, 6.0), (0.0, 1.0, 2.0), (0.0, -1.0, 2.0),
             (1.0, 0.0, -4.5), (0.0, -1.0, 0.0)]
_BOX_WALLS = [(1.0, 0.0, 1.0), (-1.0, 0.0, 1.0), (0.0, 1.0, 1.0), (0.0, -1.0, 1.0)]


def _lshape_tree(base: int) -> dict:
    rect = _choose(4, [_leaf(base + i) for i in range(4)])
    corner = _choose(1, [_leaf(base + 4), _leaf(base + 5)])
    return _choose(2, [rect, corner])


def _patrol() -> dict:
    agents = 11
    primitives = []
    for j in range(agents):
        for ax, ay, b in _L1_WALLS + _L2_WALLS:
            primitives.append(_hs(ax, ay, b, agent=j))
    region1 = _choose(4, [_lshape_tree(12 * j) for j in range(agents)])
    region2 = _choose(4, [_lshape_tree(12 * j + 6) for j in range(agents)])
    tree = _choose(2, [region1, region2])
    positions = [(-5.0, -1.0), (-3.0, -1.2), (-2.0, -0.8), (-5.3, 1.0), (-4.8, -0.5),
                 (5.0, -1.0), (3.0, -1.2), (2.0, -0.8), (5.3, 1.0), (4.8, -0.5),
                 (0.0, -1.0)]
    x0 = [c for p in positions for c in p]
    return {
        "version": 1,
        "name": "patrol",
        "description": "Eleven agents patrol two L-shaped regions; each region "
                       "keeps at least four agents at all times (reconstructed "
                       "geometry and gains).",
        "system": {"type": "single_integrator", "agents": agents, "agent_dim": 2},
        "primitives": primitives,
        "tree": tree,
        "alpha": {"kind": "linear", "gamma": 1.0},
        "controller": {
            "kind": "sinusoidal",
            "kappa": [1.0] * agents,
            "amplitude": [3.5, 3.9, 4.3, 4.7, 5.1, 3.7, 4.1, 4.5, 4.9, 5.3, 4.0],
            "omega": [0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75],
        },
        "initial_state": x0,
        "dt": 0.01,
        "horizon": 50.0,
        "regions": [
            {"name": "L1", "agent_trees": [_lshape_tree(12 * j) for j in range(agents)]},
            {"name": "L2", "agent_trees": [_lshape_tree(12 * j + 6) for j in range(agents)]},
        ],
    }


def _surveillance() -> dict:
    radius = 1.2
    angles = [0.5 * math.pi, 7.0 * math.pi / 6.0, 11.0 * math.pi / 6.0]
    speeds = [0.5, 0.45, 0.55]
    x0 = []
    push = []
    for ang, v in zip(angles, speeds):
        x0 += [radius * math.cos(ang), radius * math.sin(ang)]
        push += [v * math.cos(ang), v * math.sin(ang)]
    return {
        "version": 1,
        "name": "surveillance",
        "description": "Three agents pushed radially out of a disk; the filter "
                       "keeps at least two inside.",
        "system": {"type": "single_integrator", "agents": 3, "agent_dim": 2},
        "primitives": [{"ball": {"c": [0.0, 0.0], "R": 2.0}, "agent": j} for j in range(3)],
        "tree": _choose(2, [_leaf(0), _leaf(1), _leaf(2)]),
        "alpha": {"kind": "linear", "gamma": 2.0},
        "controller": {"kind": "constant", "value": push},
        "initial_state": x0,
        "dt": 0.01,
        "horizon": 20.0,
        "regions": [{"name": "disk", "agent_trees": [_leaf(j) for j in range(3)]}],
        # The escaping agent's barrier intentionally decays faster than its own
        # class-K bound, so the per-order-statistic audit check is off.
        "audit": {"check_bound": False},
    }


def _corner() -> dict:
    return {
        "version": 1,
        "name": "corner",
        "description": "Union of two halfspaces (2-choose-1); the agent slides "
                       "along the excluded quadrant's edge.",
        "system": {"type": "single_integrator", "agents": 1, "agent_dim": 2},
        "primitives": [_hs(-1.0, 0.0, 0.0), _hs(0.0, -1.0, 0.0)],
        "tree": _choose(1, [_leaf(0), _leaf(1)]),
        "controller": {"kind": "constant", "value": [0.6, 0.4]},
        "initial_state": [-1.0, -1.0],
        "dt": 0.01,
        "horizon": 10.0,
        "regions": [{"name": "corner", "agent_trees": [_choose(1, [_leaf(0), _leaf(1)])]}],
        "audit": {"check_bound": False},
    }


def _rectangle() -> dict:
    return {
        "version": 1,
        "name": "rectangle",
        "description": "Intersection of four halfspaces (4-choose-4); a sinusoid "
                       "drives the agent against the walls.",
        "system": {"type": "single_integrator", "agents": 1, "agent_dim": 2},
        "primitives": [_hs(*w) for w in _BOX_WALLS],
        "tree": _choose(4, [_leaf(i) for i in range(4)]),
        "controller": {"kind": "sinusoidal", "kappa": [1.5], "amplitude": [3.0],
                       "omega": [0.8]},
        "initial_state": [0.2, -0.3],
        "dt": 0.01,
        "horizon": 10.0,
        "regions": [{"name": "box", "agent_trees": [_choose(4, [_leaf(i) for i in range(4)])]}],
    }


def _cross() -> dict:
    return {
        "version": 1,
        "name": "cross",
        "description": "At least three of the four box walls must hold "
                       "(4-choose-3), giving a cross-shaped safe set.",
        "system": {"type": "single_integrator", "agents": 1, "agent_dim": 2},
        "primitives": [_hs(*w) for w in _BOX_WALLS],
        "tree": _choose(3, [_leaf(i) for i in range(4)]),
        "controller": {"kind": "constant", "value": [0.5, 0.35]},
        "initial_state": [0.0, 0.0],
        "dt": 0.01,
        "horizon": 10.0,
        "regions": [{"name": "cross", "agent_trees": [_choose(3, [_leaf(i) for i in range(4)])]}],
        "audit": {"check_bound": False},
    }


def _lshape() -> dict:
    return {
        "version": 1,
        "name": "lshape",
        "description": "Single agent held inside an L-shaped region (2-choose-2 "
                       "of a rectangle and a corner).",
        "system": {"type": "single_integrator", "agents": 1, "agent_dim": 2},
        "primitives": [_hs(ax, ay, b) for ax, ay, b in _L1_WALLS],
        "tree": _lshape_tree(0),
        "controller": {"kind": "sinusoidal", "kappa": [1.2], "amplitude": [5.0],
                       "omega": [0.5]},
        "initial_state": [-5.0, -1.0],
        "dt": 0.01,
        "horizon": 10.0,
        "regions": [{"name": "L", "agent_trees": [_lshape_tree(0)]}],
    }


_BUILDERS = {
    "surveillance": _surveillance,
    "patrol": _patrol,
    "corner": _corner,
    "rectangle": _rectangle,
    "cross": _cross,
    "lshape": _lshape,
}

DEMO_NAMES = tuple(_BUILDERS)


def demo_scenario(name: str) -> dict:
    """Fresh scenario dict for a built-in demo; raises KeyError on unknown names."""
    if name not in _BUILDERS:
        raise KeyError(f"unknown demo {name!r}; available: {', '.join(DEMO_NAMES)}")
    return _BUILDERS[name]()
