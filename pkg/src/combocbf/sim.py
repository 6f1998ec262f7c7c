"""Closed-loop simulation under the combinatorial safety filter.

A scenario couples a system, primitive barriers, a choose-tree, a desired
controller, and integration settings.  Each step evaluates the desired
control, compiles the constraint rows at the current state, solves the
projection QP (warm-started with the previous active set), applies the result
under zero-order hold, and records a full audit trail.  Runs are strictly
deterministic: identical configs produce byte-identical trajectory files.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import qp
from .constraints import barrier_values, build_rows, per_level_values
from .logic import (Choose, Leaf, LogicTree, evaluate_pivot, membership_oracle,
                    tree_from_json, tree_to_json, validate)
from .primitives import (ClassKappa, ControlAffineSystem, PrimitiveBarrier,
                         make_agent_block, make_ball_interior, make_halfspace,
                         single_integrator)

__all__ = [
    "ScenarioError",
    "RegionSpec",
    "ScenarioConfig",
    "TrajectoryRecord",
    "SimResult",
    "run",
    "run_batch",
    "audit",
    "AuditReport",
    "AuditViolation",
    "region_counts",
    "write_trajectory_jsonl",
    "read_trajectory_jsonl",
    "write_trajectory_csv",
    "TRAJECTORY_KIND",
    "TRAJECTORY_VERSION",
]

TRAJECTORY_KIND = "combocbf-trajectory"
TRAJECTORY_VERSION = 1


class ScenarioError(ValueError):
    """Scenario validation failure, carrying the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class RegionSpec:
    """Named region membership, one subtree per agent over global primitive indices."""

    name: str
    agent_trees: tuple[LogicTree, ...]


@dataclass
class ScenarioConfig:
    """Validated, fully built scenario.  Use ``from_dict`` for the JSON schema;
    programmatic construction allows custom systems the schema cannot express."""

    name: str
    system: ControlAffineSystem
    barriers: tuple[PrimitiveBarrier, ...]
    tree: LogicTree
    controller: Callable[[np.ndarray, float], np.ndarray]
    x0: np.ndarray
    dt: float
    horizon: float
    alpha: ClassKappa = field(default_factory=ClassKappa)
    integrator: str = "euler"
    margin: float = 0.0
    regions: tuple[RegionSpec, ...] = ()
    tol_safety: float = 1e-4
    on_infeasible: str = "halt"
    bound_coeff: float = 10.0
    check_bound: bool = True
    output_format: str = "jsonl"
    source: dict | None = None

    def __post_init__(self) -> None:
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.x0.shape != (self.system.state_dim,):
            raise ScenarioError("initial_state",
                                f"expected {self.system.state_dim} entries, got {self.x0.size}")
        report = validate(self.tree, len(self.barriers))
        if not report.ok:
            raise ScenarioError("tree", "; ".join(str(v) for v in report.violations))
        if not self.dt > 0:
            raise ScenarioError("dt", f"must be positive, got {self.dt}")
        if self.dt > self.horizon:
            raise ScenarioError("dt", f"dt={self.dt} exceeds horizon={self.horizon}")
        n = self.horizon / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ScenarioError("horizon", f"horizon={self.horizon} is not a multiple of dt={self.dt}")
        if self.integrator not in ("euler", "rk4"):
            raise ScenarioError("integrator", f"expected 'euler' or 'rk4', got {self.integrator!r}")
        if self.on_infeasible not in ("halt", "flag"):
            raise ScenarioError("on_infeasible", f"expected 'halt' or 'flag', got {self.on_infeasible!r}")
        if self.margin < 0:
            raise ScenarioError("margin", f"must be nonnegative, got {self.margin}")
        if self.tol_safety < 0:
            raise ScenarioError("tol_safety", f"must be nonnegative, got {self.tol_safety}")
        if self.output_format not in ("jsonl", "csv"):
            raise ScenarioError("output.format", f"expected 'jsonl' or 'csv', got {self.output_format!r}")
        for region in self.regions:
            for j, t in enumerate(region.agent_trees):
                rep = validate(t, len(self.barriers))
                if not rep.ok:
                    raise ScenarioError(f"regions[{region.name}].agent_trees[{j}]",
                                        "; ".join(str(v) for v in rep.violations))

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @staticmethod
    def from_dict(data: dict) -> "ScenarioConfig":
        return _scenario_from_dict(data)

    def to_dict(self) -> dict:
        if self.source is None:
            raise ValueError("scenario was built programmatically; no JSON source to emit")
        return json.loads(json.dumps(self.source))


# ---------------------------------------------------------------------------
# JSON schema parsing.  Unknown keys are rejected at every level so that typos
# fail loudly instead of silently running a different experiment.

def _check_keys(obj: dict, path: str, required: Sequence[str], optional: Sequence[str]) -> None:
    if not isinstance(obj, dict):
        raise ScenarioError(path, f"expected an object, got {type(obj).__name__}")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ScenarioError(path, f"unknown keys: {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise ScenarioError(path, f"missing keys: {missing}")


def _number(obj: dict, key: str, path: str, *, default=None) -> float:
    if key not in obj:
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{path}.{key}", f"expected a number, got {type(v).__name__}")
    return float(v)


def _int(obj: dict, key: str, path: str) -> int:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(f"{path}.{key}", f"expected an integer, got {type(v).__name__}")
    return v


def _vector(v, path: str, length: int | None = None) -> np.ndarray:
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ScenarioError(path, "expected a list of numbers")
    arr = np.asarray(v, dtype=float)
    if length is not None and arr.size != length:
        raise ScenarioError(path, f"expected {length} entries, got {arr.size}")
    return arr


def _scenario_from_dict(data: dict) -> ScenarioConfig:
    _check_keys(data, "scenario",
                required=["version", "name", "system", "primitives", "tree",
                          "controller", "initial_state", "dt", "horizon"],
                optional=["description", "alpha", "margin", "integrator", "regions",
                          "tol_safety", "on_infeasible", "audit", "output"])
    if "description" in data and not isinstance(data["description"], str):
        raise ScenarioError("description", "expected a string")
    if data["version"] != 1:
        raise ScenarioError("version", f"unsupported scenario version {data['version']!r}")
    name = data["name"]
    if not isinstance(name, str) or not name:
        raise ScenarioError("name", "expected a non-empty string")

    sysd = data["system"]
    _check_keys(sysd, "system", required=["type", "agents", "agent_dim"], optional=[])
    if sysd["type"] != "single_integrator":
        raise ScenarioError("system.type", f"unsupported system type {sysd['type']!r} "
                                           "(custom dynamics require programmatic configs)")
    agents = _int(sysd, "agents", "system")
    agent_dim = _int(sysd, "agent_dim", "system")
    if agents < 1 or agent_dim < 1:
        raise ScenarioError("system", "agents and agent_dim must be positive")
    n = agents * agent_dim
    system = single_integrator(n)

    prims = data["primitives"]
    if not isinstance(prims, list) or not prims:
        raise ScenarioError("primitives", "expected a non-empty list")
    barriers = tuple(_primitive_from_dict(pd, f"primitives[{i}]", agents, agent_dim, n)
                     for i, pd in enumerate(prims))

    tree = tree_from_json(data["tree"], "tree")

    alphad = data.get("alpha", {"kind": "linear", "gamma": 1.0})
    _check_keys(alphad, "alpha", required=["kind"], optional=["gamma"])
    try:
        alpha = ClassKappa(alphad["kind"], _number(alphad, "gamma", "alpha", default=1.0))
    except ValueError as e:
        raise ScenarioError("alpha", str(e)) from None

    controller = _controller_from_dict(data["controller"], agents, agent_dim, n)

    x0 = _vector(data["initial_state"], "initial_state", n)
    dt = _number(data, "dt", "scenario")
    horizon = _number(data, "horizon", "scenario")

    regions = []
    for i, rd in enumerate(data.get("regions", [])):
        _check_keys(rd, f"regions[{i}]", required=["name", "agent_trees"], optional=[])
        rname = rd["name"]
        if not isinstance(rname, str) or not rname:
            raise ScenarioError(f"regions[{i}].name", "expected a non-empty string")
        trees_json = rd["agent_trees"]
        if not isinstance(trees_json, list) or len(trees_json) != agents:
            raise ScenarioError(f"regions[{i}].agent_trees",
                                f"expected one tree per agent ({agents})")
        trees = tuple(tree_from_json(tj, f"regions[{i}].agent_trees[{j}]")
                      for j, tj in enumerate(trees_json))
        regions.append(RegionSpec(rname, trees))

    auditd = data.get("audit", {})
    _check_keys(auditd, "audit", required=[], optional=["bound_coeff", "check_bound"])
    check_bound = auditd.get("check_bound", True)
    if not isinstance(check_bound, bool):
        raise ScenarioError("audit.check_bound", "expected a boolean")

    outd = data.get("output", {})
    _check_keys(outd, "output", required=[], optional=["format"])

    return ScenarioConfig(
        name=name,
        system=system,
        barriers=barriers,
        tree=tree,
        controller=controller,
        x0=x0,
        dt=dt,
        horizon=horizon,
        alpha=alpha,
        integrator=data.get("integrator", "euler"),
        margin=_number(data, "margin", "scenario", default=0.0),
        regions=tuple(regions),
        tol_safety=_number(data, "tol_safety", "scenario", default=1e-4),
        on_infeasible=data.get("on_infeasible", "halt"),
        bound_coeff=_number(auditd, "bound_coeff", "audit", default=10.0),
        check_bound=check_bound,
        output_format=outd.get("format", "jsonl"),
        source=json.loads(json.dumps(data)),
    )


def _primitive_from_dict(pd: dict, path: str, agents: int, agent_dim: int,
                         n: int) -> PrimitiveBarrier:
    if not isinstance(pd, dict):
        raise ScenarioError(path, "expected an object")
    shape_keys = [k for k in pd if k in ("ball", "halfspace")]
    if len(shape_keys) != 1:
        raise ScenarioError(path, "expected exactly one shape key ('ball' or 'halfspace')")
    kind = shape_keys[0]
    _check_keys(pd, path, required=[kind], optional=["agent"])
    agent = pd.get("agent")
    if agent is not None and (isinstance(agent, bool) or not isinstance(agent, int)):
        raise ScenarioError(f"{path}.agent", "expected an integer agent index")
    if agent is not None and not 0 <= agent < agents:
        raise ScenarioError(f"{path}.agent", f"agent {agent} out of range for {agents} agents")
    shape_dim = agent_dim if agent is not None else n

    sd = pd[kind]
    try:
        if kind == "ball":
            _check_keys(sd, f"{path}.ball", required=["c", "R"], optional=[])
            c = _vector(sd["c"], f"{path}.ball.c", shape_dim)
            shape = make_ball_interior(c, _number(sd, "R", f"{path}.ball"))
        else:
            _check_keys(sd, f"{path}.halfspace", required=["a", "b"], optional=[])
            a = _vector(sd["a"], f"{path}.halfspace.a", shape_dim)
            shape = make_halfspace(a, _number(sd, "b", f"{path}.halfspace"))
    except ValueError as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError(path, str(e)) from None
    if agent is not None:
        return make_agent_block(shape, agent, agent_dim)
    return shape


def _controller_from_dict(cd: dict, agents: int, agent_dim: int,
                          n: int) -> Callable[[np.ndarray, float], np.ndarray]:
    if not isinstance(cd, dict) or "kind" not in cd:
        raise ScenarioError("controller", "expected an object with a 'kind' key")
    kind = cd["kind"]
    if kind == "zero":
        _check_keys(cd, "controller", required=["kind"], optional=[])
        zero = np.zeros(n)
        return lambda x, t: zero.copy()
    if kind == "constant":
        _check_keys(cd, "controller", required=["kind", "value"], optional=[])
        value = _vector(cd["value"], "controller.value", n)
        return lambda x, t: value.copy()
    if kind == "sinusoidal":
        _check_keys(cd, "controller", required=["kind", "kappa", "amplitude", "omega"],
                    optional=[])
        kappa = _vector(cd["kappa"], "controller.kappa", agents)
        amp = _vector(cd["amplitude"], "controller.amplitude", agents)
        omega = _vector(cd["omega"], "controller.omega", agents)
        for nm, arr in (("kappa", kappa), ("amplitude", amp), ("omega", omega)):
            if np.any(arr <= 0):
                raise ScenarioError(f"controller.{nm}", "entries must be positive")
        d = agent_dim

        def kd(x: np.ndarray, t: float) -> np.ndarray:
            # Per-agent tracking of x_d(t) = A sin(w t) on the first coordinate,
            # feedforward included; remaining coordinates get zero desired input.
            u = np.zeros(n)
            xd = amp * np.sin(omega * t)
            xdd = amp * omega * np.cos(omega * t)
            u[0::d] = kappa * (xd - x[0::d]) + xdd
            return u

        return kd
    raise ScenarioError("controller.kind", f"unknown controller kind {kind!r}")


# ---------------------------------------------------------------------------
# Running.

@dataclass(frozen=True)
class TrajectoryRecord:
    """One simulation step: state, applied control, QP verdict, and audit data."""

    t: float
    x: np.ndarray
    u: np.ndarray
    status: str
    pivot: float
    values: np.ndarray
    levels: dict[int, list[float]]
    active_size: int
    min_slack: float
    region_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "x": self.x.tolist(),
            "u": self.u.tolist(),
            "status": self.status,
            "pivot": self.pivot,
            "values": self.values.tolist(),
            "levels": {str(k): v for k, v in self.levels.items()},
            "active_size": self.active_size,
            "min_slack": self.min_slack,
            "region_counts": dict(self.region_counts),
        }

    @staticmethod
    def from_dict(d: dict) -> "TrajectoryRecord":
        return TrajectoryRecord(
            t=float(d["t"]),
            x=np.asarray(d["x"], dtype=float),
            u=np.asarray(d["u"], dtype=float),
            status=str(d["status"]),
            pivot=float(d["pivot"]),
            values=np.asarray(d["values"], dtype=float),
            levels={int(k): list(map(float, v)) for k, v in d["levels"].items()},
            active_size=int(d["active_size"]),
            min_slack=float(d["min_slack"]),
            region_counts={str(k): int(v) for k, v in d["region_counts"].items()},
        )


@dataclass
class SimResult:
    records: list[TrajectoryRecord]
    summary: dict


def _integrate(system: ControlAffineSystem, x: np.ndarray, u: np.ndarray,
               dt: float, scheme: str) -> np.ndarray:
    if system.drift_is_zero and system.control_matrix_is_identity:
        # xdot = u is constant under zero-order hold, so both schemes are exact.
        return x + dt * u

    def xdot(y: np.ndarray) -> np.ndarray:
        return np.asarray(system.f(y), dtype=float) + np.asarray(system.g(y), dtype=float) @ u

    if scheme == "euler":
        return x + dt * xdot(x)
    k1 = xdot(x)
    k2 = xdot(x + 0.5 * dt * k1)
    k3 = xdot(x + 0.5 * dt * k2)
    k4 = xdot(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run(config: ScenarioConfig) -> SimResult:
    """Simulate the closed loop; records cover every step including the final state.

    The control is held constant across each step (zero-order hold).  On a QP
    failure the 'halt' policy stops after recording the offending step; 'flag'
    applies the desired control and keeps going with the status flagged.
    """
    system = config.system
    barriers = config.barriers
    x = config.x0.copy()
    warm: tuple[int, ...] = ()
    records: list[TrajectoryRecord] = []
    halted_at: int | None = None
    start = time.perf_counter()
    for i in range(config.n_steps + 1):
        t = i * config.dt
        kd = np.asarray(config.controller(x, t), dtype=float)
        values = barrier_values(barriers, x)
        rows = build_rows(config.tree, barriers, system, config.alpha, x,
                          margin=config.margin, values=values)
        sol = qp.solve(qp.QPProblem(kd, rows), warm_start=warm)
        warm = sol.active_set
        ok = sol.status == qp.OPTIMAL
        u = sol.u if ok else kd
        levels = per_level_values(config.tree, barriers, x, values=values)
        counts = _region_counts_at(values, config.regions, config.tol_safety)
        records.append(TrajectoryRecord(
            t=t, x=x.copy(), u=u.copy(), status=sol.status,
            pivot=levels[max(levels)][0], values=values,
            levels=levels, active_size=len(sol.active_set),
            min_slack=sol.min_slack, region_counts=counts,
        ))
        if not ok and config.on_infeasible == "halt":
            halted_at = i
            break
        if i < config.n_steps:
            x = _integrate(system, x, u, config.dt, config.integrator)
    wall = time.perf_counter() - start

    pivots = np.array([r.pivot for r in records])
    statuses = [r.status for r in records]
    summary = {
        "scenario": config.name,
        "steps": len(records),
        "rows_per_step": len(barriers),
        "min_pivot": float(np.min(pivots)),
        "safety_violations": int(np.sum(pivots < -config.tol_safety)),
        "qp_failures": sum(1 for s in statuses if s != qp.OPTIMAL),
        "halted_at": halted_at,
        "min_region_counts": {
            name: min(r.region_counts[name] for r in records)
            for name in (config.regions and [rg.name for rg in config.regions] or [])
        },
        "wall_clock_s": wall,
    }
    return SimResult(records, summary)


def _region_counts_at(values: np.ndarray, regions: Sequence[RegionSpec],
                      tol: float) -> dict[str, int]:
    counts: dict[str, int] = {}
    for region in regions:
        c = 0
        for tree in region.agent_trees:
            if evaluate_pivot(tree, values).pivot >= -tol:
                c += 1
        counts[region.name] = c
    return counts


def run_batch(configs: Sequence[ScenarioConfig], workers: int = 1) -> list[SimResult]:
    """Run independent scenarios, optionally on a thread pool; order is preserved."""
    if workers <= 1:
        return [run(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, configs))


# ---------------------------------------------------------------------------
# Auditing.

@dataclass(frozen=True)
class AuditViolation:
    step: int
    kind: str
    detail: str


@dataclass
class AuditReport:
    steps: int
    violations: list[AuditViolation]

    @property
    def ok(self) -> bool:
        return not self.violations


def audit(records: Sequence[TrajectoryRecord], tree: LogicTree,
          barriers: Sequence[PrimitiveBarrier], *, alpha: ClassKappa | None = None,
          dt: float | None = None, tol: float = 1e-4, bound_coeff: float = 10.0,
          check_bound: bool = True) -> AuditReport:
    """Recompute safety from logged states, independently of the logged values.

    Checks per step: (i) the tree pivot is >= -tol; (ii) the brute-force
    membership oracle accepts the values shifted by tol.  For flat trees with
    ``alpha`` and ``dt`` supplied, also checks the discrete decay bound on
    every order statistic from the pivot rank down:
    m_j[i+1] >= m_j[i] - dt * alpha(m_j[i]) - bound_coeff * dt^2.
    """
    records = list(records)
    if not records:
        raise ValueError("empty trajectory")
    violations: list[AuditViolation] = []
    flat = isinstance(tree, Choose) and all(isinstance(c, Leaf) for c in tree.children)
    do_bound = check_bound and flat and alpha is not None and dt is not None

    prev_stats: np.ndarray | None = None
    for i, rec in enumerate(records):
        if dt is not None and rec.t != i * dt:
            violations.append(AuditViolation(i, "timestamp",
                                             f"t={rec.t!r}, expected {i * dt!r}"))
        values = barrier_values(barriers, rec.x)
        pivot = evaluate_pivot(tree, values).pivot
        if pivot < -tol:
            violations.append(AuditViolation(i, "pivot", f"pivot={pivot:.6g} < -{tol:g}"))
        if not membership_oracle(tree, values + tol):
            violations.append(AuditViolation(i, "membership",
                                             "satisfied-count requirement not met"))
        if do_bound:
            stats = np.sort(values)[::-1]
            if prev_stats is not None:
                slack = bound_coeff * dt * dt
                for j in range(tree.r, len(stats) + 1):
                    lo = prev_stats[j - 1] - dt * alpha(prev_stats[j - 1]) - slack
                    if stats[j - 1] < lo:
                        violations.append(AuditViolation(
                            i, "bound",
                            f"order statistic {j}: {stats[j - 1]:.6g} < {lo:.6g}"))
            prev_stats = stats
    return AuditReport(len(records), violations)


def region_counts(records: Sequence[TrajectoryRecord], regions: Sequence[RegionSpec],
                  barriers: Sequence[PrimitiveBarrier],
                  tol: float = 1e-4) -> list[dict[str, int]]:
    """Per-step satisfied-agent counts per region, recomputed from logged states."""
    out = []
    for rec in records:
        values = barrier_values(barriers, rec.x)
        out.append(_region_counts_at(values, regions, tol))
    return out


# ---------------------------------------------------------------------------
# Trajectory files.

def write_trajectory_jsonl(path: str, records: Sequence[TrajectoryRecord],
                           meta: dict | None = None) -> None:
    """JSON-lines trajectory: a header object, then one record per line."""
    header = {"kind": TRAJECTORY_KIND, "version": TRAJECTORY_VERSION}
    header.update(meta or {})
    with open(path, "w") as f:
        f.write(json.dumps(header) + "\n")
        for rec in records:
            f.write(json.dumps(rec.to_dict()) + "\n")


def read_trajectory_jsonl(path: str) -> tuple[dict, list[TrajectoryRecord]]:
    with open(path) as f:
        first = f.readline()
        if not first.strip():
            raise ValueError("empty trajectory")
        header = json.loads(first)
        if not isinstance(header, dict) or header.get("kind") != TRAJECTORY_KIND:
            raise ValueError("not a trajectory file (missing header)")
        if header.get("version") != TRAJECTORY_VERSION:
            raise ValueError(f"trajectory format version mismatch: file has "
                             f"{header.get('version')!r}, reader supports {TRAJECTORY_VERSION}")
        records = [TrajectoryRecord.from_dict(json.loads(line))
                   for line in f if line.strip()]
    if not records:
        raise ValueError("empty trajectory")
    return header, records


def write_trajectory_csv(path: str, records: Sequence[TrajectoryRecord],
                         meta: dict | None = None) -> None:
    """Flat CSV export: t, state, control, pivot, status, and region counts.

    The first line is a version comment; level values are omitted (use the
    JSON-lines format for the full audit trail).
    """
    if not records:
        raise ValueError("empty trajectory")
    n = records[0].x.size
    m = records[0].u.size
    region_names = sorted(records[0].region_counts)
    cols = (["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
            + ["pivot", "status", "active_size", "min_slack"]
            + [f"count_{name}" for name in region_names])
    with open(path, "w") as f:
        f.write(f"# {TRAJECTORY_KIND}-csv version={TRAJECTORY_VERSION}\n")
        f.write(",".join(cols) + "\n")
        for rec in records:
            row = ([repr(rec.t)] + [repr(v) for v in rec.x.tolist()]
                   + [repr(v) for v in rec.u.tolist()]
                   + [repr(rec.pivot), rec.status, str(rec.active_size),
                      repr(rec.min_slack)]
                   + [str(rec.region_counts[name]) for name in region_names])
            f.write(",".join(row) + "\n")
