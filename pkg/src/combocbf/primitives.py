"""Primitive scalar barriers, control-affine dynamics, and Lie derivatives.

A primitive barrier is a continuously differentiable scalar function h with an
analytic gradient; safety of a single primitive means h(x) >= 0.  Shapes ship
with hand-written gradients so the constraint rows downstream are deterministic
bit-for-bit; ``check_gradient`` provides the finite-difference cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ControlAffineSystem",
    "single_integrator",
    "PrimitiveBarrier",
    "ClassKappa",
    "LieDerivatives",
    "lie_derivatives",
    "check_gradient",
    "make_ball_interior",
    "make_halfspace",
    "make_agent_block",
]


@dataclass(frozen=True)
class ControlAffineSystem:
    """Dynamics xdot = f(x) + g(x) u with f: R^n -> R^n and g: R^n -> R^{n x m}.

    ``drift_is_zero`` / ``control_matrix_is_identity`` are structural fast-path
    flags; set them only when f == 0 or g == I identically.  User-supplied
    callbacks must be safe for concurrent calls.
    """

    state_dim: int
    input_dim: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    drift_is_zero: bool = False
    control_matrix_is_identity: bool = False


def single_integrator(dim: int) -> ControlAffineSystem:
    """xdot = u on R^dim (stack agents by passing agents * agent_dim)."""
    if dim < 1:
        raise ValueError(f"dimension must be positive, got {dim}")
    zero = np.zeros(dim)
    eye = np.eye(dim)
    return ControlAffineSystem(
        state_dim=dim,
        input_dim=dim,
        f=lambda x: zero,
        g=lambda x: eye,
        drift_is_zero=True,
        control_matrix_is_identity=True,
    )


@dataclass(frozen=True)
class PrimitiveBarrier:
    """Scalar barrier h with analytic gradient; safe region is {h >= 0}."""

    h: Callable[[np.ndarray], float]
    grad_h: Callable[[np.ndarray], np.ndarray]
    label: str = ""


@dataclass(frozen=True)
class ClassKappa:
    """Extended class-K gain: continuous, strictly increasing, alpha(0) = 0.

    ``linear``: alpha(s) = gamma * s.  ``scaled_cubic``: alpha(s) = gamma * (s + s^3).
    Both are odd, so negative arguments need no special casing.
    """

    kind: str = "linear"
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "scaled_cubic"):
            raise ValueError(f"unknown class-K kind: {self.kind!r}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def __call__(self, s: float) -> float:
        s = float(s)
        if self.kind == "linear":
            return self.gamma * s
        return self.gamma * (s + s ** 3)

    @classmethod
    def linear(cls, gamma: float = 1.0) -> "ClassKappa":
        return cls("linear", float(gamma))

    @classmethod
    def scaled_cubic(cls, gamma: float = 1.0) -> "ClassKappa":
        return cls("scaled_cubic", float(gamma))


@dataclass(frozen=True)
class LieDerivatives:
    """Drift and control parts of hdot: hdot(x, u) = lfh + lgh . u."""

    lfh: float
    lgh: np.ndarray


def lie_derivatives(barrier: PrimitiveBarrier, system: ControlAffineSystem,
                    x: np.ndarray) -> LieDerivatives:
    """Evaluate (grad h . f, grad h . g) at x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (system.state_dim,):
        raise ValueError(f"state has shape {x.shape}, system expects ({system.state_dim},)")
    grad = np.asarray(barrier.grad_h(x), dtype=float)
    if grad.shape != (system.state_dim,):
        raise ValueError(f"gradient of {barrier.label or 'barrier'} has shape "
                         f"{grad.shape}, expected ({system.state_dim},)")
    if system.drift_is_zero:
        lfh = 0.0
    else:
        fx = np.asarray(system.f(x), dtype=float)
        if fx.shape != (system.state_dim,):
            raise ValueError(f"f(x) has shape {fx.shape}, expected ({system.state_dim},)")
        lfh = float(grad @ fx)
    if system.control_matrix_is_identity:
        lgh = grad.copy()
    else:
        gx = np.asarray(system.g(x), dtype=float)
        if gx.shape != (system.state_dim, system.input_dim):
            raise ValueError(f"g(x) has shape {gx.shape}, expected "
                             f"({system.state_dim}, {system.input_dim})")
        lgh = grad @ gx
    return LieDerivatives(lfh, lgh)


def check_gradient(barrier: PrimitiveBarrier, x: np.ndarray, step: float = 1e-6) -> float:
    """Max per-component error of grad_h against central differences of h.

    Error is relative where the analytic component exceeds 1 in magnitude,
    absolute below that.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    x = np.asarray(x, dtype=float)
    grad = np.asarray(barrier.grad_h(x), dtype=float)
    worst = 0.0
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        fd = (float(barrier.h(xp)) - float(barrier.h(xm))) / (2.0 * step)
        err = abs(fd - grad[i]) / max(1.0, abs(grad[i]))
        worst = max(worst, err)
    return worst


def make_ball_interior(c: Sequence[float], R: float) -> PrimitiveBarrier:
    """h(x) = R^2 - ||x - c||^2, positive inside the ball of radius R around c."""
    c = np.asarray(c, dtype=float)
    R = float(R)
    if not R > 0:
        raise ValueError(f"radius must be positive, got {R}")
    R2 = R * R

    def h(x: np.ndarray) -> float:
        d = np.asarray(x, dtype=float) - c
        return R2 - float(d @ d)

    def grad_h(x: np.ndarray) -> np.ndarray:
        return -2.0 * (np.asarray(x, dtype=float) - c)

    return PrimitiveBarrier(h, grad_h, label=f"ball(R={R:g})")


def make_halfspace(a: Sequence[float], b: float) -> PrimitiveBarrier:
    """h(x) = a . x + b, positive on one side of the hyperplane."""
    a = np.asarray(a, dtype=float)
    b = float(b)
    if not np.any(a != 0.0):
        raise ValueError("halfspace normal must be nonzero")
    a_ro = a.copy()
    a_ro.setflags(write=False)

    def h(x: np.ndarray) -> float:
        return float(a_ro @ np.asarray(x, dtype=float)) + b

    def grad_h(x: np.ndarray) -> np.ndarray:
        return a_ro.copy()

    return PrimitiveBarrier(h, grad_h, label=f"halfspace(a={a.tolist()}, b={b:g})")


def make_agent_block(shape: PrimitiveBarrier, agent_index: int,
                     agent_dim: int) -> PrimitiveBarrier:
    """Lift a low-dimensional shape onto agent ``agent_index`` of a stacked state.

    The lifted h reads components [i*d, (i+1)*d) of x; the lifted gradient is
    exactly zero outside that block.
    """
    agent_index = int(agent_index)
    agent_dim = int(agent_dim)
    if agent_index < 0:
        raise ValueError(f"agent index must be nonnegative, got {agent_index}")
    if agent_dim < 1:
        raise ValueError(f"agent dimension must be positive, got {agent_dim}")
    lo = agent_index * agent_dim
    hi = lo + agent_dim

    def _block(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if hi > x.size:
            raise ValueError(f"agent block [{lo}:{hi}) exceeds state dimension {x.size}")
        return x[lo:hi]

    def h(x: np.ndarray) -> float:
        return float(shape.h(_block(x)))

    def grad_h(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.size)
        out[lo:hi] = np.asarray(shape.grad_h(_block(x)), dtype=float)
        return out

    return PrimitiveBarrier(h, grad_h, label=f"agent{agent_index}:{shape.label}")
