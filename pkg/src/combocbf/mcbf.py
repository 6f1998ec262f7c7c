"""Symmetric-matrix utilities for the matrix-barrier view.

A matrix barrier H(x) is safe when positive semidefinite; its eigenvalues play
the role of scalar barrier values, so sorting them feeds the same pivot
machinery as scalar primitives.  Everything here is dense and small (dimension
<= 64): eigendecomposition is a cyclic Jacobi sweep with a fixed rotation
order, giving orthonormality to machine precision and fully deterministic
output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .primitives import ClassKappa

__all__ = [
    "SymmetricBarrierMatrix",
    "EigenSystem",
    "eigen_sorted",
    "apply_classK_matrix",
    "build_Hprime",
    "eigenvalue_pivot_inputs",
]

_SYM_TOL = 1e-12
_MAX_DIM = 64


@dataclass(frozen=True)
class SymmetricBarrierMatrix:
    """Dense symmetric matrix with provenance ``diagonal`` (from scalar
    primitives, enforceable as rows) or ``general`` (evaluation only)."""

    matrix: np.ndarray
    provenance: str = "general"

    def __post_init__(self) -> None:
        H = np.asarray(self.matrix, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {H.shape}")
        if float(np.max(np.abs(H - H.T))) > _SYM_TOL:
            raise ValueError("matrix is not symmetric within 1e-12")
        if self.provenance not in ("diagonal", "general"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "matrix", H.copy())

    @classmethod
    def from_diagonal(cls, values: Sequence[float]) -> "SymmetricBarrierMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)), provenance="diagonal")

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def to_list(self) -> list[list[float]]:
        return self.matrix.tolist()

    @classmethod
    def from_list(cls, rows: Sequence[Sequence[float]],
                  provenance: str = "general") -> "SymmetricBarrierMatrix":
        return cls(np.asarray(rows, dtype=float), provenance=provenance)


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues ascending with the matching orthonormal column basis."""

    eigenvalues: np.ndarray
    vectors: np.ndarray


def _as_matrix(H) -> np.ndarray:
    if isinstance(H, SymmetricBarrierMatrix):
        return H.matrix
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if float(np.max(np.abs(H - H.T))) > _SYM_TOL * max(1.0, float(np.max(np.abs(H)))):
        raise ValueError("matrix is not symmetric within tolerance")
    return H


def eigen_sorted(H) -> EigenSystem:
    """Cyclic Jacobi eigendecomposition, eigenpairs sorted ascending.

    Sweeps rotate every (i, j) pair in a fixed order until the largest
    off-diagonal entry drops below 1e-12 times the matrix scale; ties in the
    final sort keep stable column order.
    """
    A = _as_matrix(H).copy()
    p = A.shape[0]
    if p > _MAX_DIM:
        raise ValueError(f"dimension {p} exceeds the supported maximum {_MAX_DIM}")
    V = np.eye(p)
    scale = float(np.max(np.abs(A))) if p else 0.0
    off_tol = _SYM_TOL * max(scale, _SYM_TOL)
    for _ in range(100):
        off = _max_offdiag(A)
        if off <= off_tol:
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = A[i, j]
                if abs(aij) <= off_tol * 1e-2:
                    continue
                theta = (A[j, j] - A[i, i]) / (2.0 * aij)
                t = np.sign(theta) / (abs(theta) + np.hypot(1.0, theta)) if theta != 0 \
                    else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                _rotate(A, V, i, j, c, s)
    eigs = np.diag(A).copy()
    order = np.argsort(eigs, kind="stable")
    return EigenSystem(eigs[order], V[:, order])


def _max_offdiag(A: np.ndarray) -> float:
    p = A.shape[0]
    if p < 2:
        return 0.0
    mask = ~np.eye(p, dtype=bool)
    return float(np.max(np.abs(A[mask])))


def _rotate(A: np.ndarray, V: np.ndarray, i: int, j: int, c: float, s: float) -> None:
    # Two-sided Givens update A <- J^T A J plus accumulation into V.
    Ai = A[i, :].copy()
    Aj = A[j, :].copy()
    A[i, :] = c * Ai - s * Aj
    A[j, :] = s * Ai + c * Aj
    Ai = A[:, i].copy()
    Aj = A[:, j].copy()
    A[:, i] = c * Ai - s * Aj
    A[:, j] = s * Ai + c * Aj
    A[i, j] = 0.0
    A[j, i] = 0.0
    Vi = V[:, i].copy()
    Vj = V[:, j].copy()
    V[:, i] = c * Vi - s * Vj
    V[:, j] = s * Vi + c * Vj


def apply_classK_matrix(alpha: ClassKappa, H) -> np.ndarray:
    """Map alpha over the eigenvalues while keeping the eigenspaces: V diag(alpha(lam)) V^T."""
    es = eigen_sorted(H)
    mapped = np.array([alpha(lam) for lam in es.eigenvalues])
    out = es.vectors @ np.diag(mapped) @ es.vectors.T
    return 0.5 * (out + out.T)


def build_Hprime(H, pivot: float) -> np.ndarray:
    """Pivot transform V (h I + diag(|h - lam_j|)) V^T.

    This is the matrix whose alpha-image bounds Hdot from below in the
    choose-composed matrix condition; its eigenvalues are h + |h - lam_j| on
    the original eigenspaces.
    """
    es = eigen_sorted(H)
    pivot = float(pivot)
    lam = pivot + np.abs(pivot - es.eigenvalues)
    out = es.vectors @ np.diag(lam) @ es.vectors.T
    return 0.5 * (out + out.T)


def eigenvalue_pivot_inputs(blocks: Sequence) -> np.ndarray:
    """Concatenated eigenvalues of all blocks, each block ascending, block order kept.

    These are the slot values a choose-tree over matrix barriers is evaluated on.
    """
    parts = [eigen_sorted(H).eigenvalues for H in blocks]
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)
