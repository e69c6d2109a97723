"""First-order eigenvalue perturbation of symmetric pencils and the Christoffel matrix."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import ElasticTensor

__all__ = [
    "SymmetricPencil",
    "EigenGroup",
    "EigenDerivativeReport",
    "eigen_derivatives",
    "christoffel",
]

_SYM_TOL = 1e-12


def _check_symmetric(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    if np.max(np.abs(M - M.T), initial=0.0) > _SYM_TOL * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise ValueError(f"{name} is not symmetric")
    return M


@dataclass(frozen=True)
class SymmetricPencil:
    """``A(s) = A + s A' + O(s^2)`` with ``A`` and ``A'`` real symmetric."""

    A: np.ndarray
    Aprime: np.ndarray

    def __post_init__(self):
        A = _check_symmetric(self.A, "A")
        Ap = _check_symmetric(self.Aprime, "Aprime")
        if A.shape != Ap.shape:
            raise ValueError(f"A and Aprime differ in shape: {A.shape} vs {Ap.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Aprime", Ap)

    @property
    def size(self) -> int:
        return self.A.shape[0]


@dataclass
class EigenGroup:
    eigenvalue: float
    multiplicity: int
    basis: np.ndarray          # (size, multiplicity), orthonormal columns P_k^T
    block: np.ndarray          # P_k A' P_k^T, (multiplicity, multiplicity)
    derivatives: np.ndarray    # sorted eigenvalues of ``block``
    block_vectors: np.ndarray  # eigenvectors of ``block`` lifted to the full space


@dataclass
class EigenDerivativeReport:
    groups: list[EigenGroup] = field(default_factory=list)
    tolerance: float = 0.0

    def derivative_multiset(self) -> np.ndarray:
        return np.sort(np.concatenate([g.derivatives for g in self.groups]))

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "groups": [
                {
                    "lambda": float(g.eigenvalue),
                    "multiplicity": int(g.multiplicity),
                    "derivative_eigenvalues": [float(x) for x in g.derivatives],
                }
                for g in self.groups
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def eigen_derivatives(pencil: SymmetricPencil, tol: float | None = None) -> EigenDerivativeReport:
    """Eigenvalue derivatives at ``s = 0``, grouped by eigenvalue of ``A``.

    Eigenvalues of ``A`` closer than ``tol`` (default ``1e-8 * ||A||_2``)
    are treated as one degenerate cluster.  For each cluster with orthonormal
    eigenbasis ``P^T`` the derivatives are the eigenvalues of ``P A' P^T``;
    for a simple eigenvalue this is just ``v . A' v``.
    """
    A, Ap = pencil.A, pencil.Aprime
    if tol is None:
        tol = 1e-8 * max(np.linalg.norm(A, 2), np.finfo(float).tiny)
    if not tol > 0:
        raise ValueError("degeneracy tolerance must be positive")
    lam, V = np.linalg.eigh(A)
    report = EigenDerivativeReport(tolerance=float(tol))
    start = 0
    size = len(lam)
    while start < size:
        stop = start + 1
        while stop < size and lam[stop] - lam[stop - 1] <= tol:
            stop += 1
        P = V[:, start:stop]
        block = P.T @ Ap @ P
        block = 0.5 * (block + block.T)
        mu, U = np.linalg.eigh(block)
        report.groups.append(EigenGroup(
            eigenvalue=float(np.mean(lam[start:stop])),
            multiplicity=stop - start,
            basis=P,
            block=block,
            derivatives=mu,
            block_vectors=P @ U,
        ))
        start = stop
    return report


def christoffel(c: ElasticTensor, rho: float, v) -> np.ndarray:
    """``Gamma_ik = rho^-1 sum_jl c_ijkl v_j v_l`` for a rank-2 elastic tensor."""
    if not rho > 0:
        raise ValueError(f"density must be positive, got {rho}")
    if c.shape.m != 2:
        raise ValueError("christoffel needs an E^2_n tensor")
    v = np.asarray(v, dtype=float)
    if v.shape != (c.shape.n,):
        raise ValueError(f"direction must have shape ({c.shape.n},)")
    full = np.asarray(c.full(), dtype=float)
    G = np.einsum("ijkl,j,l->ik", full, v, v) / rho
    return 0.5 * (G + G.T)
