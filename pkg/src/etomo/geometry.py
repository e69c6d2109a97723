"""Small geometric helpers shared by the ray transform and the symbol code."""
from __future__ import annotations

import numpy as np
from scipy.stats import norm, qmc

__all__ = ["orthonormal_complement", "sphere_directions", "random_rotation"]


def orthonormal_complement(v: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``v^perp`` for unit vector(s) ``v``.

    Uses the Householder reflection that sends ``v`` to a multiple of its
    largest coordinate axis ``e_k``; the remaining columns of the reflector
    are the basis.  Deterministic in ``v``.  Accepts shape ``(n,)`` or
    ``(N, n)``; returns ``(n, n-1)`` or ``(N, n, n-1)``.
    """
    v = np.asarray(v, dtype=float)
    single = v.ndim == 1
    V = np.atleast_2d(v)
    N, n = V.shape
    k = np.argmax(np.abs(V), axis=1)
    rows = np.arange(N)
    s = np.where(V[rows, k] >= 0, 1.0, -1.0)
    u = V.copy()
    u[rows, k] += s
    uu = np.einsum("ni,ni->n", u, u)
    H = np.eye(n)[None] - 2 * np.einsum("ni,nj->nij", u, u) / uu[:, None, None]
    keep = np.ones((N, n), dtype=bool)
    keep[rows, k] = False
    basis = H.transpose(0, 2, 1)[keep].reshape(N, n - 1, n).transpose(0, 2, 1)
    return basis[0] if single else basis


def sphere_directions(n: int, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic, low-discrepancy unit vectors in R^n.

    n = 2 uses equispaced angles on a half circle shifted by a seed-dependent
    phase; n >= 3 maps a scrambled Halton sequence through the normal
    quantile function and normalizes.  The same ``seed`` always yields the
    same directions.
    """
    if count < 1:
        raise ValueError("need at least one direction")
    if n == 1:
        return np.ones((count, 1))
    if n == 2:
        shift = (0.5 + seed * 0.6180339887498949) % 1.0
        theta = np.pi * (np.arange(count) + shift) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    u = qmc.Halton(d=n, scramble=True, seed=seed).random(count)
    z = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed rotation matrix (determinant +1)."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q
