"""Elastic tensor spaces E^m_n.

An elastic m-tensor in R^n is a rank-2m array that is symmetric within each
index pair ``(i_k, j_k)`` and symmetric under permutations of the m pairs.
Components are stored once per orbit of that symmetry group ("canonical
storage"), together with the orbit size, which is the weight needed to
recover full-index Euclidean quantities.

All indices are 0-based.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Sequence

import numpy as np

__all__ = [
    "TensorShape",
    "ElasticTensor",
    "Polarization",
    "canonical_index",
    "symmetrize",
    "inner_product",
    "contract_vq",
    "contract_vq_full",
    "vq_weights",
    "isotropic_tensors",
    "rotate",
]


@dataclass(frozen=True)
class _OrbitTable:
    pairs: tuple[tuple[int, int], ...]
    reps: tuple[tuple[int, ...], ...]
    multiplicity: np.ndarray
    full_to_canon: np.ndarray
    members: tuple[tuple[tuple[int, ...], ...], ...]


@lru_cache(maxsize=None)
def _orbit_table(n: int, m: int) -> _OrbitTable:
    pairs = tuple((i, j) for i in range(n) for j in range(i, n))
    pair_index = {p: k for k, p in enumerate(pairs)}
    keys = list(itertools.combinations_with_replacement(range(len(pairs)), m))
    key_index = {k: c for c, k in enumerate(keys)}
    reps = tuple(tuple(i for k in key for i in pairs[k]) for key in keys)

    full_to_canon = np.zeros((n,) * 2 * m, dtype=np.intp)
    members: list[list[tuple[int, ...]]] = [[] for _ in keys]
    for t in itertools.product(range(n), repeat=2 * m):
        key = tuple(sorted(pair_index[tuple(sorted(t[2 * k:2 * k + 2]))] for k in range(m)))
        c = key_index[key]
        full_to_canon[t] = c
        members[c].append(t)
    multiplicity = np.array([len(mm) for mm in members], dtype=np.int64)
    full_to_canon.setflags(write=False)
    multiplicity.setflags(write=False)
    return _OrbitTable(pairs, reps, multiplicity, full_to_canon,
                       tuple(tuple(mm) for mm in members))


@dataclass(frozen=True)
class TensorShape:
    """Spatial dimension ``n`` and elastic rank ``m``."""

    n: int
    m: int

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise ValueError(f"invalid tensor shape n={self.n}, m={self.m}")

    @property
    def _table(self) -> _OrbitTable:
        return _orbit_table(self.n, self.m)

    @property
    def dim(self) -> int:
        """Closed-form dimension C(d+m-1, m) with d = n(n+1)/2."""
        d = self.n * (self.n + 1) // 2
        return comb(d + self.m - 1, self.m)

    @property
    def reps(self) -> tuple[tuple[int, ...], ...]:
        """One representative full index tuple per canonical component."""
        return self._table.reps

    @property
    def multiplicity(self) -> np.ndarray:
        return self._table.multiplicity

    @property
    def full_to_canon(self) -> np.ndarray:
        return self._table.full_to_canon

    def orbit(self, c: int) -> tuple[tuple[int, ...], ...]:
        return self._table.members[c]


def canonical_index(shape: TensorShape, index: Sequence[int]) -> int:
    """Canonical component index of a full index tuple of length 2m."""
    index = tuple(int(i) for i in index)
    if len(index) != 2 * shape.m:
        raise ValueError(f"expected {2 * shape.m} indices, got {len(index)}")
    for i in index:
        if not 0 <= i < shape.n:
            raise IndexError(f"index {i} out of range for n={shape.n}")
    return int(shape.full_to_canon[index])


def _is_exact(a: np.ndarray) -> bool:
    return a.dtype == object


class ElasticTensor:
    """An element of E^m_n in canonical storage.

    ``components`` may be float64 or an object array of ``Fraction``.
    Instances are treated as immutable.
    """

    __slots__ = ("shape", "components")

    def __init__(self, shape: TensorShape, components):
        comps = np.array(components, dtype=object if _is_exact(np.asarray(components)) else float)
        comps = comps.reshape(-1)
        if comps.shape[0] != shape.dim:
            raise ValueError(f"expected {shape.dim} components for {shape}, got {comps.shape[0]}")
        comps.setflags(write=False)
        self.shape = shape
        self.components = comps

    @classmethod
    def zeros(cls, shape: TensorShape) -> "ElasticTensor":
        return cls(shape, np.zeros(shape.dim))

    @classmethod
    def random(cls, shape: TensorShape, rng: np.random.Generator) -> "ElasticTensor":
        return cls(shape, rng.standard_normal(shape.dim))

    def full(self) -> np.ndarray:
        """Expand to the full n^(2m) array."""
        return self.components[self.shape.full_to_canon]

    def __getitem__(self, index) -> float:
        return self.components[canonical_index(self.shape, index)]

    def _check(self, other: "ElasticTensor"):
        if not isinstance(other, ElasticTensor) or other.shape != self.shape:
            raise ValueError("shape mismatch")

    def __add__(self, other):
        self._check(other)
        return ElasticTensor(self.shape, self.components + other.components)

    def __sub__(self, other):
        self._check(other)
        return ElasticTensor(self.shape, self.components - other.components)

    def __mul__(self, s):
        return ElasticTensor(self.shape, self.components * s)

    __rmul__ = __mul__

    def __neg__(self):
        return ElasticTensor(self.shape, -self.components)

    def norm(self) -> float:
        return float(np.sqrt(inner_product(self, self)))

    def __repr__(self):
        return f"ElasticTensor(n={self.shape.n}, m={self.shape.m}, components={self.components!r})"


def symmetrize(shape: TensorShape, raw) -> ElasticTensor:
    """Elastic symmetrization: average ``raw`` over each symmetry orbit."""
    raw = np.asarray(raw)
    expected = (shape.n,) * 2 * shape.m
    if raw.shape != expected:
        raise ValueError(f"raw tensor has shape {raw.shape}, expected {expected}")
    idx = shape.full_to_canon.reshape(-1)
    if _is_exact(raw):
        sums = [Fraction(0)] * shape.dim
        for c, value in zip(idx, raw.reshape(-1)):
            sums[c] += value
        comps = np.array([s / int(k) for s, k in zip(sums, shape.multiplicity)], dtype=object)
    else:
        comps = np.bincount(idx, weights=raw.reshape(-1).astype(float), minlength=shape.dim)
        comps = comps / shape.multiplicity
    return ElasticTensor(shape, comps)


def inner_product(a: ElasticTensor, b: ElasticTensor) -> float:
    """Full-index Euclidean pairing, computed with orbit sizes as weights."""
    a._check(b)
    return np.sum(a.shape.multiplicity * a.components * b.components)


def _as_vq(pol, q=None):
    if isinstance(pol, Polarization):
        return pol.direction, pol.q
    return np.asarray(pol, dtype=float), np.asarray(q, dtype=float)


def vq_weights(shape: TensorShape, v, q) -> np.ndarray:
    """Canonical weights ``w`` with ``<a, (v (x) q)^(x)m> = sum_c a_c w_c``."""
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    if v.shape != (shape.n,) or q.shape != (shape.n,):
        raise ValueError(f"v and q must have length {shape.n}")
    vq = np.outer(v, q)
    power = np.ones(())
    for _ in range(shape.m):
        power = np.multiply.outer(power, vq)
    return np.bincount(shape.full_to_canon.reshape(-1), weights=np.reshape(power, -1),
                       minlength=shape.dim)


def contract_vq(a: ElasticTensor, pol, q=None) -> float:
    """Evaluate ``sum a_{i1 j1 ...} v_i1 q_j1 ... v_im q_jm``.

    ``pol`` is a :class:`Polarization`, or a direction ``v`` with ``q`` given.
    """
    v, q = _as_vq(pol, q)
    return float(a.components @ vq_weights(a.shape, v, q))


def contract_vq_full(raw, v, q) -> float:
    """Brute-force oracle for :func:`contract_vq` on an unsymmetrized array.

    ``raw`` is paired with the elastically symmetrized probe
    ``eps((v (x) q)^(x)m)``, built by explicit averaging over pair flips and
    pair permutations (no canonical tables).  Since ``eps`` is self-adjoint
    this equals ``contract_vq(symmetrize(raw), v, q)``.
    """
    raw = np.asarray(raw, dtype=float)
    m = raw.ndim // 2
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    vq = np.outer(v, q)
    probe = np.ones(())
    for _ in range(m):
        probe = np.multiply.outer(probe, vq)
    sym = np.zeros_like(probe)
    count = 0
    for perm in itertools.permutations(range(m)):
        for flips in itertools.product((0, 1), repeat=m):
            axes = []
            for k in perm:
                pair = [2 * k, 2 * k + 1]
                axes += pair[::-1] if flips[k] else pair
            sym = sym + np.transpose(probe, axes)
            count += 1
    return float(np.sum(raw * sym) / count)


def isotropic_tensors(n: int) -> tuple[ElasticTensor, ElasticTensor]:
    """Basic isotropic stiffness tensors.

    ``alpha_ijkl = d_ij d_kl`` and ``beta_ijkl = d_ik d_jl + d_il d_jk``, so
    that ``lam * alpha + mu * beta`` is the isotropic stiffness with Lame
    parameters ``lam`` and ``mu``.
    """
    shape = TensorShape(n, 2)
    d = np.eye(n)
    alpha = np.einsum("ij,kl->ijkl", d, d)
    beta = np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)
    return symmetrize(shape, alpha), symmetrize(shape, beta)


def rotate(a: ElasticTensor, R) -> ElasticTensor:
    """Induced action of an orthogonal matrix on E^m_n."""
    R = np.asarray(R, dtype=float)
    out = a.full()
    for _ in range(out.ndim):
        # contracting the leading axis and appending keeps axis order
        out = np.tensordot(out, R, axes=([0], [1]))
    comps = np.reshape(out, -1)[[np.ravel_multi_index(r, out.shape) if r else 0
                                 for r in a.shape.reps]]
    return ElasticTensor(a.shape, comps)


@dataclass(frozen=True, eq=False)
class Polarization:
    """A direction ``v`` on the unit sphere with a polarization ``q`` in Q(v).

    ``branch`` is ``"parallel"`` (q = v) or ``"orthogonal"`` (q perpendicular
    to v).
    """

    direction: np.ndarray
    q: np.ndarray
    branch: str
    tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        v = np.asarray(self.direction, dtype=float)
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "direction", v)
        object.__setattr__(self, "q", q)
        if v.ndim != 1 or q.shape != v.shape:
            raise ValueError("direction and q must be vectors of the same length")
        if abs(np.linalg.norm(v) - 1.0) > self.tol:
            raise ValueError("direction must be a unit vector")
        if self.branch == "parallel":
            if not np.array_equal(q, v):
                raise ValueError("parallel branch requires q = v")
        elif self.branch == "orthogonal":
            if abs(float(v @ q)) > self.tol:
                raise ValueError(f"orthogonal branch requires <q, v> = 0, got {v @ q:.3e}")
        else:
            raise ValueError(f"unknown branch {self.branch!r}")

    @classmethod
    def parallel(cls, v) -> "Polarization":
        v = np.asarray(v, dtype=float)
        return cls(v, v.copy(), "parallel")

    @classmethod
    def orthogonal(cls, v, q) -> "Polarization":
        return cls(v, q, "orthogonal")
