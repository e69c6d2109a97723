"""Grid-sampled elastic tensor fields and the operators D, H_m, K.

Every operator here is a sum of terms ``weight * d^alpha (src component)``
written into an output component.  The term tables are derived once per
(n, m) from the full-index definitions and then evaluated by one of two
derivative back ends:

``spectral``
    multiplication by ``i k`` on a periodic grid, with ``f^(k) = sum f(x)
    exp(-i k.x)``.  The Nyquist wavenumber of even-sized axes is set to zero,
    so every discrete derivative is exactly skew-adjoint and all Fourier
    identities hold to rounding.
``central-diff``
    periodic 3-point central differences (second order).

Field component arrays have shape ``(ncomp, *grid.shape)``.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .tensor_core import TensorShape, canonical_index

__all__ = [
    "Grid",
    "ElasticField",
    "VectorField",
    "BACKENDS",
    "apply_H",
    "apply_K",
    "apply_H_adjoint",
    "apply_K_adjoint",
    "gradient",
    "times_identity",
    "field_inner",
    "field_norm",
    "wavevectors",
    "forward_fft",
    "inverse_fft",
    "sample",
]

BACKENDS = ("spectral", "central-diff")


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid; sample ``i`` along an axis sits at ``origin + i * spacing``."""

    shape: tuple[int, ...]
    extent: tuple[float, ...]
    origin: tuple[float, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        extent = tuple(float(e) for e in self.extent)
        origin = tuple(float(o) for o in self.origin)
        if not (len(shape) == len(extent) == len(origin)) or not shape:
            raise ValueError("shape, extent and origin must have the same nonzero length")
        if min(shape) < 1 or min(extent) <= 0:
            raise ValueError("samples and extents must be positive")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def centered(cls, n: int, samples: int, extent: float) -> "Grid":
        """Cube ``[-extent/2, extent/2)^n`` with ``samples`` points per axis."""
        return cls((samples,) * n, (extent,) * n, (-extent / 2,) * n)

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> np.ndarray:
        return np.array(self.extent) / np.array(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis_coords(a) for a in range(self.n)], indexing="ij")

    @property
    def center(self) -> np.ndarray:
        return np.array(self.origin) + np.array(self.extent) / 2

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))


class _FieldBase:
    grid: Grid
    values: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        raise NotImplementedError

    def norm(self) -> float:
        return field_norm(self)


@dataclass(frozen=True, eq=False)
class ElasticField(_FieldBase):
    """An E^m_n-valued field, canonical components first: ``values[c, *x]``."""

    grid: Grid
    shape: TensorShape
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        expected = (self.shape.dim, *self.grid.shape)
        if values.shape != expected:
            raise ValueError(f"field values have shape {values.shape}, expected {expected}")
        if self.shape.n != self.grid.n:
            raise ValueError("grid dimension and tensor dimension differ")
        object.__setattr__(self, "values", values)

    @property
    def weights(self):
        return self.shape.multiplicity

    @classmethod
    def zeros(cls, grid: Grid, m: int) -> "ElasticField":
        shape = TensorShape(grid.n, m)
        return cls(grid, shape, np.zeros((shape.dim, *grid.shape)))

    @classmethod
    def from_envelope(cls, grid: Grid, tensor, envelope: np.ndarray) -> "ElasticField":
        """Constant tensor times a scalar envelope sampled on the grid."""
        values = np.multiply.outer(np.asarray(tensor.components, dtype=float), envelope)
        return cls(grid, tensor.shape, values)

    @classmethod
    def scalar(cls, grid: Grid, values: np.ndarray) -> "ElasticField":
        return cls(grid, TensorShape(grid.n, 0), np.asarray(values, dtype=float)[None])

    def __add__(self, other):
        _check_same(self, other)
        return ElasticField(self.grid, self.shape, self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return ElasticField(self.grid, self.shape, self.values - other.values)

    def __mul__(self, s):
        return ElasticField(self.grid, self.shape, self.values * s)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField(_FieldBase):
    """An R^n-valued field, ``values[i, *x]``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.n, *self.grid.shape):
            raise ValueError(f"vector field values have shape {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def weights(self):
        return np.ones(self.grid.n, dtype=np.int64)

    def __add__(self, other):
        _check_same(self, other)
        return VectorField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same(self, other)
        return VectorField(self.grid, self.values - other.values)

    def __mul__(self, s):
        return VectorField(self.grid, self.values * s)

    __rmul__ = __mul__


def _check_same(a, b):
    if type(a) is not type(b) or a.grid != b.grid or getattr(a, "shape", None) != getattr(b, "shape", None):
        raise ValueError("field mismatch")


def field_inner(a, b) -> float:
    """Discrete L^2 pairing (full-index inner product at each point)."""
    _check_same(a, b)
    w = np.asarray(a.weights, dtype=float)
    ncomp = a.values.shape[0]
    per_comp = np.einsum("ci,ci->c", a.values.reshape(ncomp, -1), b.values.reshape(ncomp, -1))
    return float(w @ per_comp) * a.grid.cell_volume


def field_norm(a) -> float:
    return float(np.sqrt(max(field_inner(a, a), 0.0)))


# --------------------------------------------------------------------------
# term tables


@dataclass(frozen=True)
class _Term:
    out: int
    axes: tuple[int, ...]
    src: int
    weight: float


def _collect(acc: dict) -> tuple[_Term, ...]:
    return tuple(_Term(o, ax, s, w) for (o, ax, s), w in sorted(acc.items()) if w != 0)


@lru_cache(maxsize=None)
def _h_terms(n: int, m: int) -> tuple[_Term, ...]:
    # (H_m h)_t = eps(d_{t0} d_{t1} h_{t[2:]}), eps = orbit average
    out_shape, in_shape = TensorShape(n, m), TensorShape(n, m - 1)
    acc: dict = defaultdict(float)
    for c in range(out_shape.dim):
        orbit = out_shape.orbit(c)
        for t in orbit:
            key = (c, tuple(sorted(t[:2])), canonical_index(in_shape, t[2:]))
            acc[key] += 1.0 / len(orbit)
    return _collect(acc)


@lru_cache(maxsize=None)
def _k_terms(n: int) -> tuple[_Term, ...]:
    # (KW)_ijkl = eps(d_i W_j delta_kl)
    shape = TensorShape(n, 2)
    acc: dict = defaultdict(float)
    for c in range(shape.dim):
        orbit = shape.orbit(c)
        for i, j, k, l in orbit:
            if k == l:
                acc[(c, (i,), j)] += 1.0 / len(orbit)
    return _collect(acc)


@lru_cache(maxsize=None)
def _h_adjoint_terms(n: int, m: int) -> tuple[_Term, ...]:
    # (H* f)_r = sum_kl d_k d_l f_{r k l}
    out_shape, in_shape = TensorShape(n, m - 1), TensorShape(n, m)
    acc: dict = defaultdict(float)
    for c, r in enumerate(out_shape.reps):
        for k in range(n):
            for l in range(n):
                acc[(c, tuple(sorted((k, l))), canonical_index(in_shape, r + (k, l)))] += 1.0
    return _collect(acc)


@lru_cache(maxsize=None)
def _k_adjoint_terms(n: int) -> tuple[_Term, ...]:
    # (K* f)_i = -sum_jk d_j f_ijkk
    shape = TensorShape(n, 2)
    acc: dict = defaultdict(float)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                acc[(i, (j,), canonical_index(shape, (i, j, k, k)))] -= 1.0
    return _collect(acc)


# --------------------------------------------------------------------------
# back ends


def wavevectors(grid: Grid, real: bool = True) -> list[np.ndarray]:
    """Broadcastable angular wavenumber arrays, Nyquist zeroed.

    ``real=True`` matches the ``rfftn`` layout (last axis half spectrum).
    """
    ks = []
    for a in range(grid.n):
        N, h = grid.shape[a], grid.spacing[a]
        if real and a == grid.n - 1:
            k = 2 * np.pi * np.fft.rfftfreq(N, d=h)
        else:
            k = 2 * np.pi * np.fft.fftfreq(N, d=h)
        if N % 2 == 0:
            k[N // 2] = 0.0
        shape = [1] * grid.n
        shape[a] = k.size
        ks.append(k.reshape(shape))
    return ks


def forward_fft(values: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(values.ndim - grid.n, values.ndim))
    return np.fft.rfftn(values, axes=axes)


def inverse_fft(spectrum: np.ndarray, grid: Grid) -> np.ndarray:
    axes = tuple(range(spectrum.ndim - grid.n, spectrum.ndim))
    return np.fft.irfftn(spectrum, s=grid.shape, axes=axes)


def _apply_spectral(values, terms, n_out, grid):
    ks = wavevectors(grid)
    spectra: dict[int, np.ndarray] = {}
    out = np.empty((n_out, *grid.shape))
    by_out = defaultdict(list)
    for t in terms:
        by_out[t.out].append(t)
    for o in range(n_out):
        acc = None
        for t in by_out.get(o, ()):
            if t.src not in spectra:
                spectra[t.src] = np.fft.rfftn(values[t.src])
            symbol = t.weight * (1j ** len(t.axes))
            for a in t.axes:
                symbol = symbol * ks[a]
            contrib = symbol * spectra[t.src]
            acc = contrib if acc is None else acc + contrib
        out[o] = 0.0 if acc is None else np.fft.irfftn(acc, s=grid.shape, axes=tuple(range(grid.n)))
    return out


def _central(f: np.ndarray, axes: tuple[int, ...], h: np.ndarray) -> np.ndarray:
    def d1(g, a):
        return (np.roll(g, -1, a) - np.roll(g, 1, a)) / (2 * h[a])

    if len(axes) == 1:
        return d1(f, axes[0])
    if len(axes) == 2 and axes[0] == axes[1]:
        a = axes[0]
        return (np.roll(f, -1, a) - 2 * f + np.roll(f, 1, a)) / h[a] ** 2
    if len(axes) == 2:
        return d1(d1(f, axes[0]), axes[1])
    raise ValueError(f"unsupported derivative order {axes}")


def _apply_central(values, terms, n_out, grid):
    h = grid.spacing
    cache: dict = {}
    out = np.zeros((n_out, *grid.shape))
    for t in terms:
        key = (t.src, t.axes)
        if key not in cache:
            cache[key] = _central(values[t.src], t.axes, h)
        out[t.out] += t.weight * cache[key]
    return out


def _apply(values, terms, n_out, grid, backend):
    if backend == "spectral":
        return _apply_spectral(values, terms, n_out, grid)
    if backend == "central-diff":
        if min(grid.shape) < 3:
            raise ValueError("grid too small for the central-difference stencil (need >= 3 samples per axis)")
        return _apply_central(values, terms, n_out, grid)
    raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")


# --------------------------------------------------------------------------
# operators


def apply_H(h: ElasticField, backend: str = "spectral", m: int | None = None) -> ElasticField:
    """``H_m h = eps(D^2 h)`` for an elastic (m-1)-tensor field ``h``."""
    out_m = h.shape.m + 1
    if m is not None and (m < 1 or m != out_m):
        raise ValueError(f"H_{m} needs a rank {m - 1} input, got rank {h.shape.m}")
    shape = TensorShape(h.grid.n, out_m)
    values = _apply(h.values, _h_terms(h.grid.n, out_m), shape.dim, h.grid, backend)
    return ElasticField(h.grid, shape, values)


def apply_K(W: VectorField, backend: str = "spectral") -> ElasticField:
    """``K W = eps(DW (x) I)``."""
    if not isinstance(W, VectorField):
        raise TypeError("K acts on vector fields")
    shape = TensorShape(W.grid.n, 2)
    values = _apply(W.values, _k_terms(W.grid.n), shape.dim, W.grid, backend)
    return ElasticField(W.grid, shape, values)


def apply_H_adjoint(f: ElasticField, backend: str = "spectral") -> ElasticField:
    """Double divergence over the last index pair (ranks 1 and 2)."""
    if f.shape.m not in (1, 2):
        raise ValueError(f"H* is implemented for ranks 1 and 2, got {f.shape.m}")
    shape = TensorShape(f.grid.n, f.shape.m - 1)
    values = _apply(f.values, _h_adjoint_terms(f.grid.n, f.shape.m), shape.dim, f.grid, backend)
    return ElasticField(f.grid, shape, values)


def apply_K_adjoint(f: ElasticField, backend: str = "spectral") -> VectorField:
    """``(K* f)_i = -sum_jk d_j f_ijkk``."""
    if f.shape.m != 2:
        raise ValueError(f"K* acts on rank 2 fields, got rank {f.shape.m}")
    values = _apply(f.values, _k_adjoint_terms(f.grid.n), f.grid.n, f.grid, backend)
    return VectorField(f.grid, values)


def gradient(g: ElasticField, backend: str = "spectral") -> VectorField:
    if g.shape.m != 0:
        raise ValueError("gradient expects a scalar field")
    terms = tuple(_Term(a, (a,), 0, 1.0) for a in range(g.grid.n))
    return VectorField(g.grid, _apply(g.values, terms, g.grid.n, g.grid, backend))


def times_identity(g: ElasticField) -> ElasticField:
    """Scalar field ``g`` to the elastic 1-tensor field ``g I``."""
    if g.shape.m != 0:
        raise ValueError("expected a scalar field")
    shape = TensorShape(g.grid.n, 1)
    values = np.zeros((shape.dim, *g.grid.shape))
    for i in range(g.grid.n):
        values[canonical_index(shape, (i, i))] = g.values[0]
    return ElasticField(g.grid, shape, values)


def sample(grid: Grid, shape: TensorShape, func: Callable[[Sequence[np.ndarray]], np.ndarray]) -> ElasticField:
    """Build a field from ``func(mesh) -> array (dim, *grid.shape)``."""
    return ElasticField(grid, shape, func(grid.mesh()))
