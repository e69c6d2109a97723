"""Elastic X-ray transform by numerical line integration.

A ray is ``t -> x + t v`` with ``x`` in ``v^perp``.  Values along the ray
come from multilinear interpolation of the grid samples (zero outside the
grid) and are integrated with the trapezoid rule.

Because the integrand ``<f, (v (x) q)^m>`` is linear in the canonical
components of ``f``, every ray integrates each component once; any
polarization is then a dot product with the contraction weights.  This keeps
sinograms with many polarizations cheap.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.ndimage import map_coordinates

from .field_ops import ElasticField, Grid
from .geometry import orthonormal_complement
from .tensor_core import Polarization, TensorShape, vq_weights

__all__ = [
    "RaySpec",
    "Sinogram",
    "make_ray",
    "polarization_basis",
    "polarization_sweep",
    "offset_grid",
    "xray_scalar",
    "elastic_xray_single",
    "component_integrals",
    "sinogram",
    "reconstruct_quadratic_form",
    "slice_check",
    "admissible_triples",
    "max_workers",
]

_OFFSET_CHUNK = 2048


def max_workers() -> int:
    """Worker cap from ``ETOMO_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("ETOMO_THREADS", "1")))
    except ValueError:
        return 1


def polarization_basis(v) -> np.ndarray:
    """Ordered orthonormal basis of ``v^perp`` as the columns of an ``(n, n-1)`` array."""
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("zero direction vector")
    if abs(nv - 1.0) > 1e-12:
        raise ValueError(f"direction must be a unit vector, |v| = {nv!r}")
    return orthonormal_complement(v)


def polarization_sweep(v, m: int) -> list[Polarization]:
    """Orthogonal-branch polarizations sampled for a direction.

    The basis of ``v^perp``, and for ``m >= 2`` also every pairwise sum
    ``b_a + b_c`` (a < c).  For m = 2 these values pin down the quadratic
    form ``q -> X_{v,q} f`` on ``v^perp``.
    """
    B = polarization_basis(v)
    qs = [B[:, a] for a in range(B.shape[1])]
    if m >= 2:
        qs += [B[:, a] + B[:, c] for a, c in combinations(range(B.shape[1]), 2)]
    return [Polarization.orthogonal(v, q) for q in qs]


@dataclass(frozen=True, eq=False)
class RaySpec:
    """Ray through ``basis @ offset`` with direction ``v``.

    ``offset`` holds coordinates in :func:`polarization_basis` of ``v``.
    Samples are at ``t = start + k * step`` for ``k < count``.
    """

    direction: np.ndarray
    offset: np.ndarray
    step: float
    count: int
    start: float

    def __post_init__(self):
        v = np.asarray(self.direction, dtype=float)
        if not np.any(v):
            raise ValueError("degenerate ray: zero direction")
        object.__setattr__(self, "direction", v)
        object.__setattr__(self, "offset", np.atleast_1d(np.asarray(self.offset, dtype=float)))
        if self.step <= 0 or self.count < 2:
            raise ValueError("ray needs a positive step and at least two samples")

    @property
    def point(self) -> np.ndarray:
        """Base point ``x`` in R^n (orthogonal to v)."""
        if self.direction.size == 1:
            return np.zeros(1)
        return polarization_basis(self.direction) @ self.offset

    @property
    def t(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)


def _quadrature(grid: Grid):
    step = 0.5 * float(np.min(grid.spacing))
    length = grid.diagonal + 4 * float(np.max(grid.spacing))
    count = int(np.ceil(length / step)) + 1
    return step, count


def make_ray(grid: Grid, v, offset) -> RaySpec:
    """Ray with the default quadrature: step = half a grid spacing, segment
    length = grid diagonal + 4 spacings, centered where the line passes the
    grid center."""
    v = np.asarray(v, dtype=float)
    ray = RaySpec(v, offset, *_quadrature(grid), start=0.0)
    tc = float((grid.center - ray.point) @ v)
    return RaySpec(v, offset, ray.step, ray.count, tc - 0.5 * ray.step * (ray.count - 1))


def offset_grid(n: int, per_axis: int, radius: float) -> np.ndarray:
    """Cartesian grid of offsets in ``[-radius, radius]^(n-1)``, shape ``(K, n-1)``."""
    if n == 1:
        return np.zeros((1, 0))
    if per_axis < 1:
        raise ValueError("empty offset plan")
    s = np.linspace(-radius, radius, per_axis) if per_axis > 1 else np.zeros(1)
    mesh = np.meshgrid(*([s] * (n - 1)), indexing="ij")
    return np.stack([a.reshape(-1) for a in mesh], axis=1)


def _as_index_coords(grid: Grid, points: np.ndarray) -> np.ndarray:
    # points (..., n) -> fractional grid indices (n, ...)
    idx = (points - np.array(grid.origin)) / grid.spacing
    return np.moveaxis(idx, -1, 0)


def component_integrals(f: ElasticField, v, offsets: np.ndarray) -> np.ndarray:
    """Trapezoid line integrals of every canonical component.

    Returns ``(dim, K)`` for ``K`` offsets (coordinates in the polarization
    basis of ``v``), using the default quadrature of :func:`make_ray`.
    """
    grid = f.grid
    v = np.asarray(v, dtype=float)
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    step, count = _quadrature(grid)
    B = polarization_basis(v) if grid.n > 1 else np.zeros((1, 0))
    out = np.empty((f.shape.dim, offsets.shape[0]))
    tw = np.full(count, step)
    tw[[0, -1]] *= 0.5
    for lo in range(0, offsets.shape[0], _OFFSET_CHUNK):
        chunk = offsets[lo:lo + _OFFSET_CHUNK]
        base = chunk @ B.T
        tc = (grid.center - base) @ v
        t = tc[:, None] + step * (np.arange(count) - 0.5 * (count - 1))[None, :]
        pts = base[:, None, :] + t[..., None] * v
        coords = _as_index_coords(grid, pts)
        for c in range(f.shape.dim):
            samples = map_coordinates(f.values[c], coords, order=1, mode="grid-constant", cval=0.0)
            out[c, lo:lo + _OFFSET_CHUNK] = samples @ tw
    return out


def xray_scalar(f: ElasticField, ray: RaySpec) -> float:
    """Scalar X-ray transform of a rank-0 field along ``ray``."""
    if f.shape.m != 0:
        raise ValueError("xray_scalar expects a scalar (rank 0) field")
    return _integrate(f.values[0], f.grid, ray)


def _integrate(values: np.ndarray, grid: Grid, ray: RaySpec) -> float:
    pts = ray.point[None, :] + ray.t[:, None] * ray.direction[None, :]
    samples = map_coordinates(values, _as_index_coords(grid, pts), order=1,
                              mode="grid-constant", cval=0.0)
    return float(np.trapezoid(samples, dx=ray.step))


def elastic_xray_single(f: ElasticField, ray: RaySpec, pol: Polarization) -> float:
    """``X^m_{v,q} f`` at one ray."""
    if not np.allclose(pol.direction, ray.direction, rtol=0, atol=1e-12):
        raise ValueError("polarization direction does not match the ray direction")
    w = vq_weights(f.shape, pol.direction, pol.q)
    g = np.tensordot(w, f.values, axes=(0, 0))
    return _integrate(g, f.grid, ray)


@dataclass(frozen=True, eq=False)
class Sinogram:
    """Tabulated ``X^m_{v,q} f`` records.

    One row per (direction, polarization, offset) in that nesting order;
    ``offset`` is expressed in the polarization basis of ``v``.
    """

    shape: TensorShape
    v: np.ndarray
    branch: np.ndarray
    q: np.ndarray
    offset: np.ndarray
    value: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.value.shape[0]


def sinogram(f: ElasticField, directions, offsets, pol_plan: str = "both") -> Sinogram:
    """Sinogram over all directions x polarizations x offsets.

    ``pol_plan`` is ``"parallel"``, ``"orthogonal"`` or ``"both"``.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    if directions.size == 0 or offsets.shape[0] == 0:
        raise ValueError("empty sampling plan")
    if pol_plan not in ("parallel", "orthogonal", "both"):
        raise ValueError(f"unknown polarization plan {pol_plan!r}")
    n, m = f.shape.n, f.shape.m

    def one_direction(v):
        pols = []
        if pol_plan in ("parallel", "both"):
            pols.append(Polarization.parallel(v))
        if pol_plan in ("orthogonal", "both") and n > 1:
            pols.extend(polarization_sweep(v, m))
        I = component_integrals(f, v, offsets)
        return pols, [vq_weights(f.shape, p.direction, p.q) @ I for p in pols]

    workers = max_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one_direction, directions))
    else:
        results = [one_direction(v) for v in directions]

    vs, branches, qs, offs, values = [], [], [], [], []
    K = offsets.shape[0]
    for v, (pols, vals) in zip(directions, results):
        for p, val in zip(pols, vals):
            vs.append(np.repeat(v[None], K, axis=0))
            qs.append(np.repeat(p.q[None], K, axis=0))
            branches.extend([p.branch] * K)
            offs.append(offsets)
            values.append(val)
    step, count = _quadrature(f.grid)
    meta = {
        "n": n,
        "m": m,
        "grid_shape": list(f.grid.shape),
        "grid_extent": list(f.grid.extent),
        "grid_origin": list(f.grid.origin),
        "quadrature": {"rule": "trapezoid", "step": step, "count": count,
                       "interpolation": "multilinear"},
        "pol_plan": pol_plan,
    }
    return Sinogram(f.shape, np.concatenate(vs), np.array(branches), np.concatenate(qs),
                    np.concatenate(offs), np.concatenate(values), meta)


def reconstruct_quadratic_form(basis_values, pair_values) -> np.ndarray:
    """Symmetric matrix ``B`` with ``Q(sum x_a b_a) = x^T B x``.

    ``basis_values[a] = Q(b_a)`` and ``pair_values`` lists ``Q(b_a + b_c)``
    for a < c in lexicographic order, as produced by
    :func:`polarization_sweep`.
    """
    basis_values = np.asarray(basis_values, dtype=float)
    k = basis_values.shape[0]
    B = np.diag(basis_values)
    for (a, c), val in zip(combinations(range(k), 2), pair_values):
        B[a, c] = B[c, a] = 0.5 * (val - basis_values[a] - basis_values[c])
    return B


def fourier_coefficient(f: ElasticField, p) -> np.ndarray:
    """Continuous Fourier transform ``sum_x f(x) exp(-i p.x) dV`` per component,
    evaluated at an arbitrary frequency by separable direct summation."""
    grid = f.grid
    out = f.values.astype(complex)
    for a in range(grid.n):
        phase = np.exp(-1j * grid.axis_coords(a) * p[a])
        out = np.tensordot(out, phase, axes=([1], [0]))
    return out * grid.cell_volume


def slice_check(f: ElasticField, v, q, frequencies, eps: float = 1e-300):
    """Compare both sides of the Fourier slice identity.

    ``lhs`` is the (n-1)-dimensional Fourier transform over ``v^perp`` of the
    ray-transform profile ``y -> X_{v,q} f(y)``, by quadrature over an offset
    grid of one grid spacing covering the field.  ``rhs`` contracts the
    n-dimensional Fourier transform of ``f`` at ``p`` with ``(v (x) q)^m``.
    Returns a list of ``(lhs, rhs, residual)``.
    """
    v = np.asarray(v, dtype=float)
    q = np.asarray(q, dtype=float)
    pol = Polarization(v, q, "parallel" if np.array_equal(q, v) else "orthogonal", tol=1e-10)
    frequencies = np.atleast_2d(np.asarray(frequencies, dtype=float))
    for p in frequencies:
        if abs(p @ v) > 1e-10 * max(1.0, np.linalg.norm(p)):
            raise ValueError(f"frequency {p} is not orthogonal to v")
    grid = f.grid
    h = float(np.min(grid.spacing))
    per_axis = int(np.ceil(grid.diagonal / h)) + 1
    radius = 0.5 * h * (per_axis - 1)
    # offsets centered on the projection of the grid center
    B = polarization_basis(v) if grid.n > 1 else np.zeros((1, 0))
    center = B.T @ grid.center
    offsets = offset_grid(grid.n, per_axis, radius) + center
    w = vq_weights(f.shape, pol.direction, pol.q)
    # contract first so only one scalar field is integrated
    g = ElasticField.scalar(grid, np.tensordot(w, f.values, axes=(0, 0)))
    profile = component_integrals(g, v, offsets)[0]
    dA = h ** (grid.n - 1)
    out = []
    for p in frequencies:
        y_dot_p = offsets @ (B.T @ p)
        lhs = complex(np.sum(profile * np.exp(-1j * y_dot_p)) * dA)
        rhs = complex(w @ fourier_coefficient(f, p))
        res = abs(lhs - rhs) / (abs(lhs) + abs(rhs) + eps)
        out.append((lhs, rhs, res))
    return out


def admissible_triples(n: int, count: int, rng: np.random.Generator, pmax: float = 2.0):
    """Random ``(v, q, p)`` with unit ``v``, ``q`` in ``Q(v)`` and ``p`` in ``v^perp``.

    The branch alternates parallel / orthogonal; ``|p|`` is uniform on
    ``[0, pmax]``.
    """
    out = []
    for k in range(count):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        B = polarization_basis(v)
        if k % 2 == 0 or n == 1:
            q = v.copy()
        else:
            c = rng.standard_normal(n - 1)
            q = B @ (c / np.linalg.norm(c))
        d = rng.standard_normal(n - 1)
        p = B @ (d / np.linalg.norm(d)) * rng.uniform(0, pmax) if n > 1 else np.zeros(1)
        out.append((v, q, p))
    return out
