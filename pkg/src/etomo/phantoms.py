"""Deterministic test fields: potential bumps, isotropic media, band-limited noise."""
from __future__ import annotations

import numpy as np

from .field_ops import (ElasticField, Grid, VectorField, apply_H, apply_K, forward_fft,
                        inverse_fft, wavevectors)
from .helmholtz import decompose_field, rank1_solenoidal_part
from .tensor_core import ElasticTensor, TensorShape, isotropic_tensors

__all__ = [
    "PHANTOM_KINDS",
    "gaussian_envelope",
    "bandlimited_values",
    "make_phantom",
]

PHANTOM_KINDS = (
    "gaussian-H-potential",
    "gaussian-K-potential",
    "isotropic",
    "random-bandlimited",
    "solenoidal",
    "generic-bump",
)


def gaussian_envelope(grid: Grid, sigma: float = 0.8, center=None) -> np.ndarray:
    X = grid.mesh()
    c = np.zeros(grid.n) if center is None else np.asarray(center, dtype=float)
    r2 = sum((x - ci) ** 2 for x, ci in zip(X, c))
    return np.exp(-r2 / (2 * sigma ** 2))


def bandlimited_values(grid: Grid, ncomp: int, rng: np.random.Generator, band: float = 0.25) -> np.ndarray:
    """Real noise low-passed to ``|k| <= band * k_nyquist`` with zero mean."""
    noise = rng.standard_normal((ncomp, *grid.shape))
    F = forward_fft(noise, grid)
    ks = wavevectors(grid)
    k2 = sum(k ** 2 for k in ks)
    knyq = np.pi / float(np.max(grid.spacing))
    keep = (k2 <= (band * knyq) ** 2) & (k2 > 0)
    return inverse_fft(F * keep, grid)


def make_phantom(kind: str, grid: Grid, m: int = 2, seed: int = 0, sigma: float = 0.8,
                 lam: float = 2.0, mu: float = 1.0, band: float = 0.25) -> ElasticField:
    """Build a phantom of the given kind; the same arguments give the same field.

    ``gaussian-H-potential``
        ``H_m h`` with ``h`` a random constant rank-(m-1) tensor times a Gaussian.
    ``gaussian-K-potential``
        ``K W`` with ``W`` a random constant vector times a Gaussian (m = 2).
    ``isotropic``
        ``(lam alpha + mu beta) g`` with ``g`` the Gaussian (m = 2).
    ``random-bandlimited``
        low-passed noise with zero mean.
    ``solenoidal``
        solenoidal part of a band-limited field (m in {1, 2}).
    ``generic-bump``
        a random constant tensor times the Gaussian.
    """
    if kind not in PHANTOM_KINDS:
        raise ValueError(f"unknown phantom kind {kind!r}; choose from {', '.join(PHANTOM_KINDS)}")
    rng = np.random.default_rng(seed)
    n = grid.n
    env = gaussian_envelope(grid, sigma)
    if kind == "gaussian-H-potential":
        if m < 1:
            raise ValueError("H potentials need m >= 1")
        h = ElasticTensor.random(TensorShape(n, m - 1), rng)
        return apply_H(ElasticField.from_envelope(grid, h, env))
    if kind == "gaussian-K-potential":
        if m != 2:
            raise ValueError("K potentials are rank 2")
        W = VectorField(grid, np.multiply.outer(rng.standard_normal(n), env))
        return apply_K(W)
    if kind == "isotropic":
        if m != 2:
            raise ValueError("isotropic phantoms are rank 2")
        alpha, beta = isotropic_tensors(n)
        return ElasticField.from_envelope(grid, alpha * lam + beta * mu, env)
    if kind == "generic-bump":
        return ElasticField.from_envelope(grid, ElasticTensor.random(TensorShape(n, m), rng), env)
    shape = TensorShape(n, m)
    f = ElasticField(grid, shape, bandlimited_values(grid, shape.dim, rng, band))
    if kind == "random-bandlimited":
        return f
    if m == 1:
        return rank1_solenoidal_part(f)
    if m == 2:
        return decompose_field(f).S
    raise ValueError("solenoidal phantoms are built for m in {1, 2}")
