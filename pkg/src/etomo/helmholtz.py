"""Fourier-side Helmholtz decomposition of rank-2 elastic fields.

At a nonzero frequency ``p`` the symbols of K and H are

    (sK_p W)_ijkl = 1/4 (p_i W_j + p_j W_i) d_kl + 1/4 (p_k W_l + p_l W_k) d_ij
    (sH_p h)_ijkl = 1/2 (p_i p_j h_kl + p_k p_l h_ij)

so that FFT(KW) = i sK_p FFT(W) and FFT(Hh) = -sH_p FFT(h).  E^2_n splits as
A_p + B_p + C_p with A_p = sK_p(p^perp), B_p = im sH_p and C_p the common
kernel of the duals; C_p is the orthogonal complement of A_p + B_p.

The projections are computed from an orthonormalized column basis of
``Phi_p = [sK_p restricted to p^perp | sH_p]`` in the full-index metric
(canonical coordinates scaled by sqrt(orbit size)).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .field_ops import (ElasticField, Grid, VectorField, apply_H, apply_H_adjoint, apply_K,
                        apply_K_adjoint, field_inner, field_norm, forward_fft, inverse_fft,
                        wavevectors)
from .geometry import orthonormal_complement
from .tensor_core import ElasticTensor, TensorShape

__all__ = [
    "SymbolFrame",
    "FrequencyDecomposition",
    "sigma_K",
    "sigma_H",
    "dual_K",
    "dual_H",
    "lambda_K",
    "lambda_H",
    "sigma_K_matrix",
    "sigma_H_matrix",
    "project_pointwise",
    "subspace_dimensions",
    "decompose_field",
    "decomposition_report",
    "rank1_potential_symbol",
    "rank1_solenoidal_part",
]


@lru_cache(maxsize=None)
def _rep_arrays(n: int):
    s2, s1 = TensorShape(n, 2), TensorShape(n, 1)
    I, J, K, L = (np.array(a) for a in zip(*s2.reps))
    cij = s1.full_to_canon[I, J]
    ckl = s1.full_to_canon[K, L]
    return I, J, K, L, cij, ckl


def _nonzero(p):
    p = np.asarray(p, dtype=float)
    if not np.any(p):
        raise ValueError("frequency p must be nonzero")
    return p


def sigma_K_matrix(P: np.ndarray) -> np.ndarray:
    """Matrix of ``sK_p`` in canonical coordinates, shape ``(..., dim E^2, n)``."""
    P = np.asarray(P, dtype=float)
    n = P.shape[-1]
    I, J, K, L, _, _ = _rep_arrays(n)
    s = np.arange(n)
    dkl = (K == L).astype(float)[:, None]
    dij = (I == J).astype(float)[:, None]
    t1 = P[..., I, None] * (J[:, None] == s) + P[..., J, None] * (I[:, None] == s)
    t2 = P[..., K, None] * (L[:, None] == s) + P[..., L, None] * (K[:, None] == s)
    return 0.25 * (t1 * dkl + t2 * dij)


def sigma_H_matrix(P: np.ndarray) -> np.ndarray:
    """Matrix of ``sH_p`` from canonical E^1 to canonical E^2, ``(..., dim E^2, dim E^1)``."""
    P = np.asarray(P, dtype=float)
    n = P.shape[-1]
    I, J, K, L, cij, ckl = _rep_arrays(n)
    s = np.arange(n * (n + 1) // 2)
    return 0.5 * ((P[..., I] * P[..., J])[..., None] * (ckl[:, None] == s)
                  + (P[..., K] * P[..., L])[..., None] * (cij[:, None] == s))


def sigma_K(p, W) -> ElasticTensor:
    p = _nonzero(p)
    return ElasticTensor(TensorShape(p.size, 2), sigma_K_matrix(p) @ np.asarray(W, dtype=float))


def sigma_H(p, h: ElasticTensor) -> ElasticTensor:
    p = _nonzero(p)
    if h.shape != TensorShape(p.size, 1):
        raise ValueError("h must be an elastic 1-tensor of matching dimension")
    return ElasticTensor(TensorShape(p.size, 2), sigma_H_matrix(p) @ h.components)


def dual_K(p, T: ElasticTensor) -> np.ndarray:
    """``(sK_p^T T)_i = sum p_b d_lm T_iblm``."""
    p = _nonzero(p)
    return np.einsum("iblm,b,lm->i", T.full(), p, np.eye(p.size))


def dual_H(p, T: ElasticTensor) -> ElasticTensor:
    """``(sH_p^T T)_ij = sum_lm T_ijlm p_l p_m``."""
    p = _nonzero(p)
    M = np.einsum("ijlm,l,m->ij", T.full(), p, p)
    shape = TensorShape(p.size, 1)
    return ElasticTensor(shape, [M[r] for r in shape.reps])


def _lambda_K_full(P, Tfull):
    # P (..., n), Tfull (..., n, n, n, n)
    p4 = np.einsum("...i,...i->...", P, P) ** 2
    return 4 * np.einsum("...ibcd,...b,...c,...d->...i", Tfull, P, P, P) / p4[..., None]


def _lambda_H_full(P, Tfull):
    p2 = np.einsum("...i,...i->...", P, P)
    two = np.einsum("...ijcd,...c,...d->...ij", Tfull, P, P)
    four = np.einsum("...ij,...i,...j->...", two, P, P)
    outer = np.einsum("...i,...j->...ij", P, P)
    return (2 * two / p2[..., None, None] ** 2
            - outer * (four / p2 ** 4)[..., None, None])


def lambda_K(p, T: ElasticTensor) -> np.ndarray:
    """Left inverse of ``sK_p`` on ``p^perp``: ``4|p|^-4 sum T_ibcd p_b p_c p_d``."""
    p = _nonzero(p)
    return _lambda_K_full(p, T.full())


def lambda_H(p, T: ElasticTensor) -> ElasticTensor:
    """Left inverse of ``sH_p``."""
    p = _nonzero(p)
    M = _lambda_H_full(p, T.full())
    shape = TensorShape(p.size, 1)
    return ElasticTensor(shape, [M[r] for r in shape.reps])


def _frame_arrays(P: np.ndarray, check: bool = True):
    """Column matrices and orthonormal factor for a batch of frequencies."""
    n = P.shape[-1]
    mult = TensorShape(n, 2).multiplicity.astype(float)
    sqrt_m = np.sqrt(mult)
    B = orthonormal_complement(P / np.linalg.norm(P, axis=-1, keepdims=True))
    phi_A = sigma_K_matrix(P) @ B
    phi_B = sigma_H_matrix(P)
    phi = np.concatenate([phi_A, phi_B], axis=-1)
    Q, R = np.linalg.qr(sqrt_m[:, None] * phi)
    if check:
        diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
        if np.any(diag.min(axis=-1) <= 1e-10 * diag.max(axis=-1)):
            raise np.linalg.LinAlgError("Phi_p is rank deficient")
    return B, phi_A, phi_B, Q, R, sqrt_m


def _split(T, phi_A, phi_B, Q, R, sqrt_m):
    # T (..., dim) possibly complex -> (T_A, T_B); oblique split inside span(Phi)
    rhs = np.einsum("...ck,...c->...k", Q, sqrt_m * T)
    coef = np.linalg.solve(R, rhs[..., None])[..., 0]
    k = phi_A.shape[-1]
    T_A = np.einsum("...ck,...k->...c", phi_A, coef[..., :k])
    T_B = np.einsum("...ck,...k->...c", phi_B, coef[..., k:])
    return T_A, T_B


@dataclass(frozen=True, eq=False)
class SymbolFrame:
    """Cached per-frequency data: ``p``, a basis of ``p^perp`` and ``Phi_p``."""

    p: np.ndarray
    perp_basis: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    q_factor: np.ndarray = field(repr=False)
    r_factor: np.ndarray = field(repr=False)

    @classmethod
    def at(cls, p) -> "SymbolFrame":
        p = _nonzero(p)
        B, phi_A, phi_B, Q, R, _ = _frame_arrays(p[None])
        return cls(p, B[0], np.concatenate([phi_A, phi_B], axis=-1)[0], Q[0], R[0])

    @property
    def n(self) -> int:
        return self.p.size

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.phi))


def project_pointwise(p, T: ElasticTensor) -> tuple[ElasticTensor, ElasticTensor, ElasticTensor]:
    """Split ``T = T_A + T_B + T_C`` along ``E^2_n = A_p + B_p + C_p``."""
    p = _nonzero(p)
    shape = TensorShape(p.size, 2)
    if T.shape != shape:
        raise ValueError("T must be an elastic 2-tensor of matching dimension")
    B, phi_A, phi_B, Q, R, sqrt_m = _frame_arrays(p[None])
    T_A, T_B = _split(T.components[None], phi_A, phi_B, Q, R, sqrt_m)
    T_A, T_B = T_A[0], T_B[0]
    return (ElasticTensor(shape, T_A), ElasticTensor(shape, T_B),
            ElasticTensor(shape, T.components - T_A - T_B))


def subspace_dimensions(p) -> dict:
    """Numerical ranks of A_p, B_p, A_p + B_p and the complement C_p."""
    frame = SymbolFrame.at(p)
    n = frame.n
    k = n - 1
    dim2 = TensorShape(n, 2).dim
    rA = int(np.linalg.matrix_rank(frame.phi[:, :k])) if k else 0
    rB = int(np.linalg.matrix_rank(frame.phi[:, k:]))
    rD = frame.rank
    return {"A": rA, "B": rB, "D": rD, "C": dim2 - rD, "E2": dim2}


# --------------------------------------------------------------------------
# global decomposition

_BIN_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class FrequencyDecomposition:
    """``f = K W + H h + S`` with per-bin spectra (rfft layout) and fields."""

    W_hat: np.ndarray
    h_hat: np.ndarray
    S_hat: np.ndarray
    W: VectorField
    h: ElasticField
    S: ElasticField
    dc_norm: float
    dc_flag: bool
    theorem_guarantee: bool
    condition: dict

    def summary(self) -> dict:
        return {
            "dc": {"norm": self.dc_norm, "flag": self.dc_flag, "disposition": "assigned to S"},
            "theorem_guarantee": self.theorem_guarantee,
            "labels": {"W": "A0^K potential", "h": "A1^H potential", "S": "Sol2"},
            "condition": self.condition,
        }


def _full_from_canon(T, n):
    shape = TensorShape(n, 2)
    return T[..., shape.full_to_canon]


def decompose_field(f: ElasticField) -> FrequencyDecomposition:
    """Spectral split of a rank-2 field into ``K W + H h + S``.

    Per nonzero bin the transformed field is projected onto A_p, B_p and the
    orthogonal complement C_p; W and h are read back with the explicit left
    inverses.  The zero-wavenumber bin (mean, and any bin whose wavevector
    vanishes after Nyquist zeroing) is assigned to S.  For n = 2 the call
    runs but carries no theorem guarantee.
    """
    if f.shape.m != 2:
        raise ValueError("decompose_field expects a rank-2 field")
    if not np.all(np.isfinite(f.values)):
        raise ValueError("field contains non-finite values")
    grid, n = f.grid, f.grid.n
    shape2, shape1 = f.shape, TensorShape(n, 1)
    F = forward_fft(f.values, grid)
    spec_shape = F.shape[1:]
    ks = wavevectors(grid)
    P = np.stack(np.broadcast_arrays(*ks), axis=-1).reshape(-1, n)
    Fb = F.reshape(shape2.dim, -1).T
    nz = np.flatnonzero(np.any(P != 0, axis=1))

    W_hat = np.zeros((P.shape[0], n), dtype=complex)
    h_hat = np.zeros((P.shape[0], shape1.dim), dtype=complex)
    S_hat = Fb.copy()
    for lo in range(0, nz.size, _BIN_CHUNK):
        sel = nz[lo:lo + _BIN_CHUNK]
        Pc = P[sel]
        Pu = Pc / np.linalg.norm(Pc, axis=1, keepdims=True)
        _, phi_A, phi_B, Q, R, sqrt_m = _frame_arrays(Pu)
        T_A, T_B = _split(Fb[sel], phi_A, phi_B, Q, R, sqrt_m)
        S_hat[sel] = Fb[sel] - T_A - T_B
        W_hat[sel] = _lambda_K_full(Pc, _full_from_canon(T_A, n)) / 1j
        hm = -_lambda_H_full(Pc, _full_from_canon(T_B, n))
        I1, J1 = (np.array(a) for a in zip(*shape1.reps))
        h_hat[sel] = hm[:, I1, J1]

    def back(spec, ncomp):
        return inverse_fft(spec.T.reshape(ncomp, *spec_shape), grid)

    W = VectorField(grid, back(W_hat, n))
    h = ElasticField(grid, shape1, back(h_hat, shape1.dim))
    S = ElasticField(grid, shape2, back(S_hat, shape2.dim))

    mult = shape2.multiplicity
    zero_bins = np.flatnonzero(~np.any(P != 0, axis=1))
    dc_norm = float(np.sqrt(np.sum(mult * np.abs(Fb[zero_bins]) ** 2)))
    total = float(np.sqrt(np.sum(mult * np.abs(Fb) ** 2)))
    dc_flag = dc_norm > 1e-8 * total
    if dc_flag:
        warnings.warn(f"nonzero mean field component (|f^(0)| = {dc_norm:.3e}) assigned to S",
                      stacklevel=2)
    kmin = float(np.min(np.linalg.norm(P[nz], axis=1))) if nz.size else float("nan")
    condition = {
        "min_nonzero_wavenumber": kmin,
        "W_amplification": 1.0 / kmin,
        "h_amplification": 1.0 / kmin ** 2,
        "norm_W": field_norm(W),
        "norm_h": field_norm(h),
    }
    return FrequencyDecomposition(W_hat.T.reshape(n, *spec_shape),
                                  h_hat.T.reshape(shape1.dim, *spec_shape),
                                  S_hat.T.reshape(shape2.dim, *spec_shape),
                                  W, h, S, dc_norm, bool(dc_flag), n >= 3, condition)


def decomposition_report(f: ElasticField, dec: FrequencyDecomposition) -> dict:
    """Reconstruction, orthogonality and solenoidal residuals (spectral back end)."""
    P = apply_K(dec.W) + apply_H(dec.h)
    fn = field_norm(f)
    Sn, Pn = field_norm(dec.S), field_norm(P)
    recon = field_norm(f - P - dec.S)
    ortho = abs(field_inner(dec.S, P))
    return {
        "norm_f": fn,
        "norm_S_over_f": Sn / fn if fn else 0.0,
        "reconstruction_residual": recon / fn if fn else 0.0,
        "orthogonality_residual": ortho / (Sn * Pn) if Sn * Pn else 0.0,
        "K_adjoint_S_over_f": field_norm(apply_K_adjoint(dec.S)) / fn if fn else 0.0,
        "H_adjoint_S_over_f": field_norm(apply_H_adjoint(dec.S)) / fn if fn else 0.0,
    }


# --------------------------------------------------------------------------
# rank 1


def _rank1_bins(f: ElasticField):
    if f.shape.m != 1:
        raise ValueError("expected a rank-1 field")
    grid, n = f.grid, f.grid.n
    F = forward_fft(f.values, grid)
    P = np.stack(np.broadcast_arrays(*wavevectors(grid)), axis=-1).reshape(-1, n)
    Ffull = F.reshape(f.shape.dim, -1).T[:, f.shape.full_to_canon]
    return F.shape[1:], P, Ffull


def rank1_potential_symbol(f: ElasticField) -> tuple[np.ndarray, float]:
    """Scalar ``h^(p) = |p|^-4 p^T f^(p) p`` and the relative residual of
    ``f^(p) = h^(p) p p^T`` over nonzero bins (rfft layout)."""
    spec_shape, P, Ff = _rank1_bins(f)
    nz = np.any(P != 0, axis=1)
    p2 = np.einsum("bi,bi->b", P, P)
    with np.errstate(divide="ignore", invalid="ignore"):
        hp = np.where(nz, np.einsum("bij,bi,bj->b", Ff, P, P) / p2 ** 2, 0.0)
    model = hp[:, None, None] * np.einsum("bi,bj->bij", P, P)
    scale = np.max(np.abs(Ff[nz])) if np.any(nz) else 0.0
    resid = float(np.max(np.abs(Ff[nz] - model[nz])) / scale) if scale else 0.0
    return hp.reshape(spec_shape), resid


def rank1_solenoidal_part(f: ElasticField) -> ElasticField:
    """Remove the ``p p^T`` component per bin (and the mean), leaving ``H_1^* f = 0``."""
    spec_shape, P, Ff = _rank1_bins(f)
    nz = np.any(P != 0, axis=1)
    p2 = np.einsum("bi,bi->b", P, P)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(nz, np.einsum("bij,bi,bj->b", Ff, P, P) / p2 ** 2, 0.0)
    Ff = Ff - c[:, None, None] * np.einsum("bi,bj->bij", P, P)
    Ff[~nz] = 0.0
    I, J = (np.array(a) for a in zip(*f.shape.reps))
    spec = Ff[:, I, J].T.reshape(f.shape.dim, *spec_shape)
    return ElasticField(f.grid, f.shape, inverse_fft(spec, f.grid))
