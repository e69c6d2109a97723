import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import bandlimited_field, bandlimited_vector, bump, rel
from etomo.field_ops import (ElasticField, Grid, VectorField, apply_H, apply_K, forward_fft,
                             wavevectors)
from etomo.geometry import orthonormal_complement, random_rotation
from etomo.helmholtz import (SymbolFrame, decompose_field, decomposition_report, dual_H, dual_K,
                             lambda_H, lambda_K, project_pointwise, rank1_potential_symbol,
                             sigma_H, sigma_H_matrix, sigma_K, sigma_K_matrix, subspace_dimensions)
from etomo.tensor_core import ElasticTensor, TensorShape, inner_product, rotate


def perp_vector(p, rng):
    B = orthonormal_complement(p / np.linalg.norm(p))
    return B @ rng.standard_normal(p.size - 1)


def h_of(n, comps):
    return ElasticTensor(TensorShape(n, 1), comps)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_left_inverses(n, rng):
    for _ in range(100):
        p = rng.standard_normal(n) * rng.uniform(0.2, 5)
        W = perp_vector(p, rng)
        assert rel(lambda_K(p, sigma_K(p, W)), W) <= 1e-12
        h = ElasticTensor.random(TensorShape(n, 1), rng)
        assert rel(lambda_H(p, sigma_H(p, h)).components, h.components) <= 1e-12


@pytest.mark.parametrize("n", [2, 3, 4])
def test_left_inverse_homogeneity(n, rng):
    p = rng.standard_normal(n)
    T = ElasticTensor.random(TensorShape(n, 2), rng)
    np.testing.assert_allclose(lambda_K(2 * p, T), 0.5 * lambda_K(p, T), rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(lambda_H(2 * p, T).components, 0.25 * lambda_H(p, T).components, rtol=1e-13, atol=1e-14)


def explicit_sigma_K_full(p, W):
    d = np.eye(p.size)
    s1 = np.einsum("i,j->ij", p, W)
    s1 = s1 + s1.T
    return 0.25 * (np.einsum("ij,kl->ijkl", s1, d) + np.einsum("kl,ij->ijkl", s1, d))


def explicit_sigma_H_full(p, hmat):
    pp = np.outer(p, p)
    return 0.5 * (np.einsum("ij,kl->ijkl", pp, hmat) + np.einsum("kl,ij->ijkl", pp, hmat))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_symbols_match_written_out_formulas(n, rng):
    p, W = rng.standard_normal(n), rng.standard_normal(n)
    np.testing.assert_allclose(sigma_K(p, W).full(), explicit_sigma_K_full(p, W), atol=1e-14)
    h = ElasticTensor.random(TensorShape(n, 1), rng)
    np.testing.assert_allclose(sigma_H(p, h).full(), explicit_sigma_H_full(p, h.full()), atol=1e-14)


def test_symbol_linearity_homogeneity_zero(rng):
    p, W1, W2 = rng.standard_normal((3, 3))
    h = ElasticTensor.random(TensorShape(3, 1), rng)
    np.testing.assert_allclose(sigma_K(p, 2 * W1 - W2).components,
                               2 * sigma_K(p, W1).components - sigma_K(p, W2).components, atol=1e-14)
    np.testing.assert_allclose(sigma_K(3 * p, W1).components, 3 * sigma_K(p, W1).components, atol=1e-13)
    np.testing.assert_allclose(sigma_H(3 * p, h).components, 9 * sigma_H(p, h).components, atol=1e-12)
    assert not np.any(sigma_K(p, np.zeros(3)).components)
    assert not np.any(sigma_H(p, ElasticTensor.zeros(TensorShape(3, 1))).components)
    for fn, arg in ((sigma_K, W1), (sigma_H, h), (dual_K, None), (dual_H, None), (lambda_K, None), (lambda_H, None)):
        with pytest.raises(ValueError):
            fn(np.zeros(3), arg if arg is not None else ElasticTensor.zeros(TensorShape(3, 2)))


def test_overlap_identity(rng):
    p = rng.standard_normal(3)
    g = 1.7
    delta = h_of(3, [1.0 if i == j else 0.0 for i, j in TensorShape(3, 1).reps])
    lhs = sigma_H(p, delta * g)
    rhs = sigma_K(p, p * g)
    np.testing.assert_allclose(lhs.components, rhs.components, atol=1e-14)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_duality(n, rng):
    for _ in range(20):
        p, W = rng.standard_normal(n), rng.standard_normal(n)
        T = ElasticTensor.random(TensorShape(n, 2), rng)
        h = ElasticTensor.random(TensorShape(n, 1), rng)
        assert inner_product(sigma_K(p, W), T) == pytest.approx(W @ dual_K(p, T), rel=1e-12, abs=1e-12)
        assert inner_product(sigma_H(p, h), T) == pytest.approx(inner_product(h, dual_H(p, T)), rel=1e-12, abs=1e-12)


def test_dual_K_injective_on_perp(rng):
    p = rng.standard_normal(3)
    W = perp_vector(p, rng)
    assert np.linalg.norm(dual_K(p, sigma_K(p, W))) > 1e-3 * np.linalg.norm(W)


def test_C_part_has_no_projection(rng):
    p = rng.standard_normal(3)
    T = ElasticTensor.random(TensorShape(3, 2), rng)
    _, _, TC = project_pointwise(p, T)
    assert np.linalg.norm(dual_K(p, TC)) <= 1e-10 * T.norm()
    assert dual_H(p, TC).norm() <= 1e-10 * T.norm()
    A, B, C = project_pointwise(p, TC)
    assert A.norm() <= 1e-10 * T.norm() and B.norm() <= 1e-10 * T.norm()


def test_potential_symbols_project_to_their_parts(rng):
    p = rng.standard_normal(3)
    h = ElasticTensor.random(TensorShape(3, 1), rng)
    T = sigma_H(p, h)
    A, B, C = project_pointwise(p, T)
    assert A.norm() <= 1e-10 * T.norm() and C.norm() <= 1e-10 * T.norm()
    assert (B - T).norm() <= 1e-10 * T.norm()
    T = sigma_K(p, perp_vector(p, rng))
    A, B, C = project_pointwise(p, T)
    assert (A - T).norm() <= 1e-10 * T.norm()


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 4), seed=st.integers(0, 2 ** 32 - 1))
def test_pointwise_direct_sum_properties(n, seed):
    rng = np.random.default_rng(seed)
    p = rng.standard_normal(n)
    T = ElasticTensor.random(TensorShape(n, 2), rng)
    A, B, C = project_pointwise(p, T)
    tn = T.norm()
    assert (A + B + C - T).norm() <= 1e-10 * tn
    assert abs(inner_product(A, C)) <= 1e-10 * tn ** 2
    assert abs(inner_product(B, C)) <= 1e-10 * tn ** 2
    A3, B3, C3 = project_pointwise(3 * p, T)
    assert max((A3 - A).norm(), (B3 - B).norm(), (C3 - C).norm()) <= 1e-10 * tn
    R = random_rotation(n, rng)
    _, _, CR = project_pointwise(R @ p, rotate(T, R))
    assert (CR - rotate(C, R)).norm() <= 1e-10 * tn


def brute_rank(p):
    """Ranks of the A, B and A + B column sets from written-out full-index symbols."""
    n = p.size
    colsA = [explicit_sigma_K_full(p, w).ravel() for w in orthonormal_complement(p / np.linalg.norm(p)).T]
    colsB = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1
            colsB.append(explicit_sigma_H_full(p, E).ravel())
    rank = np.linalg.matrix_rank
    return rank(np.array(colsA)), rank(np.array(colsB)), rank(np.array(colsA + colsB))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_subspace_dimensions_match_rank_oracle(n, rng):
    p = rng.standard_normal(n)
    dims = subspace_dimensions(p)
    rA, rB, rD = brute_rank(p)
    dim2 = TensorShape(n, 2).dim
    assert (dims["A"], dims["B"], dims["D"]) == (rA, rB, rD) == (n - 1, n * (n + 1) // 2, n - 1 + n * (n + 1) // 2)
    assert dims["C"] == dim2 - rD
    assert SymbolFrame.at(p).rank == rD
    if n == 3:
        assert dims["E2"] == 21 and dims["C"] == 13


def test_A_and_B_are_not_orthogonal(rng):
    # the split inside A_p + B_p is direct but oblique
    p = rng.standard_normal(3)
    W = perp_vector(p, rng)
    h = ElasticTensor(TensorShape(3, 1), [np.outer(p, W)[r] + np.outer(W, p)[r] for r in TensorShape(3, 1).reps])
    assert abs(inner_product(sigma_K(p, W), sigma_H(p, h))) > 1e-3


def test_fft_symbol_oracles(rng):
    g = Grid.centered(3, 16, 8.0)
    env = bump(g)
    cosx = np.cos(g.mesh()[0])
    W = VectorField(g, np.multiply.outer(rng.standard_normal(3), env) * cosx)
    h = ElasticField.from_envelope(g, ElasticTensor.random(TensorShape(3, 1), rng), env)
    P = np.stack(np.broadcast_arrays(*wavevectors(g)), -1)
    FK = forward_fft(apply_K(W).values, g)
    pred = 1j * np.einsum("...cs,s...->c...", sigma_K_matrix(P), forward_fft(W.values, g))
    assert rel(FK, pred) <= 1e-10
    FH = forward_fft(apply_H(h).values, g)
    pred = -np.einsum("...cs,s...->c...", sigma_H_matrix(P), forward_fft(h.values, g))
    assert rel(FH, pred) <= 1e-10


@pytest.fixture(scope="module")
def grid32():
    return Grid.centered(3, 32, 8.0)


def test_decompose_potential_field(grid32):
    rng = np.random.default_rng(8)
    env = bump(grid32)
    W0 = VectorField(grid32, np.multiply.outer(rng.standard_normal(3), env))
    h0 = ElasticField.from_envelope(grid32, ElasticTensor.random(TensorShape(3, 1), rng), env)
    f = apply_K(W0) + apply_H(h0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dec = decompose_field(f)
    rep = decomposition_report(f, dec)
    assert rep["norm_S_over_f"] <= 1e-8
    assert rep["reconstruction_residual"] <= 1e-8
    assert dec.theorem_guarantee


def test_decompose_random_field_certificates(grid32):
    rng = np.random.default_rng(9)
    f = bandlimited_field(grid32, 2, rng)
    dec = decompose_field(f)
    rep = decomposition_report(f, dec)
    assert rep["reconstruction_residual"] <= 1e-8
    assert rep["orthogonality_residual"] <= 1e-8
    assert rep["K_adjoint_S_over_f"] <= 1e-8 and rep["H_adjoint_S_over_f"] <= 1e-8
    assert not dec.dc_flag
    # per-bin invariants
    P = np.stack(np.broadcast_arrays(*wavevectors(grid32)), -1).reshape(-1, 3)
    nz = np.any(P != 0, axis=1)
    What = dec.W_hat.reshape(3, -1).T[nz]
    assert np.max(np.abs(np.einsum("bi,bi->b", What, P[nz]))) <= 1e-10 * np.max(np.abs(What)) * np.max(np.abs(P))
    S = dec.S_hat.reshape(21, -1).T[nz]
    mult = TensorShape(3, 2).multiplicity
    dK = np.einsum("bcs,bc->bs", sigma_K_matrix(P[nz]), mult * S)
    dH = np.einsum("bcs,bc->bs", sigma_H_matrix(P[nz]), mult * S)
    pn = np.linalg.norm(P[nz], axis=1)
    scale = np.max(np.abs(S))
    assert np.max(np.abs(dK) / pn[:, None]) <= 1e-10 * scale
    assert np.max(np.abs(dH) / pn[:, None] ** 2) <= 1e-10 * scale


def test_decompose_stats_with_mean(grid32):
    rng = np.random.default_rng(10)
    f = bandlimited_field(grid32, 2, rng) + ElasticField.from_envelope(
        grid32, ElasticTensor.random(TensorShape(3, 2), rng), np.ones(grid32.shape))
    with pytest.warns(UserWarning, match="mean"):
        dec = decompose_field(f)
    assert dec.dc_flag and dec.dc_norm > 0
    mean_S = dec.S.values.mean(axis=(1, 2, 3))
    np.testing.assert_allclose(mean_S, f.values.mean(axis=(1, 2, 3)), atol=1e-12)
    assert dec.summary()["dc"]["flag"] is True


def test_decompose_two_dimensional_flag():
    g = Grid.centered(2, 32, 8.0)
    f = bandlimited_field(g, 2, np.random.default_rng(1))
    dec = decompose_field(f)
    assert dec.theorem_guarantee is False
    assert decomposition_report(f, dec)["reconstruction_residual"] <= 1e-8


def test_decompose_rejects_bad_input(grid32):
    with pytest.raises(ValueError):
        decompose_field(ElasticField.zeros(grid32, 1))
    bad = ElasticField.zeros(grid32, 2).values.copy()
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        decompose_field(ElasticField(grid32, TensorShape(3, 2), bad))


def test_rank1_frequency_ansatz(rng):
    g = Grid.centered(3, 32, 8.0)
    h = ElasticField.scalar(g, bump(g) * (1 + 0.3 * np.sin(g.mesh()[1])))
    f = apply_H(h)
    _, resid = rank1_potential_symbol(f)
    assert resid <= 1e-9
    _, resid_generic = rank1_potential_symbol(bandlimited_field(g, 1, rng))
    assert resid_generic > 0.1
