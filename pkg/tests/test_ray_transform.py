import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import bump
from etomo.field_ops import ElasticField, Grid
from etomo.geometry import sphere_directions
from etomo.phantoms import make_phantom
from etomo.ray_transform import (RaySpec, admissible_triples, elastic_xray_single, make_ray,
                                 offset_grid, polarization_basis, polarization_sweep,
                                 reconstruct_quadratic_form, sinogram, slice_check, xray_scalar)
from etomo.tensor_core import ElasticTensor, Polarization, TensorShape, isotropic_tensors, vq_weights


def unit(x):
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x)


@pytest.fixture(scope="module")
def fine_gaussian_2d():
    g = Grid.centered(2, 4096, 8.0)
    X = g.mesh()
    return ElasticField.scalar(g, np.exp(-(X[0] ** 2 + X[1] ** 2)))


@pytest.mark.parametrize("angle", [0.0, 0.7, 2.1])
def test_scalar_gaussian_through_origin(fine_gaussian_2d, angle):
    v = np.array([np.cos(angle), np.sin(angle)])
    val = xray_scalar(fine_gaussian_2d, make_ray(fine_gaussian_2d.grid, v, [0.0]))
    assert abs(val - np.sqrt(np.pi)) <= 1e-6 * np.sqrt(np.pi)


@pytest.mark.parametrize("s", [0.3, -1.1])
def test_scalar_gaussian_offset(fine_gaussian_2d, s):
    v = unit([1.0, 2.0])
    val = xray_scalar(fine_gaussian_2d, make_ray(fine_gaussian_2d.grid, v, [s]))
    expect = np.sqrt(np.pi) * np.exp(-s ** 2)
    assert abs(val - expect) <= 1e-6 * np.sqrt(np.pi)


def test_scalar_zero_and_degenerate_ray():
    g = Grid.centered(3, 8, 4.0)
    assert xray_scalar(ElasticField.zeros(g, 0), make_ray(g, [0, 0, 1.0], [0.1, 0.2])) == 0
    with pytest.raises(ValueError):
        RaySpec(np.zeros(3), np.zeros(2), 0.1, 10, 0.0)
    with pytest.raises(ValueError):
        xray_scalar(ElasticField.zeros(g, 2), make_ray(g, [0, 0, 1.0], [0, 0]))


def test_ray_base_point_is_orthogonal(rng):
    g = Grid.centered(3, 8, 4.0)
    for _ in range(10):
        v = unit(rng.standard_normal(3))
        ray = make_ray(g, v, rng.standard_normal(2))
        assert abs(ray.point @ v) <= 1e-12
        assert ray.step * (ray.count - 1) >= g.diagonal


def brute_line_sampler(values, grid, points):
    """Multilinear interpolation written out corner by corner, zero outside."""
    h = grid.spacing
    origin = np.array(grid.origin)
    out = np.zeros(len(points))
    for k, x in enumerate(points):
        u = (x - origin) / h
        base = np.floor(u).astype(int)
        frac = u - base
        acc = 0.0
        for corner in itertools.product((0, 1), repeat=grid.n):
            idx = base + np.array(corner)
            if np.any(idx < 0) or np.any(idx >= np.array(grid.shape)):
                continue
            w = np.prod([fr if c else 1 - fr for fr, c in zip(frac, corner)])
            acc += w * values[tuple(idx)]
        out[k] = acc
    return out


def test_single_voxel_matches_brute_force(rng):
    g = Grid.centered(3, 10, 5.0)
    shape = TensorShape(3, 2)
    T = ElasticTensor.random(shape, rng)
    spike = np.zeros(g.shape)
    spike[5, 4, 6] = 1.0
    f = ElasticField.from_envelope(g, T, spike)
    center = np.array([g.axis_coords(a)[i] for a, i in enumerate((5, 4, 6))])
    v = unit([0.3, -0.5, 0.8])
    B = polarization_basis(v)
    offset = B.T @ center + np.array([0.11, -0.07])
    ray = make_ray(g, v, offset)
    q = B @ unit([1.0, 0.4])
    pol = Polarization.orthogonal(v, q)
    got = elastic_xray_single(f, ray, pol)
    scalar = np.tensordot(vq_weights(shape, v, q), f.values, axes=(0, 0))
    pts = ray.point[None] + ray.t[:, None] * v[None]
    samples = brute_line_sampler(scalar, g, pts)
    ref = np.sum(samples[1:] + samples[:-1]) * ray.step / 2
    assert ref != 0
    assert abs(got - ref) <= 1e-8 * abs(ref)


def test_direction_mismatch_rejected():
    g = Grid.centered(2, 8, 4.0)
    f = ElasticField.zeros(g, 2)
    with pytest.raises(ValueError):
        elastic_xray_single(f, make_ray(g, [1.0, 0], [0.0]), Polarization.parallel([0, 1.0]))


@pytest.fixture(scope="module")
def potentials_3d():
    g = Grid.centered(3, 32, 8.0)
    return {k: make_phantom(k, g, seed=3) for k in ("gaussian-H-potential", "gaussian-K-potential", "generic-bump")}


def test_potentials_nearly_invisible_single_rays(potentials_3d):
    gen = potentials_3d["generic-bump"]
    v = unit([0.2, 0.9, -0.4])
    B = polarization_basis(v)
    rays = [make_ray(gen.grid, v, o) for o in ([0, 0], [0.5, -0.3], [-1.0, 0.8])]
    pols = [Polarization.parallel(v), Polarization.orthogonal(v, B[:, 0]), Polarization.orthogonal(v, unit(B @ [1, -2.0]))]
    for key in ("gaussian-H-potential", "gaussian-K-potential"):
        f = potentials_3d[key]
        scale = f.norm() / gen.norm()
        ref = max(abs(elastic_xray_single(gen, r, p)) * scale for r in rays for p in pols)
        worst = max(abs(elastic_xray_single(f, r, p)) for r in rays for p in pols)
        assert worst <= 1e-2 * ref


def test_kernel_tolerance_decreases_second_order():
    peaks = []
    for N in (128, 256):
        g = Grid.centered(2, N, 8.0)
        dirs = sphere_directions(2, 7, seed=1)
        offs = offset_grid(2, 9, 1.6)
        peaks.append([np.max(np.abs(sinogram(make_phantom(k, g, seed=0), dirs, offs).value))
                      for k in ("gaussian-H-potential", "gaussian-K-potential")])
    for coarse, fine in zip(*peaks):
        assert coarse / fine >= 4.0


def test_sinogram_counts_and_zero_field():
    g = Grid.centered(3, 8, 4.0)
    dirs = sphere_directions(3, 4, seed=0)
    offs = offset_grid(3, 3, 1.0)
    s = sinogram(ElasticField.zeros(g, 2), dirs, offs)
    # sweep for m = 2, n = 3: 2 basis vectors + 1 pair sum
    assert len(s) == 4 * 9 * (1 + 3)
    assert np.all(s.value == 0)
    for v, b, q in zip(s.v, s.branch, s.q):
        Polarization(v, q, b)
    with pytest.raises(ValueError):
        sinogram(ElasticField.zeros(g, 2), dirs, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        sinogram(ElasticField.zeros(g, 2), dirs, offs, pol_plan="diagonal")


def test_isotropic_sinogram_matches_scalar_transform():
    g = Grid.centered(3, 24, 8.0)
    env = bump(g)
    lam, mu = 2.0, 1.0
    alpha, beta = isotropic_tensors(3)
    f = ElasticField.from_envelope(g, alpha * lam + beta * mu, env)
    dirs = sphere_directions(3, 3, seed=2)
    offs = offset_grid(3, 3, 0.8)
    s = sinogram(f, dirs, offs)
    scalar = ElasticField.scalar(g, env)
    x0 = {}
    for v in dirs:
        for o in offs:
            x0[(tuple(v), tuple(o))] = xray_scalar(scalar, make_ray(g, v, o))
    for v, b, q, o, val in zip(s.v, s.branch, s.q, s.offset, s.value):
        ref = x0[(tuple(v), tuple(o))]
        factor = lam + 2 * mu if b == "parallel" else mu * (q @ q)
        assert abs(val - factor * ref) <= 1e-6 * abs(factor * ref)


def test_linearity_and_parallel_branch(rng):
    g = Grid.centered(3, 16, 6.0)
    env = bump(g)
    shape = TensorShape(3, 2)
    f1 = ElasticField.from_envelope(g, ElasticTensor.random(shape, rng), env)
    f2 = ElasticField.from_envelope(g, ElasticTensor.random(shape, rng), env * np.cos(g.mesh()[0]))
    v = unit(rng.standard_normal(3))
    ray = make_ray(g, v, [0.2, -0.1])
    pol = Polarization.parallel(v)
    a, b = 1.7, -0.4
    lhs = elastic_xray_single(f1 * a + f2 * b, ray, pol)
    rhs = a * elastic_xray_single(f1, ray, pol) + b * elastic_xray_single(f2, ray, pol)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)
    # parallel branch is the longitudinal transform with v (x) v (x) v (x) v
    full = f1.values[shape.full_to_canon]
    longitudinal = ElasticField.scalar(g, np.einsum("ijkl...,i,j,k,l->...", full, v, v, v, v))
    assert elastic_xray_single(f1, ray, pol) == pytest.approx(xray_scalar(longitudinal, ray), rel=1e-12)


def test_q_homogeneity_exact(rng):
    g = Grid.centered(3, 12, 6.0)
    f = ElasticField.from_envelope(g, ElasticTensor.random(TensorShape(3, 2), rng), bump(g))
    v = unit([0.0, 0.6, 0.8])
    ray = make_ray(g, v, [0.1, 0.3])
    q = np.array([1.0, 0, 0])
    base = elastic_xray_single(f, ray, Polarization.orthogonal(v, q))
    assert elastic_xray_single(f, ray, Polarization.orthogonal(v, 2 * q)) == 4 * base


def test_quadratic_form_reconstruction(rng):
    g = Grid.centered(4, 8, 5.0)
    f = ElasticField.from_envelope(g, ElasticTensor.random(TensorShape(4, 2), rng), bump(g))
    v = unit(rng.standard_normal(4))
    ray = make_ray(g, v, [0.2, -0.1, 0.05])
    sweep = polarization_sweep(v, 2)
    vals = [elastic_xray_single(f, ray, p) for p in sweep]
    Bq = reconstruct_quadratic_form(vals[:3], vals[3:])
    basis = polarization_basis(v)
    for _ in range(10):
        c = rng.standard_normal(3)
        direct = elastic_xray_single(f, ray, Polarization.orthogonal(v, basis @ c))
        assert c @ Bq @ c == pytest.approx(direct, rel=1e-9)


def test_polarization_basis_examples():
    B = polarization_basis(np.array([1.0, 0]))
    assert abs(abs(B[1, 0]) - 1) < 1e-15 and abs(B[0, 0]) < 1e-15
    B = polarization_basis(np.array([0, 0, 1.0]))
    np.testing.assert_allclose(B.T @ B, np.eye(2), atol=1e-12)
    assert np.max(np.abs(B[2])) < 1e-15
    with pytest.raises(ValueError):
        polarization_basis(np.zeros(3))
    with pytest.raises(ValueError):
        polarization_basis(np.array([1.0, 1.0, 0]))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 5), seed=st.integers(0, 2 ** 32 - 1))
def test_polarization_basis_gram(n, seed):
    v = unit(np.random.default_rng(seed).standard_normal(n))
    B = polarization_basis(v)
    M = np.column_stack([v, B])
    assert np.max(np.abs(M.T @ M - np.eye(n))) <= 1e-12
    np.testing.assert_array_equal(B, polarization_basis(v.copy()))


@pytest.fixture(scope="module")
def slice_fields():
    out = {}
    for n, N in ((2, 64), (2, 128)):
        g = Grid.centered(n, N, 8.0)
        out[(n, N)] = (make_phantom("generic-bump", g, seed=4), make_phantom("gaussian-H-potential", g, seed=4))
    return out


def test_slice_potential_rhs_vanishes():
    # a roomier box keeps the bump's truncation at the boundary below 1e-10
    g = Grid.centered(2, 96, 12.0)
    H = make_phantom("gaussian-H-potential", g, seed=4)
    gen = make_phantom("generic-bump", g, seed=4)
    gen = gen * (H.norm() / gen.norm())
    rng = np.random.default_rng(0)
    for v, q, p in admissible_triples(2, 6, rng):
        (_, rhs, _), = slice_check(H, v, q, [p])
        (_, rhs_gen, _), = slice_check(gen, v, q, [p])
        assert abs(rhs) <= 1e-8 * abs(rhs_gen)


def test_slice_zero_frequency_is_total_mass(slice_fields):
    gen, _ = slice_fields[(2, 64)]
    v = unit([0.3, 0.7])
    (lhs, rhs, res), = slice_check(gen, v, v, [np.zeros(2)])
    w = vq_weights(gen.shape, v, v)
    total = float(w @ gen.values.reshape(gen.shape.dim, -1).sum(axis=1)) * gen.grid.cell_volume
    assert rhs.real == pytest.approx(total, rel=1e-12)
    assert res <= 1e-2


def test_slice_residual_decreases(slice_fields):
    worst = []
    for N in (64, 128):
        gen, _ = slice_fields[(2, N)]
        rng = np.random.default_rng(11)
        worst.append(max(slice_check(gen, v, q, [p])[0][2] for v, q, p in admissible_triples(2, 10, rng)))
    assert worst[0] <= 1e-2 and worst[1] < worst[0]


def test_slice_rejects_non_orthogonal_frequency(slice_fields):
    gen, _ = slice_fields[(2, 64)]
    with pytest.raises(ValueError):
        slice_check(gen, [1.0, 0], [1.0, 0], [[1.0, 0.1]])
