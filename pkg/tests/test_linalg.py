import numpy as np
import pytest

from darktraj.errors import DimensionError, DomainError
from darktraj.linalg import (
    DensityMatrix,
    Ray,
    Subspace,
    dagger,
    dist_to_subspace,
    exterior_power,
    fubini_distance,
    fubini_distances,
    gap_distance,
    make_rng,
    polar_decompose,
    random_ray,
    random_subspace,
    random_unitary,
    spawn_seeds,
    wedge_distance,
    wedge_norm,
)


def rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_polar_reconstruction(rng):
    for _ in range(1000):
        d = int(rng.integers(1, 5))
        a = rand_complex(rng, d, d)
        u, p = polar_decompose(a)
        assert np.abs(u @ p - a).max() < 1e-10
        assert np.abs(dagger(u) @ u - np.eye(d)).max() < 1e-10
        assert np.abs(p - dagger(p)).max() < 1e-12
        assert np.linalg.eigvalsh(p)[0] > -1e-10


def test_polar_singular_input_is_deterministic():
    a = np.array([[1, 0], [0, 0]], dtype=np.complex128)
    u0, p0 = polar_decompose(a)
    u1, p1 = polar_decompose(a.copy())
    assert np.abs(u0 - u1).max() == 0
    assert np.abs(u0 @ p0 - a).max() < 1e-12


def test_polar_rejects_rectangular():
    with pytest.raises(DimensionError):
        polar_decompose(np.zeros((2, 3)))


def test_dist_to_subspace_matches_wedge_formula(rng):
    for _ in range(1000):
        d = int(rng.integers(2, 6))
        p = int(rng.integers(1, d))
        ys = rand_complex(rng, d, p)
        x = rand_complex(rng, d)
        q = Subspace.span(ys)
        assert abs(dist_to_subspace(x, q) - wedge_distance(x, ys)) < 1e-9


def test_wedge_norm_matches_exterior_power(rng):
    for _ in range(1000):
        d = int(rng.integers(2, 5))
        p = int(rng.integers(1, d + 1))
        a = rand_complex(rng, d, d)
        explicit = np.linalg.norm(exterior_power(a, p), 2)
        assert abs(wedge_norm(a, p) - explicit) <= 1e-9 * max(1.0, explicit)


def test_wedge_norm_rejects_bad_degree():
    with pytest.raises(DomainError):
        wedge_norm(np.eye(3), 4)
    with pytest.raises(DomainError):
        exterior_power(np.eye(3), 0)


def test_gap_distance_ignores_basis_choice(rng):
    for _ in range(100):
        q = random_subspace(4, 2, rng)
        rotated = Subspace(q.basis @ random_unitary(2, rng))
        assert gap_distance(q, rotated) < 1e-10
    a = Subspace.coordinate(4, [0, 1])
    b = Subspace.coordinate(4, [2, 3])
    assert abs(gap_distance(a, b) - 1) < 1e-12


def test_gap_distance_needs_equal_dimensions():
    with pytest.raises(DimensionError):
        gap_distance(Subspace.coordinate(3, [0]), Subspace.coordinate(3, [0, 1]))


def test_canonical_basis_depends_only_on_subspace(rng):
    q = Subspace.coordinate(4, [2, 3])
    assert np.abs(q.canonical_basis() - np.eye(4)[:, [2, 3]]).max() < 1e-12
    for _ in range(100):
        q = random_subspace(4, 2, rng)
        other = Subspace(q.basis @ random_unitary(2, rng))
        assert np.abs(q.canonical_basis() - other.canonical_basis()).max() < 1e-9


def test_fubini_distance_properties(rng):
    for _ in range(200):
        x, y, z = (random_ray(3, rng) for _ in range(3))
        phase = Ray(np.exp(1j * rng.random() * 2 * np.pi) * x.vector)
        assert fubini_distance(x, phase) < 1e-9
        assert abs(fubini_distance(x, y) - fubini_distance(y, x)) < 1e-14
        assert fubini_distance(x, z) <= fubini_distance(x, y) + fubini_distance(y, z) + 1e-12


def test_fubini_distance_of_rephased_ray_is_roundoff(rng):
    worst = 0.0
    for _ in range(2000):
        x = random_ray(4, rng)
        y = Ray(np.exp(0.3j) * x.vector)
        worst = max(worst, fubini_distance(x, y))
        assert x.same_as(y)
    assert worst <= 1e-12


def test_pairwise_fubini_distances(rng):
    xs = [random_ray(4, rng) for _ in range(7)]
    ys = [random_ray(4, rng) for _ in range(5)] + [Ray(1j * xs[2].vector)]
    table = fubini_distances(np.column_stack([x.vector for x in xs]),
                             np.column_stack([y.vector for y in ys]), block=3)
    assert table.shape == (7, 6)
    for a, x in enumerate(xs):
        for b, y in enumerate(ys):
            assert abs(table[a, b] - fubini_distance(x, y)) < 1e-14
    assert table[2, 5] <= 1e-12


def test_ray_rejects_zero_vector():
    with pytest.raises(DomainError):
        Ray(np.zeros(3))


def test_subspace_rejects_non_orthonormal_basis():
    with pytest.raises(DomainError):
        Subspace(np.array([[1, 1], [0, 1], [0, 0]], dtype=np.complex128))
    q = Subspace.span(np.array([[1, 1], [0, 1], [0, 0]], dtype=np.complex128))
    assert q.dim == 2
    assert q.contains(np.array([3, -2, 0]))


def test_density_matrix_validation():
    with pytest.raises(DomainError):
        DensityMatrix(np.array([[0.5, 1], [0, 0.5]]))
    with pytest.raises(DomainError):
        DensityMatrix(np.diag([1.5, -0.5]))
    rho = DensityMatrix.normalized_projector(Subspace.coordinate(4, [0, 1]))
    assert np.abs(rho.nonzero_spectrum() - [0.5, 0.5]).max() < 1e-14
    assert abs(rho.purity() - 0.5) < 1e-14


def test_seeds_are_reproducible():
    assert spawn_seeds(7, 4) == spawn_seeds(7, 4)
    assert len(set(spawn_seeds(7, 4))) == 4
    a = make_rng(12).random(5)
    b = make_rng(12).random(5)
    assert np.array_equal(a, b)
