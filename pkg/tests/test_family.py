import numpy as np
import pytest

from darktraj.channel import KrausEnsemble
from darktraj.darkspace import DarkAtlas, EmpiricalDarkMeasure, stationary_dark_measure
from darktraj.errors import DomainError, MissingEntryError, PreconditionError
from darktraj.family import (
    CONTINUOUS,
    FINITE,
    FULL_SU,
    NOT_TRANSITIVE,
    IsometryFamily,
    build_smart_family,
    check_smart,
    classify_transitivity,
    density_orbit_spectrum,
    embedding_family,
    family_conjugator,
    group_closure,
    induced_generators,
    induced_unitary,
    invariance_residual,
    is_unique_invariant,
    normalized_image,
    orbit,
    sample_ergodic_measure,
    special_unitary_phase,
)
from darktraj.linalg import DensityMatrix, Ray, Subspace, dagger, fubini_distance, make_rng, random_ray
from darktraj.measures import wasserstein1
from darktraj.presets import ID2, SIGMA_X, SIGMA_Y, SIGMA_Z, build_example, r_x, r_z
from darktraj.trajectory import darkness_gap, word_product

PAULI_GROUP = [s * m for s in (1, -1) for m in (ID2, 1j * SIGMA_X, 1j * SIGMA_Y, 1j * SIGMA_Z)]


def smart_setup(e, planes, center=0):
    atlas = DarkAtlas(2, list(planes))
    chi = stationary_dark_measure(e, planes)
    return atlas, chi, build_smart_family(e, atlas, chi, planes[center])


def closure_of(e, fam, chi, cap=1024):
    return group_closure(induced_generators(fam, e, chi), cap=cap)


def brute_force_order(gens, eps=1e-6):
    elements = [np.eye(gens[0].shape[0], dtype=np.complex128)]
    grown = True
    while grown:
        grown = False
        for a in list(elements):
            for g in gens:
                h = g @ a
                if not any(np.linalg.norm(h - b, 2) <= eps for b in elements):
                    elements.append(h)
                    grown = True
    return len(elements)


def distinct(points, tol=1e-9):
    out = []
    for p in points:
        if not any(fubini_distance(p, q) <= tol for q in out):
            out.append(p)
    return out


# =============================================================================
# FAMILIES
# =============================================================================

def test_family_entries(planes4):
    fam = embedding_family(planes4)
    assert len(fam) == 2
    assert np.abs(fam.lookup(planes4[1]) - np.eye(4)[:, [2, 3]]).max() < 1e-12
    with pytest.raises(MissingEntryError):
        fam.lookup(Subspace.coordinate(4, [0, 2]))
    with pytest.raises(DomainError):
        IsometryFamily(2, [(planes4[0], 2 * np.eye(4)[:, :2])])


def test_smart_family_example1(ex1, planes4):
    _, chi, fam = smart_setup(ex1, planes4)
    assert fam.center_index == 0
    # J_b is the normalised image of J_a under v1
    j_b = fam.lookup(planes4[1])
    assert np.abs(j_b - normalized_image(ex1.matrices[0], fam.lookup(planes4[0]))).max() < 1e-12
    report = check_smart(fam, chi, ex1, seed=1)
    assert report.certified
    assert report.worst <= 1e-8


def test_embedding_family_is_not_smart(planes4):
    e = build_example("1", "5b")
    chi = stationary_dark_measure(e, planes4)
    fam = embedding_family(planes4, twists={1: r_x(1.0)})
    fam.center_index = 0
    assert not check_smart(fam, chi, e, word_budget=500, seed=2).certified
    with pytest.raises(PreconditionError):
        check_smart(embedding_family(planes4), chi, e)


def test_cocycle_consistency(ex1_generic, planes4):
    _, _, fam = smart_setup(ex1_generic, planes4)
    e = ex1_generic
    for first, second in ((0, 1), (1, 1), (0, 0)):
        d = planes4[0]
        v1, v2 = e.matrices[first], e.matrices[second]
        step1 = induced_unitary(fam, v1, d, canonical=False)
        step2 = induced_unitary(fam, v2, d.image(v1), canonical=False)
        w = word_product(e, [first, second])
        m = dagger(fam.lookup(d.image(w))) @ w @ fam.lookup(d)
        direct = special_unitary_phase(m / np.linalg.norm(m, 2))
        product = step2 @ step1
        assert min(np.abs(product - s * direct).max() for s in (1, -1)) < 1e-8


# =============================================================================
# GROUPS
# =============================================================================

def test_example1_5c_group_is_the_pauli_group(ex1, planes4):
    _, chi, fam = smart_setup(ex1, planes4)
    g = closure_of(ex1, fam, chi)
    assert g.kind == FINITE
    assert g.order == 8
    for u in g.elements:
        assert min(np.abs(u - p).max() for p in PAULI_GROUP) < 1e-9
    assert classify_transitivity(g) == NOT_TRANSITIVE
    assert not is_unique_invariant(g.classification)
    assert brute_force_order(g.generators + [dagger(u) for u in g.generators]) == 8


def test_example1_5a_group_is_full(ex1_generic, planes4):
    _, chi, fam = smart_setup(ex1_generic, planes4)
    g = closure_of(ex1_generic, fam, chi)
    assert g.kind == CONTINUOUS
    assert g.order is None
    assert g.lie_dim == 3
    assert classify_transitivity(g) == FULL_SU
    assert is_unique_invariant(FULL_SU)


def test_example1_5b_smart_and_twisted(planes4):
    e = build_example("1", "5b")
    _, chi, fam = smart_setup(e, planes4)
    g = closure_of(e, fam, chi)
    assert g.kind == CONTINUOUS
    assert g.lie_dim == 1
    assert classify_transitivity(g) == NOT_TRANSITIVE
    # a non-minimal family induces the whole of SU(2)
    twisted = embedding_family(planes4, twists={1: r_x(1.0)})
    g_twisted = closure_of(e, twisted, chi)
    assert g_twisted.lie_dim == 3
    assert classify_transitivity(g_twisted) == FULL_SU


@pytest.mark.parametrize("angle, orbit_size", [(np.pi / 3, 12), (np.pi / 2, 8)])
def test_example1_twisted_embedding_orbits(ex1, planes4, rng, angle, orbit_size):
    chi = stationary_dark_measure(ex1, planes4)
    fam = embedding_family(planes4, twists={1: r_z(angle)})
    g = closure_of(ex1, fam, chi)
    assert g.is_finite
    assert g.order == 2 * orbit_size
    assert len(orbit(random_ray(2, rng), g)) == orbit_size


def test_example1_irrational_twist_is_continuous(ex1, planes4):
    chi = stationary_dark_measure(ex1, planes4)
    fam = embedding_family(planes4, twists={1: r_z(np.sqrt(2))})
    g = closure_of(ex1, fam, chi, cap=512)
    assert g.kind == CONTINUOUS
    assert g.lie_dim == 1
    assert classify_transitivity(g) == NOT_TRANSITIVE


def test_example2_special_group(ex2_special, planes3):
    _, chi, fam = smart_setup(ex2_special, planes3)
    g = closure_of(ex2_special, fam, chi)
    assert g.order == 16
    assert brute_force_order(g.generators + [dagger(u) for u in g.generators]) == 16


def test_example3_groups(ex3, ex3_v3, planes4):
    _, chi, fam = smart_setup(ex3, planes4)
    assert check_smart(fam, chi, ex3, seed=0).certified
    g = closure_of(ex3, fam, chi)
    assert g.order == 4
    for u in g.elements:
        assert min(np.abs(u - s * m).max() for s in (1, -1) for m in (ID2, 1j * SIGMA_X)) < 1e-9

    g_embedded = closure_of(ex3, embedding_family(planes4), chi)
    assert g_embedded.order == 8

    _, chi_v3, fam_v3 = smart_setup(ex3_v3, planes4)
    assert closure_of(ex3_v3, fam_v3, chi_v3).order == 8


def test_closure_is_closed(ex2_special, planes3, rng):
    _, chi, fam = smart_setup(ex2_special, planes3)
    g = closure_of(ex2_special, fam, chi)
    for _ in range(200):
        a, b = rng.integers(g.order, size=2)
        assert g.contains(g.elements[a] @ g.elements[b])


def test_closure_arguments():
    with pytest.raises(DomainError):
        group_closure([])
    with pytest.raises(DomainError):
        group_closure([2 * ID2])
    trivial = group_closure([ID2])
    assert trivial.order == 1
    assert classify_transitivity(group_closure([np.eye(1, dtype=np.complex128)])) == FULL_SU


# =============================================================================
# ERGODIC MEASURES
# =============================================================================

def test_orbit_is_invariant(ex1, planes4, rng):
    _, chi, fam = smart_setup(ex1, planes4)
    g = closure_of(ex1, fam, chi)
    x = random_ray(2, rng)
    base = orbit(x, g)
    assert len(base) == 4
    for u in g.elements:
        moved = orbit(Ray(u @ x.vector), g)
        assert len(moved) == len(base)
        for p in moved:
            assert min(fubini_distance(p, q) for q in base) <= 1e-9


def test_example1_5c_ergodic_atoms(ex1, planes4):
    _, chi, fam = smart_setup(ex1, planes4)
    g = closure_of(ex1, fam, chi)
    generic = sample_ergodic_measure(fam, chi, random_ray(2, make_rng(3)), g, 10_000, seed=5)
    assert len(generic.centers) == 8
    assert np.abs(generic.center_weights - 1 / 8).max() < 0.01
    per_sphere = [sum(darkness_gap(c, [q]) < 1e-8 for c in generic.centers) for q in planes4]
    assert per_sphere == [4, 4]
    for x in generic.samples[:500]:
        assert darkness_gap(x, planes4) <= 1e-8

    pole = sample_ergodic_measure(fam, chi, Ray(np.array([1, 0])), g, 2000, seed=5)
    assert len(pole.centers) == 4


def test_trivial_group_gives_a_single_point(planes4):
    g = group_closure([ID2])
    fam = embedding_family(planes4)
    x = Ray(np.array([0.6, 0.8j]))
    s = sample_ergodic_measure(fam, EmpiricalDarkMeasure.dirac(planes4[1]), x, g, 50, seed=1)
    target = Ray(fam.lookup(planes4[1]) @ x.vector)
    assert all(p.same_as(target) for p in s.samples)
    assert len(s.centers) == 1


def test_example2_special_ergodic_atoms(ex2_special, planes3):
    _, chi, fam = smart_setup(ex2_special, planes3)
    g = closure_of(ex2_special, fam, chi)
    generic = sample_ergodic_measure(fam, chi, random_ray(2, make_rng(11)), g, 10_000, seed=2)
    assert len(generic.centers) == 16
    assert np.abs(generic.center_weights - 1 / 16).max() < 0.01

    tangent = sample_ergodic_measure(fam, chi, Ray(np.array([0, 1])), g, 10_000, seed=2)
    assert len(tangent.centers) == 7
    e1 = Ray(np.array([0, 1, 0]))
    heavy = [w for c, w in zip(tangent.centers, tangent.center_weights) if c.same_as(e1)]
    assert len(heavy) == 1
    assert abs(heavy[0] - 1 / 4) < 0.02
    light = [w for c, w in zip(tangent.centers, tangent.center_weights) if not c.same_as(e1)]
    assert np.abs(np.array(light) - 1 / 8).max() < 0.02


def test_density_samples_keep_their_spectrum(ex1_generic, planes4):
    _, chi, fam = smart_setup(ex1_generic, planes4)
    g = closure_of(ex1_generic, fam, chi, cap=256)
    rho = DensityMatrix(np.diag([0.7, 0.3]).astype(np.complex128))
    s = sample_ergodic_measure(fam, chi, rho, g, 300, seed=4)
    assert density_orbit_spectrum(s) <= 1e-10
    with pytest.raises(PreconditionError):
        density_orbit_spectrum(sample_ergodic_measure(fam, chi, Ray(np.array([1, 0])), g, 5))


def test_minimal_families_agree(ex1, planes4, rng):
    _, chi, fam_a = smart_setup(ex1, planes4, center=0)
    _, _, fam_b = smart_setup(ex1, planes4, center=1)
    g_a, g_b = closure_of(ex1, fam_a, chi), closure_of(ex1, fam_b, chi)
    q = family_conjugator(fam_a, fam_b)
    assert np.abs(dagger(q) @ q - ID2).max() < 1e-10
    x = random_ray(2, rng)
    nu_b = sample_ergodic_measure(fam_b, chi, x, g_b, 10_000, seed=1).to_measure()
    nu_a = sample_ergodic_measure(fam_a, chi, Ray(q @ x.vector), g_a, 10_000, seed=2).to_measure()
    assert len(nu_a) == len(nu_b) == 8
    assert wasserstein1(nu_a, nu_b) < 0.03


# =============================================================================
# INVARIANCE
# =============================================================================

def test_invariance_of_ergodic_samples(ex1, ex1_generic, ex2_special, planes4, planes3):
    cases = [(ex1, planes4, 7), (ex1_generic, planes4, 8), (ex2_special, planes3, 9)]
    for e, planes, seed in cases:
        _, chi, fam = smart_setup(e, planes)
        g = closure_of(e, fam, chi)
        s = sample_ergodic_measure(fam, chi, random_ray(2, make_rng(seed)), g, 10_000, seed=seed)
        result = invariance_residual(s, e, seed=seed)
        assert result.method == ("subsample" if e is ex1_generic else "atoms")
        assert result.ratio <= 3, result.to_dict()


def test_invariance_detects_one_sphere_measure(ex1_generic, planes4):
    rng = make_rng(21)
    j = planes4[0].basis
    wrong = [Ray(j @ random_ray(2, rng).vector) for _ in range(10_000)]
    result = invariance_residual(wrong, ex1_generic, seed=3)
    assert result.distance > 0.9
    assert result.ratio > 10


def test_invariance_of_a_fixed_ray():
    e = KrausEnsemble.single(np.diag([1.0, np.exp(0.7j)]))
    x = Ray(np.array([1.0, 0.0]))
    result = invariance_residual([x] * 20, e, seed=0)
    assert result.distance < 1e-12
    assert result.ratio == 0.0
    with pytest.raises(PreconditionError):
        invariance_residual([], e)
