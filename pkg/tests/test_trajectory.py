import numpy as np
import pytest

from darktraj.errors import DomainError, PreconditionError, RankError
from darktraj.linalg import DensityMatrix, Ray, Subspace, gap_distance, make_rng, random_ray, random_unitary
from darktraj.measures import fit_line, fit_log_slope
from darktraj.trajectory import (
    chaotic_trajectory,
    darkness_gap,
    darkness_gap_curve,
    estimate_dark,
    m_process,
    m_sample,
    run_trajectory,
    step_density,
    step_ray,
    word_product,
)


def nearest_gap(q, planes):
    return min(gap_distance(q, p) for p in planes)


def test_same_seed_same_indices(ex1):
    x0 = Ray(np.array([1, 2j, 0.5, -1]))
    a = run_trajectory(ex1, x0, 50, seed=11)
    b = run_trajectory(ex1, x0, 50, seed=11)
    c = run_trajectory(ex1, x0, 50, seed=12)
    assert a[-1].chosen_indices == b[-1].chosen_indices
    assert a[-1].chosen_indices != c[-1].chosen_indices
    assert np.abs(a[-1].W - b[-1].W).max() == 0


def test_stride_keeps_endpoints(ex1):
    traj = run_trajectory(ex1, Ray(np.ones(4)), 25, seed=0, stride=10)
    assert [ts.step for ts in traj] == [0, 10, 20, 25]
    with pytest.raises(DomainError):
        run_trajectory(ex1, Ray(np.ones(4)), 5, stride=0)


def test_single_steps(ex1, planes4):
    rng = make_rng(3)
    x = Ray(np.array([1, 1j, 0, 0]))
    for n in range(4):
        i, x = step_ray(ex1, x, rng)
        assert i in (0, 1)
        assert darkness_gap(x, [planes4[(n + 1) % 2]]) < 1e-12

    rho = DensityMatrix(np.eye(4, dtype=np.complex128) / 4)
    for _ in range(4):
        _, rho = step_density(ex1, rho, rng)
        assert abs(np.trace(rho.matrix).real - 1) < 1e-12
        assert np.linalg.eigvalsh(rho.matrix).min() > -1e-12


def test_ray_follows_running_product(ex2, rng):
    x0 = random_ray(3, rng)
    for ts in run_trajectory(ex2, x0, 40, seed=5):
        image = Ray(ts.W @ x0.vector)
        assert image.same_as(ts.state, tol=1e-9)
        assert ts.W.shape == (3, 3)
    w = word_product(ex2, ts.chosen_indices)
    assert np.abs(w / np.linalg.norm(w) - ts.W / np.linalg.norm(ts.W)).max() < 1e-10


def test_estimate_dark_recovers_a_plane(ex1, planes4):
    for seed in range(5):
        ts = chaotic_trajectory(ex1, 200, seed=seed, stride=200)[-1]
        e_hat, d_hat = estimate_dark(ts, 2)
        assert nearest_gap(d_hat, planes4) < 1e-8
        assert nearest_gap(e_hat, planes4) < 1e-8
        assert gap_distance(d_hat, e_hat.image(ts.W)) < 1e-8


def test_estimate_dark_rank_error(ex2):
    ts = chaotic_trajectory(ex2, 30, seed=1)[-1]
    assert m_sample(ts).numerical_rank == 2
    e_hat, d_hat = estimate_dark(ts, 2)
    assert d_hat.dim == 2
    with pytest.raises(RankError):
        estimate_dark(ts, 3)
    with pytest.raises(DomainError):
        estimate_dark(ts, 4)


def test_m_process_is_a_state_sequence(ex3):
    samples = m_process(chaotic_trajectory(ex3, 60, seed=2, stride=6))
    assert [s.n for s in samples] == list(range(0, 61, 6))
    for s in samples:
        assert abs(np.trace(s.M.matrix).real - 1) < 1e-12
        assert np.abs(s.U.conj().T @ s.U - np.eye(4)).max() < 1e-10
    assert samples[0].numerical_rank == 4


def test_spectrum_preserved_inside_dark_plane(ex1_generic):
    rng = make_rng(4)
    j = Subspace.coordinate(4, [0, 1]).basis @ random_unitary(2, rng)
    rho0 = DensityMatrix(j @ np.diag([0.7, 0.3]) @ j.conj().T)
    for seed in range(10):
        for ts in run_trajectory(ex1_generic, rho0, 100, seed=seed):
            spec = ts.state.nonzero_spectrum()
            assert spec.shape == (2,)
            assert np.abs(spec - [0.7, 0.3]).max() < 1e-10


def test_darkness_gap_values(ex1, planes4, single):
    assert darkness_gap(Ray(np.array([0, 0, 1, 1j])), planes4) < 1e-15
    assert abs(darkness_gap(Ray(np.array([1, 0, 1, 0])), planes4) - 0.5) < 1e-12
    rho = DensityMatrix(np.eye(4) / 4)
    assert abs(darkness_gap(rho, planes4) - 0.5) < 1e-12
    with pytest.raises(PreconditionError):
        darkness_gap(rho, [])
    curve = darkness_gap_curve(single, [Subspace.whole(2)], 20, [1, 2, 3])
    assert all(row["mean_darkness_gap"] < 1e-12 for row in curve)


def test_darkness_gap_mean_decays_exponentially(ex1_generic, planes4):
    curve = darkness_gap_curve(ex1_generic, planes4, 50, list(range(200)))
    ns = [row["n"] for row in curve]
    fit = fit_log_slope(ns, [row["mean_darkness_gap"] for row in curve])
    assert fit["slope"] < 0
    assert fit["r_squared"] >= 0.9
    # the mean gap only loses about 1.5% per step here
    assert 0.05 < curve[-1]["mean_darkness_gap"] < curve[0]["mean_darkness_gap"]
    logs = fit_line(ns, [row["mean_log_gap"] for row in curve])
    assert logs["slope"] < 0


def test_m_process_is_a_martingale(ex1_generic):
    ts = chaotic_trajectory(ex1_generic, 6, seed=3)[-1]
    m_n = m_sample(ts).M.matrix
    rng = make_rng(21)
    diffs = []
    for _ in range(10_000):
        i, _ = step_density(ex1_generic, ts.state, rng)
        w = ex1_generic.matrices[i] @ ts.W
        gram = w.conj().T @ w
        diffs.append(gram / np.trace(gram).real - m_n)
    d = np.asarray(diffs).reshape(len(diffs), -1)
    d = np.hstack([d.real, d.imag])
    mean = d.mean(axis=0)
    se = d.std(axis=0, ddof=1) / np.sqrt(len(d))
    flat = se < 1e-12
    assert np.abs(mean[flat]).max(initial=0.0) < 1e-12
    assert np.all(np.abs(mean[~flat]) <= 5 * se[~flat])


def test_m_rank_is_nonincreasing(ex2, ex2_special):
    for e in (ex2, ex2_special):
        at_r_m = 0
        for seed in range(200):
            ranks = [s.numerical_rank for s in m_process(chaotic_trajectory(e, 30, seed=seed))]
            assert ranks[0] == 3
            assert all(b <= a for a, b in zip(ranks, ranks[1:]))
            at_r_m += ranks[-1] == 2
        assert at_r_m >= 198
