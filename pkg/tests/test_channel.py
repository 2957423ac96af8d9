import json

import numpy as np
import pytest
from scipy.linalg import sqrtm

from darktraj.channel import (
    AMBIGUOUS,
    IRREDUCIBLE,
    REDUCIBLE,
    KrausEnsemble,
    apply_channel,
    apply_dual_channel,
    commutant_dimension,
    dump_ensemble,
    ensemble_from_dict,
    fixed_point,
    load_ensemble,
    peripheral_eigenvalues,
    period,
    stochasticity_residual,
    superoperator,
    validate_ensemble,
)
from darktraj.errors import ConfigError, DimensionError, DomainError, PreconditionError, StochasticityError


def random_ensemble(rng, d=3, k=3):
    mats = rng.standard_normal((k, d, d)) + 1j * rng.standard_normal((k, d, d))
    weights = rng.random(k) + 0.1
    gram = np.einsum("i,iba,ibc->ac", weights, mats.conj(), mats)
    fix = np.linalg.inv(sqrtm(gram))
    return KrausEnsemble(weights, mats @ fix)


def test_random_ensemble_fixed_point(rng):
    for _ in range(20):
        e = random_ensemble(rng)
        assert stochasticity_residual(e) < 1e-10
        report = fixed_point(e)
        assert report.verdict == IRREDUCIBLE
        rho = report.fixed_point.matrix
        assert np.abs(apply_channel(e, rho) - rho).max() < 1e-10
        assert np.abs(apply_dual_channel(e, np.eye(3)) - np.eye(3)).max() < 1e-10


def test_superoperator_matches_channel(rng):
    e = random_ensemble(rng, d=2, k=2)
    x = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    lhs = (superoperator(e) @ x.reshape(-1)).reshape(2, 2)
    assert np.abs(lhs - apply_channel(e, x)).max() < 1e-12


def test_example1_fixed_point_and_period(ex1):
    report = fixed_point(ex1)
    assert report.stochasticity_residual < 1e-14
    assert report.verdict == IRREDUCIBLE
    assert np.abs(report.fixed_point.matrix - np.eye(4) / 4).max() < 1e-10
    assert report.period == 2
    assert period(ex1) == 2
    per = peripheral_eigenvalues(ex1)
    assert np.abs(per - np.array([1, -1])).max() < 1e-8


def test_example1_commutant_is_trivial(ex1, ex1_generic):
    assert commutant_dimension(ex1) == 1
    assert commutant_dimension(ex1_generic) == 1


def test_example2_is_aperiodic(ex2, ex2_special):
    assert fixed_point(ex2).verdict == IRREDUCIBLE
    assert period(ex2) == 1
    # theta = pi/2 is not in Z pi, so the special angles stay irreducible
    assert fixed_point(ex2_special).verdict == IRREDUCIBLE


def test_example3_is_irreducible(ex3):
    report = fixed_point(ex3)
    assert report.verdict == IRREDUCIBLE
    # the classical factor has invariant law (q, 1 - q)
    assert np.abs(np.diag(report.fixed_point.matrix).real - [0.1, 0.1, 0.4, 0.4]).max() < 1e-10


def test_single_unitary_is_reducible(single):
    report = fixed_point(single)
    assert report.verdict == REDUCIBLE
    assert report.fixed_point_multiplicity > 1
    assert report.period is None
    with pytest.raises(PreconditionError):
        period(single)


def test_stochasticity_violation(ex1):
    bad = KrausEnsemble(ex1.weights, ex1.matrices * 1.1)
    with pytest.raises(StochasticityError) as info:
        validate_ensemble(bad)
    assert info.value.residual > 0.2
    with pytest.raises(StochasticityError):
        fixed_point(bad)


def test_ensemble_validation():
    with pytest.raises(DomainError):
        KrausEnsemble([1.0, -1.0], np.stack([np.eye(2), np.eye(2)]))
    with pytest.raises(DimensionError):
        KrausEnsemble([1.0], np.zeros((1, 2, 3)))
    with pytest.raises(DimensionError):
        KrausEnsemble([1.0, 1.0], np.eye(2)[np.newaxis])


def test_ensemble_documents(tmp_path, ex2):
    path = dump_ensemble(ex2, tmp_path / "ex2.json")
    loaded = load_ensemble(path)
    assert loaded.name == ex2.name
    assert np.abs(loaded.matrices - ex2.matrices).max() == 0
    assert np.array_equal(loaded.weights, ex2.weights)

    doc = json.loads(path.read_text())
    doc["dim"] = 4
    with pytest.raises(ConfigError):
        ensemble_from_dict(doc)
    with pytest.raises(ConfigError):
        ensemble_from_dict({"dim": 2})
    with pytest.raises(FileNotFoundError):
        load_ensemble(tmp_path / "missing.json")


def test_verdict_names():
    assert {IRREDUCIBLE, REDUCIBLE, AMBIGUOUS} == {"irreducible", "reducible", "ambiguous"}
