import numpy as np
import pytest

from phasechain.errors import ExpansionFailure, PoleError
from phasechain.kernels import SZ, pp_kernel_matrix, spin12_family
from phasechain.projection import (
    Z_MAX, DiscreteExpansion, expand_kernel, kernel_norm, pair_points, pooled_candidates,
    sample_projection, should_project,
)


def check(e, psi, phi):
    assert abs(e.weights.sum() - 1) <= 1e-10
    assert e.weights.min() >= 0
    assert np.abs(e.kernel() - pp_kernel_matrix(psi, phi)).max() <= 1e-8


def test_vacuum_expansion():
    e = expand_kernel(0, 0)
    check(e, 0, 0)
    assert e.family is not None and e.weights.size == 16


def test_expectation_identity(rng):
    done = 0
    while done < 20:
        psi, phi = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        try:
            e = expand_kernel(psi, phi)
        except ExpansionFailure:
            continue
        pair = np.einsum("k,kij,ji->", e.weights, pp_kernel_matrix(e.psi, e.phi), SZ)
        assert abs(pair - np.trace(SZ @ pp_kernel_matrix(psi, phi))) < 1e-8
        done += 1


def test_discrete_pair_reexpands():
    fam = spin12_family(0.0)
    psi, phi = pair_points(fam)
    for k in (1, 6, 11):
        check(expand_kernel(psi[k], phi[k]), psi[k], phi[k])


def test_norm_bound_rejects_near_pole():
    # |1 + psi phi| = 0.05: norm far above any pair kernel
    psi, phi = 1.0, -1.05
    assert kernel_norm(psi, phi) > pooled_candidates().max_norm
    with pytest.raises(ExpansionFailure):
        expand_kernel(psi, phi)
    with pytest.raises(PoleError):
        expand_kernel(1.0, -1.0)


def test_pairings_differ():
    fam = spin12_family(0.3)
    lit, herm = pair_points(fam, "literal"), pair_points(fam, "hermitian")
    assert np.allclose(lit[1], herm[1]) and not np.allclose(lit[0], herm[0])
    # hermitian diagonal pairs are the vertex projectors
    m = pp_kernel_matrix(herm[0][5], herm[1][5])
    assert np.allclose(m, m.conj().T)
    with pytest.raises(ValueError):
        pair_points(fam, "other")


def _fake(weights):
    w = np.asarray(weights, float)
    return DiscreteExpansion(w, 0.0, None, np.arange(w.size) + 0j, -np.arange(w.size) + 0j)


def test_sampling_conventions():
    e = _fake([0, 0, 1] + [0] * 13)
    for u in (0.0, 0.3, 0.999999):
        assert sample_projection(e, u) == (2, -2)
    e = _fake([0, 0.5, 0, 0.5] + [0] * 12)
    assert sample_projection(e, 0.0)[0] == 1
    assert sample_projection(e, 0.75)[0] == 3


def test_sampling_frequencies(rng):
    w = rng.random(16); w /= w.sum()
    e = _fake(w)
    u = rng.random(100_000)
    idx = np.array([sample_projection(e, x)[0].real for x in u]).astype(int)
    freq = np.bincount(idx, minlength=16) / u.size
    sigma = np.sqrt(w * (1 - w) / u.size)
    assert np.all(np.abs(freq - w) <= 4 * sigma + 1e-12)


def test_monte_carlo_kernel_mean(rng):
    psi, phi = 0.4 + 0.3j, 0.8 - 0.2j
    e = expand_kernel(psi, phi)
    draws = [sample_projection(e, u) for u in rng.random(100_000)]
    mats = pp_kernel_matrix(*map(np.array, zip(*draws)))
    mean = mats.mean(axis=0)
    se = mats.std(axis=0) / np.sqrt(len(draws))
    target = pp_kernel_matrix(psi, phi)
    assert np.all(np.abs(mean - target) <= 4 * np.abs(se) + 1e-12)


def test_should_project():
    assert should_project([20.0, 1.0], [1.0, 1.0], Z_MAX, 0.1).tolist() == [True, False]
    assert not should_project(np.ones(4), np.ones(4)).any()
    assert should_project([1.05], [-1.0])[0]
    assert should_project([np.nan], [0.0])[0]
