import numpy as np
import pytest

from phasechain.errors import OracleScaleError, PoleError
from phasechain.model import (
    FAMILIES, ModelParams, build_liouvillian, diffusion, drift, drift_arrays, hamiltonian, jump_operators,
    kac_norm, lindblad_rhs, moment_transport_residual, paper_params, verify_generator,
)


def random_point(rng, n):
    while True:
        z = rng.normal(size=2 * n) + 1j * rng.normal(size=2 * n)
        if np.all(np.abs(1 + z[:n] * z[n:]) > 0.1):
            return z


def test_kac_norm():
    assert np.isclose(kac_norm(1.5, 1), 1.0)
    assert np.isclose(kac_norm(1.5, 2), 1 / (1 + 2 ** -1.5))


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(0)
    with pytest.raises(ValueError):
        ModelParams(3, gamma1=-1)
    with pytest.raises(ValueError):
        paper_params(3).isolate("nonsense")


def test_couplings_symmetric_zero_diagonal():
    c = paper_params(4).couplings()
    assert np.allclose(c, c.T) and np.allclose(np.diag(c), 0)
    assert np.isclose(c[0, 2], paper_params(4).J / 2 ** 1.5)


def test_isolate_keeps_one_family():
    p = paper_params(3).isolate("gamma2")
    assert p.gamma2 == 0.02 and p.h == 0 and p.interaction == 0 and p.gamma1 == 0


def test_l4_switch_changes_channel():
    assert paper_params(3).boundary_channels()[3][2] == "plus"
    assert paper_params(3, l4_minus=True).boundary_channels()[3][2] == "minus"


def test_liouvillian_matches_dense_rhs(rng):
    p = paper_params(3)
    H = hamiltonian(p).toarray()
    jumps = [(L.toarray(), (L.conj().T @ L).toarray()) for L in jump_operators(p)]
    A = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    assert np.allclose(build_liouvillian(p).apply(A), lindblad_rhs(A, H, jumps), atol=1e-12)


def test_oracle_scale_limit():
    with pytest.raises(OracleScaleError):
        build_liouvillian(paper_params(9))
    with pytest.raises(OracleScaleError):
        verify_generator(paper_params(4), np.ones(8))


def test_field_drift_sign():
    a_psi, a_phi = drift_arrays(np.array([0.3 + 0.1j]), np.array([0.2j]), ModelParams(1, h=1.0, gamma1=0,
                                gamma2=0, gamma3=0, gamma4=0, gammaD=0))
    assert np.allclose(a_psi, 2j * (0.3 + 0.1j)) and np.allclose(a_phi, -2j * 0.2j)


def test_decay_drift_sign():
    p = ModelParams(1, h=0, gamma1=0, gamma2=1.0, gamma3=0, gamma4=0, gammaD=0)
    a_psi, _ = drift_arrays(np.array([1.0]), np.array([1.0]), p)
    assert np.isclose(a_psi[0], -1.0)  # -z (1 + 3x) / (2 (1 + x)) at x = 1


def test_drift_pole_rejected():
    with pytest.raises(PoleError) as err:
        drift(np.array([0.5, 1j, 0.5, 1j]), paper_params(2))
    assert err.value.site == 1


def test_diffusion_terms_are_upper_triangular(rng):
    for i, j, _ in diffusion(random_point(rng, 3), paper_params(3)):
        assert i < j


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("family", (None,) + FAMILIES)
def test_generator_consistency(n, family, rng):
    p = paper_params(n)
    p = p if family is None else p.isolate(family)
    for _ in range(5):
        assert verify_generator(p, random_point(rng, n)).residual < 1e-5


def test_generator_detects_wrong_sign(rng):
    # flipping the decay drift sign must be caught by the oracle
    import phasechain.model as m
    p = ModelParams(1, h=0, gamma1=0, gamma2=1.0, gamma3=0, gamma4=0, gammaD=0)
    z = random_point(rng, 1)
    good = verify_generator(p, z).residual
    orig = m.drift_arrays
    try:
        m.drift_arrays = lambda psi, phi, q, check=True: tuple(-a for a in orig(psi, phi, q, check))
        bad = verify_generator(p, z).residual
    finally:
        m.drift_arrays = orig
    assert good < 1e-6 < 1e-2 < bad


def test_moment_transport(rng):
    assert moment_transport_residual(paper_params(2), random_point(rng, 2)) < 1e-5
