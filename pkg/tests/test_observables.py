import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasechain.errors import PoleError
from phasechain.kernels import SX, SY, SZ, pp_kernel_matrix
from phasechain.observables import (
    collective_estimates, jackknife_variance_estimate, mean_and_se, phase_observable,
)


def test_special_values():
    assert phase_observable("z", 0, 0) == 1
    assert phase_observable("x", 1, 1) == 1
    assert phase_observable("y", 1j, -1j) == pytest.approx(1)
    assert phase_observable("y", 1j, -1j, printed_sigma_y=True) == pytest.approx(-1)


def test_matches_trace_definition(rng):
    psi = rng.normal(size=1000) + 1j * rng.normal(size=1000)
    phi = rng.normal(size=1000) + 1j * rng.normal(size=1000)
    keep = np.abs(1 + psi * phi) > 1e-3
    lam = pp_kernel_matrix(psi[keep], phi[keep])
    for kind, op in zip("xyz", (SX, SY, SZ)):
        ref = np.einsum("ij,nji->n", op, lam)
        got = phase_observable(kind, psi[keep], phi[keep])
        assert np.all(np.abs(got - ref) <= 1e-14 * np.maximum(1, np.abs(ref)))


@given(st.complex_numbers(max_magnitude=20, allow_nan=False, allow_infinity=False))
@settings(max_examples=100, deadline=None)
def test_real_on_diagonal_manifold(z):
    for kind in "xyz":
        v = phase_observable(kind, np.conj(z), z)
        assert abs(v.imag) <= 1e-12 * max(1, abs(v))


def test_pole_rejected():
    with pytest.raises(PoleError):
        phase_observable("x", 1j, 1j)
    with pytest.raises(ValueError):
        phase_observable("w", 0, 0)


def test_mean_and_se_arithmetic():
    m, se = mean_and_se(np.array([0.0, 2.0]))
    assert m == 1 and se == pytest.approx(1)
    m, se = mean_and_se(np.array([[3.0]]))
    assert np.isnan(se).all()


def test_jackknife_matches_plain_estimate(rng):
    x = rng.normal(size=500)
    value, se = jackknife_variance_estimate(x, x * x)
    assert value == pytest.approx(np.var(x))
    assert 0 < se < 0.2


def test_constant_coherent_ensemble():
    M, T, n = 7, 3, 4
    ones = np.ones((M, T, n), complex)
    s = collective_estimates(ones, ones, np.arange(T))
    assert np.allclose(s.mean["Sx"], 0.5)
    assert np.allclose(s.mean["dSx"], 0, atol=1e-15)
    assert np.allclose(s.se["Sx"], 0)
    # product state along x: <Sz Sz> = n / (4 n^2)
    assert np.allclose(s.mean["dSz"], 1 / (4 * n))
    assert s.columns()[:3] == ["t", "Sx_mean", "Sx_se"] and s.columns()[-1] == "jumps_mean"
    assert s.table().shape == (T, 14)
