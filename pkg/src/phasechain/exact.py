"""Dense Runge-Kutta integration of the Lindblad equation (small chains only)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import DimensionMismatch, StepSizeError
from .kernels import I2, SX, SY, SZ
from .model import _check_oracle_size, hamiltonian, jump_operators

_PAULI = {"I": I2, "X": SX, "Y": SY, "Z": SZ}

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-8


@dataclass(frozen=True)
class DensityMatrix:
    matrix: np.ndarray
    t: float = 0.0

    @property
    def n(self):
        return int(round(np.log2(self.matrix.shape[0])))

    def check(self):
        """Raise :class:`StepSizeError` if hermiticity, trace or positivity is violated."""
        m = self.matrix
        herm = np.abs(m - m.conj().T).max()
        tr = abs(np.trace(m) - 1)
        lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
        if herm > HERMITICITY_TOL or tr > TRACE_TOL or lo < -POSITIVITY_TOL:
            raise StepSizeError(
                f"density matrix invariants violated at t={self.t:g}: "
                f"hermiticity {herm:.2e}, trace {tr:.2e}, min eigenvalue {lo:.2e}")
        return self


def product_state(vectors):
    """Density matrix of a product of single-site kets."""
    psi = reduce(np.kron, [np.asarray(v, dtype=complex) / np.linalg.norm(v) for v in vectors])
    return DensityMatrix(np.outer(psi, psi.conj()))


def x_polarized(n):
    """All spins along +x."""
    return product_state([np.array([1.0, 1.0])] * n)


def _dense_generator(p):
    H = hamiltonian(p).toarray()
    jumps = [op.toarray() for op in jump_operators(p)]
    h_eff = H - 0.5j * sum((L.conj().T @ L for L in jumps), np.zeros_like(H))
    stack = np.array(jumps) if jumps else np.zeros((0,) + H.shape, dtype=complex)
    return h_eff, stack


def _rhs(rho, h_eff, jumps):
    a = h_eff @ rho
    out = -1j * (a - a.conj().T)  # -i (H_eff rho - rho H_eff^dagger), rho Hermitian
    if len(jumps):
        out += (jumps @ rho @ jumps.conj().transpose(0, 2, 1)).sum(axis=0)
    return out


def _steps_to(t0, t1, dt):
    span = t1 - t0
    if span <= 0:
        return []
    k = int(np.ceil(span / dt - 1e-9))
    return [span / k] * k


def evolve_exact(p, rho0, t_out, dt=1e-3, check=True):
    """Classical RK4 on ``d rho/dt = L rho``; returns one :class:`DensityMatrix` per output time.

    Steps are uniform between consecutive output times (at most ``dt``) and
    the state is re-symmetrised after every step.
    """
    _check_oracle_size(p.n)
    rho = np.array(rho0.matrix if isinstance(rho0, DensityMatrix) else rho0, dtype=complex)
    if rho.shape != (2 ** p.n, 2 ** p.n):
        raise DimensionMismatch(f"initial state has shape {rho.shape}, expected {(2 ** p.n,) * 2}")
    if check:
        DensityMatrix(rho).check()
    h_eff, jumps = _dense_generator(p)
    t_out = np.asarray(t_out, dtype=float)
    if np.any(np.diff(t_out) < 0) or (len(t_out) and t_out[0] < 0):
        raise ValueError("output times must be sorted and nonnegative")
    t = 0.0
    out = []
    for target in t_out:
        for h in _steps_to(t, target, dt):
            k1 = _rhs(rho, h_eff, jumps)
            k2 = _rhs(rho + 0.5 * h * k1, h_eff, jumps)
            k3 = _rhs(rho + 0.5 * h * k2, h_eff, jumps)
            k4 = _rhs(rho + h * k3, h_eff, jumps)
            rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            rho = 0.5 * (rho + rho.conj().T)
        t = float(target)
        state = DensityMatrix(rho.copy(), t)
        if check:
            state.check()
        out.append(state)
    return out


def pauli_string(descriptor, n):
    """Dense operator for a Pauli string like ``"XIZ"`` or a ``{site: "X"}`` mapping."""
    if isinstance(descriptor, str):
        if len(descriptor) != n:
            raise DimensionMismatch(f"Pauli string {descriptor!r} has length {len(descriptor)}, expected {n}")
        letters = descriptor.upper()
    else:
        chars = ["I"] * n
        for site, axis in dict(descriptor).items():
            if not 0 <= site < n:
                raise DimensionMismatch(f"site {site} out of range for n={n}")
            chars[site] = axis.upper()
        letters = "".join(chars)
    return reduce(np.kron, [_PAULI[c] for c in letters])


def expectation(rho, descriptor):
    """``Re tr(rho O)`` for a Pauli-string observable ``O``."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    n = int(round(np.log2(m.shape[0])))
    if 2 ** n != m.shape[0]:
        raise DimensionMismatch(f"matrix of size {m.shape[0]} is not a qubit register")
    val = np.einsum("ij,ji->", m, pauli_string(descriptor, n))
    if abs(val.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def collective_moments(rho, axis):
    """``<S^a>`` and ``<S^a S^a>`` with ``S^a = (1/2n) sum_j sigma^a_j``."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    n = int(round(np.log2(m.shape[0])))
    singles = np.array([expectation(m, {j: axis}) for j in range(n)])
    pairs = 0.0
    for j in range(n):
        for k in range(j + 1, n):
            pairs += expectation(m, {j: axis, k: axis})
    mean = singles.sum() / (2 * n)
    second = (2 * pairs + n) / (4 * n * n)
    return mean, second


def exact_series(p, rho0, t_out, dt=1e-3):
    """Collective observables of the exact evolution, keyed like the stochastic output."""
    states = evolve_exact(p, rho0, t_out, dt)
    out = {}
    for axis in "xyz":
        means, seconds = zip(*(collective_moments(s, axis.upper()) for s in states))
        means = np.array(means)
        out[f"S{axis}"] = means
        out[f"dS{axis}"] = np.array(seconds) - means ** 2
    return out
