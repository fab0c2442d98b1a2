"""Phase-space observables and ensemble reductions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PoleError
from .kernels import POLE_THRESHOLD

AXES = ("x", "y", "z")


def phase_observable(kind, psi, phi, printed_sigma_y=False):
    """``tr(sigma^kind Lambda(psi, phi))`` evaluated elementwise.

    ``printed_sigma_y`` switches sigma^y to the opposite-sign form
    ``i(psi - phi)/(1 + psi phi)``, kept only for comparison with that convention.
    """
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    norm = 1.0 + psi * phi
    if np.any(np.abs(norm) < POLE_THRESHOLD):
        raise PoleError("observable evaluated at a kernel pole")
    if kind == "x":
        return (psi + phi) / norm
    if kind == "y":
        sign = -1.0 if printed_sigma_y else 1.0
        return sign * 1j * (phi - psi) / norm
    if kind == "z":
        return (1.0 - psi * phi) / norm
    raise ValueError(f"unknown observable {kind!r}; expected one of {AXES}")


def mean_and_se(values, axis=0):
    """Sample mean and ``std(ddof=1)/sqrt(M)`` along ``axis``; ``se`` is NaN for M < 2."""
    values = np.asarray(values, dtype=float)
    m = values.shape[axis]
    mean = values.mean(axis=axis)
    if m < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, values.std(axis=axis, ddof=1) / np.sqrt(m)


def jackknife_variance_estimate(first, second):
    """``<S S> - <S>^2`` and its leave-one-out jackknife standard error.

    ``first`` and ``second`` are per-trajectory estimates of ``S`` and ``S S``
    with trajectories along axis 0.
    """
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    m = first.shape[0]
    s1, s2 = first.sum(axis=0), second.sum(axis=0)
    value = s2 / m - (s1 / m) ** 2
    if m < 2:
        return value, np.full_like(value, np.nan)
    loo = (s2 - second) / (m - 1) - ((s1 - first) / (m - 1)) ** 2
    spread = ((loo - loo.mean(axis=0)) ** 2).sum(axis=0)
    return value, np.sqrt((m - 1) / m * spread)


@dataclass(frozen=True)
class ObservableSeries:
    times: np.ndarray
    mean: dict
    se: dict
    trajectories: int
    aborted: int = 0
    jumps_mean: np.ndarray | None = None

    def columns(self):
        """Column names in output order."""
        cols = ["t"]
        for name in [f"S{a}" for a in AXES] + [f"dS{a}" for a in AXES]:
            cols += [f"{name}_mean", f"{name}_se"]
        return cols + ["jumps_mean"]

    def table(self):
        """Rows matching :meth:`columns`."""
        cols = [self.times]
        for name in [f"S{a}" for a in AXES] + [f"dS{a}" for a in AXES]:
            cols += [self.mean[name], self.se[name]]
        jumps = self.jumps_mean if self.jumps_mean is not None else np.zeros_like(self.times)
        cols.append(jumps)
        return np.column_stack(cols)


def collective_estimates(psi, phi, times, jumps=None, aborted=0, printed_sigma_y=False):
    """Collective spin means and fluctuations from sampled trajectories.

    ``psi`` and ``phi`` have shape ``(M, T, n)``.  Per trajectory
    ``S = (1/2n) sum_j sigma_j`` and, because the kernel is a product over
    sites and each Pauli squares to one,
    ``S S = ((sum_j sigma_j)^2 - sum_j sigma_j^2 + n) / (4 n^2)``.  Real parts
    are averaged; the imaginary parts vanish in expectation.
    """
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    if psi.ndim != 3 or psi.shape != phi.shape:
        raise ValueError("psi and phi must both have shape (trajectories, times, sites)")
    m, _, n = psi.shape
    mean, se = {}, {}
    for a in AXES:
        sig = phase_observable(a, psi, phi, printed_sigma_y)
        tot = sig.sum(axis=-1)
        first = (tot / (2 * n)).real
        second = ((tot * tot - (sig * sig).sum(axis=-1) + n) / (4 * n * n)).real
        mean[f"S{a}"], se[f"S{a}"] = mean_and_se(first)
        mean[f"dS{a}"], se[f"dS{a}"] = jackknife_variance_estimate(first, second)
    jumps_mean = None if jumps is None else np.asarray(jumps, dtype=float).mean(axis=0)
    return ObservableSeries(np.asarray(times, dtype=float), mean, se, m, aborted, jumps_mean)
