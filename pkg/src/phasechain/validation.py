"""Invariant suites shared by the ``validate`` subcommand and the test-suite."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exact import evolve_exact, expectation, x_polarized
from .kernels import (
    SX,
    SY,
    SZ,
    axiom_residuals,
    build_phase_point_set,
    continuous_traciality_error,
    spin12_family,
    su2_kernel,
    tetrahedron_angles,
)
from .model import FAMILIES, ModelParams, paper_params, verify_generator
from .observables import phase_observable
from .projection import Z_MAX, expand_kernel, kernel_norm, pp_kernel_matrix
from .errors import ExpansionFailure

TETRA_ANGLE = np.arccos(-1.0 / 3.0)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (tol {self.tolerance:.1e}) {self.detail}".rstrip()


def kernel_axioms(dims=(2, 3, 4, 5), tol=1e-10):
    worst = 0.0
    for N in dims:
        for s in (-1, 0, 1):
            worst = max(worst, *axiom_residuals(build_phase_point_set(N, s)).values())
    return SuiteResult("kernel axioms", worst <= tol, worst, tol, f"N in {tuple(dims)}, s in (-1, 0, 1)")


def spin12_points(angles=(0.0, np.pi / 7, np.pi / 3), tol=1e-12):
    worst = 0.0
    for phi in angles:
        fam = spin12_family(phi)
        for i in range(2):
            for j in range(2):
                worst = max(worst, np.abs(fam.ops[i, j] - su2_kernel(fam.zpoints[i, j], 0)).max())
        worst = max(worst, np.abs(tetrahedron_angles(fam.zpoints) - TETRA_ANGLE).max())
    return SuiteResult("spin-1/2 points and tetrahedron", worst <= tol, worst, tol)


def continuous_traciality(tol=1e-6, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(3):
        F = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        for s in (-1, 0, 1):
            worst = max(worst, continuous_traciality_error(F, s))
    return SuiteResult("continuous traciality", worst <= tol, worst, tol)


def generator_consistency(sizes=(1, 2, 3), points=50, tol=1e-5, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n in sizes:
        full = paper_params(n)
        models = [full] + [full.isolate(f) for f in FAMILIES]
        for p in models:
            done = 0
            while done < points:
                z = rng.normal(size=2 * n) + 1j * rng.normal(size=2 * n)
                if np.any(np.abs(1 + z[:n] * z[n:]) < 0.1):
                    continue
                worst = max(worst, verify_generator(p, z).residual)
                done += 1
    return SuiteResult("generator consistency", worst <= tol, worst, tol,
                       f"n in {tuple(sizes)}, {points} points per model")


def observable_definitions(points=1000, tol=1e-14, seed=0):
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=points) + 1j * rng.normal(size=points)
    phi = rng.normal(size=points) + 1j * rng.normal(size=points)
    keep = np.abs(1 + psi * phi) > 0.1
    psi, phi = psi[keep], phi[keep]
    lam = pp_kernel_matrix(psi, phi)
    worst = 0.0
    for kind, op in zip("xyz", (SX, SY, SZ)):
        ref = np.einsum("ij,nji->n", op, lam)
        got = phase_observable(kind, psi, phi)
        worst = max(worst, float((np.abs(got - ref) / np.maximum(1, np.abs(ref))).max()))
    return SuiteResult("observable formulas", worst <= tol, worst, tol)


def random_pp_points(count, z_max=Z_MAX, seed=0):
    """Points with ``|psi|, |phi| <= z_max`` (uniform magnitudes and phases) off the pole margin."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        r = rng.uniform(0, z_max, size=2)
        a = rng.uniform(0, 2 * np.pi, size=2)
        psi, phi = r * np.exp(1j * a)
        if abs(1 + psi * phi) >= 0.1:
            out.append((psi, phi))
    return out


def projection_constraints(count=200, seed=0):
    """Every returned expansion is a probability vector matching its kernel."""
    worst_sum = worst_res = 0.0
    most_negative = 0.0
    failures = 0
    for psi, phi in random_pp_points(count, seed=seed):
        try:
            e = expand_kernel(psi, phi)
        except ExpansionFailure:
            failures += 1
            continue
        worst_sum = max(worst_sum, abs(e.weights.sum() - 1))
        most_negative = min(most_negative, e.weights.min())
        worst_res = max(worst_res, float(np.abs(e.kernel() - pp_kernel_matrix(psi, phi)).max()))
    ok = worst_sum <= 1e-10 and most_negative >= 0 and worst_res <= 1e-8
    return SuiteResult("projection constraints", ok, worst_res, 1e-8,
                       f"sum error {worst_sum:.1e}, min weight {most_negative:.1e}, "
                       f"{failures}/{count} points without an expansion")


def exact_closed_forms(tol=1e-8):
    t = np.linspace(0, 2, 11)
    zero = dict(h=0.0, gamma1=0.0, gamma2=0.0, gamma3=0.0, gamma4=0.0, gammaD=0.0, interaction=0.0)
    worst = 0.0
    rabi = evolve_exact(ModelParams(1, **{**zero, "h": 1.0}), x_polarized(1), t)
    worst = max(worst, max(abs(expectation(r, "X") - np.cos(2 * tt)) for r, tt in zip(rabi, t)))
    g = 0.5
    decay = evolve_exact(ModelParams(1, **{**zero, "gamma2": g}), x_polarized(1), t)
    worst = max(worst, max(abs(expectation(r, "Z") - (1 - np.exp(-g * tt))) for r, tt in zip(decay, t)))
    gd = 0.25
    deph = evolve_exact(ModelParams(1, **{**zero, "gammaD": gd}), x_polarized(1), t)
    worst = max(worst, max(abs(expectation(r, "X") - np.exp(-2 * gd * tt)) for r, tt in zip(deph, t)))
    return SuiteResult("exact closed forms", worst <= tol, worst, tol)


SUITES = {
    "kernel-axioms": kernel_axioms,
    "spin12-points": spin12_points,
    "continuous-traciality": continuous_traciality,
    "generator": generator_consistency,
    "observables": observable_definitions,
    "projection": projection_constraints,
    "exact": exact_closed_forms,
}


def run_all(names=None):
    names = list(SUITES) if names is None else list(names)
    return [SUITES[k]() for k in names]


__all__ = ["SuiteResult", "SUITES", "run_all", "random_pp_points", "kernel_norm"]
