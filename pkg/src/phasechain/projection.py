"""Projection of an off-diagonal spin-1/2 kernel onto discrete tetrahedron pairs.

A runaway phase-space point ``(psi, phi)`` is replaced by a random pair of
tetrahedron points drawn from a probability vector ``p`` over the 16 pairs
with

    sum_k p_k Lambda(pair_k) = Lambda(psi, phi),   p >= 0,   sum p = 1,

so the expected kernel (and therefore every observable) is unchanged.  Pair
``k = 4*a + b`` combines the ket point of tetrahedron vertex ``a`` with the
bra point of vertex ``b`` (vertices in row-major ``(i, j)`` order); see
:func:`pair_points` for how vertices become ``(psi, phi)`` values.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import nnls

from .errors import ExpansionFailure, PoleError
from .kernels import POLE_THRESHOLD, Spin12PointFamily, pp_kernel_matrix, spin12_family

Z_MAX = 10 * np.sqrt(2.0)
EPS = 0.1

NORM_WEIGHT = 1e3
MATCH_TOL = 1e-8
SUM_TOL = 1e-10
CLAMP_TOL = 1e-12

N_PHI = 16
N_TILT = 8


PAIRINGS = ("literal", "hermitian")


def pair_points(family, pairing="literal"):
    """``(psi, phi)`` for the 16 ordered vertex pairs of ``family``.

    ``"literal"`` uses the sphere points directly, ``(z_a, z_b)``.
    ``"hermitian"`` conjugates the ket label, ``(conj(z_a), z_b)``, so that
    the diagonal pairs are the vertex projectors; all of its kernels have
    operator norm at most sqrt(3), which rules out points near a pole.
    """
    if pairing not in PAIRINGS:
        raise ValueError(f"pairing must be one of {PAIRINGS}, got {pairing!r}")
    z = np.ravel(family.zpoints)
    ket = np.conj(z) if pairing == "hermitian" else z
    return np.repeat(ket, 4), np.tile(z, 4)


@dataclass(frozen=True)
class DiscreteExpansion:
    """Weights over candidate pairs ``(psi[k], phi[k])``.

    A single-family expansion has 16 weights and ``family`` set; the pooled
    fallback spreads weights over the pairs of every family in the bank and
    has ``family = None``.
    """

    weights: np.ndarray
    residual: float
    family: Spin12PointFamily | None
    psi: np.ndarray
    phi: np.ndarray

    def kernel(self):
        return np.einsum("k,kij->ij", self.weights, pp_kernel_matrix(self.psi, self.phi))


def _stack(mats):
    flat = mats.reshape(mats.shape[0], 4)
    return np.vstack([flat.real.T, flat.imag.T])


@dataclass(frozen=True)
class _Candidate:
    family: Spin12PointFamily
    psi: np.ndarray
    phi: np.ndarray
    usable: np.ndarray
    design: np.ndarray  # 9 x n_usable


def _make_candidate(family, z_max, eps, pairing="literal"):
    psi, phi = pair_points(family, pairing)
    with np.errstate(invalid="ignore", over="ignore"):
        usable = (np.isfinite(psi) & np.isfinite(phi)
                  & (np.abs(psi) <= z_max) & (np.abs(phi) <= z_max)
                  & (np.abs(1 + psi * phi) >= eps))
    mats = pp_kernel_matrix(psi[usable], phi[usable])
    design = np.vstack([_stack(mats), np.full((1, int(usable.sum())), NORM_WEIGHT)])
    return _Candidate(family, psi, phi, usable, design)


@lru_cache(maxsize=32)
def candidate_families(z_max=Z_MAX, eps=EPS, n_phi=N_PHI, n_tilt=N_TILT, pairing="literal"):
    """Families tried in order: rotations about z first, then tilts about y."""
    out = []
    for t in range(n_tilt):
        tilt = np.pi * t / n_tilt
        for k in range(n_phi):
            phi_rot = 2 * np.pi * k / n_phi
            out.append(_make_candidate(spin12_family(phi_rot, tilt), z_max, eps, pairing))
    return tuple(out)


@dataclass(frozen=True)
class _Pool:
    psi: np.ndarray
    phi: np.ndarray
    usable: np.ndarray
    design: np.ndarray
    max_norm: float


@lru_cache(maxsize=8)
def pooled_candidates(z_max=Z_MAX, eps=EPS, pairing="literal"):
    """All admissible pairs of the rotation bank, for the pooled fallback solve."""
    cands = candidate_families(z_max, eps, pairing=pairing)
    psi = np.concatenate([c.psi[c.usable] for c in cands])
    phi = np.concatenate([c.phi[c.usable] for c in cands])
    # drop duplicate pairs (families that share vertices)
    key = np.round(np.c_[psi.real, psi.imag, phi.real, phi.imag], 12)
    _, first = np.unique(key, axis=0, return_index=True)
    first = np.sort(first)
    psi, phi = psi[first], phi[first]
    mats = pp_kernel_matrix(psi, phi)
    design = np.vstack([_stack(mats), np.full((1, psi.size), NORM_WEIGHT)])
    return _Pool(psi, phi, np.ones(psi.size, bool), design, float(kernel_norm(psi, phi).max()))


def kernel_norm(psi, phi):
    """Operator norm of ``Lambda(psi, phi)``: ``sqrt((1+|psi|^2)(1+|phi|^2)) / |1 + psi phi|``."""
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    return np.sqrt((1 + np.abs(psi) ** 2) * (1 + np.abs(phi) ** 2)) / np.abs(1 + psi * phi)


def _solve(cand, target):
    if cand.design.shape[1] == 0:
        return None
    b = np.concatenate([_stack(target[None])[:, 0], [NORM_WEIGHT]])
    x, _ = nnls(cand.design, b, maxiter=50 * cand.design.shape[1])
    match = cand.design[:8] @ x - b[:8]
    residual = float(np.linalg.norm(match))
    total = x.sum()
    if residual > MATCH_TOL or abs(total - 1) > SUM_TOL:
        return None
    weights = np.zeros(cand.usable.size)
    weights[cand.usable] = x
    weights[weights < CLAMP_TOL] = 0.0
    weights /= weights.sum()
    return weights, residual


def expand_kernel(psi, phi, family=None, z_max=Z_MAX, eps=EPS, search=True, pairing="literal",
                  pooled=True):
    """Nonnegative expansion of ``Lambda(psi, phi)`` over tetrahedron pairs.

    ``family`` is tried first when given; otherwise (or if it fails and
    ``search`` is set) the rotation bank of :func:`candidate_families` is
    scanned in order.  If no single family works and ``pooled`` is set, one
    more solve runs over the pairs of all bank families at once.  Pairs
    outside ``|z| <= z_max`` or within ``eps`` of a pole are never used.

    A convex mixture cannot have a larger operator norm than its parts, so
    targets whose norm exceeds every admissible pair are rejected up front.
    Raises :class:`ExpansionFailure` when nothing works.
    """
    psi, phi = complex(psi), complex(phi)
    if not (np.isfinite(psi) and np.isfinite(phi)):
        raise ExpansionFailure("non-finite phase-space point")
    if abs(1 + psi * phi) < POLE_THRESHOLD:
        raise PoleError("cannot expand a kernel at its pole")
    target = pp_kernel_matrix(psi, phi)
    if search or family is None:
        pool = pooled_candidates(float(z_max), float(eps), pairing)
        if kernel_norm(psi, phi) > pool.max_norm * (1 + 1e-9):
            raise ExpansionFailure(
                f"kernel norm {kernel_norm(psi, phi):.4g} exceeds every admissible pair "
                f"({pool.max_norm:.4g}) at psi={psi:.6g}, phi={phi:.6g}")
    cands = []
    if family is not None:
        cands.append(_make_candidate(family, z_max, eps, pairing))
    if family is None or search:
        cands.extend(candidate_families(float(z_max), float(eps), pairing=pairing))
    for cand in cands:
        sol = _solve(cand, target)
        if sol is not None:
            weights, residual = sol
            return DiscreteExpansion(weights, residual, cand.family, cand.psi, cand.phi)
    if pooled and (search or family is None):
        sol = _solve(pool, target)
        if sol is not None:
            weights, residual = sol
            return DiscreteExpansion(weights, residual, None, pool.psi, pool.phi)
    raise ExpansionFailure(f"no nonnegative discrete expansion for psi={psi:.6g}, phi={phi:.6g}")


def sample_projection(expansion, u):
    """Inverse-CDF draw of a pair for ``u`` in [0, 1); returns ``(psi', phi')``."""
    cdf = np.cumsum(expansion.weights)
    k = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    k = min(k, cdf.size - 1)
    while expansion.weights[k] == 0:  # guard against u landing on a flat stretch
        k -= 1
    return complex(expansion.psi[k]), complex(expansion.phi[k])


def should_project(psi, phi, z_max=Z_MAX, eps=EPS):
    """Per-site trigger: ``|psi| > z_max``, ``|phi| > z_max``, ``|1 + psi phi| < eps`` or non-finite."""
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    with np.errstate(invalid="ignore", over="ignore"):
        flags = (np.abs(psi) > z_max) | (np.abs(phi) > z_max) | (np.abs(1 + psi * phi) < eps)
    return flags | ~np.isfinite(psi) | ~np.isfinite(phi)
