"""Discrete phase-point operators, SU(2) kernels and Weyl symbols.

Conventions
-----------
* ``|0>`` is the first basis vector and plays the role of the vacuum.  It is
  the sigma_z = +1 state.
* A point ``z`` of the spin-1/2 sphere labels the kernel

      Delta^(s)(z) = (I + c_s n(z) . sigma) / 2,   c_{-1} = 1, c_0 = sqrt(3), c_{+1} = 3,

  with Bloch vector ``n(z) = (2 Re z, -2 Im z, 1 - |z|^2) / (1 + |z|^2)``.  This
  puts ``z`` (not its conjugate) in the upper-right entry of the Wigner
  kernel, and ``z = 0`` is the vacuum.  The s = -1 kernel at ``z`` is the
  projector onto ``(|0> + conj(z)|1>)``, i.e. the positive-P kernel
  ``Lambda(conj(z), z)``.
* Phase-point sets are indexed ``ops[alpha, beta]`` and obey
  ``ops[alpha, beta] = T[alpha, beta] @ ops[0, 0] @ T[alpha, beta]^dagger``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateKernel, DimensionMismatch, InvalidDimension, InvalidRotation, PoleError

SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)
OMEGA3 = np.exp(2j * np.pi / 3)  # principal (-1)^(2/3)
CBRT_M1 = np.exp(1j * np.pi / 3)  # principal (-1)^(1/3)

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SX, SY, SZ)

#: coefficient of n.sigma in the SU(2) kernel for each ordering
KERNEL_STRENGTH = {-1: 1.0, 0: SQRT3, 1: 3.0}

POLE_THRESHOLD = 1e-12


def _check_ordering(s):
    if s not in (-1, 0, 1):
        raise ValueError(f"ordering must be -1, 0 or +1, got {s!r}")
    return int(s)


def _dagger(m):
    return np.conj(np.swapaxes(m, -1, -2))


@dataclass(frozen=True)
class UnitarySet:
    """A unitary realisation of the discrete Heisenberg-Weyl group.

    ``ops[alpha, beta]`` is the N x N matrix ``T_{alpha, beta}``.
    """

    N: int
    ops: np.ndarray

    def __getitem__(self, idx):
        return self.ops[idx]

    def rotated(self, u):
        """Realisation ``u T u^dagger`` (same group, rotated frame)."""
        return UnitarySet(self.N, u @ self.ops @ _dagger(u))


def build_weyl_ops(N):
    """Standard clock-and-shift realisation ``T_{a,b} = X^a Z^b``.

    ``X|k> = |k+1 mod N>`` and ``Z = diag(omega^k)`` with ``omega = exp(2 pi i/N)``.
    """
    if int(N) != N or N < 2:
        raise InvalidDimension(f"Hilbert dimension must be an integer >= 2, got {N!r}")
    N = int(N)
    X = np.roll(np.eye(N, dtype=complex), 1, axis=0)
    Z = np.diag(np.exp(2j * np.pi * np.arange(N) / N))
    ops = np.empty((N, N, N, N), dtype=complex)
    Xa = np.eye(N, dtype=complex)
    for a in range(N):
        Zb = np.eye(N, dtype=complex)
        for b in range(N):
            ops[a, b] = Xa @ Zb
            Zb = Zb @ Z
        Xa = Xa @ X
    return UnitarySet(N, ops)


# --------------------------------------------------------------------------
# SU(2) geometry


def bloch_vector(z):
    """Bloch vector of the sphere point ``z`` (kernel convention above)."""
    z = complex(z)
    r2 = abs(z) ** 2
    return np.array([2 * z.real, -2 * z.imag, 1 - r2]) / (1 + r2)


def point_from_bloch(n):
    """Inverse of :func:`bloch_vector`; the south pole maps to ``inf``."""
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    den = 1.0 + n[2]
    if den < 1e-15:
        return complex(np.inf)
    return complex(n[0] - 1j * n[1]) / den


def stereographic_angles(z):
    """``(theta, phi)`` with ``z = tan(theta/2) exp(i phi)``."""
    return 2 * np.arctan(abs(z)), float(np.angle(z))


def su2_from_rotation(rot):
    """SU(2) matrix ``u`` with ``u (e.sigma) u^dagger = (R e).sigma``."""
    x, y, z, w = Rotation.from_matrix(np.asarray(rot, dtype=float)).as_quat()
    return w * I2 - 1j * (x * SX + y * SY + z * SZ)


def _kernel_from_bloch(n, s):
    c = KERNEL_STRENGTH[s]
    return 0.5 * (I2 + c * (n[0] * SX + n[1] * SY + n[2] * SZ))


def su2_kernel(z, s=0):
    """SU(2) quantisation kernel at sphere point ``z`` for ordering ``s``.

    ``s=0`` is the Wigner kernel, ``s=-1`` the coherent-state projector and
    ``s=+1`` its trace dual.  Hermitian with unit trace for every finite ``z``.
    """
    s = _check_ordering(s)
    z = complex(z)
    if not np.isfinite(z):
        raise ValueError("sphere point must be finite")
    r2 = abs(z) ** 2
    c = KERNEL_STRENGTH[s]
    d = c * (1 - r2) / (2 * (1 + r2))
    off = c * z / (1 + r2)
    return np.array([[0.5 + d, off], [np.conj(off), 0.5 - d]], dtype=complex)


# --------------------------------------------------------------------------
# discrete phase-point operators


@dataclass(frozen=True)
class PhasePointSet:
    """The N^2 phase-point operators for ordering ``s`` and their trace duals.

    ``weyl`` is the unitary realisation under which the set is covariant.
    """

    N: int
    s: int
    ops: np.ndarray
    dual: np.ndarray
    weyl: UnitarySet

    def __getitem__(self, idx):
        return self.ops[idx]

    def flat(self):
        return self.ops.reshape(self.N * self.N, self.N, self.N)


def _tetrahedron_frame():
    """Rotation whose axes bisect the vacuum and the three lower vertices."""
    pts = _spin12_points(0.0)
    n0 = bloch_vector(pts[0, 0])
    mx = n0 + bloch_vector(pts[1, 0])
    my = n0 + bloch_vector(pts[1, 1])
    mz = n0 + bloch_vector(pts[0, 1])
    R = np.column_stack([m / np.linalg.norm(m) for m in (mx, my, mz)])
    if np.linalg.det(R) < 0:
        R[:, 1] *= -1
    return R


def _characteristic(weyl, fiducial):
    return np.einsum("i,abij,j->ab", fiducial.conj(), weyl.ops, fiducial)


@lru_cache(maxsize=None)
def _realisation(N):
    """Rotated Weyl realisation whose orbit through ``|0>`` is informationally complete.

    The plain clock-and-shift group maps ``|0>`` to basis states only, which
    makes the s = -1 set rank deficient.  Any ``u T u^dagger`` is an equally
    valid realisation, so we pick ``u`` to send ``|0>`` to a fiducial vector
    whose Weyl characteristic function has no zeros.  For N = 2 the orbit is
    the tetrahedron of :func:`spin12_family` at zero rotation.
    """
    base = build_weyl_ops(N)
    if N == 2:
        u = su2_from_rotation(_tetrahedron_frame())
        return base.rotated(u)
    rng = np.random.default_rng(1_000_003 * N)
    best, best_q = None, -1.0
    for _ in range(64):
        f = rng.normal(size=N) + 1j * rng.normal(size=N)
        f /= np.linalg.norm(f)
        q = np.abs(_characteristic(base, f)).min()
        if q > best_q:
            best, best_q = f, q
    # unitary Q with Q|0> = f; realisation u T u^dagger with u = Q^dagger
    m = np.eye(N, dtype=complex)
    m[:, 0] = best
    q_mat, r = np.linalg.qr(m)
    q_mat[:, 0] *= r[0, 0] / abs(r[0, 0])
    return base.rotated(_dagger(q_mat))


def _orbit(weyl, op00):
    return weyl.ops @ op00 @ _dagger(weyl.ops)


def _vacuum(N):
    v = np.zeros((N, N), dtype=complex)
    v[0, 0] = 1.0
    return v


def _solve_dual_origin(q_set, N, s=None):
    """Solve ``tr(D q_set[a,b]) = N delta_{(a,b),(0,0)}`` for D."""
    rows = np.swapaxes(q_set, -1, -2).reshape(N * N, N * N)
    rhs = np.zeros(N * N, dtype=complex)
    rhs[0] = N
    cond = np.linalg.cond(rows)
    if not np.isfinite(cond) or cond > 1e12:
        raise DegenerateKernel(f"traciality system is singular for N={N}, s={s} (cond={cond:.3g})")
    x = np.linalg.solve(rows, rhs)
    if np.linalg.norm(rows @ x - rhs) > 1e-12 * N:
        raise DegenerateKernel(f"traciality residual too large for N={N}, s={s}")
    d = x.reshape(N, N)
    return 0.5 * (d + _dagger(d))


def _origin_by_symbol(weyl, s):
    """``Delta_00^(s) = (1/N) sum_k q_k |q_k|^-(1+s) T_k`` with ``q_k = <0|T_k^dagger|0>``."""
    N = weyl.N
    q = np.conj(weyl.ops[:, :, 0, 0])
    coeff = q * np.abs(q) ** (-(1.0 + s))
    d = np.einsum("ab,abij->ij", coeff, weyl.ops) / N
    return 0.5 * (d + _dagger(d))


@lru_cache(maxsize=None)
def _origin(N, s):
    weyl = _realisation(N)
    if s == -1:
        return _vacuum(N)
    if s == 1:
        return _solve_dual_origin(_orbit(weyl, _vacuum(N)), N, s)
    return _origin_by_symbol(weyl, 0)


def build_phase_point_set(N, s):
    """Phase-point operators ``Delta^(s)_{a,b}`` for Hilbert dimension ``N``.

    The s = -1 origin is the vacuum projector, the s = +1 origin is solved
    from discrete traciality against the s = -1 set, and s = 0 is self dual.
    """
    if int(N) != N or N < 2:
        raise InvalidDimension(f"Hilbert dimension must be an integer >= 2, got {N!r}")
    N, s = int(N), _check_ordering(s)
    weyl = _realisation(N)
    ops = _orbit(weyl, _origin(N, s))
    dual = ops if s == 0 else _orbit(weyl, _origin(N, -s))
    ops.setflags(write=False)
    dual.setflags(write=False)
    return PhasePointSet(N, s, ops, dual, weyl)


def axiom_residuals(pset):
    """Largest violation of hermiticity, unit trace, covariance and traciality."""
    N, ops, dual, T = pset.N, pset.ops, pset.dual, pset.weyl.ops
    herm = np.abs(ops - _dagger(ops)).max()
    trace = np.abs(np.trace(ops, axis1=-2, axis2=-1) - 1).max()
    cov = np.abs(ops - T @ ops[0, 0] @ _dagger(T)).max()
    flat = ops.reshape(N * N, N, N)
    flat_dual = dual.reshape(N * N, N, N)
    gram = np.einsum("aij,bji->ab", flat, flat_dual)
    trac = np.abs(gram - N * np.eye(N * N)).max()
    return {"hermiticity": float(herm), "trace": float(trace),
            "covariance": float(cov), "traciality": float(trac)}


def reconstruct(weights, pset):
    """Operator with symbols ``weights`` (w.r.t. ``pset``), resummed over the dual set."""
    return np.einsum("ab,abij->ij", np.asarray(weights), pset.dual) / pset.N


# --------------------------------------------------------------------------
# explicit spin-1/2 family


def _spin12_points(phi_rot):
    e = SQRT2 * np.exp(1j * phi_rot)
    # z_{1,1} uses (-1)^(1/3): with (-1)^(2/3) the four points are not a
    # regular tetrahedron and A_{1,1} != Delta^(0)(z_{1,1}).
    return np.array([[0.0, e], [OMEGA3 * e, -CBRT_M1 * e]], dtype=complex)


def _spin12_ops(phi_rot):
    e = np.exp(1j * phi_rot)
    a = (3 - SQRT3) / 6
    b = (3 + SQRT3) / 6
    c = np.sqrt(2.0 / 3.0)
    ops = np.empty((2, 2, 2, 2), dtype=complex)
    ops[0, 0] = [[(1 + SQRT3) / 2, 0], [0, (1 - SQRT3) / 2]]
    ops[0, 1] = [[a, c * e], [c / e, b]]
    ops[1, 0] = [[a, OMEGA3 * c * e], [-CBRT_M1 * c / e, b]]
    ops[1, 1] = [[a, -CBRT_M1 * c * e], [OMEGA3 * c / e, b]]
    return ops


@dataclass(frozen=True)
class Spin12PointFamily:
    """Four spin-1/2 Wigner phase-point operators on a regular tetrahedron.

    ``phi_rot`` rotates the points about the z axis and ``tilt`` rotates the
    whole tetrahedron about the y axis afterwards.  ``zpoints[i, j]`` is the
    sphere point of ``ops[i, j]`` and may be ``inf`` when a tilted vertex sits
    on the south pole.
    """

    phi_rot: float
    tilt: float
    ops: np.ndarray
    zpoints: np.ndarray
    rotation: np.ndarray = field(repr=False)

    def bloch(self):
        return np.array([[self._vec(i, j) for j in range(2)] for i in range(2)])

    def _vec(self, i, j):
        op = self.ops[i, j]
        return np.real([np.trace(op @ p) for p in PAULI]) / SQRT3

    def kernels(self, s):
        """The four kernels of this family at ordering ``s``, shape (2, 2, 2, 2)."""
        s = _check_ordering(s)
        if s == 0:
            return self.ops
        return np.array([[_kernel_from_bloch(self._vec(i, j), s) for j in range(2)] for i in range(2)])

    def phase_point_set(self, s):
        """Family as a :class:`PhasePointSet` covariant under the rotated Weyl group."""
        s = _check_ordering(s)
        weyl = _realisation(2).rotated(self.rotation)
        return PhasePointSet(2, s, self.kernels(s), self.kernels(-s), weyl)


def spin12_family(phi_rot=0.0, tilt=0.0):
    """Tetrahedral spin-1/2 phase-point family with its sphere points."""
    phi_rot, tilt = float(phi_rot), float(tilt)
    # z -> z e^{i phi} rotates Bloch vectors by -phi about z in this convention
    rz = Rotation.from_euler("z", -phi_rot).as_matrix()
    ry = Rotation.from_euler("y", tilt).as_matrix()
    rotation = su2_from_rotation(ry @ rz)
    if tilt == 0.0:
        ops = _spin12_ops(phi_rot)
        zpoints = _spin12_points(phi_rot)
    else:
        base = _spin12_ops(0.0)
        ops = rotation @ base @ _dagger(rotation)
        zpoints = np.array([[point_from_bloch(ry @ rz @ bloch_vector(z)) for z in row]
                            for row in _spin12_points(0.0)])
    ops.setflags(write=False)
    zpoints.setflags(write=False)
    return Spin12PointFamily(phi_rot, tilt, ops, zpoints, rotation)


def tetrahedron_angles(zpoints):
    """Pairwise angles between the Bloch vectors of four finite sphere points."""
    z = np.ravel(zpoints)
    vecs = []
    for p in z:
        th, ph = stereographic_angles(p)
        vecs.append([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    vecs = np.array(vecs)
    out = []
    for i in range(len(z)):
        for j in range(i + 1, len(z)):
            out.append(np.arccos(np.clip(vecs[i] @ vecs[j], -1.0, 1.0)))
    return np.array(out)


# --------------------------------------------------------------------------
# extended kernels and symbols


def extended_kernel(base, index, rotation):
    """``Lambda(Omega) Delta_{a,b} Lambda(Omega)^dagger`` for a unitary ``rotation``."""
    u = np.asarray(rotation, dtype=complex)
    N = base.N
    if u.shape != (N, N):
        raise DimensionMismatch(f"rotation must be {N}x{N}, got {u.shape}")
    if np.abs(u @ _dagger(u) - np.eye(N)).max() > 1e-10:
        raise InvalidRotation("rotation is not unitary")
    a, b = index
    return u @ base.ops[a, b] @ _dagger(u)


def weyl_symbol(A, kernel):
    """Weyl symbol ``tr(A kernel)``."""
    A = np.asarray(A)
    kernel = np.asarray(kernel)
    if A.shape != kernel.shape or A.ndim != 2:
        raise DimensionMismatch(f"operator {A.shape} and kernel {kernel.shape} do not match")
    return complex(np.einsum("ij,ji->", A, kernel))


# --------------------------------------------------------------------------
# positive-P kernel


@dataclass(frozen=True)
class PositivePKernel:
    psi: complex
    phi: complex
    matrix: np.ndarray


def pp_kernel_matrix(psi, phi):
    """Vectorised ``(|0> + psi|1>)(<0| + phi<1|) / (1 + psi phi)``; shape ``(..., 2, 2)``.

    No pole check; see :func:`positive_p_kernel`.
    """
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    norm = 1.0 + psi * phi
    out = np.empty(np.broadcast(psi, phi).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = 1.0 / norm
    out[..., 0, 1] = phi / norm
    out[..., 1, 0] = psi / norm
    out[..., 1, 1] = psi * phi / norm
    return out


def positive_p_kernel(psi, phi):
    """Normalised off-diagonal coherent-state kernel ``Lambda(psi, phi)``."""
    psi, phi = complex(psi), complex(phi)
    if abs(1.0 + psi * phi) < POLE_THRESHOLD:
        raise PoleError(f"kernel pole: |1 + psi*phi| = {abs(1 + psi * phi):.3g}")
    m = pp_kernel_matrix(psi, phi)
    m.setflags(write=False)
    return PositivePKernel(psi, phi, m)


# --------------------------------------------------------------------------
# discrete distributions


@dataclass(frozen=True)
class DiscreteWeights:
    raw: np.ndarray
    normalized: np.ndarray | None
    negative: bool


def discrete_distribution(rho, pset, tol=1e-12):
    """Discrete quasiprobability ``w_{a,b} = tr(rho Delta_{a,b})``.

    ``normalized`` is only filled when every weight is >= -tol (small
    negatives clamped to zero); otherwise ``negative`` is set.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (pset.N, pset.N):
        raise DimensionMismatch(f"density matrix {rho.shape} does not match N={pset.N}")
    raw = np.real(np.einsum("ij,abji->ab", rho, pset.ops))
    if raw.min() < -tol:
        return DiscreteWeights(raw, None, True)
    clipped = np.where(raw < 0, 0.0, raw)
    return DiscreteWeights(raw, clipped / clipped.sum(), False)


# --------------------------------------------------------------------------
# continuous traciality (N = 2)


def sphere_grid(n_theta=64, n_phi=64):
    """Gauss-Legendre (in cos theta) x uniform (in phi) nodes on the unit sphere.

    Returns ``(z, weights)`` with weights for the measure
    ``sin(theta) dtheta dphi``; they sum to 4 pi.
    """
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(x)
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    w = np.outer(wx, np.full(n_phi, 2 * np.pi / n_phi))
    z = np.tan(th / 2) * np.exp(-1j * ph)  # azimuth -phi: see bloch_vector
    return z.ravel(), w.ravel()


def continuous_traciality_error(F, s, n_theta=64, n_phi=64, probes=None):
    """Max error of the reproducing-kernel identity on the sphere.

    With ``f(z) = tr(F Delta^(-s)(z))`` checks
    ``f(z) = (N/Omega_N) int dmu(z') f(z') tr(Delta^(s)(z') Delta^(-s)(z))``
    at the probe points (default: a small fixed set), N = 2 and Omega_N = 4 pi.
    """
    s = _check_ordering(s)
    z, w = sphere_grid(n_theta, n_phi)
    if probes is None:
        probes = [0.0, 0.3 - 0.7j, 1.5j, -2.0 + 0.1j, 5.0]
    ks = np.array([su2_kernel(p, s) for p in z])
    kd = np.array([su2_kernel(p, -s) for p in z])
    f_nodes = np.einsum("ij,nji->n", F, kd)
    err = 0.0
    for p in probes:
        target = weyl_symbol(F, su2_kernel(p, -s))
        overlap = np.einsum("nij,ji->n", ks, su2_kernel(p, -s))
        val = 2.0 / (4 * np.pi) * np.sum(w * f_nodes * overlap)
        err = max(err, abs(val - target))
    return err
