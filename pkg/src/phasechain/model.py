"""Dissipative long-range transverse-field Ising chain.

Both sides of the phase-space correspondence live here: the exact Lindblad
generator (Hamiltonian, jump operators, sparse Liouvillian) and the positive-P
drift vector / diffusion pair list, plus the finite-difference oracle that
ties them together.

Sites are 0-based in code; site 0 is the left boundary and the leftmost
tensor factor.  ``sigma+ = |1><0|`` and ``sigma- = |0><1|`` with ``|0>`` the
sigma_z = +1 state, so the ``sigma-`` channel relaxes towards ``|0>``.

Deviations from the commonly printed coefficient list (each one fixed by
:func:`verify_generator`):

* the transverse-field drift of ``psi_j`` is ``+2 i h psi_j`` (and
  ``-2 i h phi_j``), as in the commutator block, not ``-2 i h psi_j``;
* the interaction drift is ``-/+ i (1 - z_j^2) sum_k J_jk s_x(k)`` with the
  site-j factor ``(1 - z_j^2)`` and the full long-range sum; the diffusion
  pairs run over all ``j < k`` with coefficient ``J_jk = J / |j-k|^alpha``;
* the ``sigma-`` drift carries an overall minus sign:
  ``-gamma z (1 + 3 psi phi) / (2 (1 + psi phi))``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from functools import reduce

import numpy as np
import scipy.sparse as sps

from .errors import OracleScaleError, PoleError
from .kernels import POLE_THRESHOLD, SX, SY, SZ, pp_kernel_matrix

SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

MAX_ORACLE_SITES = 8

#: term families that can be switched on in isolation
FAMILIES = ("field", "interaction", "gamma1", "gamma2", "gamma3", "gamma4", "dephasing")


def kac_norm(alpha, n):
    """Kac normalisation ``(sum_{j=1}^n j^-alpha)^-1``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return 1.0 / np.sum(np.arange(1, int(n) + 1, dtype=float) ** (-float(alpha)))


@dataclass(frozen=True)
class ModelParams:
    """Chain parameters.  ``J`` is derived from ``alpha`` and ``n``.

    ``interaction`` scales the whole sigma_x sigma_x term and exists so term
    families can be isolated; ``l4_minus`` turns the fourth boundary channel
    into ``sigma-`` on the last site.  ``interaction_noise=False`` keeps the
    interaction drift but drops its diffusion (semiclassical interaction);
    the dense oracle ignores this switch.
    """

    n: int
    alpha: float = 1.5
    h: float = 1.0
    gamma1: float = 0.2
    gamma2: float = 0.02
    gamma3: float = 0.1
    gamma4: float = 0.05
    gammaD: float = 0.001
    interaction: float = 1.0
    l4_minus: bool = False
    interaction_noise: bool = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha!r}")
        for name in ("gamma1", "gamma2", "gamma3", "gamma4", "gammaD"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def J(self):
        return kac_norm(self.alpha, self.n)

    def couplings(self):
        """Matrix ``J_jk = interaction * J / |j-k|^alpha`` with zero diagonal."""
        idx = np.arange(self.n)
        dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
        c = np.zeros_like(dist)
        off = dist > 0
        c[off] = self.interaction * self.J / dist[off] ** self.alpha
        return c

    def boundary_channels(self):
        """``(site, rate, kind)`` for the four boundary jump operators."""
        last = self.n - 1
        return [
            (0, self.gamma1, "plus"),
            (0, self.gamma2, "minus"),
            (last, self.gamma3, "plus"),
            (last, self.gamma4, "minus" if self.l4_minus else "plus"),
        ]

    def isolate(self, family):
        """Copy with only one term family switched on."""
        if family not in FAMILIES:
            raise ValueError(f"unknown term family {family!r}")
        zero = dict(h=0.0, gamma1=0.0, gamma2=0.0, gamma3=0.0, gamma4=0.0, gammaD=0.0, interaction=0.0)
        keep = {
            "field": ("h",),
            "interaction": ("interaction",),
            "dephasing": ("gammaD",),
        }.get(family, (family,))
        for k in keep:
            zero.pop(k)
        return replace(self, **zero)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


PAPER_PARAMS = dict(alpha=1.5, h=1.0, gamma1=0.2, gamma2=0.02, gamma3=0.1, gamma4=0.05, gammaD=0.001)


def paper_params(n, **overrides):
    return ModelParams(n=n, **{**PAPER_PARAMS, **overrides})


# --------------------------------------------------------------------------
# exact generator


def _check_oracle_size(n):
    if n > MAX_ORACLE_SITES:
        raise OracleScaleError(f"dense oracle supports n <= {MAX_ORACLE_SITES}, got n={n}")


def site_operator(op, site, n):
    """``I x ... x op (at site) x ... x I`` as a sparse CSR matrix."""
    eye = sps.identity(2, dtype=complex, format="csr")
    mats = [sps.csr_matrix(op) if k == site else eye for k in range(n)]
    return reduce(lambda a, b: sps.kron(a, b, format="csr"), mats)


def hamiltonian(p):
    n = p.n
    dim = 2 ** n
    H = sps.csr_matrix((dim, dim), dtype=complex)
    xs = [site_operator(SX, j, n) for j in range(n)]
    c = p.couplings()
    for j in range(n):
        for k in range(j + 1, n):
            if c[j, k] != 0:
                H = H + c[j, k] * (xs[j] @ xs[k])
    if p.h != 0:
        for j in range(n):
            H = H + p.h * site_operator(SZ, j, n)
    return H.tocsr()


def jump_operators(p):
    """List of ``sqrt(rate) * L`` (sparse); zero-rate channels are dropped."""
    n = p.n
    ops = []
    for site, rate, kind in p.boundary_channels():
        if rate > 0:
            m = SIGMA_PLUS if kind == "plus" else SIGMA_MINUS
            ops.append(np.sqrt(rate) * site_operator(m, site, n))
    if p.gammaD > 0:
        for j in range(n):
            ops.append(np.sqrt(p.gammaD) * site_operator(SZ, j, n))
    return ops


@dataclass(frozen=True)
class Liouvillian:
    """Superoperator acting on row-major vectorised density matrices."""

    n: int
    matrix: sps.csr_matrix

    @property
    def dim(self):
        return 2 ** self.n

    def apply(self, rho):
        rho = np.asarray(rho, dtype=complex)
        return (self.matrix @ rho.reshape(-1)).reshape(rho.shape)


def build_liouvillian(p):
    """Sparse ``4^n x 4^n`` Lindblad generator (row-major ``vec(A rho B) = (A x B^T) vec(rho)``)."""
    _check_oracle_size(p.n)
    dim = 2 ** p.n
    eye = sps.identity(dim, dtype=complex, format="csr")
    H = hamiltonian(p)
    L = -1j * (sps.kron(H, eye) - sps.kron(eye, H.T))
    for op in jump_operators(p):
        opd = op.conj().T
        ldl = (opd @ op).tocsr()
        L = L + sps.kron(op, op.conj()) - 0.5 * sps.kron(ldl, eye) - 0.5 * sps.kron(eye, ldl.T)
    return Liouvillian(p.n, L.tocsr())


def lindblad_rhs(rho, H, jumps):
    """``-i[H, rho] + sum_L (L rho L^+ - {L^+ L, rho}/2)`` for dense matrices.

    ``jumps`` holds ``(L, L^+ L)`` pairs.
    """
    out = -1j * (H @ rho - rho @ H)
    for op, ldl in jumps:
        out += op @ rho @ op.conj().T - 0.5 * (ldl @ rho + rho @ ldl)
    return out


# --------------------------------------------------------------------------
# phase-space coefficients


def _check_poles(psi, phi):
    norm = 1.0 + psi * phi
    bad = np.abs(norm) < POLE_THRESHOLD
    if np.any(bad):
        site = int(np.argwhere(bad)[0][-1])
        raise PoleError(f"kernel pole at site {site}: |1 + psi*phi| < {POLE_THRESHOLD:g}", site=site)
    return norm


def drift_arrays(psi, phi, p, check=True):
    """Drift ``(A_psi, A_phi)`` for arrays of shape ``(..., n)``."""
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    norm = _check_poles(psi, phi) if check else 1.0 + psi * phi
    x = psi * phi
    a_psi = np.zeros_like(psi)
    a_phi = np.zeros_like(phi)

    if p.h != 0:
        a_psi += 2j * p.h * psi
        a_phi -= 2j * p.h * phi

    if p.interaction != 0 and p.n > 1:
        sx = (psi + phi) / norm
        c = p.couplings()
        # per-row reduction over the last axis; independent of batch size
        field = np.sum(sx[..., None, :] * c, axis=-1)
        a_psi += -1j * (1 - psi * psi) * field
        a_phi += 1j * (1 - phi * phi) * field

    pump = np.zeros(p.n)
    decay = np.zeros(p.n)
    for site, rate, kind in p.boundary_channels():
        (pump if kind == "plus" else decay)[site] += rate
    if np.any(pump) or np.any(decay):
        f = pump * (3 + x) / (2 * norm) - decay * (1 + 3 * x) / (2 * norm)
        a_psi += f * psi
        a_phi += f * phi

    if p.gammaD != 0:
        f = 2 * p.gammaD * (x - 1) / norm
        a_psi += f * psi
        a_phi += f * phi
    return a_psi, a_phi


@dataclass(frozen=True)
class DiffusionPattern:
    """Fixed sparsity pattern of the diffusion matrix for a given model.

    ``rows[m], cols[m]`` index the 2n-vector ``(psi_0..psi_{n-1}, phi_0..phi_{n-1})``;
    ``kind[m]`` is ``"psipsi"``, ``"phiphi"`` or ``"cross"``.
    """

    rows: np.ndarray
    cols: np.ndarray
    kind: tuple


def diffusion_pattern(p):
    n = p.n
    rows, cols, kind = [], [], []
    c = p.couplings()
    if p.interaction != 0 and p.interaction_noise:
        for j in range(n):
            for k in range(j + 1, n):
                if c[j, k] != 0:
                    rows.append(j); cols.append(k); kind.append("psipsi")
        for j in range(n):
            for k in range(j + 1, n):
                if c[j, k] != 0:
                    rows.append(n + j); cols.append(n + k); kind.append("phiphi")
    cross_sites = set()
    for site, rate, _ in p.boundary_channels():
        if rate > 0:
            cross_sites.add(site)
    if p.gammaD > 0:
        cross_sites.update(range(n))
    for j in sorted(cross_sites):
        rows.append(j); cols.append(n + j); kind.append("cross")
    return DiffusionPattern(np.array(rows, dtype=int), np.array(cols, dtype=int), tuple(kind))


def diffusion_coefficients(psi, phi, p, pattern=None, check=True):
    """Coefficients ``c_m`` (shape ``(..., n_terms)``) with ``D[r_m, c_m] = D[c_m, r_m] = c_m``."""
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    if check:
        _check_poles(psi, phi)
    pattern = pattern or diffusion_pattern(p)
    n = p.n
    c = p.couplings()
    out = np.empty(psi.shape[:-1] + (len(pattern.kind),), dtype=complex)
    one_m_psi2 = 1 - psi * psi
    one_m_phi2 = 1 - phi * phi
    x = psi * phi
    pump = np.zeros(n)
    decay = np.zeros(n)
    for site, rate, kind in p.boundary_channels():
        (pump if kind == "plus" else decay)[site] += rate
    for m, (r, q, kind) in enumerate(zip(pattern.rows, pattern.cols, pattern.kind)):
        if kind == "psipsi":
            out[..., m] = -1j * c[r, q] * one_m_psi2[..., r] * one_m_psi2[..., q]
        elif kind == "phiphi":
            j, k = r - n, q - n
            out[..., m] = 1j * c[j, k] * one_m_phi2[..., j] * one_m_phi2[..., k]
        else:
            xj = x[..., r]
            out[..., m] = pump[r] + decay[r] * xj * xj + 4 * p.gammaD * xj
    return out


@dataclass(frozen=True)
class DriftDiffusion:
    A: np.ndarray
    D_terms: list

    def dense_D(self):
        size = len(self.A)
        D = np.zeros((size, size), dtype=complex)
        for i, j, c in self.D_terms:
            D[i, j] = c
            D[j, i] = c
        return D


def _state_arrays(z):
    if hasattr(z, "psi"):
        return np.asarray(z.psi, dtype=complex), np.asarray(z.phi, dtype=complex)
    z = np.asarray(z, dtype=complex)
    n = z.shape[-1] // 2
    return z[..., :n], z[..., n:]


def drift(z, p):
    """Drift vector ``A`` of length ``2n`` at a single phase-space point.

    ``z`` is a state with ``psi``/``phi`` attributes or a flat ``(psi..., phi...)`` vector.
    """
    psi, phi = _state_arrays(z)
    a_psi, a_phi = drift_arrays(psi, phi, p)
    return np.concatenate([a_psi, a_phi])


def diffusion(z, p):
    """Nonzero diffusion entries as ``[(i, j, c), ...]`` with ``i < j``."""
    psi, phi = _state_arrays(z)
    pattern = diffusion_pattern(p)
    coeffs = diffusion_coefficients(psi, phi, p, pattern)
    return [(int(i), int(j), complex(c)) for i, j, c in zip(pattern.rows, pattern.cols, coeffs)]


def drift_diffusion(z, p):
    return DriftDiffusion(drift(z, p), diffusion(z, p))


# --------------------------------------------------------------------------
# generator-consistency oracle


def _kron_all(mats):
    return reduce(np.kron, mats)


@dataclass(frozen=True)
class GeneratorReport:
    """``residual`` is the Richardson-extrapolated value; the plain
    central-difference residuals at ``step`` and ``step/2`` are kept alongside."""

    residual: float
    residual_plain: float
    residual_half_step: float
    norm: float
    step: float


def _site_derivatives(psi, phi, h1, h):
    """Central differences of the single-site kernel: d/dpsi, d/dphi, d2/dpsi dphi, d2/dpsi2, d2/dphi2."""
    K = pp_kernel_matrix
    d_psi = (K(psi + h1, phi) - K(psi - h1, phi)) / (2 * h1)
    d_phi = (K(psi, phi + h1) - K(psi, phi - h1)) / (2 * h1)
    d_mix = (K(psi + h, phi + h) - K(psi + h, phi - h) - K(psi - h, phi + h) + K(psi - h, phi - h)) / (4 * h * h)
    base = K(psi, phi)
    d_pp = (K(psi + h, phi) - 2 * base + K(psi - h, phi)) / (h * h)
    d_ff = (K(psi, phi + h) - 2 * base + K(psi, phi - h)) / (h * h)
    return base, d_psi, d_phi, d_mix, d_pp, d_ff


def _generator_side(psi, phi, p, h1, h2):
    """``sum A_j d_j Lambda + 1/2 sum D_jk d_j d_k Lambda`` by finite differences."""
    n = p.n
    A = drift(np.concatenate([psi, phi]), p)
    terms = diffusion(np.concatenate([psi, phi]), p)
    sites = [_site_derivatives(psi[j], phi[j], h1, h2) for j in range(n)]
    firsts = [_site_derivatives(psi[j], phi[j], h2, h2) for j in range(n)]
    base = [s[0] for s in sites]

    def first(idx):
        j, which = idx % n, idx // n
        return sites[j][1 + which]

    out = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for idx in range(2 * n):
        if A[idx] != 0:
            mats = list(base)
            mats[idx % n] = first(idx)
            out += A[idx] * _kron_all(mats)
    for i, j, c in terms:
        si, sj = i % n, j % n
        mats = list(base)
        if si == sj:
            if i == j:
                mats[si] = sites[si][4] if i < n else sites[si][5]
            else:
                mats[si] = sites[si][3]
        else:
            mats[si] = firsts[si][1 + i // n]
            mats[sj] = firsts[sj][1 + j // n]
        # symmetric pair: (1/2)(D_ij + D_ji) = c
        out += (c if i != j else 0.5 * c) * _kron_all(mats)
    return out


def product_kernel(psi, phi):
    return _kron_all([pp_kernel_matrix(a, b) for a, b in zip(psi, phi)])


def verify_generator(p, z, step=1e-5, margin=0.1, second_step=None):
    """Relative Frobenius residual between the Lindblad generator applied to the
    product kernel and the phase-space differential operator.

    ``z`` is a flat ``(psi..., phi...)`` vector or a state.  First derivatives
    use central differences of ``step``; second derivatives use
    ``second_step`` (default ``10 * step``) because their roundoff scales as
    ``eps / h^2``.  Points within ``margin`` of a pole are rejected with
    :class:`PoleError`.
    """
    second_step = 10 * step if second_step is None else second_step
    if p.n > 3:
        raise OracleScaleError("verify_generator is meant for n <= 3")
    psi, phi = _state_arrays(z)
    norm = np.abs(1 + psi * phi)
    if np.any(norm < margin):
        site = int(np.argmin(norm))
        raise PoleError(f"point within {margin} of a pole at site {site}", site=site)
    rho = product_kernel(psi, phi)
    lv = build_liouvillian(p)
    m1 = lv.apply(rho)
    m1_norm = np.linalg.norm(m1)

    def rel(m2):
        diff = np.linalg.norm(m1 - m2)
        return float(diff / m1_norm if m1_norm > 0 else diff)

    full = _generator_side(psi, phi, p, step, second_step)
    half = _generator_side(psi, phi, p, step / 2, second_step / 2)
    extrapolated = (4 * half - full) / 3
    return GeneratorReport(rel(extrapolated), rel(full), rel(half), float(m1_norm), step)


def moment_transport_residual(p, z, step=1e-5, second_step=1e-4):
    """Compare ``d/dt tr(sigma^a_j Lambda)`` from the generator with the chain rule.

    Returns the largest relative deviation over all sites and Pauli axes.
    """
    psi, phi = _state_arrays(z)
    n = p.n
    lv = build_liouvillian(p)
    dm = lv.apply(product_kernel(psi, phi))
    A = drift(np.concatenate([psi, phi]), p)
    terms = diffusion(np.concatenate([psi, phi]), p)
    worst = 0.0
    for j in range(n):
        for pauli in (SX, SY, SZ):
            op = site_operator(pauli, j, n).toarray()
            exact = np.trace(op @ dm)

            def g(zz):
                return np.trace(op @ product_kernel(zz[:n], zz[n:]))

            z0 = np.concatenate([psi, phi]).astype(complex)
            grad = np.zeros(2 * n, dtype=complex)
            for i in range(2 * n):
                e = np.zeros(2 * n); e[i] = step
                grad[i] = (g(z0 + e) - g(z0 - e)) / (2 * step)
            chain = A @ grad
            for a, b, c in terms:
                ea = np.zeros(2 * n); ea[a] = second_step
                eb = np.zeros(2 * n); eb[b] = second_step
                mixed = (g(z0 + ea + eb) - g(z0 + ea - eb) - g(z0 - ea + eb) + g(z0 - ea - eb)) / (4 * second_step ** 2)
                chain += c * mixed
            scale = max(abs(exact), 1.0)
            worst = max(worst, abs(exact - chain) / scale)
    return worst
