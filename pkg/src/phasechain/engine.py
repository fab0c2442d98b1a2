"""Euler-Maruyama integration of the positive-P equations with discrete projection.

Trajectories are processed in fixed-size chunks.  Every array operation
acts row by row (no BLAS reductions across trajectories), and each
trajectory draws from its own pair of random streams, so results do not
depend on chunking or on the number of worker threads.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ExpansionFailure, PoleError, SamplingError
from .kernels import discrete_distribution, spin12_family
from .model import diffusion_coefficients, diffusion_pattern, drift_arrays
from .projection import EPS, Z_MAX, expand_kernel, sample_projection, should_project

NOISE_BLOCK = 256
#: trajectories per chunk are capped so the pre-drawn noise block stays
#: below this many float64 values; chunking never changes results
NOISE_BUDGET = 2 ** 23
MAX_CHUNK = 2048
ABORT_WARN_FRACTION = 1e-3
THREADS_ENV = "PHASECHAIN_THREADS"
#: what to do when a flagged site has no discrete expansion: drop the
#: trajectory, or leave the site unprojected and keep integrating
FAILURE_POLICIES = ("abort", "continue")

_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """One round of the splitmix64 finaliser on a Python int."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def trajectory_seed(master_seed, k):
    """Seed of trajectory ``k``; a pure function of ``(master_seed, k)``."""
    return splitmix64(splitmix64(int(master_seed) & _MASK64) ^ int(k))


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    noise, jumps = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(noise)), np.random.Generator(np.random.PCG64(jumps))


@dataclass
class PhaseSpaceState:
    psi: np.ndarray
    phi: np.ndarray
    t: float = 0.0
    jumps: np.ndarray = None

    def __post_init__(self):
        self.psi = np.array(self.psi, dtype=complex)
        self.phi = np.array(self.phi, dtype=complex)
        if self.psi.shape != self.phi.shape or self.psi.ndim != 1:
            raise ValueError("psi and phi must be vectors of equal length")
        if self.jumps is None:
            self.jumps = np.zeros(self.psi.shape, dtype=np.int64)

    @property
    def n(self):
        return self.psi.size

    def vector(self):
        return np.concatenate([self.psi, self.phi])


@dataclass(frozen=True)
class RunSchedule:
    dt: float = 1e-3
    t_out: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 20.0, 201))
    t_max: float | None = None
    z_max: float = Z_MAX
    eps: float = EPS
    trajectories: int = 1000
    master_seed: int = 1
    on_failure: str = "abort"

    def __post_init__(self):
        t_out = np.asarray(self.t_out, dtype=float)
        object.__setattr__(self, "t_out", t_out)
        t_max = float(t_out[-1]) if self.t_max is None else float(self.t_max)
        object.__setattr__(self, "t_max", t_max)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.trajectories < 1:
            raise ValueError(f"trajectories must be >= 1, got {self.trajectories}")
        if t_out.ndim != 1 or t_out.size == 0 or np.any(np.diff(t_out) <= 0):
            raise ValueError("t_out must be a nonempty strictly increasing sequence")
        if t_out[0] < 0 or t_out[-1] > t_max + 1e-12:
            raise ValueError("t_out must lie in [0, t_max]")
        if not (self.z_max > 0 and self.eps > 0):
            raise ValueError("z_max and eps must be positive")
        if self.on_failure not in FAILURE_POLICIES:
            raise ValueError(f"on_failure must be one of {FAILURE_POLICIES}, got {self.on_failure!r}")


# --------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseFactorization:
    """Columns ``b_m`` of length ``size`` with ``sum_m b_m b_m^T = D``."""

    size: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray  # (n_columns, 2): entries at rows and cols

    def dense(self):
        B = np.zeros((self.size, len(self.rows)), dtype=complex)
        for m, (i, j, (a, b)) in enumerate(zip(self.rows, self.cols, self.values)):
            B[i, m] += a
            B[j, m] += b
        return B

    def reconstruct(self):
        B = self.dense()
        return B @ B.T


def factorize_diffusion(terms, size=None):
    """Analytic two-column factorisation of each symmetric pair term ``(i, j, c)``.

    Off-diagonal terms give ``sqrt(c/2)(e_i + e_j)`` and ``sqrt(-c/2)(e_i - e_j)``;
    diagonal terms give ``sqrt(c) e_i``.
    """
    rows, cols, values = [], [], []
    top = -1
    for i, j, c in terms:
        c = complex(c)
        top = max(top, i, j)
        if i == j:
            rows.append(i); cols.append(i); values.append((np.sqrt(c), 0.0))
            continue
        a, b = np.sqrt(c / 2), np.sqrt(-c / 2)
        rows += [i, i]; cols += [j, j]
        values += [(a, a), (b, -b)]
    size = top + 1 if size is None else size
    return NoiseFactorization(size, np.array(rows, dtype=int), np.array(cols, dtype=int),
                              np.array(values, dtype=complex).reshape(-1, 2))


class _Stepper:
    """Vectorised drift and noise increments for one model."""

    def __init__(self, p):
        self.p = p
        self.n = p.n
        self.pattern = diffusion_pattern(p)
        m = len(self.pattern.kind)
        self.n_noise = 2 * m
        # incidence of term m on the 2n variables, for the two noise columns
        r, c = self.pattern.rows, self.pattern.cols
        k = np.arange(m)
        self.plus = sp.csr_matrix((np.ones(2 * m), (np.r_[r, c], np.r_[k, k])), shape=(2 * self.n, m))
        self.minus = sp.csr_matrix((np.r_[np.ones(m), -np.ones(m)], (np.r_[r, c], np.r_[k, k])),
                                   shape=(2 * self.n, m))

    def increment(self, psi, phi, dt, xi):
        """``A dt + B sqrt(dt) xi`` for a batch; ``xi`` has shape (batch, 2m)."""
        a_psi, a_phi = drift_arrays(psi, phi, self.p, check=False)
        dz = np.concatenate([a_psi, a_phi], axis=-1) * dt
        if self.n_noise:
            coeff = diffusion_coefficients(psi, phi, self.p, self.pattern, check=False)
            sd = np.sqrt(dt)
            w1 = np.sqrt(coeff / 2) * xi[:, 0::2] * sd
            w2 = np.sqrt(-coeff / 2) * xi[:, 1::2] * sd
            dz += (self.plus @ w1.T).T + (self.minus @ w2.T).T
        return dz


def em_step(state, p, dt, noise, stepper=None):
    """One Ito Euler-Maruyama step; non-finite results are returned as-is for the regulariser."""
    stepper = stepper or _Stepper(p)
    noise = np.asarray(noise, dtype=float).reshape(1, -1)
    if noise.shape[1] != stepper.n_noise:
        raise ValueError(f"expected {stepper.n_noise} noise values, got {noise.shape[1]}")
    with np.errstate(all="ignore"):
        dz = stepper.increment(state.psi[None], state.phi[None], dt, noise)[0]
    n = state.n
    return PhaseSpaceState(state.psi + dz[:n], state.phi + dz[n:], state.t + dt, state.jumps.copy())


# --------------------------------------------------------------------------
# initial states


def initial_state(kind, p, rho=None, rng=None):
    """``"coherent-x"`` (psi = phi = 1) or ``"discrete-sampled"`` from per-site ``rho``.

    Discrete sampling draws tetrahedron vertex ``a`` of every site with
    probability ``w_a / 2`` where ``w`` are the site's s = +1 discrete weights,
    and places the site at the vertex projector ``(conj(z_a), z_a)``.
    """
    n = p.n
    if kind == "coherent-x":
        return PhaseSpaceState(np.ones(n), np.ones(n))
    if kind != "discrete-sampled":
        raise ValueError(f"unknown initial state kind {kind!r}")
    if rho is None:
        raise ValueError("discrete-sampled initial state needs per-site density matrices")
    rng = rng if rng is not None else np.random.default_rng(0)
    rhos = [rho] * n if np.ndim(rho) == 2 else list(rho)
    fam = spin12_family()
    pset = fam.phase_point_set(1)
    z = fam.zpoints.ravel()
    psi, phi = np.empty(n, complex), np.empty(n, complex)
    for j, r in enumerate(rhos):
        w = discrete_distribution(r, pset)
        if w.negative:
            raise SamplingError(f"site {j} has negative discrete weights {w.raw.ravel()}", site=j)
        a = int(np.searchsorted(np.cumsum(w.normalized.ravel()), rng.random(), side="right"))
        a = min(a, 3)
        psi[j], phi[j] = np.conj(z[a]), z[a]
    return PhaseSpaceState(psi, phi)


# --------------------------------------------------------------------------
# trajectories


@dataclass
class EnsembleResult:
    times: np.ndarray
    psi: np.ndarray  # (M, T, n); NaN rows for aborted trajectories
    phi: np.ndarray
    jumps: np.ndarray  # (M, T) cumulative projections per trajectory
    aborted: np.ndarray  # (M,) bool
    abort_reasons: dict
    missed: np.ndarray = None  # (M,) flagged sites left unprojected ("continue" policy)

    @property
    def kept(self):
        return ~self.aborted

    def samples(self):
        """``(psi, phi, jumps)`` restricted to completed trajectories."""
        k = self.kept
        return self.psi[k], self.phi[k], self.jumps[k]


def _step_plan(t_out, dt):
    """Per output interval, the list of step sizes (full steps then one short one)."""
    plan = []
    t = 0.0
    for target in t_out:
        span = target - t
        k = int(np.floor(span / dt + 1e-9))
        steps = [dt] * k
        rest = span - k * dt
        if rest > 1e-12 * max(1.0, target):
            steps.append(rest)
        plan.append(steps)
        t = float(target)
    return plan


def _project_site(psi, phi, i, j, sched, gen):
    exp = expand_kernel(psi[i, j], phi[i, j], z_max=sched.z_max, eps=sched.eps)
    psi[i, j], phi[i, j] = sample_projection(exp, gen.random())


def _run_chunk(p, sched, seeds, init, stepper, plan):
    b, n = len(seeds), p.n
    T = len(sched.t_out)
    gens = [_streams(s) for s in seeds]
    psi = np.tile(init.psi, (b, 1))
    phi = np.tile(init.phi, (b, 1))
    jumps = np.zeros(b, dtype=np.int64)
    misses = np.zeros(b, dtype=np.int64)
    stuck = np.zeros((b, n), dtype=bool)
    alive = np.ones(b, dtype=bool)
    reasons = {}
    out_psi = np.full((b, T, n), np.nan + 0j)
    out_phi = np.full((b, T, n), np.nan + 0j)
    out_jumps = np.zeros((b, T), dtype=np.int64)
    nn = stepper.n_noise
    block = np.zeros((b, NOISE_BLOCK, nn))
    pos = NOISE_BLOCK

    for k_out, steps in enumerate(plan):
        for h in steps:
            live = np.flatnonzero(alive)
            if live.size == 0:
                break
            xi = None
            if nn:
                if pos == NOISE_BLOCK:
                    for i in live:
                        block[i] = gens[i][0].standard_normal((NOISE_BLOCK, nn))
                    pos = 0
                xi = block[live, pos]
                pos += 1
            with np.errstate(all="ignore"):
                dz = stepper.increment(psi[live], phi[live], h, xi)
            psi[live] += dz[:, :n]
            phi[live] += dz[:, n:]

            raw = should_project(psi[live], phi[live], sched.z_max, sched.eps)
            # a site whose expansion failed is retried only after it has left
            # the flagged region (or once it stops being finite)
            stuck[live] &= raw
            flags = raw & ~(stuck[live] & np.isfinite(psi[live] * phi[live]))
            for r in np.flatnonzero(flags.any(axis=1)):
                i = live[r]
                for j in np.flatnonzero(flags[r]):
                    try:
                        _project_site(psi, phi, i, j, sched, gens[i][1])
                    except (ExpansionFailure, PoleError) as err:
                        if sched.on_failure == "continue" and np.isfinite(psi[i, j] * phi[i, j]):
                            misses[i] += 1
                            stuck[i, j] = True
                            continue
                        alive[i] = False
                        reasons[i] = f"site {j}: {err}"
                        break
                    jumps[i] += 1
        out_psi[alive, k_out] = psi[alive]
        out_phi[alive, k_out] = phi[alive]
        out_jumps[:, k_out] = jumps
    out_psi[~alive] = np.nan
    out_phi[~alive] = np.nan
    return out_psi, out_phi, out_jumps, ~alive, reasons, misses


def chunk_size(n_noise):
    """Trajectories per chunk for a model with ``n_noise`` noise columns."""
    return int(max(8, min(MAX_CHUNK, NOISE_BUDGET // (NOISE_BLOCK * max(n_noise, 1)))))


def _thread_count(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def run_ensemble(p, sched, init=None, threads=None, first=0, count=None):
    """Run trajectories ``first .. first+count-1`` (default: all of ``sched``).

    Trajectory ``k`` is seeded by :func:`trajectory_seed` ``(master_seed, k)``;
    the result is independent of ``threads`` and of the chunk layout.
    """
    init = init if init is not None else initial_state("coherent-x", p)
    if init.n != p.n:
        raise ValueError(f"initial state has {init.n} sites, model has {p.n}")
    bad = should_project(init.psi, init.phi, sched.z_max, sched.eps)
    if bad.any():
        raise ValueError(f"initial state violates the regularisation bounds at sites {np.flatnonzero(bad)}")
    count = sched.trajectories if count is None else count
    stepper = _Stepper(p)
    plan = _step_plan(sched.t_out, sched.dt)
    ids = np.arange(first, first + count)
    size = chunk_size(stepper.n_noise)
    chunks = [ids[i:i + size] for i in range(0, count, size)]

    def work(chunk):
        return _run_chunk(p, sched, [trajectory_seed(sched.master_seed, k) for k in chunk],
                          init, stepper, plan)

    nthreads = _thread_count(threads)
    if nthreads == 1 or len(chunks) == 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(nthreads) as pool:
            parts = list(pool.map(work, chunks))
    psi = np.concatenate([q[0] for q in parts])
    phi = np.concatenate([q[1] for q in parts])
    jumps = np.concatenate([q[2] for q in parts])
    aborted = np.concatenate([q[3] for q in parts])
    misses = np.concatenate([q[5] for q in parts])
    reasons = {}
    for chunk, q in zip(chunks, parts):
        reasons.update({int(chunk[i]): r for i, r in q[4].items()})
    frac = aborted.mean()
    if frac > ABORT_WARN_FRACTION:
        warnings.warn(f"{aborted.sum()} of {count} trajectories aborted ({frac:.2%}); "
                      "they are excluded from all estimates", RuntimeWarning, stacklevel=2)
    return EnsembleResult(np.array(sched.t_out), psi, phi, jumps, aborted, reasons, misses)


def run_trajectory(p, sched, seed_index=0, init=None):
    """Single trajectory ``seed_index`` of the ensemble defined by ``sched``."""
    return run_ensemble(p, sched, init, threads=1, first=seed_index, count=1)
