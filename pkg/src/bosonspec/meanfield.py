"""Gutzwiller mean-field dynamics of the dissipative Bose-Hubbard chain.

The chain state is a product of single-site density matrices rho_j (shape
(L, d, d)).  Each site evolves under an effective Hamiltonian carrying the
neighbor coherences and under the bond dissipator reduced over neighbors,

    d rho_j / dt = -i [h_j, rho_j]
                   + kappa sum_{r,s} (A^r rho_j A^s+ - {A^s+ A^r, rho_j}/2)
                                     (Gamma_{j+1}^{rs} + Gamma_{j-1}^{rs})
                   + local dephasing / pump / loss / two-particle loss,

with A = (1, b+, b, n) and Gamma the 4x4 matrix of neighbor expectations.
Periodic boundaries throughout; a uniform chain stays uniform exactly, which
the steady-state search exploits by treating a single site that sees itself
as both neighbors.

Linearizing around a uniform steady state couples site j only to j +- 1
through the symmetric combination delta_{j+1} + delta_{j-1}, so plane-wave
perturbations delta_j = X exp(i phi j) close on themselves and the full
linear map block-diagonalizes into L matrices of side d^2,

    M(phi) = M_loc + 2 cos(phi) M_half.

Explicit time stepping is stability-limited by the fastest coherences in
the truncated space (rates grow like U d^2 / 2 and kappa d^2), so step
sizes are chosen from a power-iteration estimate of the linearization
radius rather than fixed a priori.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import (ConfigError, NonConvergenceError, NonUniformRegimeError,
                     TruncationError)
from .fock import ModelParams
from .linalg import eig_general

TRACE_DRIFT_WARN = 1e-7
TRACE_DRIFT_FAIL = 1e-5
TOP_POPULATION_FAIL = 1e-3
DT_CAP = 0.005
RK4_SAFETY = 2.2          # |lambda| dt kept below the ~2.8 stability bound


class SiteOps:
    """Dense single-site operators and their products for one cutoff."""

    def __init__(self, d):
        self.d = d
        nu = np.arange(d, dtype=np.float64)
        self.n = np.diag(nu).astype(np.complex128)
        self.b = np.diag(np.sqrt(nu[1:]), k=1).astype(np.complex128)
        self.bd = self.b.conj().T.copy()
        self.eye = np.eye(d, dtype=np.complex128)
        self.nn = self.n @ self.n
        self.b2 = self.b @ self.b
        self.bd2 = self.bd @ self.bd
        self.bdn = self.bd @ self.n
        self.bn = self.b @ self.n
        self.nb = self.n @ self.b
        self.nbd = self.n @ self.bd
        self.bbd = self.b @ self.bd
        self.n2loss = self.bd2 @ self.b2     # (b+)^2 b^2
        # A = (1, b+, b, n) and the anticommutator kernels K[r,s] = A_s+ A_r
        self.A = np.stack([self.eye, self.bd, self.b, self.n])
        self.Adag = np.stack([m.conj().T for m in self.A])
        self.K = np.einsum("sab,rbc->rsac", self.Adag, self.A)
        # expectation operators for Gamma, laid out as the 4x4 pattern.
        # The (2, 2) entry is the truncated b b+ product, not n + 1: the
        # two differ by d p_top, and only the truncated form keeps the
        # reduced flow exactly density conserving within the cutoff space.
        Z = np.zeros_like(self.n)
        self.G = np.array([
            [self.nn, self.bdn, -self.bn, -self.n],
            [self.nb, self.n, -self.b2, -self.b],
            [-self.nbd, -self.bd2, self.bbd, self.bd],
            [-self.n, -self.bd, self.b, Z],
        ])
        self.G_const = np.zeros((4, 4))
        self.G_const[3, 3] = 1.0


@lru_cache(maxsize=8)
def site_ops(d):
    return SiteOps(d)


@dataclass
class ChainState:
    """Product state of the chain: rho[j] is the site-j density matrix."""

    rho: np.ndarray
    t: float = 0.0

    @property
    def L(self):
        return self.rho.shape[0]

    @property
    def d(self):
        return self.rho.shape[1]

    def copy(self):
        return ChainState(rho=self.rho.copy(), t=self.t)


def coherent_site(psi, d):
    """Coherent-state density matrix with amplitude psi, renormalized."""
    psi = complex(psi)
    if psi == 0:
        amp = np.zeros(d, dtype=np.complex128)
        amp[0] = 1.0
    else:
        nu = np.arange(d)
        log_fact = np.cumsum(np.log(np.maximum(nu, 1)))
        amp = np.exp(nu * np.log(psi) - 0.5 * log_fact)
    amp = amp / np.linalg.norm(amp)
    return np.outer(amp, amp.conj())


def uniform_chain(psi, L, d):
    site = coherent_site(psi, d)
    return ChainState(rho=np.broadcast_to(site, (L, d, d)).copy())


def thermal_steady(nbar, d):
    """Normalized geometric-occupation state with target mean nbar.

    p_nu ~ (nbar / (nbar+1))^nu on nu < d; warns when the discarded tail
    mass exceeds 1e-8, since the truncated mean then visibly lags nbar.
    """
    if nbar < 0:
        raise ConfigError("nbar must be non-negative")
    if nbar == 0:
        rho = np.zeros((d, d), dtype=np.complex128)
        rho[0, 0] = 1.0
        return rho
    q = nbar / (nbar + 1.0)
    weights = q ** np.arange(d)
    tail = q ** d          # mass beyond the cutoff, in units of the full sum
    if tail * (1.0 - q) > 1e-8:
        warnings.warn(f"thermal tail mass {tail * (1 - q):.2e} beyond cutoff "
                      f"d={d}; increase d_max", stacklevel=2)
    weights = weights / weights.sum()
    return np.diag(weights).astype(np.complex128)


def expectations(rho, op):
    """tr(rho_j op) for every site; rho is (L, d, d)."""
    return np.einsum("jab,ba->j", rho, op)


def _bond_term(rho, W, ops):
    """Bond superoperator with weights W_j = Gamma_{j+1} + Gamma_{j-1}."""
    X = np.matmul(ops.A[None, :, :, :], rho[:, None, :, :])
    Y = np.matmul(X[:, :, None, :, :], ops.Adag[None, None, :, :, :])
    AC = np.matmul(ops.K[None], rho[:, None, None, :, :]) \
        + np.matmul(rho[:, None, None, :, :], ops.K[None])
    return np.einsum("jrs,jrsab->jab", W, Y - 0.5 * AC)


def _local_channels(rho, p, ops):
    out = np.zeros_like(rho)
    if p.gamma:
        out += p.gamma * (ops.n @ rho @ ops.n
                          - 0.5 * (ops.nn @ rho + rho @ ops.nn))
    if p.r_p:
        out += p.r_p * (ops.bd @ rho @ ops.b
                        - 0.5 * (ops.bbd @ rho + rho @ ops.bbd))
    if p.r_l:
        out += p.r_l * (ops.b @ rho @ ops.bd
                        - 0.5 * (ops.n @ rho + rho @ ops.n))
    if p.r_t:
        out += p.r_t * (ops.b2 @ rho @ ops.bd2
                        - 0.5 * (ops.n2loss @ rho + rho @ ops.n2loss))
    return out


def _rhs(rho, p, ops):
    # tr(b+ rho) rather than conj(tr(b rho)): equal on Hermitian states,
    # and keeps the map holomorphic so the linearization is its derivative
    psi = expectations(rho, ops.b)
    psi_bar = expectations(rho, ops.bd)
    psi_nb = np.roll(psi, 1) + np.roll(psi, -1)
    psi_bar_nb = np.roll(psi_bar, 1) + np.roll(psi_bar, -1)
    h_diag = 0.5 * p.U * (ops.nn - ops.n) - p.mu * ops.n
    h = h_diag[None, :, :] \
        - p.J * (psi_nb[:, None, None] * ops.bd
                 + psi_bar_nb[:, None, None] * ops.b)
    out = -1j * (h @ rho - rho @ h)
    if p.kappa:
        gam = np.einsum("jab,rsba->jrs", rho, ops.G) + ops.G_const[None]
        W = np.roll(gam, 1, axis=0) + np.roll(gam, -1, axis=0)
        out += p.kappa * _bond_term(rho, W, ops)
    out += _local_channels(rho, p, ops)
    return out


def mf_rhs(state, p: ModelParams):
    """Time derivative of the chain state (accepts ChainState or array)."""
    rho = state.rho if isinstance(state, ChainState) else np.asarray(state)
    return _rhs(rho, p, site_ops(rho.shape[1]))


def _rk4_step(rho, p, ops, dt):
    k1 = _rhs(rho, p, ops)
    k2 = _rhs(rho + (0.5 * dt) * k1, p, ops)
    k3 = _rhs(rho + (0.5 * dt) * k2, p, ops)
    k4 = _rhs(rho + dt * k3, p, ops)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _power_radius(m, iters=60):
    """Dominant eigenvalue magnitude by power iteration (deterministic)."""
    rng = np.random.default_rng(12345)
    v = rng.normal(size=m.shape[0]) + 1j * rng.normal(size=m.shape[0])
    v /= np.linalg.norm(v)
    r = 0.0
    for _ in range(iters):
        w = m @ v
        r = np.linalg.norm(w)
        if r == 0.0:
            return 0.0
        v = w / r
    return float(r)


def stable_dt(site_rho, p: ModelParams, cap=DT_CAP):
    """Step size keeping RK4 inside its stability region.

    The binding modes are the highest coherences of the cutoff space; their
    rates are estimated as the spectral radius of the linearization blocks
    at phi = 0 and phi = pi around the given site state.
    """
    lin = MFLinearization(np.asarray(site_rho, dtype=np.complex128), p)
    rad = max(_power_radius(lin.block(0.0)), _power_radius(lin.block(np.pi)))
    if rad == 0.0:
        return cap
    return float(min(cap, RK4_SAFETY / rad))


@dataclass
class MFTrajectory:
    times: np.ndarray
    psi: np.ndarray        # (samples, L) site coherences tr(rho_j b)
    density: np.ndarray    # (samples, L) site densities
    final: ChainState
    trace_drift: float
    top_population: float
    dt: float


def _integrate(rho0, p, ops, t0, t_end, dt, sample_every):
    rho = rho0.copy()
    n_steps = max(1, int(round((t_end - t0) / dt)))
    times = [t0]
    psi_rec = [expectations(rho, ops.b)]
    den_rec = [expectations(rho, ops.n).real]
    drift = 0.0
    top = 0.0
    for step in range(1, n_steps + 1):
        rho = _rk4_step(rho, p, ops, dt)
        on_sample = step % sample_every == 0
        if on_sample or step == n_steps:
            tr_err = np.einsum("jaa->j", rho) - 1.0
            if not np.all(np.isfinite(tr_err)):
                return None, None
            drift = max(drift, float(np.max(np.abs(tr_err))))
            top = max(top, float(np.max(rho[:, -1, -1].real)))
            if drift > TRACE_DRIFT_FAIL:
                return None, None
            if top > TOP_POPULATION_FAIL:
                raise TruncationError(
                    f"top-level population {top:.2e} at t={t0 + step * dt:.2f}; "
                    f"increase d_max")
            # recording stays on the cadence so the grid is uniform even
            # when sample_every does not divide n_steps
            if on_sample:
                times.append(t0 + step * dt)
                psi_rec.append(expectations(rho, ops.b))
                den_rec.append(expectations(rho, ops.n).real)
    return rho, (np.array(times), np.array(psi_rec), np.array(den_rec),
                 drift, top)


def evolve_mf(state: ChainState, p: ModelParams, t_end, dt=None,
              sample_every=None) -> MFTrajectory:
    """RK4 integration of the mean-field equations up to state.t + t_end.

    dt=None picks the largest stable step (capped at 0.005) and halves it
    up to four times if the run still diverges.  An explicit dt is used
    as given; divergence then raises instead of retrying.  Trace is
    monitored, not renormalized; population reaching the top Fock level
    raises a cutoff error.
    """
    ops = site_ops(state.d)
    rho0 = state.rho.astype(np.complex128, copy=True)
    auto = dt is None
    if auto:
        dt = stable_dt(rho0.mean(axis=0), p)
    attempts = 5 if auto else 1
    for attempt in range(attempts):
        n_steps = max(1, int(round(t_end / dt)))
        se = sample_every if sample_every is not None \
            else max(1, n_steps // 400)
        rho, rec = _integrate(rho0, p, ops, state.t, state.t + t_end, dt, se)
        if rho is not None:
            times, psis, dens, drift, top = rec
            final = ChainState(rho=rho, t=state.t + n_steps * dt)
            return MFTrajectory(times=times, psi=psis, density=dens,
                                final=final, trace_drift=drift,
                                top_population=top, dt=dt)
        dt = 0.5 * dt
    raise TruncationError(
        f"integration diverged (trace drift above {TRACE_DRIFT_FAIL:g}); "
        f"smallest step tried {dt * 2:.2e}")


def _default_seed_density(p: ModelParams, model: int):
    if model == 1:
        if p.N is None:
            raise ConfigError("model 1 mean field needs N (sets N/L)")
        return p.nbar
    r_d = 0.5 * (p.r_p - p.r_l)
    n0 = r_d / p.r_t if r_d > 0 else 0.0
    return n0 if n0 > 0 else 0.5


def seed_density(p: ModelParams, model: int):
    """Default filling used for seeds and modulated initial states:
    N/L for number-conserving runs, the uniform drive balance otherwise."""
    return _default_seed_density(p, model)


def default_initial_site(p: ModelParams, model: int):
    """Coherent seed at the target density; a real positive psi fixes the
    phase, and the model-1 flow then conserves tr(n rho) = N / L exactly."""
    nbar = _default_seed_density(p, model)
    psi = np.sqrt(nbar) if nbar > 0 else 0.01
    return coherent_site(psi, p.d_max)


def _phase_slope(psis, dt):
    """Least-squares slope of the unwrapped phase, or None if psi died."""
    a = np.abs(psis)
    if a.min() < 1e-10:
        return None
    theta = np.unwrap(np.angle(psis))
    t = dt * np.arange(len(psis))
    return float(np.polyfit(t, theta, 1)[0])


def _centered_omega(psis, dt):
    """Average of -i psi'/psi by centered differences over the tail."""
    n = len(psis)
    lo = max(1, n - max(n // 10, 4))
    ks = np.arange(lo, n - 1)
    valid = np.abs(psis[ks]) > 1e-150
    ks = ks[valid]
    if len(ks) < 2:
        return None
    vals = -1j * (psis[ks + 1] - psis[ks - 1]) / (2.0 * dt * psis[ks])
    return complex(vals.mean())


@dataclass
class TuneResult:
    mu: float
    omega: complex
    branch: str            # 'superfluid' or 'normal'
    residual_rotation: float | None
    final_coherence: float


def tune_mu(p: ModelParams, model: int, t_relax=100.0, dt=None,
            init_site=None) -> TuneResult:
    """Chemical potential that freezes the condensate phase.

    Runs the uniform evolution at mu = 0, extracts the rotation frequency
    omega = -i psi'/psi averaged over the final tenth of the run (centered
    differences), and sets mu = -Re(omega).  |Im(omega)| < 1e-4 marks the
    superfluid branch (psi survives); the tuned run is repeated once and the
    residual phase rotation (superfluid) or final |psi| (normal) reported.
    """
    ops = site_ops(p.d_max)
    site = default_initial_site(p, model) if init_site is None else init_site
    rho = site[None, :, :].astype(np.complex128, copy=True)
    p0 = replace(p, mu=0.0, L=1)
    if dt is None:
        dt = stable_dt(site, p0)
    n_steps = int(round(t_relax / dt))
    psis = np.empty(n_steps + 1, dtype=np.complex128)
    psis[0] = expectations(rho, ops.b)[0]
    for k in range(1, n_steps + 1):
        rho = _rk4_step(rho, p0, ops, dt)
        psis[k] = expectations(rho, ops.b)[0]
    omega = _centered_omega(psis, dt)
    if omega is None:
        omega = 0.0j
        branch = "normal"
    else:
        branch = "superfluid" if abs(omega.imag) < 1e-4 else "normal"
    mu = -omega.real

    p1 = replace(p, mu=mu, L=1)
    tail = max(n_steps // 10, 10)
    psis2 = np.empty(tail + 1, dtype=np.complex128)
    psis2[0] = expectations(rho, ops.b)[0]
    for k in range(1, tail + 1):
        rho = _rk4_step(rho, p1, ops, dt)
        psis2[k] = expectations(rho, ops.b)[0]
    slope = _phase_slope(psis2, dt)
    residual = abs(slope) if slope is not None else None
    return TuneResult(mu=mu, omega=omega, branch=branch,
                      residual_rotation=residual,
                      final_coherence=float(abs(psis2[-1])))


# ---------------------------------------------------------------------------
# stationary-point solver

# real parametrization of a Hermitian matrix: diagonal, then Re and Im of
# the strict upper triangle in row-major pair order


def _herm_encode(m, iu):
    return np.concatenate([np.diag(m).real, m[iu].real, m[iu].imag])


def _herm_decode(x, d, iu):
    k = iu[0].size
    m = np.diag(x[:d].astype(np.complex128))
    vals = x[d:d + k] + 1j * x[d + k:d + 2 * k]
    m[iu] = vals
    m[(iu[1], iu[0])] = vals.conj()
    return m


def _newton_steady(site, mu0, p, model, ops, tol, max_iter=60):
    """Damped Gauss-Newton search for a stationary uniform state.

    Unknowns: Hermitian rho and mu.  Equations: the stationarity of every
    matrix element plus unit trace, a phase gauge Im tr(b rho) = 0, and for
    model 1 the conserved density tr(n rho) = N / L.  The rectangular
    system is solved by least squares, which tolerates the exactly null
    directions (gauge and mu decouple in the normal phase).
    """
    d = ops.d
    iu = np.triu_indices(d, 1)
    nk = iu[0].size
    K = d * d
    diag_cols = np.arange(d) * (d + 1)
    up_cols = iu[0] + iu[1] * d
    lo_cols = iu[1] + iu[0] * d

    want_density = (model == 1)
    n_target = p.nbar if want_density else 0.0
    n_rows = K + 2 + (1 if want_density else 0)

    def residual_vec(rho, mu):
        pw = replace(p, mu=mu, L=1)
        r = _rhs(rho[None], pw, ops)[0]
        parts = [_herm_encode(r, iu),
                 [np.trace(rho).real - 1.0],
                 [np.trace(ops.b @ rho).imag]]
        if want_density:
            parts.append([np.trace(ops.n @ rho).real - n_target])
        return np.concatenate([np.atleast_1d(q) for q in parts])

    rho = site.copy()
    mu = mu0
    F = residual_vec(rho, mu)
    nrm = np.linalg.norm(F)
    for it in range(max_iter):
        if nrm < tol:
            return rho, mu, nrm, True
        pw = replace(p, mu=mu, L=1)
        M = MFLinearization(rho, pw).block(0.0)
        cols_d = M[:, diag_cols]
        cols_u = M[:, up_cols]
        cols_l = M[:, lo_cols]
        imgs = np.concatenate(
            [cols_d, cols_u + cols_l, 1j * (cols_u - cols_l)], axis=1)
        ims = imgs.reshape((d, d, K), order="F")
        J = np.zeros((n_rows, K + 1))
        J[:d, :K] = ims[np.arange(d), np.arange(d), :].real
        J[d:d + nk, :K] = ims[iu[0], iu[1], :].real
        J[d + nk:K, :K] = ims[iu[0], iu[1], :].imag
        J[:K, K] = _herm_encode(1j * (ops.n @ rho - rho @ ops.n), iu)
        # trace row: d/dx of the sum of diagonal entries
        J[K, :d] = 1.0
        # gauge row: Im tr(b rho) depends only on the Im part of the
        # (nu, nu+1) pairs through -sqrt(nu+1)
        gauge = np.zeros(K + 1)
        for j, (a, b) in enumerate(zip(iu[0], iu[1])):
            if b == a + 1:
                gauge[d + nk + j] = -np.sqrt(a + 1.0)
        J[K + 1] = gauge
        if want_density:
            J[K + 2, :d] = np.arange(d)
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        s = 1.0
        x0 = _herm_encode(rho, iu)
        while True:
            rho_n = _herm_decode(x0 + s * step[:K], d, iu)
            mu_n = mu + s * step[K]
            Fn = residual_vec(rho_n, mu_n)
            nn = np.linalg.norm(Fn)
            if nn <= (1.0 - 1e-4 * s) * nrm or s < 1e-4:
                break
            s *= 0.5
        if s < 1e-4 and nn >= nrm:
            return rho, mu, nrm, False
        rho, mu, F, nrm = rho_n, mu_n, Fn, nn
    return rho, mu, nrm, nrm < tol


@dataclass
class SteadyStateReport:
    mu: float
    omega: complex
    branch: str
    n0: float              # condensate density |<b>|^2
    n_total: float
    residual: float
    t_relaxed: float
    converged: bool
    method: str = "newton"
    spectrum: "MFSpectrum | None" = None


def _uniform_attractor_ok(site_rho, p, zero_tol=None):
    """True if the phi = 0 block has no growing direction.

    Exact symmetry zeros (trace functional, gauge phase, conserved
    density) sit at the origin and are ignored through zero_tol.
    """
    M = MFLinearization(site_rho, p).block(0.0)
    eigs = eig_general(M).eigenvalues
    scale = max(float(np.max(np.abs(eigs))), 1.0)
    if zero_tol is None:
        zero_tol = 1e-7 * scale
    live = eigs[np.abs(eigs) > zero_tol]
    if live.size == 0:
        return True
    return float(np.max(live.real)) <= zero_tol


def find_steady(p: ModelParams, model: int, method="auto", t_max=2000.0,
                dt=None, tol=1e-9, init_site=None, stability_check=True,
                stability_tol=1e-6, t_relax=100.0):
    """Uniform mean-field steady state with self-consistent mu.

    method 'newton' solves the stationarity equations directly (fast,
    needs a reasonable seed); 'relax' integrates the single-site flow,
    re-tuning mu from the measured phase slope between chunks until the
    residual ||d rho / dt||_F drops below tol; 'auto' tries Newton seeded
    by the coherent state, then by a short relaxation, then falls back to
    'relax'.  A Newton root that is not an attractor of the uniform flow
    (checked on the phi = 0 block) is rejected, since the integration
    path would never reach it.

    If stability screening is on, the momentum blocks at phi != 0 are then
    checked for growing directions; any instability means the uniform state
    is not the steady state of the chain and the run is rejected.

    Returns (ChainState broadcast to p.L sites, SteadyStateReport).
    """
    p.validate(model)
    ops = site_ops(p.d_max)
    site0 = default_initial_site(p, model) if init_site is None else init_site
    site0 = np.asarray(site0, dtype=np.complex128)

    rho = None
    mu = p.mu
    residual = np.inf
    t_used = 0.0
    used_method = method

    if method in ("auto", "newton"):
        nbar = _default_seed_density(p, model)
        mu0 = p.mu if p.mu else (p.U * nbar - 2.0 * p.J)
        cand, mu_c, res_c, ok = _newton_steady(site0, mu0, p, model, ops, tol)
        if ok:
            ok = (float(np.linalg.eigvalsh(cand).min()) > -1e-8
                  and _uniform_attractor_ok(cand, replace(p, mu=mu_c, L=1)))
        if not ok and method == "auto":
            traj = evolve_mf(ChainState(rho=site0[None].copy()),
                             replace(p, mu=mu0, L=1), t_end=20.0)
            t_used += 20.0
            cand, mu_c, res_c, ok = _newton_steady(
                traj.final.rho[0], mu0, p, model, ops, tol)
            if ok:
                ok = (float(np.linalg.eigvalsh(cand).min()) > -1e-8
                      and _uniform_attractor_ok(cand,
                                                replace(p, mu=mu_c, L=1)))
        if ok:
            rho, mu, residual = cand, float(mu_c), float(res_c)
            used_method = "newton"
        elif method == "newton":
            raise NonConvergenceError(
                f"newton stationary search failed (residual {res_c:.2e})")

    if rho is None:
        used_method = "relax"
        rho, mu, residual, t_used = _relax_steady(
            site0, p, model, ops, t_max, dt, tol, t_relax, t_used)
        if not _uniform_attractor_ok(rho, replace(p, mu=mu, L=1)):
            raise NonConvergenceError(
                "relaxation settled on a stationary state that is not an "
                "attractor of the uniform flow; try a different seed")

    if rho[-1, -1].real > TOP_POPULATION_FAIL:
        raise TruncationError(
            f"steady state reaches the cutoff (top population "
            f"{rho[-1, -1].real:.2e}); increase d_max")

    psi_ss = complex(np.trace(ops.b @ rho))
    n_tot = float(np.trace(ops.n @ rho).real)
    branch = "superfluid" if abs(psi_ss) ** 2 > 1e-8 else "normal"
    report = SteadyStateReport(
        mu=float(mu), omega=0.0j, branch=branch, n0=float(abs(psi_ss) ** 2),
        n_total=n_tot, residual=float(residual), t_relaxed=t_used,
        converged=True, method=used_method)

    p_out = replace(p, mu=float(mu))
    if stability_check and p.L >= 2:
        spec = mf_spectrum(rho, p_out)
        growth = max(float(np.max(blk.real)) for m, blk in
                     enumerate(spec.blocks) if m != 0)
        if growth > stability_tol:
            raise NonUniformRegimeError(
                f"uniform state unstable: growth rate {growth:.2e} at "
                f"finite momentum; non-uniform regimes are not supported")
        report.spectrum = spec
    chain = ChainState(rho=np.broadcast_to(rho, (p.L,) + rho.shape).copy(),
                       t=t_used)
    return chain, report


def _relax_steady(site0, p, model, ops, t_max, dt, tol, t_relax, t_used):
    """Time-integration fallback for find_steady."""
    tuned = tune_mu(p, model, t_relax=t_relax, dt=dt, init_site=site0)
    mu = tuned.mu
    t_used += t_relax * 1.1
    rho = site0[None, :, :].astype(np.complex128, copy=True)
    if dt is None:
        dt = stable_dt(site0, replace(p, mu=mu, L=1))
    chunk_steps = max(int(round(10.0 / dt)), 10)
    residual = np.inf
    while t_used < t_max:
        pw = replace(p, mu=mu, L=1)
        psis = np.empty(chunk_steps + 1, dtype=np.complex128)
        psis[0] = expectations(rho, ops.b)[0]
        for k in range(1, chunk_steps + 1):
            rho = _rk4_step(rho, pw, ops, dt)
            psis[k] = expectations(rho, ops.b)[0]
        if not np.isfinite(psis[-1]):
            raise NonConvergenceError("relaxation diverged; reduce dt")
        t_used += chunk_steps * dt
        slope = _phase_slope(psis, dt)
        if slope is not None and abs(slope) < 1.0:
            mu -= slope
        pw = replace(p, mu=mu, L=1)
        residual = float(np.linalg.norm(_rhs(rho, pw, ops)[0]))
        if residual < tol:
            return rho[0], mu, residual, t_used
    raise NonConvergenceError(
        f"steady-state residual {residual:.2e} after t={t_used:.0f} "
        f"(tol {tol:g})")


# ---------------------------------------------------------------------------
# linearization around a uniform steady state


def _vec(m):
    return m.reshape(-1, order="F")


def _rowvec(m):
    # functional X -> tr(m X) on column-stacked X
    return m.ravel()


def _dissipator_matrix(c):
    cd = c.conj().T
    cdc = cd @ c
    eye = np.eye(c.shape[0], dtype=complex)
    return (np.kron(c.conj(), c)
            - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye))


class MFLinearization:
    """Linear response of the chain around a uniform state.

    apply_chain evaluates the linearized equations site by site (literal
    transcription with explicit neighbors); block and full_matrix assemble
    the same map as matrices through Kronecker products.  The two routes
    are independent enough to cross-check each other.
    """

    def __init__(self, site_rho, p: ModelParams):
        self.p = p
        self.ops = site_ops(site_rho.shape[0])
        self.rho = np.asarray(site_rho, dtype=np.complex128)
        ops = self.ops
        self.psi = complex(np.trace(ops.b @ self.rho))
        psi_bar = complex(np.trace(ops.bd @ self.rho))
        self.gamma_ss = np.einsum("ab,rsba->rs", self.rho, ops.G) \
            + ops.G_const
        self.h_ss = 0.5 * p.U * (ops.nn - ops.n) - p.mu * ops.n \
            - p.J * (2.0 * self.psi * ops.bd + 2.0 * psi_bar * ops.b)
        # bond response to the state itself, D[r,s] = A_r rho A_s+ - {K,rho}/2
        X = np.matmul(ops.A, self.rho[None, :, :])
        Y = np.matmul(X[:, None, :, :], ops.Adag[None, :, :, :])
        AC = np.matmul(ops.K, self.rho[None, None, :, :]) \
            + np.matmul(self.rho[None, None, :, :], ops.K)
        self.D_ss = Y - 0.5 * AC
        self._m_loc = None
        self._m_half = None

    # -- literal route -----------------------------------------------------
    def apply_chain(self, delta):
        p, ops = self.p, self.ops
        delta = np.asarray(delta, dtype=np.complex128)
        tr_b = expectations(delta, ops.b)
        tr_bd = expectations(delta, ops.bd)
        nb_b = np.roll(tr_b, 1) + np.roll(tr_b, -1)
        nb_bd = np.roll(tr_bd, 1) + np.roll(tr_bd, -1)
        dh = -p.J * (nb_b[:, None, None] * ops.bd
                     + nb_bd[:, None, None] * ops.b)
        out = -1j * (self.h_ss @ delta - delta @ self.h_ss)
        out += -1j * (dh @ self.rho[None] - self.rho[None] @ dh)
        if p.kappa:
            out += p.kappa * _bond_term(
                delta, np.broadcast_to(2.0 * self.gamma_ss,
                                       (delta.shape[0], 4, 4)), ops)
            dgam = np.einsum("jab,rsba->jrs", delta, ops.G)
            W2 = np.roll(dgam, 1, axis=0) + np.roll(dgam, -1, axis=0)
            out += p.kappa * np.einsum("jrs,rsab->jab", W2, self.D_ss)
        out += _local_channels(delta, p, ops)
        return out

    # -- matrix route ------------------------------------------------------
    def _assemble(self):
        p, ops = self.p, self.ops
        d = ops.d
        eye = ops.eye
        h = self.h_ss
        m_loc = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
        if p.kappa:
            for r in range(4):
                for s in range(4):
                    w = 2.0 * p.kappa * self.gamma_ss[r, s]
                    if w == 0:
                        continue
                    K = ops.K[r, s]
                    m_loc += w * (np.kron(ops.Adag[s].T, ops.A[r])
                                  - 0.5 * np.kron(eye, K)
                                  - 0.5 * np.kron(K.T, eye))
        if p.gamma:
            m_loc += p.gamma * _dissipator_matrix(ops.n)
        if p.r_p:
            m_loc += p.r_p * _dissipator_matrix(ops.bd)
        if p.r_l:
            m_loc += p.r_l * _dissipator_matrix(ops.b)
        if p.r_t:
            m_loc += p.r_t * _dissipator_matrix(ops.b2)

        m_half = np.zeros((d * d, d * d), dtype=np.complex128)
        comm_bd = ops.bd @ self.rho - self.rho @ ops.bd
        comm_b = ops.b @ self.rho - self.rho @ ops.b
        m_half += 1j * p.J * np.outer(_vec(comm_bd), _rowvec(ops.b))
        m_half += 1j * p.J * np.outer(_vec(comm_b), _rowvec(ops.bd))
        if p.kappa:
            for r in range(4):
                for s in range(4):
                    g = ops.G[r, s]
                    if not g.any():
                        continue
                    m_half += p.kappa * np.outer(_vec(self.D_ss[r, s]),
                                                 _rowvec(g))
        self._m_loc, self._m_half = m_loc, m_half

    @property
    def m_loc(self):
        if self._m_loc is None:
            self._assemble()
        return self._m_loc

    @property
    def m_half(self):
        if self._m_half is None:
            self._assemble()
        return self._m_half

    def block(self, phi):
        """Matrix on plane-wave perturbations X exp(i phi j)."""
        return self.m_loc + 2.0 * np.cos(phi) * self.m_half

    def full_matrix(self, L):
        """Dense matrix of the chain map via apply_chain on unit perturbations.

        Global index = j * d^2 + (m + n * d) for the site-j element (m, n).
        Quadratic in L * d^2; meant for cross-checks on small systems.
        """
        d = self.ops.d
        n_tot = L * d * d
        out = np.empty((n_tot, n_tot), dtype=np.complex128)
        delta = np.zeros((L, d, d), dtype=np.complex128)
        col = 0
        for j in range(L):
            for n in range(d):
                for m in range(d):
                    delta[j, m, n] = 1.0
                    img = self.apply_chain(delta)
                    delta[j, m, n] = 0.0
                    out[:, col] = np.concatenate(
                        [img[k].reshape(-1, order="F") for k in range(L)])
                    col += 1
        return out


def linearize(site_rho, p: ModelParams) -> MFLinearization:
    rho = np.asarray(site_rho)
    if rho.ndim == 3:
        rho = rho[0]
    return MFLinearization(rho, p)


def block_matrix(site_rho, p: ModelParams, m):
    """Momentum-block matrix at phi = 2 pi m / L."""
    lin = linearize(site_rho, p)
    return lin.block(2.0 * np.pi * m / p.L)


@dataclass
class MFSpectrum:
    """Union of the momentum-block spectra of the linearized chain."""

    eigenvalues: np.ndarray
    blocks: list = field(default_factory=list)   # blocks[m], canonical order
    L: int = 0
    d: int = 0

    def oscillating(self, eps_im):
        return self.eigenvalues[np.abs(self.eigenvalues.imag) > eps_im]


def mf_spectrum(site_rho, p: ModelParams) -> MFSpectrum:
    """All L * d^2 linearization eigenvalues, resolved by momentum block.

    Blocks m and L - m share the same matrix (the coupling is through
    cos phi), so only floor(L/2) + 1 eigendecompositions are run.
    """
    rho = np.asarray(site_rho)
    if rho.ndim == 3:
        rho = rho[0]
    lin = MFLinearization(rho, p)
    L = p.L
    blocks = [None] * L
    for m in range(L // 2 + 1):
        eigs = eig_general(lin.block(2.0 * np.pi * m / L)).eigenvalues
        blocks[m] = eigs
        if m != 0 and (L - m) != m:
            blocks[L - m] = eigs.copy()
    allv = np.concatenate(blocks)
    idx = np.arange(len(allv))
    order = np.lexsort((idx, allv.imag, -allv.real))
    return MFSpectrum(eigenvalues=allv[order], blocks=blocks, L=L,
                      d=rho.shape[-1])


def gap_drift_check(p: ModelParams, model: int, d_step=4, **steady_kwargs):
    """Re-run the steady state and gap at d_max + d_step; report the drift.

    Returns (gap_at_d, gap_at_d_plus, drift) using the slowest nonzero
    decay rate of the block spectrum as the gap proxy.
    """
    def slowest(pp):
        chain, rep = find_steady(pp, model, stability_check=False,
                                 **steady_kwargs)
        pp_tuned = replace(pp, mu=rep.mu)
        spec = mf_spectrum(chain.rho[0], pp_tuned)
        re = np.abs(spec.eigenvalues.real)
        re = re[np.abs(spec.eigenvalues) > 1e-4]
        return float(re.min())

    g0 = slowest(p)
    g1 = slowest(replace(p, d_max=p.d_max + d_step))
    return g0, g1, abs(g1 - g0)
