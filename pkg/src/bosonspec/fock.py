"""Occupation-number bases and operators for bosonic chains.

Bases enumerate occupation tuples in ascending lexicographic order, so every
operator matrix built here is reproducible bit for bit.  Chains are periodic;
the bond sums run over j = 1..L with site L+1 identified with site 1, so L = 2
counts each bond twice (both hopping and bond dissipation are doubled there).
Quantitative chain results should use L >= 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionLimitError

MAX_STATES = 10_000


@dataclass
class ModelParams:
    """Couplings of the dissipative Bose-Hubbard chain.

    Rates: kappa (bond dissipation), gamma (dephasing), r_p (single-particle
    pump), r_l (single-particle loss), r_t (two-particle loss).  N is the
    total occupation for number-conserving runs; d_max the per-site cutoff.
    """

    J: float = 1.0
    U: float = 0.0
    mu: float = 0.0
    kappa: float = 0.0
    gamma: float = 0.0
    r_p: float = 0.0
    r_l: float = 0.0
    r_t: float = 0.0
    L: int = 2
    N: int | None = None
    d_max: int = 20

    def validate(self, model: int) -> None:
        if model not in (1, 2):
            raise ConfigError(f"model must be 1 or 2, got {model}")
        for name in ("kappa", "gamma", "r_p", "r_l", "r_t"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.L < 1:
            raise ConfigError("L must be at least 1")
        if self.d_max < 2:
            raise ConfigError("d_max must be at least 2")
        if model == 1:
            if self.r_p != 0 or self.r_l != 0 or self.r_t != 0:
                raise ConfigError("model 1 keeps r_p = r_l = r_t = 0")
            if self.N is not None and self.N < 0:
                raise ConfigError("N must be non-negative")
        else:
            if self.gamma != 0:
                raise ConfigError("model 2 keeps gamma = 0")
            if self.r_t <= 0:
                raise ConfigError("model 2 needs r_t > 0")

    @property
    def nbar(self) -> float | None:
        """Mean filling N/L when a total occupation is set."""
        if self.N is None:
            return None
        return self.N / self.L


def _fixed_n_tuples(L, N):
    if L == 1:
        yield (N,)
        return
    for first in range(N + 1):
        for rest in _fixed_n_tuples(L - 1, N - first):
            yield (first,) + rest


class FockBasis:
    """Deterministic enumeration of occupation tuples for one of three modes:

    single_site(d_max)      occupations 0..d_max-1 on one site
    chain_fixed_n(L, N)     L sites, total occupation exactly N
    chain_truncated(L, d_max)  L sites, each occupation below d_max
    """

    def __init__(self, kind, states, L, d_max=None, N=None):
        self.kind = kind
        self.states = states
        self.L = L
        self.d_max = d_max
        self.N = N
        self.index = {occ: i for i, occ in enumerate(states)}
        # occupations as an array for fast diagonal observables
        self.occupations = np.array(states, dtype=np.int64)

    @classmethod
    def single_site(cls, d_max, max_states=MAX_STATES):
        if d_max < 1:
            raise ConfigError("d_max must be positive")
        if d_max > max_states:
            raise DimensionLimitError(
                f"single_site dimension {d_max} exceeds limit {max_states}")
        states = tuple((nu,) for nu in range(d_max))
        return cls("single_site", states, L=1, d_max=d_max)

    @classmethod
    def chain_fixed_n(cls, L, N, max_states=MAX_STATES):
        if L < 1 or N < 0:
            raise ConfigError("need L >= 1 and N >= 0")
        dim = math.comb(L + N - 1, N)
        if dim > max_states:
            raise DimensionLimitError(
                f"chain_fixed_n dimension {dim} exceeds limit {max_states}")
        states = tuple(_fixed_n_tuples(L, N))
        return cls("chain_fixed_n", states, L=L, N=N)

    @classmethod
    def chain_truncated(cls, L, d_max, max_states=MAX_STATES):
        if L < 1 or d_max < 1:
            raise ConfigError("need L >= 1 and d_max >= 1")
        dim = d_max ** L
        if dim > max_states:
            raise DimensionLimitError(
                f"chain_truncated dimension {dim} exceeds limit {max_states}")
        # ascending lexicographic enumeration
        states = []
        occ = [0] * L
        while True:
            states.append(tuple(occ))
            k = L - 1
            while k >= 0 and occ[k] == d_max - 1:
                occ[k] = 0
                k -= 1
            if k < 0:
                break
            occ[k] += 1
        return cls("chain_truncated", states, L=L, d_max=d_max)

    @property
    def dim(self):
        return len(self.states)

    def index_of(self, occ):
        return self.index[tuple(occ)]

    def sibling(self, N):
        """Fixed-N basis over the same chain with a different total."""
        if self.kind != "chain_fixed_n":
            raise ConfigError("sibling bases only exist for chain_fixed_n")
        return FockBasis.chain_fixed_n(self.L, N)


def _check_site(basis, site):
    if not 0 <= site < basis.L:
        raise ConfigError(f"site {site} outside 0..{basis.L - 1}")


def adjoint(a):
    """Conjugate transpose in canonical sparse form."""
    out = sp.csr_matrix(a.conj().T)
    out.sum_duplicates()
    out.sort_indices()
    return out


def _build_csr(rows, cols, vals, shape):
    m = sp.csr_matrix((vals, (rows, cols)), shape=shape, dtype=np.complex128)
    m.sum_duplicates()
    m.sort_indices()
    return m


def site_operator(basis, site, kind):
    """Single-site ladder or number operator as a sparse matrix.

    kind is 'annihilate', 'create' or 'number'.  On cutoff bases the ladder
    operators are square and simply drop amplitudes beyond the cutoff.  On a
    fixed-N basis 'annihilate' maps into the (N-1) basis and 'create' into
    the (N+1) basis, so the returned matrix is rectangular.
    """
    _check_site(basis, site)
    if kind == "number":
        occ = basis.occupations[:, site].astype(np.float64)
        return sp.diags(occ.astype(np.complex128), format="csr")
    if kind not in ("annihilate", "create"):
        raise ConfigError(f"unknown operator kind {kind!r}")

    if basis.kind == "chain_fixed_n":
        if kind == "annihilate":
            if basis.N == 0:
                raise ConfigError("cannot annihilate on an N=0 basis")
            target = basis.sibling(basis.N - 1)
            rows, cols, vals = [], [], []
            for i, occ in enumerate(basis.states):
                nu = occ[site]
                if nu == 0:
                    continue
                dst = list(occ)
                dst[site] = nu - 1
                rows.append(target.index_of(dst))
                cols.append(i)
                vals.append(math.sqrt(nu))
            return _build_csr(rows, cols, vals, (target.dim, basis.dim))
        # create = adjoint of annihilate on the (N+1) basis
        upper = basis.sibling(basis.N + 1)
        return adjoint(site_operator(upper, site, "annihilate"))

    # cutoff bases: square matrices
    d_max = basis.d_max
    rows, cols, vals = [], [], []
    for i, occ in enumerate(basis.states):
        nu = occ[site]
        if kind == "annihilate":
            if nu == 0:
                continue
            dst = list(occ)
            dst[site] = nu - 1
            rows.append(basis.index_of(dst))
            cols.append(i)
            vals.append(math.sqrt(nu))
        else:
            if nu + 1 >= d_max:
                continue
            dst = list(occ)
            dst[site] = nu + 1
            rows.append(basis.index_of(dst))
            cols.append(i)
            vals.append(math.sqrt(nu + 1))
    return _build_csr(rows, cols, vals, (basis.dim, basis.dim))


def hop_operator(basis, i, j):
    """Bilinear b_i^dag b_j, assembled inside the basis.

    Stays inside a fixed-N space by construction; on cutoff bases amplitudes
    that would exceed the cutoff are dropped.
    """
    _check_site(basis, i)
    _check_site(basis, j)
    rows, cols, vals = [], [], []
    for col, occ in enumerate(basis.states):
        nu_j = occ[j]
        if nu_j == 0:
            continue
        if i == j:
            rows.append(col)
            cols.append(col)
            vals.append(float(nu_j))
            continue
        nu_i = occ[i]
        if basis.kind == "chain_truncated" and nu_i + 1 >= basis.d_max:
            continue
        dst = list(occ)
        dst[j] = nu_j - 1
        dst[i] = nu_i + 1
        rows.append(basis.index_of(dst))
        cols.append(col)
        vals.append(math.sqrt(nu_j * (nu_i + 1)))
    return _build_csr(rows, cols, vals, (basis.dim, basis.dim))


def hamiltonian(basis, p: ModelParams):
    """Bose-Hubbard chain Hamiltonian with chemical potential.

    H = sum_j [ -J (b_j^dag b_{j+1} + h.c.) + U/2 n_j (n_j - 1) - mu n_j ]
    with periodic boundaries.  Single-site bases get only the on-site part.
    """
    dim = basis.dim
    occ = basis.occupations
    diag = np.zeros(dim)
    for j in range(basis.L):
        nu = occ[:, j].astype(np.float64)
        diag += 0.5 * p.U * nu * (nu - 1.0) - p.mu * nu
    h = sp.diags(diag.astype(np.complex128), format="csr")
    if basis.L >= 2:
        for j in range(basis.L):
            jn = (j + 1) % basis.L
            hop = hop_operator(basis, j, jn)
            h = h - p.J * (hop + adjoint(hop))
    h = sp.csr_matrix(h)
    h.sum_duplicates()
    h.sort_indices()
    return h


def bond_jump(basis, j, kappa):
    """Bond operator sqrt(kappa) (b_j^dag + b_{j+1}^dag)(b_j - b_{j+1})."""
    _check_site(basis, j)
    jn = (j + 1) % basis.L
    op = (hop_operator(basis, j, j) - hop_operator(basis, j, jn)
          + hop_operator(basis, jn, j) - hop_operator(basis, jn, jn))
    return sp.csr_matrix(math.sqrt(kappa) * op)


def jump_operators(basis, p: ModelParams, model: int):
    """Jump operators of the chosen model, in deterministic order.

    Order: bond operators by bond index, then per-site channels (dephasing
    for model 1; pump, loss, two-particle loss for model 2) by site index.
    Channels with zero rate are omitted.
    """
    p.validate(model)
    if basis.L < 2:
        raise ConfigError("chain jump sets need L >= 2")
    if model == 2 and basis.kind == "chain_fixed_n":
        raise ConfigError("model 2 channels do not conserve N; "
                          "use chain_truncated")
    ops = []
    if p.kappa > 0:
        for j in range(basis.L):
            ops.append(bond_jump(basis, j, p.kappa))
    if model == 1:
        if p.gamma > 0:
            for j in range(basis.L):
                ops.append(sp.csr_matrix(
                    math.sqrt(p.gamma) * site_operator(basis, j, "number")))
        return ops
    for j in range(basis.L):
        if p.r_p > 0:
            ops.append(sp.csr_matrix(
                math.sqrt(p.r_p) * site_operator(basis, j, "create")))
        if p.r_l > 0:
            ops.append(sp.csr_matrix(
                math.sqrt(p.r_l) * site_operator(basis, j, "annihilate")))
        if p.r_t > 0:
            b = site_operator(basis, j, "annihilate")
            ops.append(sp.csr_matrix(math.sqrt(p.r_t) * (b @ b)))
    return ops


def total_number(basis):
    occ = basis.occupations.sum(axis=1).astype(np.complex128)
    return sp.diags(occ, format="csr")


def bec_state(basis):
    """Zero-momentum condensate vector on a fixed-N basis.

    Amplitude on occupation (n_1..n_L) is sqrt(N! / prod n_j!) / L^(N/2);
    the state is annihilated by every difference b_j - b_{j+1}.
    """
    if basis.kind != "chain_fixed_n":
        raise ConfigError("condensate state needs a fixed-N basis")
    N, L = basis.N, basis.L
    vec = np.empty(basis.dim, dtype=np.complex128)
    for i, occ in enumerate(basis.states):
        denom = 1.0
        for nu in occ:
            denom *= math.factorial(nu)
        vec[i] = math.sqrt(math.factorial(N) / denom) / L ** (N / 2.0)
    return vec
