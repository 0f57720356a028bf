"""Gross-Pitaevskii (coherent-state) limit of the dissipative chain.

Closed-form uniform solution and linearized dispersion for the pumped model
with single-particle pump/loss and two-particle loss.  These formulas serve
as oracles for the mean-field spectra: they are exact in the coherent-state
limit and track the numerics at the few-percent level in the superfluid
phase when the condensate density is replaced by the total density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GPParams:
    J: float = 1.0
    U: float = 0.0
    kappa: float = 0.0
    r_p: float = 0.0
    r_l: float = 0.0
    r_t: float = 0.0

    @property
    def r_d(self):
        """Net linear drive (r_p - r_l) / 2."""
        return 0.5 * (self.r_p - self.r_l)


def gp_uniform(p: GPParams):
    """Uniform condensate density and the chemical potential that freezes it.

    n0 = r_d / r_t when the net drive is positive, else 0 (empty branch);
    mu = -2J + U n0 removes the residual phase rotation.
    """
    if p.r_t <= 0:
        raise ValueError("uniform GP solution needs r_t > 0")
    n0 = p.r_d / p.r_t if p.r_d > 0 else 0.0
    mu = -2.0 * p.J + p.U * n0
    return n0, mu


def gp_dispersion(p: GPParams, n0, k):
    """Linearized excitation pair lambda_plus, lambda_minus at momentum k.

    lambda = -2 kappa (1 + 2 n0)(1 - cos k) - r_t n0
             +- i sqrt([2J(1 - cos k) + U n0]^2 - (U^2 + r_t^2) n0^2)

    When the square-root argument is negative the pair is real; the branches
    are then ordered so that Re(lambda_plus) >= Re(lambda_minus).  For
    positive argument the branches are complex conjugates with
    Im(lambda_plus) >= 0.
    """
    k = np.asarray(k, dtype=float)
    one_minus_cos = 1.0 - np.cos(k)
    base = -2.0 * p.kappa * (1.0 + 2.0 * n0) * one_minus_cos - p.r_t * n0
    arg = (2.0 * p.J * one_minus_cos + p.U * n0) ** 2 \
        - (p.U ** 2 + p.r_t ** 2) * n0 ** 2
    root = np.sqrt(np.abs(arg))
    plus = np.where(arg >= 0, base + 1j * root, base + root)
    minus = np.where(arg >= 0, base - 1j * root, base - root)
    return plus, minus


def gp_small_k(p: GPParams, n0):
    """Leading small-k behavior of the two slow branches.

    Returns (diff_coeff, slow_const): the diffusive branch opens as
    -diff_coeff * k^2 with diff_coeff = kappa (1 + 2 n0) + J U / r_t, and
    the amplitude branch starts at -slow_const = -2 r_t n0.
    """
    if p.r_t <= 0:
        raise ValueError("small-k expansion needs r_t > 0")
    diff_coeff = p.kappa * (1.0 + 2.0 * n0) + p.J * p.U / p.r_t
    return diff_coeff, 2.0 * p.r_t * n0


def gp_critical(p: GPParams, k):
    """Dispersion pair at the critical point n0 = 0.

    lambda = -2 kappa (1 - cos k) +- 2 i J (1 - cos k); every mode has
    |Re| / |Im| = kappa / J.
    """
    k = np.asarray(k, dtype=float)
    one_minus_cos = 1.0 - np.cos(k)
    base = -2.0 * p.kappa * one_minus_cos
    im = 2.0 * p.J * one_minus_cos
    return base + 1j * im, base - 1j * im
