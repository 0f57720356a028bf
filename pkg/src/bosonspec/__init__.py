"""Spectra, gaps, and relaxation dynamics of dissipative lattice bosons.

Two Lindblad models of bosons hopping on a periodic chain: model 1 keeps
particle number fixed (bond dissipator plus local dephasing), model 2
exchanges particles with the environment (single-particle pump and loss
plus two-particle loss).  The package builds exact Fock-space Liouvillians
for small chains and Gutzwiller mean-field spectra for large ones, extracts
the Liouvillian and oscillating-mode gaps, classifies the resulting
spectra, and fits relaxation traces; the `bosonspec` command drives the
same pipelines from sectioned config files into deterministic CSV output.
"""

from .errors import (AbsentGapError, BosonspecError, ConfigError,
                     DegenerateSteadyStateError, DimensionLimitError,
                     EigenComputationError, NonConvergenceError,
                     NonUniformRegimeError, TruncationError)
from .fock import (FockBasis, ModelParams, hamiltonian, jump_operators,
                   site_operator)
from .gp import GPParams, gp_critical, gp_dispersion, gp_uniform
from .linalg import EigenSystem, eig_general, spectral_match_distance
from .liouville import (LindbladAction, SuperOperator, adjoint_superoperator,
                        build_superoperator, mode_expansion, steady_state)
from .meanfield import (ChainState, MFSpectrum, evolve_mf, find_steady,
                        linearize, mf_spectrum, thermal_steady, tune_mu)
from .dynamics import (ModulationSeries, RelaxationFit, density_modulation,
                       evolve_exact, exact_relaxation, fit_damped_cosine,
                       mf_relaxation, modulated_coherent_chain)
from .spectra import (EdgeConfig, EdgeReport, GapReport, classify,
                      edge_detect, gap_report, gap_scaling_fit,
                      kernel_density, liouvillian_gap, om_gap)

__version__ = "0.1.0"
