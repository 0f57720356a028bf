"""Deterministic CSV emission and reading for all artifact types.

Floats are written at 17 significant digits (round-trip exact for doubles)
with fixed "\n" newlines and fixed row orders, so identical runs produce
byte-identical files.  An absent oscillating-mode gap is written as nan; an
unclassified spectral type as an empty field.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

SPECTRUM_HEADER = ("re", "im")
TRAJECTORY_HEADER = ("t", "site", "re_psi", "im_psi", "n")
DISPERSION_HEADER = ("k", "re_plus", "im_plus", "re_minus", "im_minus")
GAP_HEADER = ("delta_L", "delta_OM", "re_lambda_star", "im_lambda_star",
              "type")
SERIES_HEADER = ("t", "delta_n")
FIT_HEADER = ("A", "Gamma", "Omega", "residual")
PHASE_HEADER = ("axis1", "axis2", "n0", "n", "delta_L", "delta_OM", "type",
                "converged")
SCALING_HEADER = ("L", "delta")
SCALING_FIT_HEADER = ("exponent", "prefactor", "r_squared")
EDGE_FIT_HEADER = ("upper_slope", "upper_intercept", "lower_slope",
                   "lower_intercept", "delta_OM_estimate")


def format_value(x):
    """One CSV field: 17-significant-digit floats, plain ints, empty for
    None, 1/0 for booleans, strings passed through."""
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(format_value(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_csv(path):
    """Header tuple and raw string rows (no numeric parsing, so resumed
    sweeps can match cells by exact field text)."""
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines:
        raise ValueError(f"{path} is empty")
    header = tuple(lines[0].split(","))
    rows = [tuple(line.split(",")) for line in lines[1:] if line]
    return header, rows


def _eigenvalues(s):
    return np.asarray(getattr(s, "eigenvalues", s),
                      dtype=np.complex128).ravel()


def write_spectrum(path, s):
    eigs = _eigenvalues(s)
    write_csv(path, SPECTRUM_HEADER, ((z.real, z.imag) for z in eigs))


def read_spectrum(path):
    _, rows = read_csv(path)
    return np.array([float(a) + 1j * float(b) for a, b in rows])


def write_trajectory(path, traj):
    """Mean-field trajectory dump, one row per (sample, site)."""
    psi = np.asarray(traj.psi)
    dens = np.asarray(traj.density)
    rows = ((t, j, psi[i, j].real, psi[i, j].imag, dens[i, j])
            for i, t in enumerate(np.asarray(traj.times))
            for j in range(psi.shape[1]))
    write_csv(path, TRAJECTORY_HEADER, rows)


def write_dispersion(path, k, lam_plus, lam_minus):
    k = np.asarray(k, dtype=float)
    plus = np.asarray(lam_plus, dtype=np.complex128)
    minus = np.asarray(lam_minus, dtype=np.complex128)
    rows = ((kk, p.real, p.imag, m.real, m.imag)
            for kk, p, m in zip(k, plus, minus))
    write_csv(path, DISPERSION_HEADER, rows)


def gap_row(report):
    """`delta_L, delta_OM, re_lambda_star, im_lambda_star, type` fields."""
    om = np.nan if report.delta_OM is None else report.delta_OM
    stype = None if report.spectral_type is None else report.spectral_type
    return (report.delta_L, om, report.lambda_star.real,
            report.lambda_star.imag, stype)


def write_gap_report(path, report):
    write_csv(path, GAP_HEADER, [gap_row(report)])


def write_series(path, series):
    write_csv(path, SERIES_HEADER, zip(series.times, series.delta_n))


def fit_row(fit):
    return (fit.A, fit.Gamma, fit.Omega, fit.residual)


def write_fit(path, fit):
    write_csv(path, FIT_HEADER, [fit_row(fit)])


def write_phase_diagram(path, rows, extra_header=()):
    write_csv(path, PHASE_HEADER + tuple(extra_header), rows)


def write_scaling(path, pairs):
    write_csv(path, SCALING_HEADER, pairs)


def write_scaling_fit(path, exponent, prefactor, r_squared):
    write_csv(path, SCALING_FIT_HEADER, [(exponent, prefactor, r_squared)])


def write_edge_points(path, s, report):
    eigs = _eigenvalues(s)[report.edge_indices]
    write_csv(path, SPECTRUM_HEADER, ((z.real, z.imag) for z in eigs))


def write_edge_fit(path, report):
    upper = report.upper_line or (None, None)
    lower = report.lower_line or (None, None)
    row = (upper[0], upper[1], lower[0], lower[1],
           report.delta_OM_estimate)
    write_csv(path, EDGE_FIT_HEADER, [row])
