"""Command-line driver: config parsing, sweeps, and deterministic CSV output.

Configuration is a sectioned key-value file (INI syntax): [model] holds the
physics parameters, [sweep]/[spectrum]/[relax]/[gp]/[edge]/[scaling] hold
per-command options, [tolerances] the gap-extraction knobs and [output] the
destination directory and worker count.  Flags override config keys;
repeated --set section.key=value overrides take effect before the dedicated
flags.  Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .dynamics import exact_relaxation, mf_relaxation
from .errors import (AbsentGapError, BosonspecError, ConfigError,
                     DimensionLimitError)
from .fock import FockBasis, ModelParams, hamiltonian, jump_operators
from .gp import GPParams, gp_dispersion, gp_uniform
from .linalg import eig_general
from .liouville import build_superoperator
from .meanfield import find_steady, mf_spectrum, seed_density
from .spectra import EdgeConfig, edge_detect, gap_report, gap_scaling_fit

PARAM_KEYS = ("J", "U", "mu", "kappa", "gamma", "r_p", "r_l", "r_t")
AXIS_KEYS = PARAM_KEYS + ("r", "nbar")
OUTPUT_KEYS = ("n0", "n", "delta_L", "delta_OM", "type", "omega_relax")
# dense eigendecomposition of the full superoperator scales as dim^6
EXACT_DIM_LIMIT = 100
_MISSING = object()


class Config:
    """Sectioned key-value configuration with typed access."""

    def __init__(self, sections=None):
        self.sections = {name: dict(kv)
                         for name, kv in (sections or {}).items()}

    @classmethod
    def load(cls, path=None):
        cfg = cls()
        if path is None:
            return cfg
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str    # keys are case-sensitive (U vs u)
        try:
            loaded = parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not loaded:
            raise ConfigError(f"config file {path} not found")
        for section in parser.sections():
            cfg.sections[section] = dict(parser.items(section))
        return cfg

    def override(self, spec):
        if "=" not in spec:
            raise ConfigError(f"--set wants section.key=value, got {spec!r}")
        key, value = spec.split("=", 1)
        section, _, name = key.partition(".")
        if not name:
            section, name = "model", key
        self.sections.setdefault(section.strip(),
                                 {})[name.strip()] = value.strip()

    def has(self, section, key):
        return key in self.sections.get(section, {})

    def get(self, section, key, default=_MISSING):
        try:
            return self.sections[section][key]
        except KeyError:
            if default is _MISSING:
                raise ConfigError(
                    f"missing required config key {section}.{key}") from None
            return default

    def _typed(self, section, key, cast, default):
        raw = self.get(section, key, default)
        if raw is default or raw is None:
            return raw
        try:
            return cast(raw)
        except (TypeError, ValueError):
            raise ConfigError(
                f"bad value for {section}.{key}: {raw!r}") from None

    def get_float(self, section, key, default=_MISSING):
        return self._typed(section, key, float, default)

    def get_int(self, section, key, default=_MISSING):
        return self._typed(section, key, int, default)

    def get_bool(self, section, key, default=_MISSING):
        raw = self.get(section, key, default)
        if raw is default or isinstance(raw, bool):
            return raw
        lowered = str(raw).strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"bad boolean for {section}.{key}: {raw!r}")


def build_model(cfg: Config):
    """(model, params, nbar) from the [model] section.

    Absent kappa defaults to 1 and absent nbar to 0.5, mirroring the
    standing figure conventions; model 1 derives N from nbar when N is not
    given explicitly.
    """
    model = cfg.get_int("model", "model")
    values = {k: cfg.get_float("model", k)
              for k in PARAM_KEYS if cfg.has("model", k)}
    values.setdefault("kappa", 1.0)
    L = cfg.get_int("model", "L", 2)
    d_max = cfg.get_int("model", "d_max", 20)
    N = cfg.get_int("model", "N", None)
    nbar = cfg.get_float("model", "nbar", None)
    if model == 1 and N is None:
        nbar = 0.5 if nbar is None else nbar
        N = int(round(nbar * L))
    p = ModelParams(L=L, N=N, d_max=d_max, **values)
    p.validate(model)
    if nbar is None and N is not None:
        nbar = N / L
    return model, p, nbar


def _resolve_nbar(p, model, nbar):
    return seed_density(p, model) if nbar is None else nbar


def gap_tolerances(cfg: Config, mode):
    """eps_zero/eps_im/eps_gap for gap extraction.

    Mean-field spectra default to an absolute eps of 1e-4: their resolved
    zero modes (trace, gauge, conserved density) sit around 1e-8..1e-6 of
    the steady-state residual, above the relative default cut.
    """
    eps_default = 1e-4 if mode == "meanfield" else None
    return (cfg.get_float("tolerances", "eps_zero", eps_default),
            cfg.get_float("tolerances", "eps_im", eps_default),
            cfg.get_float("tolerances", "eps_gap", None))


@dataclass
class SweepConfig:
    """Two-axis grid over model parameters plus output selection."""

    model: int
    base: ModelParams
    nbar: float | None
    axes: tuple
    outputs: tuple
    eps_zero: float | None
    eps_im: float | None
    eps_gap: float | None
    out_dir: Path
    threads: int = 1
    relax_opts: dict | None = None

    def __post_init__(self):
        if len(self.axes) != 2:
            raise ConfigError("phase diagrams need exactly two axes")
        for name, values in self.axes:
            if name not in AXIS_KEYS:
                raise ConfigError(f"unknown sweep axis {name!r}; valid: "
                                  f"{', '.join(AXIS_KEYS)}")
            if len(values) < 1:
                raise ConfigError("axis needs at least one grid point")
        bad = [o for o in self.outputs if o not in OUTPUT_KEYS]
        if bad:
            raise ConfigError(f"unknown outputs {bad}; valid: "
                              f"{', '.join(OUTPUT_KEYS)}")


@dataclass
class GridResult:
    """All sweep rows in row-major grid order, failures flagged."""

    header: tuple
    rows: list


def parse_axis(text):
    parts = text.split()
    if len(parts) != 4:
        raise ConfigError(
            f"axis wants 'name min max steps', got {text!r}")
    name = parts[0]
    try:
        lo, hi, steps = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise ConfigError(f"bad axis numbers in {text!r}") from None
    if steps < 1:
        raise ConfigError("axis steps must be at least 1")
    return name, np.linspace(lo, hi, steps)


def parse_sweep(cfg: Config, out_dir, threads) -> SweepConfig:
    model, base, nbar = build_model(cfg)
    axes = (parse_axis(cfg.get("sweep", "axis1")),
            parse_axis(cfg.get("sweep", "axis2")))
    outputs = tuple(s.strip() for s in
                    cfg.get("sweep", "outputs",
                            "n0,n,delta_L,delta_OM,type").split(",") if s)
    ez, ei, eg = gap_tolerances(cfg, "meanfield")
    relax_opts = _relax_options(cfg) if "omega_relax" in outputs else None
    return SweepConfig(model=model, base=base, nbar=nbar, axes=axes,
                       outputs=outputs, eps_zero=ez, eps_im=ei, eps_gap=eg,
                       out_dir=Path(out_dir), threads=threads,
                       relax_opts=relax_opts)


def _relax_options(cfg: Config):
    return dict(delta=cfg.get_float("relax", "delta", 0.05),
                t_end=cfg.get_float("relax", "t_end", 50.0),
                dt=cfg.get_float("relax", "dt", None),
                sample_every=cfg.get_int("relax", "sample_every", None),
                t_min=cfg.get_float("relax", "t_min", None))


def apply_axis(model, p, nbar, name, value):
    """One grid coordinate applied to the base parameters.

    The unified rate axis r sets r_p = r_l = r_t = r and switches between
    the number-conserving model (r = 0) and the driven one (r > 0); nbar
    re-derives N on number-conserving grids.
    """
    value = float(value)
    if name == "r":
        if value == 0.0:
            zeroed = replace(p, r_p=0.0, r_l=0.0, r_t=0.0)
            if zeroed.N is None and nbar is not None:
                zeroed = replace(zeroed, N=int(round(nbar * p.L)))
            return 1, zeroed, nbar
        return 2, replace(p, r_p=value, r_l=value, r_t=value), nbar
    if name == "nbar":
        new = replace(p, N=int(round(value * p.L))) if model == 1 else p
        return model, new, value
    return model, replace(p, **{name: value}), nbar


def _phase_cell(task):
    """One grid cell; failures come back flagged, never raised."""
    model, p, nbar, ez, ei, eg, relax_opts = task
    nan = float("nan")
    n_extra = 4 if relax_opts is not None else 0
    try:
        p.validate(model)
        state, rep = find_steady(p, model)
        # spectra live in the frame where the steady state is stationary
        spec = mf_spectrum(state.rho[0], replace(p, mu=rep.mu))
        gr = gap_report(spec, eps_zero=ez, eps_im=ei, eps_gap=eg)
        row = [rep.n0, rep.n_total, gr.delta_L,
               nan if gr.delta_OM is None else gr.delta_OM,
               gr.spectral_type, True]
        if relax_opts is not None:
            _, fit, _ = mf_relaxation(p, model,
                                      _resolve_nbar(p, model, nbar),
                                      **relax_opts)
            row.extend(io.fit_row(fit))
        return row
    except BosonspecError:
        return [nan, nan, nan, nan, None, False] + [nan] * n_extra


def run_phase_diagram(cfg: SweepConfig) -> GridResult:
    """Sweep the grid, reusing any rows already present in the output.

    Row order is row-major over (axis1, axis2) regardless of the execution
    schedule or a partial earlier run, so complete reruns are byte-stable.
    """
    (name1, vals1), (name2, vals2) = cfg.axes
    header = io.PHASE_HEADER + (io.FIT_HEADER if cfg.relax_opts is not None
                                else ())
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = cfg.out_dir / "phase_diagram.csv"
    existing = {}
    if out_path.exists():
        old_header, old_rows = io.read_csv(out_path)
        if old_header != header:
            raise ConfigError(
                f"existing {out_path} has header {old_header}, expected "
                f"{header}; remove it or change the output directory")
        existing = {(r[0], r[1]): r for r in old_rows}

    keys, tasks, pending = [], [], []
    for v1 in vals1:
        for v2 in vals2:
            key = (io.format_value(float(v1)), io.format_value(float(v2)))
            keys.append(key)
            if key in existing:
                continue
            model, p, nbar = apply_axis(cfg.model, cfg.base, cfg.nbar,
                                        name1, v1)
            model, p, nbar = apply_axis(model, p, nbar, name2, v2)
            pending.append(key)
            tasks.append((model, p, nbar, cfg.eps_zero, cfg.eps_im,
                          cfg.eps_gap, cfg.relax_opts))

    if cfg.threads > 1 and tasks:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            computed = list(pool.map(_phase_cell, tasks))
    else:
        computed = [_phase_cell(t) for t in tasks]
    fresh = dict(zip(pending, computed))

    rows = []
    for key in keys:
        if key in existing:
            rows.append(existing[key])
        else:
            rows.append(list(key) + [io.format_value(v)
                                     for v in fresh[key]])
    io.write_csv(out_path, header, rows)
    return GridResult(header=header, rows=rows)


def _exact_spectrum(cfg: Config):
    model, p, _ = build_model(cfg)
    if model == 1:
        basis = FockBasis.chain_fixed_n(p.L, p.N)
    else:
        basis = FockBasis.chain_truncated(p.L, p.d_max)
    if basis.dim > EXACT_DIM_LIMIT:
        raise DimensionLimitError(
            f"exact spectrum needs basis dimension <= {EXACT_DIM_LIMIT}, "
            f"got {basis.dim}")
    H = hamiltonian(basis, p)
    jumps = jump_operators(basis, p, model)
    return eig_general(build_superoperator(H, jumps).matrix)


def run_spectrum(cfg: Config, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mode = cfg.get("spectrum", "mode", "meanfield")
    if mode not in ("exact", "meanfield"):
        raise ConfigError(f"spectrum.mode must be exact or meanfield, "
                          f"got {mode!r}")
    if mode == "exact":
        spec = _exact_spectrum(cfg)
    else:
        model, p, _ = build_model(cfg)
        state, rep = find_steady(p, model)
        spec = mf_spectrum(state.rho[0], replace(p, mu=rep.mu))
    ez, ei, eg = gap_tolerances(cfg, mode)
    io.write_spectrum(out / "spectrum.csv", spec)
    io.write_gap_report(out / "gaps.csv",
                        gap_report(spec, eps_zero=ez, eps_im=ei, eps_gap=eg))
    if mode == "exact" and cfg.get_bool("spectrum", "edge", False):
        report = edge_detect(spec, _edge_config(cfg))
        io.write_edge_points(out / "edge_points.csv", spec, report)
        io.write_edge_fit(out / "edge_fit.csv", report)


def _edge_config(cfg: Config):
    return EdgeConfig(
        sigma=cfg.get_float("edge", "sigma", 1.0),
        density_threshold=cfg.get_float("edge", "density_threshold", 1.5))


def run_relaxation(cfg: Config, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, p, nbar = build_model(cfg)
    mode = cfg.get("relax", "mode", "meanfield")
    opts = _relax_options(cfg)
    if mode == "meanfield":
        series, fit, traj = mf_relaxation(
            p, model, _resolve_nbar(p, model, nbar), **opts)
        if cfg.get_bool("relax", "trajectory", False):
            io.write_trajectory(out / "trajectory.csv", traj)
    elif mode == "exact":
        if model == 1:
            basis = FockBasis.chain_fixed_n(p.L, p.N)
        else:
            basis = FockBasis.chain_truncated(p.L, p.d_max)
        raw = cfg.get("relax", "pattern", None)
        pattern = None if raw is None else \
            tuple(int(s) for s in raw.replace(",", " ").split())
        opts.pop("delta")  # exact runs start from a Fock pattern
        opts["dt"] = 0.005 if opts["dt"] is None else opts["dt"]
        series, fit, _ = exact_relaxation(basis, p, model, pattern, **opts)
    else:
        raise ConfigError(f"relax.mode must be exact or meanfield, "
                          f"got {mode!r}")
    io.write_series(out / "series.csv", series)
    io.write_fit(out / "fit.csv", fit)


def run_gp_dispersion(cfg: Config, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gpp = GPParams(**{k: cfg.get_float("model", k)
                      for k in ("J", "U", "kappa", "r_p", "r_l", "r_t")
                      if cfg.has("model", k)})
    n0 = cfg.get_float("gp", "n0", None)
    if n0 is None:
        try:
            n0, _ = gp_uniform(gpp)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    k = np.linspace(cfg.get_float("gp", "k_min", 0.0),
                    cfg.get_float("gp", "k_max", float(np.pi)),
                    cfg.get_int("gp", "k_steps", 129))
    plus, minus = gp_dispersion(gpp, n0, k)
    io.write_dispersion(out / "dispersion.csv", k, plus, minus)


def run_edge_detect(cfg: Config, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    source = cfg.get("edge", "input", None)
    spec = io.read_spectrum(source) if source is not None \
        else _exact_spectrum(cfg)
    report = edge_detect(spec, _edge_config(cfg),
                         eps_im=cfg.get_float("edge", "eps_im", None),
                         eps_band=cfg.get_float("edge", "eps_band", None))
    io.write_edge_points(out / "edge_points.csv", spec, report)
    io.write_edge_fit(out / "edge_fit.csv", report)


def run_gap_scaling(cfg: Config, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, p, nbar = build_model(cfg)
    try:
        sizes = [int(s) for s in
                 cfg.get("scaling", "sizes").replace(",", " ").split()]
    except ValueError:
        raise ConfigError("scaling.sizes wants integers") from None
    which = cfg.get("scaling", "gap", "delta_L")
    if which not in ("delta_L", "delta_OM"):
        raise ConfigError("scaling.gap must be delta_L or delta_OM")
    ez, ei, _ = gap_tolerances(cfg, "meanfield")
    pairs = []
    for L in sizes:
        pL = replace(p, L=L)
        if model == 1:
            pL = replace(pL, N=int(round(_resolve_nbar(p, model, nbar) * L)))
        state, rep = find_steady(pL, model)
        gr = gap_report(mf_spectrum(state.rho[0], replace(pL, mu=rep.mu)),
                        eps_zero=ez, eps_im=ei)
        gap = gr.delta_L if which == "delta_L" else gr.delta_OM
        if gap is None:
            raise AbsentGapError(
                f"no oscillating modes at L={L}; cannot fit {which}")
        pairs.append((L, gap))
    exponent, prefactor, r2 = gap_scaling_fit(pairs)
    io.write_scaling(out / "gap_scaling.csv", pairs)
    io.write_scaling_fit(out / "gap_scaling_fit.csv", exponent, prefactor,
                         r2)


COMMANDS = ("phase-diagram", "spectrum", "relax", "gp-dispersion",
            "edge-detect", "gap-scaling")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bosonspec",
        description="Spectra, gaps, and relaxation of dissipative lattice "
                    "bosons")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None,
                        help="sectioned key-value config file")
        sp.add_argument("--model", type=int, choices=(1, 2), default=None,
                        help="override model.model")
        sp.add_argument("--out", default=None,
                        help="output directory (default: output.dir or "
                             "'out')")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker count for grid sweeps")
        sp.add_argument("--set", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", dest="overrides",
                        help="override one config key (repeatable)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = Config.load(args.config)
        for spec in args.overrides:
            cfg.override(spec)
        if args.model is not None:
            cfg.sections.setdefault("model", {})["model"] = str(args.model)
        out_dir = args.out if args.out is not None \
            else cfg.get("output", "dir", "out")
        threads = args.threads if args.threads is not None \
            else cfg.get_int("output", "threads", 1)
        if args.command == "phase-diagram":
            run_phase_diagram(parse_sweep(cfg, out_dir, threads))
        elif args.command == "spectrum":
            run_spectrum(cfg, out_dir)
        elif args.command == "relax":
            run_relaxation(cfg, out_dir)
        elif args.command == "gp-dispersion":
            run_gp_dispersion(cfg, out_dir)
        elif args.command == "edge-detect":
            run_edge_detect(cfg, out_dir)
        elif args.command == "gap-scaling":
            run_gap_scaling(cfg, out_dir)
    except (ConfigError, DimensionLimitError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BosonspecError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
