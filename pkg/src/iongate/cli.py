"""Command-line pipeline: mode reports, scheme synthesis, verification of
external schemes, and gate simulation with figure-ready data files.

Interface units are ordinary frequencies in MHz and times in microseconds;
everything is converted to angular frequencies and seconds internally.
Exit codes: 0 success, 2 chain-physics error, 3 synthesis failure,
4 input/config error.
"""

import argparse
import csv
import json
import os
import sys
import warnings
from dataclasses import dataclass

import numpy as np

from . import chain as chain_mod
from . import optimizer as opt_mod
from . import scheme as scheme_mod
from . import simulator as sim_mod
from .constants import TWO_PI, YB171_MASS, RAMAN_WAVELENGTH
from scipy.constants import atomic_mass

EXIT_OK = 0
EXIT_PHYSICS = 2
EXIT_OPTIMIZER = 3
EXIT_INPUT = 4

OUTDIR_ENV = "IONGATE_OUTDIR"


class ConfigError(Exception):
    pass


def _check_keys(section, obj, allowed, required=()):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ConfigError(f"missing keys in '{section}': {sorted(missing)}")


@dataclass
class RunConfig:
    """Parsed and validated run configuration."""

    trap: chain_mod.TrapConfig
    modes: chain_mod.NormalModeData
    fit: chain_mod.TrapFitResult | None
    detuning: float | None
    gate_time: float | None
    n_segments: int | None
    optimizer: dict
    simulate: dict
    output_dir: str
    formats: tuple


def load_config(path, out_flag=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys("config", raw, {"chain", "scheme", "optimizer", "simulate", "output"}, {"chain"})

    chain_sec = raw["chain"]
    _check_keys(
        "chain",
        chain_sec,
        {
            "n_ions",
            "measured_mode_freqs_mhz",
            "axial_freq_mhz",
            "transverse_freq_mhz",
            "ion_mass_u",
            "raman_wavelength_nm",
        },
        {"n_ions"},
    )
    n_ions = int(chain_sec["n_ions"])
    mass = YB171_MASS
    if "ion_mass_u" in chain_sec:
        mass = float(chain_sec["ion_mass_u"]) * atomic_mass
    wavelength = RAMAN_WAVELENGTH
    if "raman_wavelength_nm" in chain_sec:
        wavelength = float(chain_sec["raman_wavelength_nm"]) * 1e-9

    fit = None
    if "measured_mode_freqs_mhz" in chain_sec:
        measured = TWO_PI * 1e6 * np.asarray(chain_sec["measured_mode_freqs_mhz"], dtype=float)
        template = chain_mod.TrapConfig(
            n_ions=n_ions,
            axial_freq=measured[0] / 4.0,
            transverse_freq=measured[0],
            ion_mass=mass,
            raman_wavelength=wavelength,
        )
        fit = chain_mod.fit_trap_frequencies(measured, template)
        trap = fit.config
        modes = chain_mod.modes_with_measured_frequencies(trap, measured)
    elif "axial_freq_mhz" in chain_sec and "transverse_freq_mhz" in chain_sec:
        trap = chain_mod.TrapConfig(
            n_ions=n_ions,
            axial_freq=TWO_PI * 1e6 * float(chain_sec["axial_freq_mhz"]),
            transverse_freq=TWO_PI * 1e6 * float(chain_sec["transverse_freq_mhz"]),
            ion_mass=mass,
            raman_wavelength=wavelength,
        )
        modes = chain_mod.transverse_normal_modes(trap)
    else:
        raise ConfigError(
            "chain needs either measured_mode_freqs_mhz or axial/transverse_freq_mhz"
        )

    detuning = gate_time = n_segments = None
    if "scheme" in raw:
        sec = raw["scheme"]
        _check_keys(
            "scheme", sec, {"detuning_mhz", "gate_time_us", "n_segments"},
            {"detuning_mhz", "gate_time_us", "n_segments"},
        )
        detuning = TWO_PI * 1e6 * float(sec["detuning_mhz"])
        gate_time = 1e-6 * float(sec["gate_time_us"])
        n_segments = int(sec["n_segments"])

    opt_sec = dict(raw.get("optimizer", {}))
    _check_keys(
        "optimizer",
        opt_sec,
        {
            "seed",
            "n_starts",
            "constraint_tol",
            "objective_tol",
            "mirror_symmetry",
            "time_antisymmetry",
            "target_coupling_pi",
        },
    )

    sim_sec = dict(raw.get("simulate", {}))
    _check_keys("simulate", sim_sec, {"subset", "nbar", "parity_points"})

    out_sec = dict(raw.get("output", {}))
    _check_keys("output", out_sec, {"directory", "formats"})
    out_dir = out_flag or out_sec.get("directory") or os.environ.get(OUTDIR_ENV) or "."
    formats = tuple(out_sec.get("formats", ("json", "csv")))
    for fmt in formats:
        if fmt not in ("json", "csv"):
            raise ConfigError(f"unknown output format '{fmt}'")

    return RunConfig(
        trap=trap,
        modes=modes,
        fit=fit,
        detuning=detuning,
        gate_time=gate_time,
        n_segments=n_segments,
        optimizer=opt_sec,
        simulate=sim_sec,
        output_dir=out_dir,
        formats=formats,
    )


def _problem_from_config(cfg):
    if cfg.detuning is None:
        raise ConfigError("config has no 'scheme' section")
    eta = chain_mod.lamb_dicke_parameters(cfg.modes, cfg.trap)
    opt = cfg.optimizer
    return opt_mod.SynthesisProblem(
        eta=eta,
        modes=cfg.modes,
        detuning=cfg.detuning,
        gate_time=cfg.gate_time,
        n_segments=cfg.n_segments,
        mirror_symmetry=bool(opt.get("mirror_symmetry", True)),
        time_antisymmetry=bool(opt.get("time_antisymmetry", True)),
        target_coupling=np.pi * float(opt.get("target_coupling_pi", 0.25)),
        n_starts=int(opt.get("n_starts", 64)),
        seed=int(opt.get("seed", 0)),
        constraint_tol=float(opt.get("constraint_tol", 1e-8)),
        objective_tol=float(opt.get("objective_tol", 1e-6)),
    )


def _write_json(cfg, name, obj):
    path = os.path.join(cfg.output_dir, name)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(cfg, name, header, rows):
    path = os.path.join(cfg.output_dir, name)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def _trajectory_rows(traj):
    rows = []
    T, n, M = traj.alpha.shape
    for it, t in enumerate(traj.times):
        for j in range(n):
            for m in range(M):
                a = traj.alpha[it, j, m]
                rows.append((float(t), j + 1, m + 1, float(a.real), float(a.imag)))
    return rows


def _coupling_rows(traj):
    rows = []
    T, n, _ = traj.theta.shape
    for it, t in enumerate(traj.times):
        for j in range(n):
            for jp in range(j + 1, n):
                rows.append((float(t), j + 1, jp + 1, float(traj.theta[it, j, jp])))
    return rows


def cmd_modes(cfg):
    positions = chain_mod.equilibrium_positions(cfg.trap)
    eta = chain_mod.lamb_dicke_parameters(cfg.modes, cfg.trap)
    report = {
        "n_ions": cfg.trap.n_ions,
        "axial_freq_mhz": cfg.trap.axial_freq / TWO_PI / 1e6,
        "transverse_freq_mhz": cfg.trap.transverse_freq / TWO_PI / 1e6,
        "mode_freqs_mhz": (cfg.modes.frequencies / TWO_PI / 1e6).tolist(),
        "participation": cfg.modes.participation.tolist(),
        "lamb_dicke": eta.eta.tolist(),
        "positions_um": (positions * 1e6).tolist(),
    }
    if cfg.fit is not None:
        report["fit_rms_residual_khz"] = cfg.fit.rms_residual / TWO_PI / 1e3
    if "json" in cfg.formats:
        _write_json(cfg, "modes.json", report)
    if "csv" in cfg.formats:
        rows = []
        for j in range(cfg.trap.n_ions):
            for m in range(cfg.modes.n_modes):
                rows.append(
                    (
                        j + 1,
                        m + 1,
                        float(cfg.modes.frequencies[m] / TWO_PI / 1e6),
                        float(cfg.modes.participation[j, m]),
                        float(eta.eta[j, m]),
                    )
                )
        _write_csv(cfg, "modes.csv", ("ion", "mode", "freq_mhz", "participation", "eta"), rows)
    freqs = ", ".join(f"{f:.4f}" for f in cfg.modes.frequencies / TWO_PI / 1e6)
    print(f"{cfg.trap.n_ions} ions; transverse modes (MHz): {freqs}")
    if cfg.fit is not None:
        print(f"trap fit RMS residual: {cfg.fit.rms_residual / TWO_PI / 1e3:.3f} kHz")
    return EXIT_OK


def cmd_synthesize(cfg):
    problem = _problem_from_config(cfg)
    try:
        result = opt_mod.solve_phases(problem)
    except opt_mod.ConvergenceError as exc:
        dump = {
            "error": str(exc),
            "objective": exc.best_report.objective,
            "constraint_inf": exc.best_report.constraint_inf,
            "residuals": exc.residuals.tolist(),
        }
        _write_json(cfg, "synthesis_failure.json", dump)
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZER
    eta = problem.eta
    diag = scheme_mod.diagnose(
        result.scheme, eta, cfg.modes, target_coupling=problem.target_coupling
    )
    result.scheme.save(os.path.join(cfg.output_dir, "scheme.json"))
    _write_json(cfg, "synthesis.json", result.to_json_dict())
    if "csv" in cfg.formats:
        _write_csv(
            cfg,
            "trajectories.csv",
            ("t", "ion", "mode", "alpha_re", "alpha_im"),
            _trajectory_rows(diag.trajectories),
        )
        _write_csv(
            cfg,
            "couplings.csv",
            ("t", "ion_a", "ion_b", "theta"),
            _coupling_rows(diag.trajectories),
        )
    print(
        f"synthesized {result.scheme.n_ions}-ion scheme: objective {result.objective:.3e}, "
        f"max residual displacement {diag.max_displacement:.3e}, "
        f"max coupling deviation {diag.max_coupling_deviation:.3e}"
    )
    print("constraint report: all-green" if result.converged else "constraint report: FAILED")
    return EXIT_OK


def _load_scheme(path):
    try:
        return scheme_mod.PulseScheme.load(path)
    except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"malformed scheme file {path}: {exc}") from exc


def cmd_verify(cfg, scheme_path):
    scheme = _load_scheme(scheme_path)
    if scheme.n_ions != cfg.trap.n_ions:
        raise ConfigError(
            f"scheme has {scheme.n_ions} ions but the chain has {cfg.trap.n_ions}"
        )
    eta = chain_mod.lamb_dicke_parameters(cfg.modes, cfg.trap)
    diag = scheme_mod.diagnose(scheme, eta, cfg.modes)
    report = {
        "max_residual_displacement": diag.max_displacement,
        "max_coupling_deviation": diag.max_coupling_deviation,
        "theta": diag.theta.tolist(),
        "alpha_re": diag.alpha.real.tolist(),
        "alpha_im": diag.alpha.imag.tolist(),
    }
    if "json" in cfg.formats:
        _write_json(cfg, "verify.json", report)
    if "csv" in cfg.formats:
        _write_csv(
            cfg,
            "verify_trajectories.csv",
            ("t", "ion", "mode", "alpha_re", "alpha_im"),
            _trajectory_rows(diag.trajectories),
        )
        _write_csv(
            cfg,
            "verify_couplings.csv",
            ("t", "ion_a", "ion_b", "theta"),
            _coupling_rows(diag.trajectories),
        )
    print(f"max |alpha(tau)|        : {diag.max_displacement:.6e}")
    print(f"max |theta - target|/|target|: {diag.max_coupling_deviation:.6e}")
    return EXIT_OK


def cmd_simulate(cfg, scheme_path, subset_arg=None):
    scheme = _load_scheme(scheme_path)
    if scheme.n_ions != cfg.trap.n_ions:
        raise ConfigError(
            f"scheme has {scheme.n_ions} ions but the chain has {cfg.trap.n_ions}"
        )
    subset = subset_arg if subset_arg is not None else cfg.simulate.get("subset")
    if subset is not None:
        subset = [int(q) for q in subset]
        if any(q < 1 or q > scheme.n_ions for q in subset) or len(set(subset)) != len(subset):
            raise ConfigError(f"subset must be distinct 1-based ion indices <= {scheme.n_ions}")
        keep0 = sorted(q - 1 for q in subset)
        scheme = scheme.subset(keep0)
    else:
        keep0 = list(range(scheme.n_ions))

    eta = chain_mod.lamb_dicke_parameters(cfg.modes, cfg.trap)
    kernels = scheme_mod.build_kernels(eta, cfg.modes, scheme)
    theta = scheme_mod.coupling_matrix(kernels, scheme)
    alpha = scheme_mod.final_displacements(eta, kernels, scheme)

    nbar = cfg.simulate.get("nbar", 0.0)
    nbar = np.full(cfg.modes.n_modes, float(nbar)) if np.isscalar(nbar) else np.asarray(nbar, float)
    if nbar.size != cfg.modes.n_modes:
        raise ConfigError("nbar must be scalar or one value per mode")
    parity_points = cfg.simulate.get("parity_points")

    theta_sub = theta[np.ix_(keep0, keep0)]
    alpha_sub = alpha[keep0]
    result = sim_mod.prepare_ghz(
        theta_sub,
        residuals=alpha_sub,
        motion=sim_mod.MotionalInit(nbar),
        n_phase_points=parity_points,
    )
    payload = result.to_json_dict()
    payload["subset"] = [q + 1 for q in keep0]
    if len(keep0) == 1:
        warnings.warn("single-qubit subset: no entanglement; fidelity set to 0.5")
        payload["fidelity"] = 0.5
        payload["warning"] = "single-qubit subset has no entanglement (0.5 convention)"
    if "json" in cfg.formats:
        _write_json(cfg, "gate_result.json", payload)
    if "csv" in cfg.formats:
        _write_csv(
            cfg,
            "parity.csv",
            ("phase_rad", "parity"),
            [(float(p), float(v)) for p, v in zip(result.parity_phases, result.parity_samples)],
        )
    print(
        f"{len(keep0)}-qubit GHZ: fidelity {payload['fidelity']:.6f} "
        f"(populations {result.populations[0]:.4f}/{result.populations[-1]:.4f}, "
        f"contrast {result.parity_contrast:.6f}, fringe frequency {result.fitted_frequency})"
    )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="iongate",
        description="Synthesize and verify global entangling-gate pulse schemes "
        "for linear ion chains.",
    )
    parser.add_argument("--out", help="output directory (overrides config and env)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_modes = sub.add_parser("modes", help="chain normal-mode report")
    p_modes.add_argument("--config", required=True)

    p_synth = sub.add_parser("synthesize", help="synthesize a pulse scheme")
    p_synth.add_argument("--config", required=True)
    p_synth.add_argument("--seed", type=int, help="override the optimizer seed")

    p_verify = sub.add_parser("verify", help="verify an external scheme")
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--scheme", required=True)

    p_sim = sub.add_parser("simulate", help="simulate GHZ preparation")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--scheme", required=True)
    p_sim.add_argument("--subset", help="comma-separated 1-based ion indices to drive")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, out_flag=args.out)
        os.makedirs(cfg.output_dir, exist_ok=True)
        if args.command == "modes":
            return cmd_modes(cfg)
        if args.command == "synthesize":
            if args.seed is not None:
                cfg.optimizer["seed"] = args.seed
            return cmd_synthesize(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.scheme)
        if args.command == "simulate":
            subset = None
            if args.subset:
                subset = [int(tok) for tok in args.subset.split(",") if tok]
            return cmd_simulate(cfg, args.scheme, subset_arg=subset)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except chain_mod.ChainError as exc:
        print(f"chain physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except opt_mod.OptimizerError as exc:
        print(f"synthesis error: {exc}", file=sys.stderr)
        return EXIT_OPTIMIZER


if __name__ == "__main__":
    sys.exit(main())
