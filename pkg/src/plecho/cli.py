"""Command-line pipeline: prepare, optimize-pulse, echo, ldos, pipeline.

Every stage reads one YAML config, writes tabular text files under the
output directory, and embeds the config hash plus basis/geometry
fingerprints in each file header. Identical config and seed give
byte-identical outputs (no timestamps anywhere).

Exit codes: 0 success, 2 config error, 3 fidelity/convergence floor unmet,
4 numerical guard tripped.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import echo as echo_mod
from . import ldos as ldos_mod
from . import prepare as prep_mod
from . import pulse as pulse_mod
from . import tableio
from .fock import FockBasis, NumberSector
from .hamiltonian import (
    HubbardParams,
    build_hubbard,
    full_spectrum,
    ground_state,
    plaquette_product_state,
    tiling_energy_density,
)
from .lattice import (
    LABEL_SECTORS,
    assign_layers,
    build_geometry,
    geometry_fingerprint,
    serialize_geometry,
    tile_plaquettes,
)
from .propagate import KrylovError, StepSizeError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FLOOR = 3
EXIT_NUMERICAL = 4


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "params": {"u": 8.0},
    "grid": {"dt": 0.1, "tau_max": 10.0},
    "theta": 0.1,
    "mode": "exact",
    "shots": {"samples": 100, "seed": 7},
    "ensemble_seeds": 0,
    "prepare": {"dt": 0.01, "scan": [8.0, 16.0, 32.0, 64.0, 128.0, 192.0, 256.0]},
    "pulse": {
        "dt": 0.05,
        "durations": [1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0],
        "restarts": 8,
        "max_iters": 200,
        "fidelity_floor": 0.999,
        "seed": 2024,
        "signs": ["-", "+"],
        "reuse": True,
    },
    "filters": [
        {"delta": 0.6, "tau_max": 10.0 / 3.0},
        {"delta": 0.4, "tau_max": 20.0 / 3.0},
        {"delta": 0.2, "tau_max": 10.0},
    ],
    "out_dir": "runs/out",
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as err:
        raise ConfigError(f"config is not valid YAML: {err}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    config = _merge(DEFAULTS, raw)
    validate_config(config)
    return config


def validate_config(config: dict) -> None:
    errors = []

    def need(path_, check, message):
        node = config
        try:
            for part in path_.split("."):
                node = node[part]
        except (KeyError, TypeError):
            errors.append(f"{path_}: missing")
            return
        if not check(node):
            errors.append(f"{path_}: {message} (got {node!r})")

    need("geometry.n_x", lambda v: isinstance(v, int) and v >= 1, "positive integer")
    need("geometry.n_y", lambda v: isinstance(v, int) and v >= 1, "positive integer")
    need("unit_cell", lambda v: isinstance(v, str) and len(v) >= 1, "non-empty string")
    need("params.u", lambda v: isinstance(v, (int, float)), "number")
    need("grid.dt", lambda v: isinstance(v, (int, float)) and v > 0, "positive number")
    need("grid.tau_max", lambda v: isinstance(v, (int, float)) and v > 0, "positive number")
    need("theta", lambda v: isinstance(v, (int, float)) and v > 0, "positive number")
    need("mode", lambda v: v in ("exact", "sampled", "pulse"), "one of exact|sampled|pulse")
    need("shots.samples", lambda v: isinstance(v, int) and v >= 1, "integer >= 1")
    need("shots.seed", lambda v: isinstance(v, int), "integer")
    need("ensemble_seeds", lambda v: isinstance(v, int) and v >= 0, "integer >= 0")
    need("filters", lambda v: isinstance(v, list) and len(v) >= 1, "non-empty list")
    if isinstance(config.get("filters"), list):
        for i, f in enumerate(config["filters"]):
            if not (isinstance(f, dict) and f.get("delta", 0) > 0 and f.get("tau_max", 0) > 0):
                errors.append(f"filters[{i}]: needs positive delta and tau_max")
    gx = config.get("geometry", {})
    if isinstance(gx.get("n_x"), int) and isinstance(gx.get("n_y"), int):
        if gx["n_x"] % 2 or gx["n_y"] % 2:
            errors.append("geometry: lattice dimensions must be even for a plaquette tiling")
    if errors:
        raise ConfigError("; ".join(errors))


def _tiling(config):
    geom = build_geometry(config["geometry"]["n_x"], config["geometry"]["n_y"])
    cell = config["unit_cell"]
    if cell in ("AAAA", "AAAB", "ACAD"):
        tiling = tile_plaquettes(geom, cell)
    else:
        tiling = tile_plaquettes(geom, labels=cell)
    return geom, tiling


def _stage_hash(config: dict, keys: tuple[str, ...]) -> str:
    return tableio.config_hash({k: config.get(k) for k in keys})


def _outputs_current(paths, stage_hash: str) -> bool:
    for p in paths:
        if not Path(p).exists():
            return False
        try:
            meta, _, _ = tableio.read_table(p)
        except tableio.TableFormatError:
            return False
        if meta.get("config_hash") != stage_hash:
            return False
    return True


PREPARE_KEYS = ("geometry", "unit_cell", "params", "prepare")
PULSE_KEYS = ("unit_cell", "params", "theta", "pulse")
ECHO_KEYS = ("geometry", "unit_cell", "params", "grid", "theta", "mode", "shots")
LDOS_KEYS = ECHO_KEYS + ("filters", "ensemble_seeds")

_SCHEDULE_FACTORIES = {
    "A": lambda tau: prep_mod.schedule_halffilled_A(tau),
    "B": lambda tau: prep_mod.schedule_doped_B("linear", tau),
    "C": lambda tau: prep_mod.schedule_doped_CD("C", "linear", tau),
    "D": lambda tau: prep_mod.schedule_doped_CD("D", "linear", tau),
}

DEFAULT_SWEEP_TIMES = {"A": 192.0, "B": 40.0, "C": 64.0, "D": 64.0}


def cmd_prepare(config, out_dir: Path, log) -> int:
    geom, tiling = _tiling(config)
    stage = _stage_hash(config, PREPARE_KEYS)
    prep_dir = out_dir / "prepare"
    prep_dir.mkdir(parents=True, exist_ok=True)
    labels = sorted({cell.label for cell in tiling.cells if cell.label != "E"})
    expected = [prep_dir / f"prep_{l}.txt" for l in labels]
    if _outputs_current(expected, stage):
        log(f"prepare: outputs current for hash {stage}, skipping")
        return EXIT_OK

    dt = config["prepare"]["dt"]
    sweep_times = {**DEFAULT_SWEEP_TIMES, **config["prepare"].get("sweep_times", {})}
    common = {
        "config_hash": stage,
        "geometry": geometry_fingerprint(geom),
        "units": tableio.UNITS_NOTE,
    }
    for label in labels:
        factory = _SCHEDULE_FACTORIES[label]
        scan_grid = config["prepare"].get("scan")
        if scan_grid:
            scan = prep_mod.sweep_time_scan(factory, scan_grid, dt)
            tableio.write_table(
                prep_dir / f"sweep_{label}.txt", "sweep_scan",
                {**common, "label": label},
                ["tau_total", "infidelity"], np.array(scan),
            )
        report = prep_mod.run_preparation(factory(sweep_times[label]), dt)
        tableio.write_table(
            prep_dir / f"prep_{label}.txt", "preparation_report",
            {
                **common,
                "label": label,
                "tau_total": report.sweep_time,
                "fidelity": report.fidelity,
                "min_gap": report.min_gap,
                "release_cost": report.release_cost,
                "target_degenerate": report.target_degenerate,
            },
            ["s", "gap"], np.column_stack([report.s_grid, report.gap_trace]),
        )
        log(f"prepare[{label}]: fidelity {report.fidelity:.6f} at tau={report.sweep_time:g}")
    (out_dir / "geometry.txt").write_text(
        f"# plecho geometry {geometry_fingerprint(geom)}\n" + serialize_geometry(geom, tiling)
    )
    return EXIT_OK


def _pulse_path(out_dir: Path, kind: str, sign: int) -> Path:
    return out_dir / "pulses" / f"pulse_{kind}_{'p' if sign > 0 else 'm'}.txt"


def _required_pair_kinds(tiling) -> list[str]:
    kinds = set()
    for ci in range(len(tiling.couplings)):
        _, kind = pulse_mod.coupling_site_map(tiling, ci)
        kinds.add(kind)
    return sorted(kinds)


def cmd_optimize_pulse(config, out_dir: Path, log) -> int:
    _, tiling = _tiling(config)
    stage = _stage_hash(config, PULSE_KEYS)
    (out_dir / "pulses").mkdir(parents=True, exist_ok=True)
    pcfg = config["pulse"]
    signs = [+1 if s == "+" else -1 for s in pcfg["signs"]]
    status = EXIT_OK
    for kind in _required_pair_kinds(tiling):
        for sign in signs:
            path = _pulse_path(out_dir, kind, sign)
            if pcfg.get("reuse", True) and _outputs_current([path], stage):
                log(f"optimize-pulse[{kind},{'+' if sign>0 else '-'}]: current, skipping")
                continue
            opt = pulse_mod.OptimizeConfig(
                pair_kind=kind,
                theta=config["theta"],
                sign=sign,
                dt=pcfg["dt"],
                u=config["params"]["u"],
                durations=tuple(pcfg["durations"]),
                fidelity_floor=pcfg["fidelity_floor"],
                restarts=pcfg["restarts"],
                max_iters=pcfg["max_iters"],
                seed=pcfg["seed"],
            )
            try:
                result = pulse_mod.optimize_pulse(opt)
            except pulse_mod.PulseConvergenceError as err:
                result = err.best
                status = EXIT_FLOOR
                log(f"optimize-pulse[{kind}]: floor unmet, best {result.fidelity:.6f}")
            tableio.write_pulse(path, result, {"config_hash": stage})
            pair = pulse_mod.PairSystem(kind, config["params"]["u"])
            labels, table, _ = pulse_mod.population_trace(pair, result.pulse)
            order = np.argsort(table.mean(axis=0))[::-1]
            tableio.write_table(
                path.with_name(path.name.replace("pulse_", "populations_")),
                "population_trace",
                {"config_hash": stage, "pair_kind": kind, "floor": 0.005},
                ["step"] + [labels[k] for k in order],
                np.column_stack([np.arange(len(table), dtype=float), table[:, order]]),
            )
            log(f"optimize-pulse[{kind},{'+' if sign>0 else '-'}]: "
                f"fidelity {result.fidelity:.6f}, duration {result.pulse.duration:g}")
    return status


def _full_system(config):
    geom, tiling = _tiling(config)
    n_up = sum(LABEL_SECTORS[c.label][0] for c in tiling.cells)
    n_down = sum(LABEL_SECTORS[c.label][1] for c in tiling.cells)
    sector = NumberSector(n_up, n_down, geom.n_sites)
    basis = FockBasis(sector)
    params = HubbardParams.uniform(1.0, config["params"]["u"])
    h = build_hubbard(geom, params, sector, tiling=tiling, basis=basis)
    psi_p, lambda_p = plaquette_product_state(tiling, config["params"]["u"], basis=basis)
    return geom, tiling, h, psi_p, lambda_p


def cmd_echo(config, out_dir: Path, log) -> int:
    stage = _stage_hash(config, ECHO_KEYS)
    echo_dir = out_dir / "echo"
    echo_dir.mkdir(parents=True, exist_ok=True)
    mode = config["mode"]
    recon_path = echo_dir / f"echo_recon_{mode}.txt"
    amp_path = echo_dir / "amplitudes.txt"
    exact_path = echo_dir / "echo_exact.txt"
    if _outputs_current([amp_path, exact_path, recon_path], stage):
        log(f"echo: outputs current for hash {stage}, skipping")
        return EXIT_OK

    geom, tiling, h, psi_p, lambda_p = _full_system(config)
    spec = full_spectrum(h)
    grid = echo_mod.TimeGrid(config["grid"]["dt"], config["grid"]["tau_max"])
    theta = config["theta"]
    common = {
        "config_hash": stage,
        "geometry": geometry_fingerprint(geom),
        "basis_fingerprint": psi_p.basis.fingerprint(),
        "e_p": lambda_p,
    }

    exact = echo_mod.exact_echo(spec, psi_p, grid)
    exact.phi_display = exact.phi + lambda_p * grid.times
    tableio.write_echo_series(exact_path, exact, common)

    if mode == "pulse":
        pulses = {}
        for kind in _required_pair_kinds(tiling):
            for sign in (+1, -1):
                path = _pulse_path(out_dir, kind, sign)
                if not path.exists():
                    raise pulse_mod.MissingPulseError(
                        f"echo mode=pulse needs {path}; run optimize-pulse first")
                result, _ = tableio.read_pulse(path)
                pulses.setdefault(sign, {})[kind] = result.pulse
        layers = assign_layers(tiling)
        tiled = tuple(
            pulse_mod.apply_tiled_ite(tiling, layers, psi_p, theta, sign,
                                      mode="pulse", pulses=pulses[sign],
                                      u=config["params"]["u"])
            for sign in (+1, -1)
        )
        shifted = echo_mod.shifted_amplitudes(spec, psi_p, grid, theta,
                                              "pulse_tiled", tiled_states=tiled)
    else:
        shifted = echo_mod.shifted_amplitudes(spec, psi_p, grid, theta, "exact_global")

    tableio.write_table(
        amp_path, "amplitude_table",
        {**common, "theta": theta, "ite_mode": shifted.ite_mode,
         "norm_plus": shifted.norm_plus, "norm_minus": shifted.norm_minus},
        ["tau", "r", "survival_plus", "survival_minus"],
        np.column_stack([grid.times, exact.r, shifted.survival_plus, shifted.survival_minus]),
    )

    if mode == "exact":
        series = _reconstruct(grid, exact.r, shifted.r_plus, shifted.r_minus, None,
                              theta, lambda_p, f"reconstructed-{mode}")
    else:
        shots = echo_mod.ShotConfig(config["shots"]["samples"], config["shots"]["seed"])
        series = _sampled_series(grid, exact.r, shifted, shots, lambda_p, mode)
    tableio.write_echo_series(recon_path, series, {**common, "mode": mode,
                                                   "samples": config["shots"]["samples"],
                                                   "seed": config["shots"]["seed"]})
    log(f"echo: wrote {recon_path.name} ({mode})")
    return EXIT_OK


def _reconstruct(grid, r, r_plus, r_minus, floor_flags, theta, e_p, provenance):
    grads = echo_mod.phase_gradient(r_plus, r_minus, theta)
    phi = echo_mod.integrate_phase(grads, grid)
    return echo_mod.assemble_echo(r, phi, grid, provenance=provenance,
                                  subtract_mean_energy=True, e_p=e_p, theta=theta,
                                  r_plus=r_plus, r_minus=r_minus, floor_flags=floor_flags)


def _sampled_series(grid, r_exact, shifted, shots, e_p, mode,
                    rngs=None) -> "echo_mod.EchoSeries":
    if rngs is None:
        rngs = echo_mod.point_rngs(shots.seed, grid.n_points)
    r_hat, fl0 = echo_mod.sample_series(r_exact, shots, rngs, stream=0)
    s_plus, fl1 = echo_mod.sample_series(shifted.survival_plus, shots, rngs, stream=1)
    s_minus, fl2 = echo_mod.sample_series(shifted.survival_minus, shots, rngs, stream=2)
    return _reconstruct(grid, r_hat,
                        shifted.norm_plus * s_plus, shifted.norm_minus * s_minus,
                        fl0 | fl1 | fl2, shifted.theta, e_p, f"sampled-{mode}")


def cmd_ldos(config, out_dir: Path, log) -> int:
    stage = _stage_hash(config, LDOS_KEYS)
    ldos_dir = out_dir / "ldos"
    ldos_dir.mkdir(parents=True, exist_ok=True)
    peaks_path = ldos_dir / "peaks.txt"
    filter_paths = [ldos_dir / f"ldos_d{f['delta']:g}_t{f['tau_max']:g}.txt"
                    for f in config["filters"]]
    if _outputs_current([*filter_paths, peaks_path], stage):
        log(f"ldos: outputs current for hash {stage}, skipping")
        return EXIT_OK

    geom, tiling, h, psi_p, lambda_p = _full_system(config)
    spec = full_spectrum(h)
    gs_energy = float(spec.energies[0])
    grid = echo_mod.TimeGrid(config["grid"]["dt"], config["grid"]["tau_max"])
    theta = config["theta"]
    exact = echo_mod.exact_echo(spec, psi_p, grid)
    shifted = echo_mod.shifted_amplitudes(spec, psi_p, grid, theta, "exact_global")
    e_grid = ldos_mod.default_energy_grid(spec.energies[0], spec.energies[-1])
    overlaps = ldos_mod.exact_overlaps(spec, psi_p)
    tableio.write_table(ldos_dir / "overlaps.txt", "overlaps",
                        {"config_hash": stage, "e_gs": gs_energy},
                        ["energy", "weight"], np.array(overlaps))

    mode = config["mode"]
    n_ensemble = config["ensemble_seeds"]
    shots = echo_mod.ShotConfig(config["shots"]["samples"], config["shots"]["seed"])
    peak_rows = []
    for fcfg, fpath in zip(config["filters"], filter_paths):
        sub = echo_mod.TimeGrid(grid.dt, fcfg["tau_max"])
        n = sub.n_points
        filt = ldos_mod.filter_coefficients(fcfg["delta"], sub)
        exact_sub = echo_mod.EchoSeries(sub, exact.r[:n], exact.phi[:n], exact.g[:n], "exact")
        curve_exact = ldos_mod.reconstruct_ldos(exact_sub, filt, e_grid)

        columns = [e_grid, curve_exact.density]
        names = ["energy", "exact"]
        sigma = None
        if mode in ("sampled", "pulse") and n_ensemble > 0:
            seeds = [shots.seed + 1000 * k for k in range(n_ensemble)]
            curves = []
            for seed in seeds:
                series = _sampled_series(
                    grid, exact.r, shifted,
                    echo_mod.ShotConfig(shots.samples_per_amplitude, seed),
                    lambda_p, mode)
                sub_series = echo_mod.EchoSeries(sub, series.r[:n], series.phi[:n],
                                                 series.g[:n], series.provenance)
                curves.append(ldos_mod.reconstruct_ldos(sub_series, filt, e_grid).density)
            curves = np.array(curves)
            mean = curves.mean(axis=0)
            sigma = curves.std(axis=0, ddof=1)
            columns = [e_grid, mean, sigma, curve_exact.density]
            names = ["energy", "density", "sigma", "exact"]
            tableio.write_table(
                ldos_dir / (fpath.stem + "_seeds.txt"), "ldos_ensemble",
                {"config_hash": stage, "delta": fcfg["delta"], "tau_max": fcfg["tau_max"],
                 "seeds": ",".join(str(s) for s in seeds)},
                ["energy"] + [f"seed{k}" for k in range(n_ensemble)],
                np.column_stack([e_grid, curves.T]),
            )
            peak_curve = ldos_mod.LdosCurve(e_grid, mean, fcfg["delta"], fcfg["tau_max"],
                                            "ensemble-mean", 0.0, sigma=sigma)
        else:
            peak_curve = curve_exact
        peak = ldos_mod.peak_estimate(peak_curve)
        peak_rows.append([fcfg["delta"], fcfg["tau_max"], peak.energy,
                          peak.uncertainty, gs_energy])
        tableio.write_table(
            fpath, "ldos_curve",
            {"config_hash": stage, "delta": fcfg["delta"], "tau_max": fcfg["tau_max"],
             "provenance": peak_curve.provenance, "e_gs": gs_energy,
             "truncation_ratio": filt.truncation_ratio},
            names, np.column_stack(columns),
        )
        log(f"ldos[delta={fcfg['delta']:g}]: peak {peak.energy:.4f} "
            f"(E_GS {gs_energy:.4f})")
    tableio.write_table(peaks_path, "peak_report", {"config_hash": stage},
                        ["delta", "tau_max", "e_peak", "uncertainty", "e_gs"],
                        np.array(peak_rows))
    return EXIT_OK


def cmd_pipeline(config, out_dir: Path, log) -> int:
    stages = [("prepare", cmd_prepare)]
    if config["mode"] == "pulse":
        stages.append(("optimize-pulse", cmd_optimize_pulse))
    stages += [("echo", cmd_echo), ("ldos", cmd_ldos)]
    for name, fn in stages:
        log(f"pipeline: stage {name}")
        code = fn(config, out_dir, log)
        if code != EXIT_OK:
            log(f"pipeline: stage {name} failed with exit code {code}")
            return code
    return EXIT_OK


COMMANDS = {
    "prepare": cmd_prepare,
    "optimize-pulse": cmd_optimize_pulse,
    "echo": cmd_echo,
    "ldos": cmd_ldos,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plecho",
        description="Fermi-Hubbard Loschmidt-echo protocol simulator",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override shots.seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker cap (advisory)")
    parser.add_argument("--mode", choices=["exact", "sampled", "pulse"], default=None)
    parser.add_argument("--out", default=None, help="override output directory")
    parser.add_argument("--dry-run", action="store_true", help="validate config only")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    def log(message):
        if not args.quiet:
            print(message, flush=True)

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config["shots"]["seed"] = args.seed
        if args.mode is not None:
            config["mode"] = args.mode
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dry_run:
        log("config ok")
        return EXIT_OK

    out_dir = Path(args.out or config["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](config, out_dir, log)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (KrylovError, StepSizeError, FloatingPointError) as err:
        print(f"numerical guard: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except pulse_mod.MissingPulseError as err:
        print(f"missing pulse: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
