"""Tabular text files with a key:value header block.

This is the handoff format between pipeline stages and the plotting
component. Layout:

    # plecho-table v1
    # kind: echo_series
    # theta: 0.1
    # columns: tau r r_plus r_minus phi re_g im_g
    0.000000000000e+00 1.000000000000e+00 ...

Header lines start with '# '; the mandatory 'columns:' line is last and
names whitespace-separated numeric columns. Writers format floats with a
fixed %.12e so identical inputs give byte-identical files; no timestamps
are embedded for the same reason.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = "plecho-table v1"
FLOAT_FMT = "%.12e"
UNITS_NOTE = "energies in t, times in 1/t"


class TableFormatError(ValueError):
    """Malformed table file; message carries the offending line number."""


def write_table(path, kind: str, meta: dict, columns: list[str], data) -> None:
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.size and data.shape[1] != len(columns):
        raise ValueError(f"{len(columns)} columns declared, data has {data.shape[1]}")
    lines = [f"# {MAGIC}", f"# kind: {kind}"]
    for key, value in meta.items():
        if key in ("kind", "columns"):
            raise ValueError(f"reserved meta key {key!r}")
        value = format_meta_value(value)
        if "\n" in value:
            raise ValueError("meta values must be single-line")
        lines.append(f"# {key}: {value}")
    lines.append(f"# columns: {' '.join(columns)}")
    for row in data:
        lines.append(" ".join(FLOAT_FMT % v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def format_meta_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def read_table(path) -> tuple[dict, list[str], np.ndarray]:
    """Parse a table file; raises TableFormatError with a line number."""
    meta: dict[str, str] = {}
    columns: list[str] | None = None
    rows: list[list[float]] = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.rstrip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if lineno == 1:
                if body != MAGIC:
                    raise TableFormatError(f"line 1: not a {MAGIC} file")
                continue
            if ":" not in body:
                raise TableFormatError(f"line {lineno}: header line without ':'")
            key, value = body.split(":", 1)
            key, value = key.strip(), value.strip()
            if key == "columns":
                columns = value.split()
            else:
                meta[key] = value
            continue
        if columns is None:
            raise TableFormatError(f"line {lineno}: data before the columns header")
        parts = line.split()
        if len(parts) != len(columns):
            raise TableFormatError(
                f"line {lineno}: expected {len(columns)} values, got {len(parts)}"
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as err:
            raise TableFormatError(f"line {lineno}: {err}") from None
    if columns is None:
        raise TableFormatError("missing columns header")
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(columns)))
    return meta, columns, data


def config_hash(config: dict) -> str:
    """Short stable hash of a config document."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


# -- artifact-specific writers/readers ---------------------------------------


def echo_series_table(series, meta: dict | None = None):
    """(meta, columns, data) triple for an EchoSeries."""
    n = series.grid.n_points
    nan = np.full(n, np.nan)
    cols = ["tau", "r", "r_plus", "r_minus", "phi", "re_g", "im_g", "floored"]
    data = np.column_stack([
        series.grid.times,
        series.r,
        series.r_plus if series.r_plus is not None else nan,
        series.r_minus if series.r_minus is not None else nan,
        series.phi,
        series.g.real,
        series.g.imag,
        series.floor_flags.astype(float) if series.floor_flags is not None else np.zeros(n),
    ])
    if series.phi_display is not None:
        cols.append("phi_display")
        data = np.column_stack([data, series.phi_display])
    full_meta = {
        "provenance": series.provenance,
        "dt": float(series.grid.dt),
        "tau_max": float(series.grid.tau_max),
        "units": UNITS_NOTE,
    }
    if series.theta is not None:
        full_meta["theta"] = float(series.theta)
    full_meta.update(meta or {})
    return full_meta, cols, data


def write_echo_series(path, series, meta: dict | None = None) -> None:
    full_meta, cols, data = echo_series_table(series, meta)
    write_table(path, "echo_series", full_meta, cols, data)


def read_echo_series(path):
    from .echo import EchoSeries, TimeGrid

    meta, cols, data = read_table(path)
    col = {name: data[:, i] for i, name in enumerate(cols)}
    grid = TimeGrid(float(meta["dt"]), float(meta["tau_max"]))
    r_plus = col.get("r_plus")
    if r_plus is not None and np.all(np.isnan(r_plus)):
        r_plus = None
    r_minus = col.get("r_minus")
    if r_minus is not None and np.all(np.isnan(r_minus)):
        r_minus = None
    series = EchoSeries(
        grid=grid,
        r=col["r"],
        phi=col["phi"],
        g=col["re_g"] + 1j * col["im_g"],
        provenance=meta.get("provenance", "unknown"),
        theta=float(meta["theta"]) if "theta" in meta else None,
        r_plus=r_plus,
        r_minus=r_minus,
        phi_display=col.get("phi_display"),
        floor_flags=col["floored"].astype(bool) if "floored" in col else None,
    )
    return series, meta


def write_pulse(path, result, meta: dict | None = None) -> None:
    pulse = result.pulse
    full_meta = {
        "pair_kind": pulse.pair_kind,
        "theta": float(pulse.theta),
        "sign": "+" if pulse.sign > 0 else "-",
        "dt": float(pulse.dt),
        "u_fixed": float(pulse.u_fixed),
        "fidelity": float(result.fidelity),
        "evaluations": int(result.iterations),
        "target_norm": float(result.target_norm),
        "units": UNITS_NOTE,
    }
    full_meta.update(meta or {})
    steps = np.arange(pulse.n_steps, dtype=float)
    data = np.column_stack([steps, pulse.steps]) if pulse.n_steps else np.empty((0, 4))
    write_table(path, "pulse_sequence", full_meta,
                ["step", "t_x", "t_x_prime", "t_y"], data)


def read_pulse(path):
    from .pulse import PulseResult, PulseSequence

    meta, cols, data = read_table(path)
    steps = data[:, 1:4] if len(data) else np.zeros((0, 3))
    pulse = PulseSequence(
        dt=float(meta["dt"]),
        steps=steps,
        theta=float(meta["theta"]),
        sign=+1 if meta["sign"] == "+" else -1,
        pair_kind=meta["pair_kind"],
        u_fixed=float(meta["u_fixed"]),
    )
    result = PulseResult(pulse, float(meta["fidelity"]), int(meta.get("evaluations", 0)),
                         float(meta.get("target_norm", 1.0)))
    return result, meta


def write_vector(path, vec, meta: dict | None = None) -> None:
    """Amplitudes with a basis fingerprint guarding against basis mixups."""
    sector = vec.basis.sector
    full_meta = {
        "n_sites": sector.n_sites,
        "n_up": sector.n_up,
        "n_down": sector.n_down,
        "basis_fingerprint": vec.basis.fingerprint(),
    }
    full_meta.update(meta or {})
    data = np.column_stack([vec.amplitudes.real, vec.amplitudes.imag])
    write_table(path, "fock_vector", full_meta, ["re", "im"], data)


def read_vector(path, basis=None):
    from .fock import FockBasis, FockVector, NumberSector

    meta, cols, data = read_table(path)
    if basis is None:
        basis = FockBasis(NumberSector(int(meta["n_up"]), int(meta["n_down"]),
                                       int(meta["n_sites"])))
    if basis.fingerprint() != meta["basis_fingerprint"]:
        raise ValueError("basis fingerprint mismatch")
    return FockVector(basis, data[:, 0] + 1j * data[:, 1]), meta
