"""CSV and JSON file formats for traces, maps and fit reports.

All frequencies in files are Hz and all magnitudes are linear; conversion to
the angular internal units happens at this boundary.  Files are UTF-8 CSV
with `,` separators, `.` decimal points and `# key: value` comment metadata.
Every write is atomic (temp file in the target directory, then rename) and
numbers are printed with 13 significant digits so a read-back reproduces the
values to well below 1e-12 relative.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import TWO_PI, PumpScheme
from .sweeps import SweepMap, SweepTrace

__all__ = [
    "DatasetFormatError",
    "DatasetFile",
    "read_dataset",
    "write_dataset",
    "read_map",
    "write_map",
    "write_fit_report",
    "write_residual_csv",
    "atomic_write_text",
]

TRACE_HEADER = "probe_freq_hz,pump_freq_hz,s21_mag"
MAP_HEADER_LABEL = "pump_detuning_hz"
FLOAT_FORMAT = "%.12e"


class DatasetFormatError(ValueError):
    """Malformed data file; message carries ``path:line``."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def atomic_write_text(path, text: str) -> None:
    """Write text to path via a temp file in the same directory + rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _format_meta_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _meta_lines(meta: dict) -> list[str]:
    return [f"# {k}: {_format_meta_value(v)}" for k, v in meta.items()]


def _parse_meta_value(s: str):
    s = s.strip()
    try:
        f = float(s)
    except ValueError:
        return s
    if f.is_integer() and "e" not in s.lower() and "." not in s:
        return int(f)
    return f


@dataclass
class DatasetFile:
    """One swept-probe trace as stored on disk.

    Columns are probe frequency (Hz), pump frequency (Hz) and linear |S21|;
    metadata comments carry at least the pump scheme plus whatever run
    conditions were recorded (temperature_mK, probe_power_dbm, n_cav or
    pump_power_dbm).
    """

    probe_freq_hz: np.ndarray
    pump_freq_hz: np.ndarray
    s21_mag: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.probe_freq_hz = np.asarray(self.probe_freq_hz, dtype=float)
        self.pump_freq_hz = np.asarray(self.pump_freq_hz, dtype=float)
        self.s21_mag = np.asarray(self.s21_mag, dtype=float)
        n = len(self.probe_freq_hz)
        if len(self.pump_freq_hz) != n or len(self.s21_mag) != n:
            raise ValueError("columns must have equal length")

    @property
    def scheme(self) -> PumpScheme:
        return PumpScheme.parse(self.meta["scheme"])

    @classmethod
    def from_trace(cls, trace: SweepTrace, meta: dict | None = None) -> "DatasetFile":
        """Build a file image from a trace; the trace meta must carry
        pump_freq_hz and scheme."""
        merged = dict(trace.meta)
        if meta:
            merged.update(meta)
        if "pump_freq_hz" not in merged:
            raise ValueError("trace meta must carry pump_freq_hz")
        if "scheme" not in merged:
            raise ValueError("trace meta must carry scheme")
        pump_hz = float(merged["pump_freq_hz"])
        if trace.axis == "offset":
            probe_hz = pump_hz + trace.omega / TWO_PI
        else:
            probe_hz = trace.omega / TWO_PI
        drop = {"noise_on"}
        file_meta = {k: v for k, v in merged.items() if k not in drop}
        return cls(probe_hz, np.full(len(probe_hz), pump_hz), trace.magnitude(),
                   file_meta)

    def to_trace(self) -> SweepTrace:
        """Absolute-axis magnitude trace (rad/s) with file metadata attached.

        Requires a single pump frequency across the file and strictly
        unique probe points; rows are sorted by probe frequency.
        """
        pump = np.unique(self.pump_freq_hz)
        if len(pump) != 1:
            raise ValueError("pump frequency varies within the file")
        order = np.argsort(self.probe_freq_hz)
        probe = self.probe_freq_hz[order]
        if np.any(np.diff(probe) <= 0):
            raise ValueError("duplicate probe frequencies in the file")
        meta = dict(self.meta)
        meta["pump_freq_hz"] = float(pump[0])
        return SweepTrace(TWO_PI * probe, self.s21_mag[order], axis="absolute",
                          meta=meta)


def write_dataset(path, data: DatasetFile) -> None:
    """Serialize a DatasetFile; atomic, deterministic, 13 significant digits."""
    lines = _meta_lines(data.meta)
    lines.append(TRACE_HEADER)
    for p, d, m in zip(data.probe_freq_hz, data.pump_freq_hz, data.s21_mag):
        lines.append(",".join(FLOAT_FORMAT % v for v in (p, d, m)))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dataset(path) -> DatasetFile:
    """Parse a DatasetFile, reporting the offending line on any format error."""
    path = Path(path)
    meta: dict = {}
    probe: list[float] = []
    pump: list[float] = []
    mag: list[float] = []
    header_seen = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" not in body:
                    raise DatasetFormatError(path, lineno,
                                             "comment is not a `key: value` pair")
                key, value = body.split(":", 1)
                meta[key.strip()] = _parse_meta_value(value)
                continue
            if not header_seen:
                if line != TRACE_HEADER:
                    raise DatasetFormatError(
                        path, lineno, f"expected header {TRACE_HEADER!r}, got {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DatasetFormatError(path, lineno,
                                         f"expected 3 fields, got {len(parts)}")
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise DatasetFormatError(path, lineno, "non-numeric field") from None
            if not all(math.isfinite(v) for v in values):
                raise DatasetFormatError(path, lineno, "non-finite value")
            if values[2] < 0:
                raise DatasetFormatError(path, lineno, "s21_mag must be >= 0")
            probe.append(values[0])
            pump.append(values[1])
            mag.append(values[2])
    if not header_seen:
        raise DatasetFormatError(path, 0, "missing column header")
    if not probe:
        raise DatasetFormatError(path, 0, "no data rows")
    if "scheme" not in meta:
        raise DatasetFormatError(path, 0, "missing `# scheme:` metadata")
    try:
        PumpScheme.parse(meta["scheme"])
    except ValueError as exc:
        raise DatasetFormatError(path, 0, str(exc)) from None
    return DatasetFile(np.array(probe), np.array(pump), np.array(mag), meta)


def write_map(path, smap: SweepMap) -> None:
    """Serialize a map: detuning axis (Hz) down the first column, probe
    offset axis (Hz) across the header row."""
    lines = _meta_lines(smap.meta)
    header = [MAP_HEADER_LABEL] + [FLOAT_FORMAT % (w / TWO_PI) for w in smap.omega]
    lines.append(",".join(header))
    for i, d in enumerate(smap.delta):
        row = [FLOAT_FORMAT % (d / TWO_PI)]
        row.extend(FLOAT_FORMAT % v for v in smap.s21_mag[i])
        lines.append(",".join(row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_map(path) -> SweepMap:
    """Parse a map file written by :func:`write_map`."""
    path = Path(path)
    meta: dict = {}
    omega_hz: np.ndarray | None = None
    delta_hz: list[float] = []
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" not in body:
                    raise DatasetFormatError(path, lineno,
                                             "comment is not a `key: value` pair")
                key, value = body.split(":", 1)
                meta[key.strip()] = _parse_meta_value(value)
                continue
            parts = line.split(",")
            if omega_hz is None:
                if parts[0] != MAP_HEADER_LABEL:
                    raise DatasetFormatError(
                        path, lineno,
                        f"expected header starting with {MAP_HEADER_LABEL!r}")
                try:
                    omega_hz = np.array([float(p) for p in parts[1:]])
                except ValueError:
                    raise DatasetFormatError(path, lineno,
                                             "non-numeric axis value") from None
                continue
            if len(parts) != len(omega_hz) + 1:
                raise DatasetFormatError(
                    path, lineno,
                    f"expected {len(omega_hz) + 1} fields, got {len(parts)}")
            try:
                values = [float(p) for p in parts]
            except ValueError:
                raise DatasetFormatError(path, lineno, "non-numeric field") from None
            if not all(math.isfinite(v) for v in values):
                raise DatasetFormatError(path, lineno, "non-finite value")
            delta_hz.append(values[0])
            rows.append(values[1:])
    if omega_hz is None or not rows:
        raise DatasetFormatError(path, 0, "no matrix content")
    return SweepMap(TWO_PI * np.array(delta_hz), TWO_PI * omega_hz,
                    np.array(rows), meta)


def _slot_to_hz(name_with_tag: str, value: float) -> tuple[str, float]:
    base = name_with_tag.split("[")[0].split("@")[0]
    if base == "n_cav":
        return "value", value
    return "value_hz", value / TWO_PI


def write_fit_report(path, result, problem, dataset_paths=None) -> None:
    """JSON fit report: fitted values in Hz (n_cav as a count), uncertainties,
    rms residual, iteration count and convergence flag, plus the resolved
    per-dataset parameter sets."""
    params = {}
    for slot, value in result.values.items():
        key, v = _slot_to_hz(slot, value)
        skey, s = _slot_to_hz(slot, result.stderr.get(slot, math.nan))
        entry = {key: v, skey.replace("value", "stderr"): s}
        params[slot] = entry
    datasets = []
    for i, resolved in enumerate(result.dataset_params):
        entry = {
            "index": i,
            "scheme": problem.datasets[i].scheme.value,
            "n_points": problem.datasets[i].n_points,
        }
        if dataset_paths is not None:
            entry["path"] = str(dataset_paths[i])
        entry["parameters"] = {
            (n if n == "n_cav" else n + "_hz"):
                (v if n == "n_cav" else v / TWO_PI)
            for n, v in resolved.items()
        }
        datasets.append(entry)
    report = {
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "rms_residual": float(result.rms_residual),
        "n_parameters": len(result.values),
        "parameters": params,
        "datasets": datasets,
    }
    atomic_write_text(path, json.dumps(report, indent=2, sort_keys=True) + "\n")


def write_residual_csv(path, problem, result) -> None:
    """Per-point residual table for all datasets of a fitted problem."""
    from .fitting import _dataset_residuals

    lines = ["dataset,probe_freq_hz,s21_data,s21_model,residual"]
    for i, (ds, params) in enumerate(zip(problem.datasets, result.dataset_params)):
        weightless = ds.weights
        ds.weights = None
        raw = _dataset_residuals(ds, params)
        ds.weights = weightless
        probe_hz = ds._omega_p / TWO_PI
        data = ds._data
        model = data + raw
        for j in range(ds.n_points):
            lines.append("%d,%s,%s,%s,%s" % (
                i, FLOAT_FORMAT % probe_hz[j], FLOAT_FORMAT % data[j],
                FLOAT_FORMAT % model[j], FLOAT_FORMAT % raw[j]))
    atomic_write_text(path, "\n".join(lines) + "\n")
