"""Configuration, parameter sweeps and file output.

A run is described by an INI file with four sections::

    [physical]
    y = 1.5
    chi = 0.08
    sideband = 30        # omega_m / kappa
    q_m = 300
    z = 0.26             # optional; used by single-point runs
    kT_over_omega_m = 0, 1   # or n_th = ...; lists expand the run
    kappa = 1

    [sweep]
    kind = power         # power | detuning | region | ncmap
    z_min = 0.05
    z_max = 0.5
    z_points = 46        # or z_values = 0.1, 0.2, ...

    [quantum]
    enabled = on
    n_a = 30
    n_b = 10

    [output]
    format = csv
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from . import fock, observables
from .semiclassical import (
    Y_THRESHOLD,
    BracketError,
    PhysicalParams,
    bistability_window,
    critical_occupation,
    critical_power,
    mean_field_branches,
    mean_field_roots,
    region_classify,
)

log = logging.getLogger(__name__)

CSV_HEADER = (
    "y,z,chi,sideband,q_m,n_th,lam1,lam2,lam3,stab1,stab2,stab3,"
    "region,nq,amp2,g2,fid,na,nb,resid"
).split(",")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class PhysicalSpec:
    y: float
    chi: float
    sideband: float
    q_m: float
    z: float | None = None
    n_th_values: tuple[float, ...] = (0.0,)
    kappa: float = 1.0

    def params(self, z: float | None = None, y: float | None = None, n_th: float = 0.0) -> PhysicalParams:
        zz = self.z if z is None else z
        if zz is None:
            raise ConfigError("no driving power z given")
        return PhysicalParams.from_dimensionless(
            y=self.y if y is None else y,
            z=zz,
            chi=self.chi,
            sideband=self.sideband,
            q_m=self.q_m,
            n_th=n_th,
            kappa=self.kappa,
        )


@dataclass(frozen=True)
class SweepSpec:
    kind: str = "point"
    z_values: tuple[float, ...] = ()
    y_values: tuple[float, ...] = ()
    sideband_values: tuple[float, ...] = ()
    q_m_values: tuple[float, ...] = ()


@dataclass(frozen=True)
class QuantumSpec:
    enabled: bool = False
    n_a: int = 30
    n_b: int = 10
    backend: str = "auto"
    wigner_points: int = 121

    @property
    def dims(self) -> fock.FockConfig:
        return fock.FockConfig(self.n_a, self.n_b)


@dataclass(frozen=True)
class OutputSpec:
    format: str = "csv"
    name: str = ""


@dataclass(frozen=True)
class RunPlan:
    physical: PhysicalSpec
    sweep: SweepSpec = SweepSpec()
    quantum: QuantumSpec = QuantumSpec()
    output: OutputSpec = OutputSpec()


_KEYS = {
    "physical": {"y", "z", "chi", "sideband", "q_m", "n_th", "kt_over_omega_m", "kappa"},
    "sweep": {
        "kind", "z_values", "z_min", "z_max", "z_points", "y_values", "y_min", "y_max", "y_points",
        "sideband_min", "sideband_max", "sideband_points", "q_m_min", "q_m_max", "q_m_points",
    },
    "quantum": {"enabled", "n_a", "n_b", "backend", "wigner_points"},
    "output": {"format", "name"},
}
_SWEEP_KINDS = ("point", "power", "detuning", "region", "ncmap")


def bose_occupation(kT_over_omega_m: float) -> float:
    """Thermal phonon number 1/(exp(omega_m/kT) - 1)."""
    if kT_over_omega_m < 0:
        raise ConfigError("kT_over_omega_m must be non-negative")
    if kT_over_omega_m == 0:
        return 0.0
    return 1.0 / math.expm1(1.0 / kT_over_omega_m)


def _floats(section: str, key: str, raw: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in raw.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as numbers") from None
    if not vals:
        raise ConfigError(f"[{section}] {key} is empty")
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"[{section}] {key} must be finite, got {raw!r}")
    return vals


def _scalar(section: str, key: str, raw: str) -> float:
    vals = _floats(section, key, raw)
    if len(vals) != 1:
        raise ConfigError(f"[{section}] {key} takes a single value")
    return vals[0]


def _count(section: str, key: str, raw: str) -> int:
    v = _scalar(section, key, raw)
    if v != int(v) or v < 1:
        raise ConfigError(f"[{section}] {key} must be a positive integer")
    return int(v)


def _grid(sec: configparser.SectionProxy, name: str, log_spaced: bool = False) -> tuple[float, ...]:
    section = sec.name
    if f"{name}_values" in sec:
        return _floats(section, f"{name}_values", sec[f"{name}_values"])
    keys = [f"{name}_min", f"{name}_max", f"{name}_points"]
    present = [k in sec for k in keys]
    if not any(present):
        return ()
    if not all(present):
        raise ConfigError(f"[{section}] needs all of {', '.join(keys)}")
    lo = _scalar(section, keys[0], sec[keys[0]])
    hi = _scalar(section, keys[1], sec[keys[1]])
    n = _count(section, keys[2], sec[keys[2]])
    if log_spaced:
        if lo <= 0 or hi <= 0:
            raise ConfigError(f"[{section}] {name} range must be positive for a log grid")
        return tuple(np.geomspace(lo, hi, n).tolist())
    return tuple(np.linspace(lo, hi, n).tolist())


def parse_config_text(text: str) -> RunPlan:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in cp.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - _KEYS[section]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    if "physical" not in cp:
        raise ConfigError("missing [physical] section")

    ph = cp["physical"]
    for key in ("y", "chi", "sideband", "q_m"):
        if key not in ph:
            raise ConfigError(f"missing required key [physical] {key}")
    vals = {k: _scalar("physical", k, ph[k]) for k in ("y", "chi", "sideband", "q_m", "z", "kappa") if k in ph}
    if vals.get("kappa", 1.0) <= 0:
        raise ConfigError("[physical] kappa must be positive")
    for key in ("chi", "sideband", "q_m"):
        if vals[key] <= 0:
            raise ConfigError(f"[physical] {key} must be positive")
    if vals.get("z", 0.0) < 0:
        raise ConfigError("[physical] z must be non-negative")
    if "n_th" in ph and "kt_over_omega_m" in ph:
        raise ConfigError("give either n_th or kT_over_omega_m, not both")
    if "n_th" in ph:
        n_th = _floats("physical", "n_th", ph["n_th"])
        if min(n_th) < 0:
            raise ConfigError("[physical] n_th must be non-negative")
    elif "kt_over_omega_m" in ph:
        n_th = tuple(bose_occupation(t) for t in _floats("physical", "kT_over_omega_m", ph["kt_over_omega_m"]))
    else:
        n_th = (0.0,)
    physical = PhysicalSpec(n_th_values=n_th, **vals)

    sweep = SweepSpec()
    if "sweep" in cp:
        sw = cp["sweep"]
        kind = sw.get("kind", "power").strip().lower()
        if kind not in _SWEEP_KINDS:
            raise ConfigError(f"[sweep] kind must be one of {', '.join(_SWEEP_KINDS)}")
        sweep = SweepSpec(
            kind=kind,
            z_values=_grid(sw, "z"),
            y_values=_grid(sw, "y"),
            sideband_values=_grid(sw, "sideband", log_spaced=True),
            q_m_values=_grid(sw, "q_m", log_spaced=True),
        )
        if any(v < 0 for v in sweep.z_values):
            raise ConfigError("[sweep] z values must be non-negative")

    quantum = QuantumSpec()
    if "quantum" in cp:
        q = cp["quantum"]
        try:
            enabled = q.getboolean("enabled", fallback=True)
        except ValueError:
            raise ConfigError("[quantum] enabled must be a boolean (on/off)") from None
        kwargs = {"enabled": enabled}
        for key in ("n_a", "n_b", "wigner_points"):
            if key in q:
                kwargs[key] = _count("quantum", key, q[key]) if key != "n_b" else int(_scalar("quantum", key, q[key]))
        if "backend" in q:
            kwargs["backend"] = q["backend"].strip()
            if kwargs["backend"] not in ("auto", "pardiso", "superlu"):
                raise ConfigError("[quantum] backend must be auto, pardiso or superlu")
        quantum = QuantumSpec(**kwargs)
        try:
            quantum.dims
        except ValueError as exc:
            raise ConfigError(f"[quantum] {exc}") from exc

    output = OutputSpec()
    if "output" in cp:
        o = cp["output"]
        fmt = o.get("format", "csv").strip().lower()
        if fmt not in ("csv", "json"):
            raise ConfigError("[output] format must be csv or json")
        output = OutputSpec(format=fmt, name=o.get("name", "").strip())
    return RunPlan(physical, sweep, quantum, output)


def parse_config(path) -> RunPlan:
    """Read and validate an INI run configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


# ---------------------------------------------------------------------------
# records


@dataclass
class QuantumBlock:
    photon_number: float
    amp_sq: float
    g2: float | None
    fidelity_vs_kerr: float
    n_a: int
    n_b: int
    residual: float
    kerr_photon_number: float
    kerr_g2: float | None
    kerr_residual: float


@dataclass
class SweepRecord:
    y: float
    z: float
    chi: float
    sideband: float
    q_m: float
    n_th: float
    roots: list[float] = field(default_factory=list)
    stability: list[str] = field(default_factory=list)
    branch: list[str] = field(default_factory=list)
    region: str | None = None
    quantum: QuantumBlock | None = None
    error: str | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def quantum_point(p: PhysicalParams, dims: fock.FockConfig, backend: str = "auto") -> QuantumBlock:
    """Optomechanical steady state and its Kerr twin at equal bare parameters."""
    rho = fock.steady_state(fock.liouvillian_om(p, dims), backend=backend)
    rho_opt = observables.partial_trace_optical(rho)
    rho_k = fock.steady_state(fock.liouvillian_kerr(p, dims.optical), backend=backend)
    return QuantumBlock(
        photon_number=observables.photon_number(rho),
        amp_sq=observables.amplitude_squared(rho),
        g2=observables.g2_zero(rho),
        fidelity_vs_kerr=observables.fidelity(rho_opt, rho_k),
        n_a=dims.n_a,
        n_b=dims.n_b,
        residual=rho.info["residual"],
        kerr_photon_number=observables.photon_number(rho_k),
        kerr_g2=observables.g2_zero(rho_k),
        kerr_residual=rho_k.info["residual"],
    )


def semiclassical_record(spec: PhysicalSpec, y: float, z: float, n_th: float) -> SweepRecord:
    p = spec.params(z=z, y=y, n_th=n_th)
    branches = mean_field_branches(p)
    rec = SweepRecord(
        y=y, z=z, chi=spec.chi, sideband=spec.sideband, q_m=spec.q_m, n_th=n_th,
        roots=[b.lam for b in branches],
        stability=[b.stability.value for b in branches],
        branch=[b.branch_index.value for b in branches],
    )
    try:
        rec.region = region_classify(y, z, spec.sideband, spec.q_m).value
    except (RuntimeError, BracketError) as exc:
        log.debug("no region label at y=%g z=%g: %s", y, z, exc)
    return rec


def _evaluate(task) -> SweepRecord:
    spec, y, z, n_th, quantum = task
    rec = semiclassical_record(spec, y, z, n_th)
    if quantum is not None and quantum.enabled:
        try:
            rec.quantum = quantum_point(spec.params(z=z, y=y, n_th=n_th), quantum.dims, quantum.backend)
        except Exception as exc:  # one failed point must not abort the sweep
            log.warning("quantum solve failed at y=%g z=%g: %s", y, z, exc)
            rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def run_tasks(tasks: Sequence, jobs: int = 1) -> list[SweepRecord]:
    """Evaluate points, in input order, on up to ``jobs`` worker processes."""
    if jobs <= 1 or len(tasks) <= 1:
        return [_evaluate(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_evaluate, tasks))


def sweep_power(plan: RunPlan, jobs: int = 1) -> list[SweepRecord]:
    """One record per (n_th, z) at the configured detuning."""
    zs = plan.sweep.z_values or ((plan.physical.z,) if plan.physical.z is not None else ())
    if not zs:
        raise ConfigError("power sweep needs z values")
    q = plan.quantum if plan.quantum.enabled else None
    tasks = [(plan.physical, plan.physical.y, z, n_th, q) for n_th in plan.physical.n_th_values for z in zs]
    return run_tasks(tasks, jobs)


def sweep_detuning(plan: RunPlan, jobs: int = 1) -> list[SweepRecord]:
    """One record per (n_th, y) at the configured driving power."""
    if not plan.sweep.y_values:
        raise ConfigError("detuning sweep needs y values")
    if plan.physical.z is None:
        raise ConfigError("detuning sweep needs [physical] z")
    q = plan.quantum if plan.quantum.enabled else None
    tasks = [
        (plan.physical, y, plan.physical.z, n_th, q)
        for n_th in plan.physical.n_th_values
        for y in plan.sweep.y_values
    ]
    return run_tasks(tasks, jobs)


def _root_count(y: float, z: float) -> int:
    return len(mean_field_roots(y, z))


def detect_folds(y: float, z_values: Sequence[float], xtol: float = 1e-13) -> list[float]:
    """Driving powers where the number of mean-field roots changes.

    Located on the grid, then refined by bisection on the root count.
    """
    folds = []
    counts = [_root_count(y, z) for z in z_values]
    for (z0, c0), (z1, c1) in zip(zip(z_values, counts), zip(z_values[1:], counts[1:])):
        if c0 == c1:
            continue
        lo, hi = z0, z1
        while hi - lo > xtol * max(1.0, abs(hi)):
            mid = 0.5 * (lo + hi)
            if _root_count(y, mid) == c0:
                lo = mid
            else:
                hi = mid
        folds.append(0.5 * (lo + hi))
    return folds


def detuning_window(z: float, y_max: float = 1e3) -> tuple[float, float] | None:
    """Detuning interval with three mean-field roots at driving power ``z``.

    The ends solve z_+(y) = z and z_-(y) = z.  ``None`` at or below threshold.
    """
    from .semiclassical import Z_THRESHOLD

    if z <= Z_THRESHOLD:
        return None

    def zp(y):
        return bistability_window(y)[1] - z

    def zm(y):
        return bistability_window(y)[0] - z

    y0 = Y_THRESHOLD
    hi = 2.0 * y0
    while zp(hi) < 0:
        hi *= 2.0
        if hi > y_max:
            return None
    y_lo = brentq(zp, y0, hi, xtol=1e-14, rtol=1e-15)
    hi = max(hi, y_lo)
    while zm(hi) < 0:
        hi *= 2.0
        if hi > y_max:
            return None
    y_hi = brentq(zm, y_lo, hi, xtol=1e-14, rtol=1e-15)
    return y_lo, y_hi


# ---------------------------------------------------------------------------
# region map and critical-occupation surface


@dataclass
class RegionMap:
    y_values: list[float]
    z_values: list[float]
    labels: list[list[str | None]]  # labels[i_z][i_y]
    boundaries: dict[str, list[tuple[float, float]]]


def region_boundaries(y_values: Iterable[float], sideband: float, q_m: float) -> dict[str, list[tuple[float, float]]]:
    """Polylines z_-(y), z_+(y) (for y >= threshold) and z_c(y) (where finite)."""
    lower, upper, crit = [], [], []
    for y in y_values:
        w = bistability_window(y)
        if w is not None:
            lower.append((y, w[0]))
            upper.append((y, w[1]))
        try:
            zc = critical_power(y, sideband, q_m)
        except BracketError:
            continue
        if math.isfinite(zc):
            crit.append((y, zc))
    return {"z_minus": lower, "z_plus": upper, "z_c": crit}


def region_map(plan: RunPlan) -> RegionMap:
    ys, zs = list(plan.sweep.y_values), list(plan.sweep.z_values)
    s, q = plan.physical.sideband, plan.physical.q_m
    labels = []
    for z in zs:
        row = []
        for y in ys:
            try:
                row.append(region_classify(y, z, s, q).value)
            except (RuntimeError, BracketError):
                row.append(None)
        labels.append(row)
    return RegionMap(ys, zs, labels, region_boundaries(ys, s, q) if ys else {"z_minus": [], "z_plus": [], "z_c": []})


@dataclass
class NcSurface:
    y: float
    sideband_values: list[float]
    q_m_values: list[float]
    ratio: list[list[float | None]]  # ratio[i_q][i_s]; None marks a sentinel cell
    flags: list[list[str]]  # "ok", "stable" (no instability) or "error"


def nc_ratio(y: float, sideband: float, q_m: float) -> tuple[float | None, str]:
    """n_c / n_Delta = 2 lam_c / y, independent of chi."""
    try:
        lam_c = critical_occupation(y, sideband, q_m)
    except BracketError:
        return None, "error"
    if math.isinf(lam_c):
        return None, "stable"
    return 2.0 * lam_c / y, "ok"


def nc_surface(plan: RunPlan) -> NcSurface:
    y = plan.physical.y
    ss, qs = list(plan.sweep.sideband_values), list(plan.sweep.q_m_values)
    ratio, flags = [], []
    for q in qs:
        cells = [nc_ratio(y, s, q) for s in ss]
        ratio.append([c[0] for c in cells])
        flags.append([c[1] for c in cells])
    return NcSurface(y, ss, qs, ratio, flags)


# ---------------------------------------------------------------------------
# output


def format_float(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"refusing to write non-finite value {x}")
    return format(x, ".17g")


def _csv_row(rec: SweepRecord) -> list[str]:
    lam = [format_float(v) for v in rec.roots] + [""] * (3 - len(rec.roots))
    stab = list(rec.stability) + [""] * (3 - len(rec.stability))
    q = rec.quantum
    qcols = ["", "", "", "", "", "", ""]
    if q is not None:
        qcols = [
            format_float(q.photon_number), format_float(q.amp_sq), format_float(q.g2),
            format_float(q.fidelity_vs_kerr), str(q.n_a), str(q.n_b), format_float(q.residual),
        ]
    return [
        format_float(rec.y), format_float(rec.z), format_float(rec.chi), format_float(rec.sideband),
        format_float(rec.q_m), format_float(rec.n_th), *lam, *stab, rec.region or "", *qcols,
    ]


def _json_value(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, str):
        import json

        return json.dumps(v)
    if isinstance(v, dict):
        return "{" + ", ".join(f"{_json_value(str(k))}: {_json_value(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    if isinstance(v, np.generic):
        return _json_value(v.item())
    raise TypeError(f"cannot serialise {type(v).__name__}")


def records_to_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        w.writerow(_csv_row(rec))
    return buf.getvalue()


def records_to_json(records: Sequence[SweepRecord]) -> str:
    if not records:
        return "[]\n"
    return "[\n" + ",\n".join("  " + _json_value(r.as_dict()) for r in records) + "\n]\n"


def _write(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit(records: Sequence[SweepRecord], format: str, path) -> None:
    """Write records as CSV (fixed header) or JSON; floats use 17 significant digits."""
    if format == "csv":
        _write(path, records_to_csv(records))
    elif format == "json":
        _write(path, records_to_json(records))
    else:
        raise ValueError(f"unknown format {format!r}")


def read_records_csv(path) -> list[dict]:
    """Parse an emitted CSV back into dicts (empty fields become None)."""
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for key, raw in row.items():
                if raw == "":
                    rec[key] = None
                elif key.startswith("stab") or key == "region":
                    rec[key] = raw
                elif key in ("na", "nb"):
                    rec[key] = int(raw)
                else:
                    rec[key] = float(raw)
            out.append(rec)
    return out


def emit_wigner(grid: observables.WignerGrid, path) -> None:
    """CSV with one (re, im, w) row per grid point, Re varying fastest."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re", "im", "w"])
    for j, im in enumerate(grid.im_axis):
        for i, re in enumerate(grid.re_axis):
            w.writerow([format_float(re), format_float(im), format_float(grid.values[j, i])])
    _write(path, buf.getvalue())


def emit_region_map(rmap: RegionMap, format: str, directory, prefix: str = "") -> list[str]:
    cells = [
        {"y": y, "z": z, "region": rmap.labels[i][j]}
        for i, z in enumerate(rmap.z_values)
        for j, y in enumerate(rmap.y_values)
    ]
    curves = [
        {"curve": name, "y": y, "z": z} for name, pts in rmap.boundaries.items() for (y, z) in pts
    ]
    paths = []
    for stem, rows, cols in (("regions", cells, ["y", "z", "region"]), ("boundaries", curves, ["curve", "y", "z"])):
        path = os.path.join(directory, f"{prefix}{stem}.{format}")
        _write(path, _table(rows, cols, format))
        paths.append(path)
    return paths


def emit_nc_surface(surf: NcSurface, format: str, directory, prefix: str = "") -> str:
    rows = [
        {"y": surf.y, "sideband": s, "q_m": q, "nc_over_ndelta": surf.ratio[i][j], "flag": surf.flags[i][j]}
        for i, q in enumerate(surf.q_m_values)
        for j, s in enumerate(surf.sideband_values)
    ]
    path = os.path.join(directory, f"{prefix}ncmap.{format}")
    _write(path, _table(rows, ["y", "sideband", "q_m", "nc_over_ndelta", "flag"], format))
    return path


def _table(rows: list[dict], cols: list[str], format: str) -> str:
    if format == "json":
        if not rows:
            return "[]\n"
        return "[\n" + ",\n".join("  " + _json_value({c: r[c] for c in cols}) for r in rows) + "\n]\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([r[c] if isinstance(r[c], str) else format_float(r[c]) for c in cols])
    return buf.getvalue()
