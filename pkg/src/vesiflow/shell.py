"""Configuration, run manifests, snapshots and the high-level run drivers.

Configs are TOML; every run writes a manifest echoing the fully resolved
configuration plus the package version and effective seed, and a manifest
alone reproduces the run byte for byte.  Ledgers are CSV with fixed
17-significant-digit decimals; snapshots are a small little-endian binary
format with a magic/version header and the coefficient payload in the
deterministic (eigenvalue, j, k) mode order.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import sys
from dataclasses import asdict, dataclass, field as dc_field, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                      # Python 3.10
    import tomli as tomllib

from . import __version__
from .basis import DomainSpec, sorted_modes
from .dynamics import Problem, StepperConfig, SystemState, equilibrium_state
from .energy import EnergyParams
from .errors import ConfigError, ShapeError, SnapshotFormatError
from .field import ScalarField, from_grid, h2_norm, v_norm
from .fluid import AlphaParams
from .ledger import CSV_COLUMNS, BalanceRecord
from .noise import NoiseSpec
from .veriflab import SweepConfig

SNAPSHOT_MAGIC = b"VSFL"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIdQ")               # magic, version, N, t, step


@dataclass(frozen=True)
class InitialSpec:
    preset: str = "equilibrium"
    radius: float = np.pi / 4
    width: float = 0.2
    center: tuple = (np.pi / 2, np.pi / 2)
    amplitude: float = 0.3
    velocity_amplitude: float = 0.2
    decay: float = 2.0
    seed: int = 7
    path: str = ""

    PRESETS = ("equilibrium", "circle-vesicle", "random", "from-snapshot")


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    record_every: int = 1
    snapshot_every: int = 0
    f_max: float = 1e6


@dataclass(frozen=True)
class RunConfig:
    domain: DomainSpec
    fluid: AlphaParams
    energy: EnergyParams
    noise: NoiseSpec
    stepper: StepperConfig
    initial: InitialSpec
    output: OutputSpec

    def problem(self) -> Problem:
        return Problem(self.domain, self.fluid, self.energy)


def _take(table: dict, key: str, default, cast):
    value = table.get(key, default)
    try:
        return cast(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value for {key!r}: {value!r}") from err


def load_config(path: str) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"invalid TOML in {path}: {err}") from err
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    try:
        dom = raw.get("domain", {})
        domain = DomainSpec(_take(dom, "modes_per_axis", 16, int),
                            _take(dom, "collocation_per_axis", 0, int))
        flu = raw.get("fluid", {})
        fluid = AlphaParams(_take(flu, "alpha", 1.0, float),
                            _take(flu, "nu", 1.0, float))
        ene = raw.get("energy", {})
        energy = EnergyParams(
            m1=_take(ene, "m1", 0.0, float), m2=_take(ene, "m2", 0.0, float),
            a=_take(ene, "a", -np.pi ** 2, float), b=_take(ene, "b", 0.0, float),
            gamma=_take(ene, "gamma", 1.0, float))
        noi = raw.get("noise", {})
        noise = NoiseSpec(
            zeta_a=_take(noi, "zeta_a", 0.0, float),
            p_a=_take(noi, "p_a", 2.0, float),
            zeta_b=_take(noi, "zeta_b", 0.0, float),
            p_b=_take(noi, "p_b", 2.0, float),
            seed=_take(noi, "seed", 0, int),
            stream_id=_take(noi, "stream_id", 0, int),
            override=_take(noi, "override", False, bool))
        ste = raw.get("stepper", {})
        stepper = StepperConfig(
            dt=_take(ste, "dt", 1e-4, float),
            t_final=_take(ste, "t_final", 0.5, float),
            scheme=_take(ste, "scheme", "imex_em", str),
            galerkin_n=_take(ste, "galerkin_n", 0, int))
        ini = raw.get("initial", {})
        initial = InitialSpec(
            preset=_take(ini, "preset", "equilibrium", str),
            radius=_take(ini, "radius", np.pi / 4, float),
            width=_take(ini, "width", 0.2, float),
            center=tuple(_take(ini, "center", [np.pi / 2, np.pi / 2], list)),
            amplitude=_take(ini, "amplitude", 0.3, float),
            velocity_amplitude=_take(ini, "velocity_amplitude", 0.2, float),
            decay=_take(ini, "decay", 2.0, float),
            seed=_take(ini, "seed", 7, int),
            path=_take(ini, "path", "", str))
        out = raw.get("output", {})
        output = OutputSpec(
            directory=_take(out, "directory", "out", str),
            record_every=_take(out, "record_every", 1, int),
            snapshot_every=_take(out, "snapshot_every", 0, int),
            f_max=_take(out, "f_max", 1e6, float))
    except ShapeError as err:
        raise ConfigError(str(err)) from err
    if initial.preset not in InitialSpec.PRESETS:
        raise ConfigError(f"unknown preset {initial.preset!r}; "
                          f"choose from {InitialSpec.PRESETS}")
    if initial.preset == "from-snapshot" and not initial.path:
        raise ConfigError("preset 'from-snapshot' needs a path")
    if output.record_every < 1:
        raise ConfigError("record_every must be >= 1")
    if stepper.galerkin_n and not (2 <= stepper.galerkin_n <= domain.modes_per_axis):
        raise ConfigError("galerkin_n must lie in 2..modes_per_axis")
    return RunConfig(domain, fluid, energy, noise, stepper, initial, output)


# -- manifest -------------------------------------------------------------------


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml_scalar(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {value!r} into the manifest")


def manifest_text(cfg: RunConfig) -> str:
    """Resolved configuration as TOML, suitable for exact replay."""
    sections = {
        "meta": {"package": "vesiflow", "version": __version__},
        "domain": {"modes_per_axis": cfg.domain.modes_per_axis,
                   "collocation_per_axis": cfg.domain.collocation_per_axis},
        "fluid": {"alpha": cfg.fluid.alpha, "nu": cfg.fluid.nu},
        "energy": {k: v for k, v in asdict(cfg.energy).items()},
        "noise": {k: v for k, v in asdict(cfg.noise).items()},
        "stepper": {"dt": cfg.stepper.dt, "t_final": cfg.stepper.t_final,
                    "scheme": cfg.stepper.scheme,
                    "galerkin_n": cfg.stepper.galerkin_n},
        "initial": {k: v for k, v in asdict(cfg.initial).items()},
        "output": {k: v for k, v in asdict(cfg.output).items()},
    }
    out = io.StringIO()
    for name, table in sections.items():
        out.write(f"[{name}]\n")
        for key, value in table.items():
            out.write(f"{key} = {_toml_scalar(value)}\n")
        out.write("\n")
    return out.getvalue()


# -- snapshots ------------------------------------------------------------------


def write_snapshot(path: str, state: SystemState, domain: DomainSpec):
    """Binary state dump; bit-exact round trip in deterministic mode order."""
    tr = domain.transforms()
    order = tr.mode_order
    payload_v = np.ascontiguousarray(state.v.ravel()[order], dtype="<f8")
    payload_c = np.ascontiguousarray(state.phi.ravel()[order], dtype="<f8")
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION,
                          domain.modes_per_axis, state.t, state.step)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload_v.tobytes())
        fh.write(payload_c.tobytes())


def read_snapshot(path: str, domain: DomainSpec | None = None) -> tuple[SystemState, int]:
    """Load a snapshot; returns the state and its modes_per_axis."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, version, n, t, step = _HEADER.unpack_from(blob)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(
            f"{path}: unsupported snapshot version {version} "
            f"(this build reads {SNAPSHOT_VERSION})")
    count = n * n
    expect = _HEADER.size + 2 * 8 * count
    if len(blob) != expect:
        raise SnapshotFormatError(f"{path}: payload size {len(blob)} != {expect}")
    if domain is not None and domain.modes_per_axis != n:
        raise SnapshotFormatError(
            f"{path}: snapshot has N={n}, configuration has "
            f"N={domain.modes_per_axis}")
    dom = domain or DomainSpec(n)
    tr = dom.transforms()
    flat = np.frombuffer(blob, dtype="<f8", count=2 * count, offset=_HEADER.size)
    v = np.empty(count)
    c = np.empty(count)
    v[tr.mode_order] = flat[:count]
    c[tr.mode_order] = flat[count:]
    return SystemState(v.reshape(n, n), c.reshape(n, n), t=t, step=step), n


# -- initial states --------------------------------------------------------------


def build_initial(cfg: RunConfig) -> SystemState:
    ini = cfg.initial
    domain = cfg.domain
    if ini.preset == "equilibrium":
        return equilibrium_state(domain)
    if ini.preset == "circle-vesicle":
        tr = domain.transforms()
        xg, yg = np.meshgrid(tr.nodes, tr.nodes, indexing="ij")
        rr = np.sqrt((xg - ini.center[0]) ** 2 + (yg - ini.center[1]) ** 2)
        phi = np.tanh((ini.radius - rr) / (np.sqrt(2.0) * ini.width))
        psi = from_grid(domain, phi + 1.0)
        n = domain.modes_per_axis
        return SystemState(np.zeros((n, n)), psi.coeffs)
    if ini.preset == "random":
        tr = domain.transforms()
        rng = np.random.default_rng(ini.seed)
        v = ini.velocity_amplitude * rng.standard_normal(tr.lam.shape) \
            / tr.lam ** ini.decay
        c = ini.amplitude * rng.standard_normal(tr.lam.shape) / tr.lam ** ini.decay
        return SystemState(v, c)
    if ini.preset == "from-snapshot":
        state, _ = read_snapshot(ini.path, domain)
        return SystemState(state.v, state.phi)     # restart clock and counter
    raise ConfigError(f"unknown preset {ini.preset!r}")


# -- CSV emission ----------------------------------------------------------------


def format_float(x: float) -> str:
    return format(float(x), ".17g")


class LedgerCsvWriter:
    """Record sink streaming BalanceRecords into a CSV file."""

    def __init__(self, path: str):
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(CSV_COLUMNS)

    def __call__(self, rec: BalanceRecord):
        self._writer.writerow(format_float(x) for x in rec.row())

    def close(self):
        self._fh.close()


def write_moments_csv(path: str, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "n_traj", "sup_mean_Fk", "sup_mean_halfwidth",
                         "mean_sup_Fk", "mean_sup_halfwidth",
                         "weighted_dissipation", "weighted_dissipation_halfwidth"])
        for rep in reports:
            writer.writerow([rep.k, rep.n_traj] + [
                format_float(x) for x in (
                    rep.sup_mean_fk, rep.sup_mean_fk_halfwidth,
                    rep.mean_sup_fk, rep.mean_sup_fk_halfwidth,
                    rep.mean_weighted_dissipation,
                    rep.mean_weighted_dissipation_halfwidth)])


def write_reports_csv(path: str, reports):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "kind", "passed", "max_ratio", "median_ratio",
                         "q90_ratio", "n_samples", "per_resolution"])
        for r in reports:
            per = ";".join(f"{k}:{format_float(v)}" for k, v in
                           sorted(r.per_resolution.items()))
            writer.writerow([r.name, r.kind, int(r.passed),
                             format_float(r.max_ratio),
                             format_float(r.median_ratio),
                             format_float(r.q90_ratio), r.n_samples, per])


# -- twin runs -------------------------------------------------------------------


def twin_perturbation(domain: DomainSpec, delta: float,
                      alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Coefficient perturbations splitting the distance delta equally between
    the velocity V-norm (measured on w) and the phase-field H2-scale norm,
    both on mode (1,1).  The state stores v = (I + alpha^2 A) w, so the
    velocity perturbation is mapped through the momentum factor."""
    n = domain.modes_per_axis
    dv = np.zeros((n, n))
    dc = np.zeros((n, n))
    if delta > 0:
        w_pert = 0.5 * delta / np.sqrt(3.0)        # ||e11||_V = sqrt(1 + 2)
        dv[0, 0] = (1.0 + 2.0 * alpha * alpha) * w_pert
        dc[0, 0] = 0.5 * delta / np.sqrt(7.0)      # sqrt(lam^2 + lam + 1), lam=2
    return dv, dc


def twin_distances(domain: DomainSpec, alpha: float, a: SystemState,
                   b: SystemState) -> tuple[float, float]:
    tr = domain.transforms()
    scale = 1.0 + alpha * alpha * tr.lam
    from .field import ScalarField, VelocityField
    dw = VelocityField(domain, (a.v - b.v) / scale)
    dphi = ScalarField(domain, a.phi - b.phi)
    return v_norm(dw), h2_norm(dphi)


def load_sweep_config(path: str | None, raw: dict | None = None) -> SweepConfig:
    """Sweep configuration from the [verify] table of a config file."""
    table = {}
    if raw is None and path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"invalid TOML in {path}: {err}") from err
    if raw:
        table = raw.get("verify", {})
    ene = table.get("energy", {})
    energy = EnergyParams(
        m1=_take(ene, "m1", 1.0, float), m2=_take(ene, "m2", 1.0, float),
        a=_take(ene, "a", -np.pi ** 2 + 0.5, float),
        b=_take(ene, "b", 0.4, float), gamma=_take(ene, "gamma", 1.0, float))
    try:
        return SweepConfig(
            n_samples=_take(table, "n_samples", 200, int),
            amplitudes=tuple(_take(table, "amplitudes", [0.1, 1.0, 5.0], list)),
            decays=tuple(_take(table, "decays", [1.0, 1.5, 2.0], list)),
            seed=_take(table, "seed", 2024, int),
            resolutions=tuple(_take(table, "resolutions", [12, 24], list)),
            growth_factor=_take(table, "growth_factor", 3.0, float),
            identity_tol=_take(table, "identity_tol", 1e-9, float),
            energy=energy,
            snapshot_dir=_take(table, "snapshot_dir", "", str) or None)
    except ShapeError as err:
        raise ConfigError(str(err)) from err
