"""Command-line front end: ``simulate``, ``certify``, ``verify``, ``sweep``, ``cross-validate``.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 property violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import scipy

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .basis import TWO_PI, check_inequalities, random_field
from .dynamics import BlowUpError, EnergyTrace, SimulationParams, initial_theta, run_simulation, verify_lemmas
from .energy import DegenerateTraceError, certify_threshold, fit_decay_rate
from .fd import cross_validate
from .pressure import verify_theorem1
from .steady import DimensionalParams, conduction_profile

log = logging.getLogger("darcy_benard")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_VIOLATION = 0, 1, 2, 3
OUT_ENV = "DARCY_OUT"
SUITES = ("basis", "pressure", "lemmas", "steady")
INITIAL_KINDS = ("multimode", "single", "random", "zero")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    R: float = 20.0
    beta_hat: float = 0.0
    N: int = 16
    dt: float = 1e-3
    t_final: float = 1.0
    sample_every: int = 1
    scheme: str = "imex1"
    overflow: float = 1e6
    snapshot_every: int = 0
    initial: str = "multimode"
    amplitude: float = 1e-2
    seed: int = 0
    name: str = "run"
    oracle: bool = False

    def validate(self) -> SimulationParams:
        errors = []
        if self.initial not in INITIAL_KINDS:
            errors.append(f"initial: must be one of {INITIAL_KINDS}, got {self.initial!r}")
        if not math.isfinite(self.amplitude) or self.amplitude < 0:
            errors.append(f"amplitude: must be a finite nonnegative number, got {self.amplitude}")
        if not self.name or any(c in self.name for c in "/\\"):
            errors.append(f"name: must be a plain file stem, got {self.name!r}")
        try:
            params = self.params()
        except ValueError as exc:
            errors.extend(str(exc).split("; "))
            params = None
        if errors:
            raise ConfigError("; ".join(errors))
        return params

    def params(self) -> SimulationParams:
        names = {f.name for f in fields(SimulationParams)}
        return SimulationParams(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, kind, value):
    if isinstance(value, str):
        text = value.strip()
        if kind is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{name}: expected a boolean, got {value!r}")
        try:
            if kind is int:
                number = float(text)
                if not number.is_integer():
                    raise ValueError
                return int(number)
            return kind(text)
        except ValueError:
            raise ConfigError(f"{name}: expected {kind.__name__}, got {value!r}") from None
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if isinstance(value, kind):
        return value
    raise ConfigError(f"{name}: expected {kind.__name__}, got {value!r}")


def build_config(path: str | None, overrides: dict) -> RunConfig:
    """Merge a TOML file (flat keys or a ``[run]`` table) with flag overrides."""
    raw: dict = {}
    if path:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config: invalid TOML in {path}: {exc}") from None
        raw.update(data.get("run", data))
    raw.update({k: v for k, v in overrides.items() if v is not None})
    types = {f.name: f.type for f in fields(RunConfig)}
    kinds = {"float": float, "int": int, "str": str, "bool": bool}
    unknown = sorted(set(raw) - set(types))
    if unknown:
        raise ConfigError("; ".join(f"{k}: unknown config key" for k in unknown))
    values = {}
    errors = []
    for k, v in raw.items():
        try:
            values[k] = _coerce(k, kinds[types[k]], v)
        except ConfigError as exc:
            errors.append(str(exc))
    if errors:
        raise ConfigError("; ".join(errors))
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def output_root(arg: str | None) -> Path:
    root = Path(arg or os.environ.get(OUT_ENV) or "darcy_out")
    root.mkdir(parents=True, exist_ok=True)
    return root


def atomic_write(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(header, rows, config: dict | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    if config is not None:
        buf.write("# config=" + json.dumps(config, sort_keys=True) + "\n")
    return buf.getvalue()


def read_csv(path) -> tuple[list[str], list[list[str]], dict | None]:
    """Parse a CSV written by this tool: header, data rows and the embedded config."""
    lines = Path(path).read_text().splitlines()
    config = None
    body = []
    for line in lines:
        if line.startswith("# config="):
            config = json.loads(line[len("# config=") :])
        elif line:
            body.append(line)
    rows = list(csv.reader(body))
    return rows[0], rows[1:], config


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n"


def metadata(wall: float | None = None) -> dict:
    meta = {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    if wall is not None:
        meta["wall_time_s"] = wall
    return meta


def trace_columns(trace: EnergyTrace) -> dict:
    return {name: col.tolist() for name, col in zip(EnergyTrace.COLUMNS, trace.rows().T)}


def _initial(cfg: RunConfig):
    return initial_theta(cfg.N, cfg.amplitude, cfg.initial, seed=cfg.seed)


def _fit(trace: EnergyTrace) -> dict | None:
    try:
        f = fit_decay_rate(trace, 0.5)
    except DegenerateTraceError as exc:
        log.info("decay fit skipped: %s", exc)
        return None
    return dataclasses.asdict(f)


def _snapshot_json(states) -> list:
    out = []
    for s in states:
        c = s.theta.coeffs
        entries = [[1 if i == 0 else -1, m, n, float(c[i, m, n])] for i, m, n in zip(*np.nonzero(c))]
        out.append({"t": s.t, "theta": entries})
    return out


def simulate(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    params = cfg.validate()
    t0 = time.perf_counter()
    status, message = "ok", ""
    snapshots = []
    try:
        trace, snapshots = run_simulation(params, _initial(cfg))
        code = EXIT_OK
    except BlowUpError as exc:
        trace, status, message, code = exc.trace, "blowup", str(exc), EXIT_NUMERICAL
    wall = time.perf_counter() - t0
    atomic_write(out / f"{cfg.name}.csv", csv_text(EnergyTrace.COLUMNS, trace.rows(), cfg.as_dict()))
    record = {
        "config": cfg.as_dict(),
        "status": status,
        "message": message,
        "trace": trace_columns(trace),
        "fit": _fit(trace) if len(trace) >= 10 else None,
        "certificate": certify_threshold(cfg.beta_hat).as_dict() if cfg.beta_hat < 1.5 * math.pi else None,
        "metadata": metadata(wall) | {"N": cfg.N, "dt": cfg.dt, "scheme": cfg.scheme},
    }
    if cfg.snapshot_every:
        atomic_write(out / f"{cfg.name}.snapshots.json", json_text({"config": cfg.as_dict(), "snapshots": _snapshot_json(snapshots)}))
    if cfg.oracle and status == "ok":
        report = cross_validate(cfg.R, cfg.beta_hat, (16, 32), N=cfg.N, dt=cfg.dt, t_final=min(cfg.t_final, 0.1), theta0=_initial(cfg))
        record["oracle"] = report.as_dict()
    atomic_write(out / f"{cfg.name}.json", json_text(record))
    return code, record


CERT_COLUMNS = ("beta_hat", "R_max", "M", "M1", "M2", "A", "B", "c0", "feasible")


def certify(betas: list[float], margin: float, out: Path) -> list:
    certs = [certify_threshold(b, margin) for b in betas]
    cfg = {"betas": betas, "margin": margin}
    rows = [[getattr(c, k) for k in CERT_COLUMNS] for c in certs]
    atomic_write(out / "certificates.csv", csv_text(CERT_COLUMNS, rows, cfg))
    atomic_write(out / "certificates.json", json_text({"config": cfg, "certificates": [c.as_dict() for c in certs]}))
    return certs


def verify(suite: str, seed: int, samples: int, R: float, beta_hat: float, N: int, mean_free_x: bool) -> dict:
    if suite not in SUITES:
        raise ConfigError(f"suite: unknown suite {suite!r}; choose from {SUITES}")
    if samples < 1:
        raise ConfigError("samples: samples ≥ 1 required")
    if suite == "basis":
        rep = check_inequalities(samples, seed, N=N, horizontal_mean_free=mean_free_x)
        return {"passed": rep.passed, **rep.as_dict()}
    if suite == "pressure":
        rng = np.random.default_rng(seed)
        worst = {"grad_ratio": 0.0, "lap_ratio": 0.0}
        failures = 0
        for _ in range(samples):
            f = random_field(N, "B", rng)
            if mean_free_x:
                c = f.coeffs.copy()
                c[:, 0, :] = 0.0
                f = type(f)("B", c)
            r = verify_theorem1(f, beta_hat)
            worst = {k: max(worst[k], getattr(r, k)) for k in worst}
            failures += not r.passed
        return {"passed": failures == 0, "failures": failures, "samples": samples, "beta_hat": beta_hat, **worst}
    if suite == "lemmas":
        rep = verify_lemmas(R, beta_hat, samples, seed, N=N)
        return {"passed": rep.passed, **dataclasses.asdict(rep)}
    prof = conduction_profile(DimensionalParams())
    ok = prof.residual_ode <= 1e-10
    zero = DimensionalParams(alpha=0.0, beta=0.0)
    z = np.linspace(0.0, zero.d, 11)
    exact = conduction_profile(zero, 11).p_b_ode - (zero.p0 + zero.p_bar - zero.rho0 * zero.g * z)
    ok = ok and float(np.max(np.abs(exact))) <= 1e-10 * zero.rho0 * zero.g * zero.d
    return {
        "passed": bool(ok),
        "residual_ode": prof.residual_ode,
        "closed_form_discrepancy": prof.max_discrepancy,
        "closed_form_relative_discrepancy": prof.relative_discrepancy,
    }


SWEEP_COLUMNS = ("R", "beta_hat", "decay_rate", "grew", "certified_R_max", "status")


def _sweep_cell(args) -> dict:
    cfg, out = args
    try:
        code, record = simulate(cfg, out)
    except Exception as exc:  # recorded per cell, sweep continues
        return {"R": cfg.R, "beta_hat": cfg.beta_hat, "decay_rate": math.nan, "grew": False, "status": f"error: {exc}"}
    fit = record["fit"]
    rate = fit["sigma"] if fit else math.nan
    grew = code == EXIT_NUMERICAL or (fit is not None and rate > 0)
    return {"R": cfg.R, "beta_hat": cfg.beta_hat, "decay_rate": rate, "grew": grew, "status": record["status"]}


def sweep(base: RunConfig, Rs: list[float], betas: list[float], out: Path, workers: int = 1) -> list[dict]:
    if not Rs or not betas:
        raise ConfigError("sweep: R and beta_hat ranges must be nonempty")
    cells = []
    for b in betas:
        for R in Rs:
            cfg = dataclasses.replace(base, R=R, beta_hat=b, name=f"{base.name}_R{R:g}_b{b:g}")
            cfg.validate()
            cells.append((cfg, out / "cells"))
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    for r in results:
        cert = certify_threshold(r["beta_hat"]) if r["beta_hat"] < 1.5 * math.pi else None
        r["certified_R_max"] = cert.R_max if cert is not None else math.nan
    rows = [[r[k] for k in SWEEP_COLUMNS] for r in results]
    cfg = {"base": base.as_dict(), "R": Rs, "beta_hat": betas}
    atomic_write(out / "sweep.csv", csv_text(SWEEP_COLUMNS, rows, cfg))
    return results


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser, skip=()):
    p.add_argument("--config", help="TOML file with run keys")
    for f in fields(RunConfig):
        if f.name in skip:
            continue
        p.add_argument(f"--{f.name}", dest=f"cfg_{f.name}", default=None, metavar=f.name.upper())


def _overrides(ns) -> dict:
    return {k[4:]: v for k, v in vars(ns).items() if k.startswith("cfg_")}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="darcy-benard", description=__doc__.splitlines()[0])
    parser.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./darcy_out)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the perturbation equations")
    _add_run_flags(p)

    p = sub.add_parser("certify", help="certified decay thresholds over a beta_hat grid")
    p.add_argument("--beta_hat", default="0", help="comma-separated values")
    p.add_argument("--margin", type=float, default=1e-3)

    p = sub.add_parser("verify", help="property suites")
    p.add_argument("--suite", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--beta_hat", type=float, default=0.0)
    p.add_argument("--N", type=int, default=12)
    p.add_argument("--mean_free_x", action="store_true", help="restrict random fields to m >= 1")

    p = sub.add_parser("sweep", help="grid of simulations")
    _add_run_flags(p, skip=("R", "beta_hat"))
    p.add_argument("--R", dest="R_list", required=True, help="comma-separated values")
    p.add_argument("--beta_hat", dest="beta_list", default="0", help="comma-separated values")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("cross-validate", help="spectral vs finite-difference comparison")
    _add_run_flags(p)
    p.add_argument("--grids", default="32,64,128")
    p.add_argument("--tol", type=float, default=1e-3)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        out = output_root(ns.out)
        if ns.command == "simulate":
            cfg = build_config(ns.config, _overrides(ns))
            code, record = simulate(cfg, out)
            print(json.dumps({"status": record["status"], "csv": str(out / f"{cfg.name}.csv")}))
            return code
        if ns.command == "certify":
            betas = _floats(ns.beta_hat)
            if not betas:
                raise ConfigError("beta_hat: grid must be nonempty")
            bad = [b for b in betas if not 0.0 <= b < TWO_PI]
            if bad:
                raise ConfigError(f"beta_hat: values must lie in [0, 2 pi), got {bad}")
            if not 0.0 < ns.margin < 1.0:
                raise ConfigError(f"margin: must lie in (0, 1), got {ns.margin}")
            certs = certify(betas, ns.margin, out)
            for c in certs:
                print(f"beta_hat={c.beta_hat:g} feasible={c.feasible} R_max={c.R_max:.10g}")
            return EXIT_OK
        if ns.command == "verify":
            report = verify(ns.suite, ns.seed, ns.samples, ns.R, ns.beta_hat, ns.N, ns.mean_free_x)
            atomic_write(out / f"verify_{ns.suite}.json", json_text({"config": vars(ns), "report": report}))
            report["passed"] = bool(report["passed"])
            print(json.dumps({"suite": ns.suite, "passed": report["passed"]}))
            return EXIT_OK if report["passed"] else EXIT_VIOLATION
        if ns.command == "sweep":
            base = build_config(ns.config, _overrides(ns))
            results = sweep(base, _floats(ns.R_list), _floats(ns.beta_list), out, ns.workers)
            for r in results:
                print(f"R={r['R']:g} beta_hat={r['beta_hat']:g} rate={r['decay_rate']:.6g} grew={r['grew']}")
            return EXIT_OK
        if ns.command == "cross-validate":
            cfg = build_config(ns.config, _overrides(ns))
            grids = [int(g) for g in _floats(ns.grids)]
            if not grids or min(grids) < 8:
                raise ConfigError("grids: need values >= 8")
            report = cross_validate(cfg.R, cfg.beta_hat, grids, N=cfg.N, dt=cfg.dt, t_final=cfg.t_final, theta0=_initial(cfg))
            ok = report.passed(ns.tol)
            atomic_write(out / f"{cfg.name}.crossval.json", json_text({"config": cfg.as_dict(), "tol": ns.tol, "passed": ok, "report": report.as_dict()}))
            print(json.dumps({"passed": ok, "energy_errors": report.energy_errors, "pressure_errors": report.pressure_errors}))
            return EXIT_OK if ok else EXIT_VIOLATION
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    parser.error(f"unknown command {ns.command}")
    return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
