"""Command-line front end: ``worldline <subcommand> [options]``.

Settings are resolved in this order, later entries winning: built-in
defaults, ``--preset``, ``--config`` file, ``WORLDLINE_*`` environment
variables, explicit flags. The effective settings are validated before any
computation and echoed to a JSON sidecar next to the output; passing that
sidecar back through ``--config`` (or ``worldline replay``) repeats the run.

Exit status: 0 success, 2 invalid input (nothing is written), 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analytic
from .errors import InvalidArgument, NumericalError, UnsupportedConfiguration, WorldlineError

__all__ = ["ExperimentSpec", "PRESETS", "build_parser", "resolve_spec", "run", "main"]

SUBCOMMANDS = ("cp-vacuum", "cp-embedded", "casimir", "convergence", "analytic", "tables", "thermal")
ENV_PREFIX = "WORLDLINE_"
CSV_COLUMNS = ("geometry", "chi", "N", "n_paths", "estimate", "std_error", "normalized", "seed")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


@dataclass
class ExperimentSpec:
    """Everything needed to repeat a run."""

    subcommand: str
    geometry: str = "halfspace"
    chi: float = 1.0
    chi_list: list = field(default_factory=list)
    n_steps: int = 1000
    n_list: list = field(default_factory=list)
    n_paths: int = 100_000
    seed: int = 0
    estimator: str = "trapezoid"
    estimators: list = field(default_factory=list)
    distance: float = 1.0
    d0: float | None = None
    beta: float = 100.0
    n_max: int | None = None
    dispersion: str = "constant"
    omega0: float = math.inf
    workers: int = 1
    reduction: str = "ordered"
    block_size: int = 4096
    output: str | None = None
    format: str = "csv"

    def chis(self) -> list:
        return list(self.chi_list) if self.chi_list else [self.chi]

    def to_dict(self) -> dict:
        return {k: _jsonable(v) for k, v in dataclasses.asdict(self).items()}


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    return v


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentSpec)}

_LOG_CHI = [1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6]
PRESETS = {
    "fig2": {"subcommand": "cp-vacuum", "chi_list": _LOG_CHI + [math.inf], "n_steps": 1000, "n_paths": 100_000},
    "fig3": {"subcommand": "cp-embedded", "chi_list": _LOG_CHI, "n_steps": 1000, "n_paths": 100_000},
    "fig4": {"subcommand": "casimir", "geometry": "gap", "chi_list": _LOG_CHI + [math.inf], "n_steps": 1000, "n_paths": 100_000},
    "fig5": {
        "subcommand": "convergence",
        "chi_list": [1.0, 1e2, 1e4, 1e6],
        "n_list": [2**k for k in range(5, 13)],
        "estimators": ["trapezoid", "dirichlet"],
        "n_paths": 100_000,
    },
    "fig6": {
        "subcommand": "convergence",
        "geometry": "gap",
        "chi_list": [1.0, 1e2, 1e4, 1e6],
        "n_list": [2**k for k in range(5, 13)],
        "estimators": ["trapezoid", "dirichlet"],
        "n_paths": 100_000,
    },
}


# ---------------------------------------------------------------------------
# parsing and validation


def _parse_float(text):
    s = str(text).strip().lower()
    if s in ("inf", "+inf", "infinity", "dirichlet"):
        return math.inf
    val = float(s)
    if math.isnan(val):
        raise ValueError("nan is not allowed")
    return val


def _parse_count(text):
    val = float(str(text).strip()) if not isinstance(text, int) else text
    if isinstance(val, float):
        if not val.is_integer():
            raise ValueError(f"{text!r} is not a whole number")
        val = int(val)
    return val


def _parse_list(text, item):
    if isinstance(text, (list, tuple)):
        return [item(x) for x in text]
    parts = [p for p in str(text).replace(";", ",").split(",") if p.strip()]
    return [item(p) for p in parts]


_COERCE = {
    "subcommand": str,
    "geometry": str,
    "chi": _parse_float,
    "chi_list": lambda v: _parse_list(v, _parse_float),
    "n_steps": _parse_count,
    "n_list": lambda v: _parse_list(v, _parse_count),
    "n_paths": _parse_count,
    "seed": _parse_count,
    "estimator": str,
    "estimators": lambda v: _parse_list(v, lambda x: str(x).strip()),
    "distance": _parse_float,
    "d0": lambda v: None if v in (None, "", "none", "None") else _parse_float(v),
    "beta": _parse_float,
    "n_max": lambda v: None if v in (None, "", "none", "None") else _parse_count(v),
    "dispersion": str,
    "omega0": _parse_float,
    "workers": _parse_count,
    "reduction": str,
    "block_size": _parse_count,
    "output": lambda v: None if v in (None, "") else str(v),
    "format": str,
}


def _coerce(key, value, source):
    if key not in _FIELDS:
        raise InvalidArgument(f"unknown setting {key!r} in {source}")
    try:
        return _COERCE[key](value)
    except (TypeError, ValueError) as exc:
        raise InvalidArgument(f"bad value for {key!r} in {source}: {exc}") from None


def read_config(path) -> dict:
    """Load a config file: JSON (a sidecar or a flat object) or ``key = value`` lines."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidArgument(f"cannot read config {path}: {exc}") from None
    src = f"config {path}"
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"{src}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise InvalidArgument(f"{src}: expected a JSON object")
        if "spec" in data and isinstance(data["spec"], dict):
            data = data["spec"]
        return {k.replace("-", "_"): _coerce(k.replace("-", "_"), v, src) for k, v in data.items()}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"{src}, line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        out[key] = _coerce(key, value, f"{src}, line {lineno}")
    return out


def read_env(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower()
            out[key] = _coerce(key, value, f"environment variable {name}")
    return out


def validate(spec: ExperimentSpec) -> ExperimentSpec:
    if spec.subcommand not in SUBCOMMANDS:
        raise InvalidArgument(f"unknown subcommand {spec.subcommand!r}")
    if spec.geometry not in ("halfspace", "gap"):
        raise InvalidArgument("geometry must be 'halfspace' or 'gap'")
    if spec.subcommand in ("cp-vacuum", "cp-embedded") and spec.geometry != "halfspace":
        raise InvalidArgument(f"{spec.subcommand} needs the halfspace geometry")
    if spec.subcommand == "casimir" and spec.geometry != "gap":
        raise InvalidArgument("casimir needs the gap geometry")
    for c in spec.chis():
        if c < 0:
            raise InvalidArgument("susceptibilities must be non-negative")
    for name in ("n_steps", "n_paths", "workers", "block_size"):
        if getattr(spec, name) < 1:
            raise InvalidArgument(f"{name} must be at least 1")
    if not 0 <= spec.seed < 2**64:
        raise InvalidArgument("seed must be a 64-bit unsigned integer")
    if not (spec.distance > 0 and math.isfinite(spec.distance)):
        raise InvalidArgument("distance must be positive and finite")
    if spec.d0 is not None and not (spec.d0 > 0 and math.isfinite(spec.d0)):
        raise InvalidArgument("d0 must be positive and finite")
    if not (spec.beta > 0 and math.isfinite(spec.beta)):
        raise InvalidArgument("beta must be positive and finite")
    if spec.n_max is not None and spec.n_max < 0:
        raise InvalidArgument("n_max must be non-negative")
    from .engine import ESTIMATORS

    if spec.estimator not in ESTIMATORS:
        raise InvalidArgument(f"estimator must be one of {ESTIMATORS}")
    for e in spec.estimators:
        if e not in ("trapezoid", "interpolation", "dirichlet"):
            raise InvalidArgument(f"convergence estimators are trapezoid, interpolation, dirichlet; got {e!r}")
    if spec.reduction not in ("ordered", "free"):
        raise InvalidArgument("reduction must be 'ordered' or 'free'")
    if spec.format not in ("csv", "json"):
        raise InvalidArgument("format must be 'csv' or 'json'")
    if spec.dispersion not in ("constant", "lorentz"):
        raise InvalidArgument("dispersion must be 'constant' or 'lorentz'")
    if not spec.omega0 > 0:
        raise InvalidArgument("omega0 must be positive")
    if spec.subcommand == "convergence":
        if len(spec.n_list) < 3:
            raise InvalidArgument("convergence needs at least three values in --n-list")
        top = max(spec.n_list)
        if min(spec.n_list) < 1 or any(top % n for n in spec.n_list):
            raise InvalidArgument("every N in --n-list must divide the largest")
    if spec.subcommand == "tables" and not spec.output:
        raise InvalidArgument("tables needs --output")
    if spec.subcommand == "thermal" and any(math.isinf(c) for c in spec.chis()):
        raise InvalidArgument("thermal runs need finite susceptibilities")
    if spec.subcommand == "cp-embedded" and any(math.isinf(c) for c in spec.chis()):
        raise InvalidArgument("an embedded atom needs a finite susceptibility")
    if spec.estimator == "dirichlet" and not all(math.isinf(c) for c in spec.chis()):
        raise InvalidArgument("the dirichlet estimator needs --chi inf")
    return spec


# ---------------------------------------------------------------------------
# argument parser

_FLAG_HELP = {
    "chi": "susceptibility (use 'inf' for the Dirichlet limit)",
    "chi_list": "comma-separated susceptibilities evaluated on shared paths",
    "n_steps": "points per path N",
    "n_list": "comma-separated N values (convergence)",
    "n_paths": "number of paths (accepts 1e6)",
    "seed": "master seed",
    "estimator": "trapezoid, interpolation, dirichlet, mgf_segment or sojourn_sample",
    "estimators": "comma-separated estimators for convergence sweeps",
    "geometry": "halfspace or gap",
    "distance": "atom distance d (halfspace) or gap width (gap)",
    "d0": "source-point sampling scale (gap; default: the gap width)",
    "beta": "inverse temperature (thermal)",
    "n_max": "highest Matsubara index (thermal; default from a tail estimate)",
    "dispersion": "constant or lorentz (thermal)",
    "omega0": "oscillator frequency for the lorentz dispersion",
    "workers": "worker processes",
    "reduction": "ordered (bit-reproducible) or free",
    "block_size": "paths per random stream",
    "output": "output file (CSV or JSON); the sidecar goes to <output>.meta.json",
    "format": "csv or json",
}


def _add_common(p):
    for key, text in _FLAG_HELP.items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, default=None, help=text)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None, help="figure reproduction preset")
    p.add_argument("--config", default=None, help="config file (key = value lines or JSON sidecar)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="worldline", description="Worldline Monte Carlo for TE Casimir energies")
    parser.add_argument("--version", action="version", version=f"worldline {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        _add_common(sub.add_parser(name))
    replay = sub.add_parser("replay", help="repeat the run recorded in a sidecar")
    replay.add_argument("sidecar")
    replay.add_argument("--output", default=None)
    return parser


def resolve_spec(args, environ=None) -> ExperimentSpec:
    values: dict = {}
    if args.subcommand == "replay":
        values.update(read_config(args.sidecar))
        if args.output is not None:
            values["output"] = args.output
        return validate(_spec_from(values))
    if args.preset:
        preset = dict(PRESETS[args.preset])
        if preset["subcommand"] != args.subcommand:
            raise InvalidArgument(f"preset {args.preset} belongs to the {preset['subcommand']} subcommand")
        values.update({k: _coerce(k, v, f"preset {args.preset}") for k, v in preset.items()})
    if args.config:
        values.update(read_config(args.config))
    values.update(read_env(environ))
    for key in _FLAG_HELP:
        val = getattr(args, key)
        if val is not None:
            values[key] = _coerce(key, val, f"--{key.replace('_', '-')}")
    if values.get("subcommand", args.subcommand) != args.subcommand:
        raise InvalidArgument(f"config is for {values['subcommand']!r}, not {args.subcommand!r}")
    values["subcommand"] = args.subcommand
    if args.subcommand == "casimir" or (args.subcommand == "convergence" and values.get("geometry") == "gap"):
        values.setdefault("geometry", "gap")
    return validate(_spec_from(values))


def _spec_from(values) -> ExperimentSpec:
    if "subcommand" not in values:
        raise InvalidArgument("config does not name a subcommand")
    return ExperimentSpec(**values)


# ---------------------------------------------------------------------------
# running


def _geometry(spec, chi):
    from .media import Gap, HalfSpace

    if spec.geometry == "gap":
        return Gap(0.0, spec.distance, chi, chi)
    return HalfSpace(0.0, chi, 1)


def _row(spec, chi, n, n_paths, estimate, err, normalized, **extra):
    row = {
        "geometry": spec.geometry,
        "chi": chi,
        "N": n,
        "n_paths": n_paths,
        "estimate": estimate,
        "std_error": err,
        "normalized": normalized,
        "seed": spec.seed,
    }
    row.update(extra)
    return row


def _run_cp(spec, mode):
    from .engine import RunConfig, sweep_cp

    chis = spec.chis()
    config = RunConfig(
        _geometry(spec, chis[0]), spec.n_steps, spec.n_paths, estimator=spec.estimator, distance=spec.distance,
        seed=spec.seed, chi_list=tuple(chis), block_size=spec.block_size, workers=spec.workers, reduction=spec.reduction,
    )
    results = sweep_cp(config, mode=mode)
    rows, oracle = [], {}
    for r in results:
        rows.append(_row(spec, r.chi, spec.n_steps, r.n_paths_used, r.estimate, r.std_error, r.normalized,
                         normalized_error=r.normalized_error, estimator=spec.estimator))
        if math.isfinite(r.chi):
            oracle[str(r.chi)] = float(analytic.eta_te_prime(r.chi) if mode == "embedded" else analytic.eta_te(r.chi))
        elif mode == "vacuum":
            oracle["inf"] = 1.0 / 6.0
    return rows, oracle


def _run_casimir(spec):
    from .engine import RunConfig, sweep_casimir

    chis = spec.chis()
    config = RunConfig(
        _geometry(spec, chis[0]), spec.n_steps, spec.n_paths, estimator=spec.estimator, d0=spec.d0, seed=spec.seed,
        chi_list=tuple(chis), block_size=spec.block_size, workers=spec.workers, reduction=spec.reduction,
    )
    results = sweep_casimir(config)
    rows, oracle = [], {}
    for r in results:
        rows.append(_row(spec, r.chi, spec.n_steps, r.n_paths_used, r.estimate, r.std_error, r.normalized,
                         normalized_error=r.normalized_error, estimator=spec.estimator))
        oracle[str(r.chi)] = 0.5 if math.isinf(r.chi) else float(analytic.gamma_te(r.chi, r.chi))
    return rows, oracle


def _run_convergence(spec):
    from .engine import RunConfig, convergence_sweep

    chis = [c for c in spec.chis()]
    estimators = spec.estimators or ["trapezoid"]
    config = RunConfig(
        _geometry(spec, chis[0]), max(spec.n_list), spec.n_paths, distance=spec.distance, d0=spec.d0, seed=spec.seed,
        block_size=spec.block_size, workers=spec.workers, reduction=spec.reduction,
    )
    table = convergence_sweep(config, spec.n_list, chis, estimators=estimators)
    rows = []
    for r in table.rows:
        p, perr = table.slopes[(r.estimator, r.chi)]
        rows.append(_row(spec, r.chi, r.n_steps, table.n_paths, r.normalized, r.std_error, r.normalized,
                         estimator=r.estimator, relative_error=r.relative_error, diff_to_finest=r.diff_to_finest,
                         diff_std_error=r.diff_std_error, fitted_slope=p, fitted_slope_error=perr))
    oracle = {str(k): v for k, v in table.oracle.items()}
    return rows, oracle


def _run_analytic(spec):
    rows, oracle = [], {}
    for chi in spec.chis():
        if spec.geometry == "gap":
            g = analytic.gamma_te(chi, chi)
            rows.append(_row(spec, chi, "", 0, float(g), 0.0, float(g), quantity="gamma_te"))
            continue
        e = analytic.eta_te(chi)
        ep = analytic.eta_te_prime(chi)
        rows.append(_row(spec, chi, "", 0, float(e), 0.0, float(e), quantity="eta_te"))
        rows.append(_row(spec, chi, "", 0, float(ep), 0.0, float(ep), quantity="eta_te_prime"))
    return rows, oracle


def _run_thermal(spec):
    from .media import PhysicalConstants
    from .thermal import Constant, Lorentz, ThermalConfig, cp_thermal, default_n_max, free_energy_thermal

    rows, oracle = [], {}
    constants = PhysicalConstants()
    for chi in spec.chis():
        disp = Constant(chi) if spec.dispersion == "constant" else Lorentz(chi, spec.omega0)
        n_max = spec.n_max if spec.n_max is not None else default_n_max(spec.beta, spec.distance, constants)
        tc = ThermalConfig(spec.beta, n_max, constants)
        common = dict(n_steps=spec.n_steps, n_paths=spec.n_paths, seed=spec.seed, workers=spec.workers,
                      reduction=spec.reduction, block_size=spec.block_size)
        if spec.geometry == "gap":
            r = free_energy_thermal(_geometry(spec, 0.0), disp, tc, d0=spec.d0, **common)
            ref = analytic.casimir_reference_magnitude(spec.distance, constants)
            norm = -r.value / ref
        else:
            r = cp_thermal(_geometry(spec, 0.0), disp, tc, spec.distance, **common)
            ref = analytic.cp_reference_magnitude(spec.distance, constants)
            norm = -r.value / ref
        rows.append(_row(spec, chi, spec.n_steps, r.n_paths_used, r.value, r.std_error, norm, beta=spec.beta,
                         n_max=n_max, truncation_bound=r.truncation_bound, truncated=r.truncated))
    return rows, oracle


def _run_tables(spec, tmpdir):
    from .sojourn import GridSpec, build_tables, save_tables

    tables = build_tables(GridSpec(), validate=True, seed=spec.seed)
    path = Path(tmpdir) / "tables.bin"
    save_tables(tables, path)
    info = {"checksum": tables.checksum(), "error_bound": tables.error_bound}
    return path, info


def _write_rows(rows, fmt, fh):
    if fmt == "json":
        json.dump([{k: _jsonable(v) for k, v in r.items()} for r in rows], fh, indent=2)
        fh.write("\n")
        return
    extra = []
    for r in rows:
        extra += [k for k in r if k not in CSV_COLUMNS and k not in extra]
    writer = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS) + extra, lineterminator="\r\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return v


def _versions():
    import numba
    import scipy

    return {
        "worldline": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def sidecar_path(output) -> Path:
    return Path(str(output) + ".meta.json")


def run(spec: ExperimentSpec, stdout=None) -> int:
    """Execute a validated spec; writes outputs only after the run succeeds."""
    stdout = sys.stdout if stdout is None else stdout
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        extra_meta = {}
        if spec.subcommand == "tables":
            produced, extra_meta = _run_tables(spec, tmp)
            rows, oracle = [], {}
        else:
            runner = {
                "cp-vacuum": lambda: _run_cp(spec, "vacuum"),
                "cp-embedded": lambda: _run_cp(spec, "embedded"),
                "casimir": lambda: _run_casimir(spec),
                "convergence": lambda: _run_convergence(spec),
                "analytic": lambda: _run_analytic(spec),
                "thermal": lambda: _run_thermal(spec),
            }[spec.subcommand]
            rows, oracle = runner()
            produced = None
        meta = {
            "spec": spec.to_dict(),
            "seed": spec.seed,
            "versions": _versions(),
            "wall_time": time.perf_counter() - t0,
            "oracle": oracle,
        }
        meta.update(extra_meta)
        if spec.output is None:
            _write_rows(rows, spec.format, stdout)
            return EXIT_OK
        out = Path(spec.output)
        if produced is not None:
            os.replace(produced, out) if _same_fs(produced, out) else out.write_bytes(Path(produced).read_bytes())
        else:
            buf = io.StringIO(newline="")
            _write_rows(rows, spec.format, buf)
            out.write_text(buf.getvalue(), encoding="utf-8", newline="")
        sidecar_path(out).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def _same_fs(a, b) -> bool:
    try:
        return os.stat(a).st_dev == os.stat(Path(b).resolve().parent).st_dev
    except OSError:
        return False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INVALID
    try:
        spec = resolve_spec(args)
        return run(spec)
    except (InvalidArgument, UnsupportedConfiguration) as exc:
        print(f"worldline: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"worldline: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except WorldlineError as exc:
        print(f"worldline: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
