"""Command-line front end.

Every subcommand prints a JSON summary (sorted keys) on stdout and can write
CSV artifacts under --out.  Summaries embed the fully resolved configuration
(seed, tolerances, sample counts), and that block can be fed back through
--config to reproduce a run bit for bit; explicit command-line flags override
config-file entries.  Exit codes: 0 success, 2 validation error, 3 numerical
failure, 4 a flagged violation from pesin-check.  Errors are reported as a
one-line JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import dynamics, entropy, hamiltonian, lyapunov, poincare, suspension
from .dynamics import DEFAULT_INTEGRATOR, IntegratorOptions
from .errors import NumericalError, PesinLabError, ValidationError

COMMANDS = (
    "simulate",
    "lyapunov",
    "dominate",
    "suspend",
    "entropy",
    "pesin-check",
    "hamiltonian",
    "list-systems",
)

DEFAULTS = {
    "simulate": {"system": None, "t": 10.0, "steps": 100, "x": None},
    "lyapunov": {"system": None, "t": 1000.0, "samples": 10, "renorm": 0.5},
    "dominate": {"system": None, "ell": 1.0, "horizon": 20.0, "x": None},
    "suspend": {"base": "cat", "ceiling": "const:1", "count": 1000},
    "entropy": {
        "system": None,
        "time_step": 1.0,
        "resolution": 16,
        "n_max": 8,
        "orbits": 200,
        "length": 500,
        "base": None,
        "ceiling": None,
    },
    "pesin-check": {
        "system": None,
        "time_step": 1.0,
        "resolution": 16,
        "n_max": 8,
        "orbits": 200,
        "length": 500,
        "samples": 8,
        "t": 400.0,
        "renorm": 1.0,
        "energy_cap": None,
    },
    "hamiltonian": {"H": "builtin:harmonic4", "levels": "0.5:4.5:5", "samples": 8, "t": 50.0, "renorm": 1.0},
    "list-systems": {},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pesin-lab",
        description="Numerical toolkit for exponents, splittings, suspensions and entropy of conservative flows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; explicit flags override its entries")
        p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
        p.add_argument("--out", default=None, help="directory for CSV artifacts")
        p.add_argument("--format", choices=("json", "csv", "both"), default=None)
        p.add_argument("--threads", type=int, default=None, help="worker threads (default $PESIN_LAB_THREADS or 1)")
        p.add_argument("--rtol", type=float, default=None, help="integrator relative tolerance")
        p.add_argument("--atol", type=float, default=None, help="integrator absolute tolerance")

    p = sub.add_parser("simulate", help="integrate one orbit and report the endpoint")
    common(p)
    p.add_argument("--system", default=None)
    p.add_argument("--x", default=None, help="comma-separated start point (default: seeded volume sample)")
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--steps", type=int, default=None, help="trajectory rows written to CSV")

    p = sub.add_parser("lyapunov", help="per-sample exponent spectra and their volume average")
    common(p)
    p.add_argument("--system", default=None)
    p.add_argument("--t", type=float, default=None, help="horizon per sample")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--renorm", type=float, default=None, help="QR renormalization interval")

    p = sub.add_parser("dominate", help="finite-time domination sweep along one orbit")
    common(p)
    p.add_argument("--system", default=None)
    p.add_argument("--x", default=None)
    p.add_argument("--ell", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)

    p = sub.add_parser("suspend", help="build a suspension and sample its invariant measure")
    common(p)
    p.add_argument("--base", default=None, help=f"base map: {', '.join(suspension.BUILTIN_BASES)}")
    p.add_argument("--ceiling", default=None, help="'const:c' or 'cosine:a,b'")
    p.add_argument("--count", type=int, default=None, help="lifted sample count")

    p = sub.add_parser("entropy", help="partition-refinement entropy of a flow or suspension")
    common(p)
    p.add_argument("--system", default=None)
    p.add_argument("--base", default=None, help="suspension base map (instead of --system)")
    p.add_argument("--ceiling", default=None, help="suspension ceiling (with --base)")
    p.add_argument("--time-step", dest="time_step", type=float, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--n-max", dest="n_max", type=int, default=None)
    p.add_argument("--orbits", type=int, default=None)
    p.add_argument("--length", type=int, default=None)

    p = sub.add_parser("pesin-check", help="entropy vs integrated exponent on one field")
    common(p)
    p.add_argument("--system", default=None)
    p.add_argument("--time-step", dest="time_step", type=float, default=None)
    p.add_argument("--resolution", type=int, default=None)
    p.add_argument("--n-max", dest="n_max", type=int, default=None)
    p.add_argument("--orbits", type=int, default=None)
    p.add_argument("--length", type=int, default=None)
    p.add_argument("--samples", type=int, default=None, help="exponent Monte Carlo samples")
    p.add_argument("--t", type=float, default=None, help="exponent horizon")
    p.add_argument("--renorm", type=float, default=None)
    p.add_argument("--energy-cap", dest="energy_cap", type=float, default=None,
                   help="restrict sampling to {H <= cap} for Hamiltonian systems")

    p = sub.add_parser("hamiltonian", help="level exponents and their energy integral")
    common(p)
    p.add_argument("--H", dest="H", default=None, help="builtin:NAME or a JSON system description")
    p.add_argument("--levels", default=None, help="'a:b:n' grid, comma list, or single energy")
    p.add_argument("--samples", type=int, default=None, help="points per level")
    p.add_argument("--t", type=float, default=None, help="horizon per point")
    p.add_argument("--renorm", type=float, default=None)

    p = sub.add_parser("list-systems", help="names of all builtin systems")
    common(p)

    return parser


# ---------------------------------------------------------------------------
# Config resolution


@dataclasses.dataclass
class ExperimentConfig:
    command: str
    params: dict
    seed: int
    threads: int
    out: str | None
    format: str
    rtol: float
    atol: float

    @property
    def integrator(self) -> IntegratorOptions:
        return IntegratorOptions(rtol=self.rtol, atol=self.atol)

    def asdict(self) -> dict:
        # threads is execution plumbing, not part of the experiment: outputs
        # must be byte-identical whatever the worker count, so it is left out
        # of the echoed config.
        d = {
            "command": self.command,
            "seed": self.seed,
            "out": self.out,
            "format": self.format,
            "rtol": self.rtol,
            "atol": self.atol,
        }
        d.update(self.params)
        return d


_META_KEYS = ("config", "command", "seed", "threads", "out", "format", "rtol", "atol")


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Merge per-command defaults, an optional config file, and explicit flags."""
    command = args.command
    file_cfg: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = json.load(fh)
        file_cfg = loaded.get("config", loaded)
        if file_cfg.get("command", command) != command:
            raise ValidationError(
                f"config file is for {file_cfg['command']!r}, not {command!r}"
            )
    params = dict(DEFAULTS[command])
    for key in params:
        if key in file_cfg and file_cfg[key] is not None:
            params[key] = file_cfg[key]
        given = getattr(args, key, None)
        if given is not None:
            params[key] = given

    def meta(name, default):
        given = getattr(args, name, None)
        if given is not None:
            return given
        if file_cfg.get(name) is not None:
            return file_cfg[name]
        return default

    threads = meta("threads", None)
    if threads is None:
        threads = int(os.environ.get("PESIN_LAB_THREADS", "1"))
    out = meta("out", None)
    fmt = meta("format", None)
    if fmt is None:
        fmt = "both" if out else "json"
    if fmt in ("csv", "both") and not out:
        raise ValidationError("--format csv/both needs --out DIR")
    return ExperimentConfig(
        command=command,
        params=params,
        seed=int(meta("seed", 0)),
        threads=int(threads),
        out=out,
        format=fmt,
        rtol=float(meta("rtol", DEFAULT_INTEGRATOR.rtol)),
        atol=float(meta("atol", DEFAULT_INTEGRATOR.atol)),
    )


# ---------------------------------------------------------------------------
# Serialization helpers


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: _jsonable(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
            if not callable(getattr(obj, f.name))
        }
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _emit(summary: dict) -> None:
    sys.stdout.write(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")


def _fail(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def _write_csv(cfg: ExperimentConfig, name: str, header, rows) -> None:
    if cfg.format not in ("csv", "both") or not cfg.out:
        return
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, name), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row]
            )


def _parse_point(text):
    return np.array([float(v) for v in str(text).split(",")])


def _parse_levels(text):
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError("level grid must be 'start:stop:count'")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValidationError("level grid needs at least one level")
        return np.linspace(a, b, n)
    return np.array([float(v) for v in text.split(",")])


def _load_field(cfg: ExperimentConfig):
    name = cfg.params.get("system")
    if not name:
        raise ValidationError("--system is required")
    return dynamics.load_system(name)


def _start_point(cfg: ExperimentConfig, field):
    if cfg.params.get("x"):
        return _parse_point(cfg.params["x"])
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    return field.domain.sample(rng)


# ---------------------------------------------------------------------------
# Command handlers


def _cmd_simulate(cfg: ExperimentConfig):
    field = _load_field(cfg)
    x0 = _start_point(cfg, field)
    t = float(cfg.params["t"])
    steps = int(cfg.params["steps"])
    times = np.linspace(0.0, t, steps + 1)
    rows = [(0.0, *np.asarray(field.domain.wrap(x0), float))]
    pos = np.asarray(x0, float)
    for a, b in zip(times[:-1], times[1:]):
        pos = dynamics.flow(field, pos, float(b - a), cfg.integrator).position
        rows.append((float(b), *pos))
    _write_csv(
        cfg,
        "trajectory.csv",
        ["time"] + [f"x{i}" for i in range(field.dim)],
        rows,
    )
    end = dynamics.TrajectoryPoint(np.asarray(rows[-1][1:], float), t)
    return {
        "config": cfg.asdict(),
        "system": field.name,
        "start": np.asarray(field.domain.wrap(x0), float),
        "end": end,
        "divergence_free": field.divergence_free,
    }, 0


def _cmd_lyapunov(cfg: ExperimentConfig):
    field = _load_field(cfg)
    n = int(cfg.params["samples"])
    t = float(cfg.params["t"])
    renorm = float(cfg.params["renorm"])
    children = np.random.SeedSequence(cfg.seed).spawn(n)

    def worker(i):
        rng = np.random.default_rng(children[i])
        x0 = field.domain.sample(rng)
        spec = lyapunov.spectrum(field, x0, t, renorm, cfg.integrator)
        return x0, spec

    if cfg.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(worker, range(n)))
    else:
        results = [worker(i) for i in range(n)]

    rows = [(*x0, *spec.exponents) for x0, spec in results]
    _write_csv(
        cfg,
        "lyapunov_samples.csv",
        [f"x{i}" for i in range(field.dim)] + [f"lambda{i + 1}" for i in range(field.dim)],
        rows,
    )
    tops = np.array([max(spec.top, 0.0) for _, spec in results])
    exps = np.array([spec.exponents for _, spec in results])
    return {
        "config": cfg.asdict(),
        "system": field.name,
        "mean_exponents": exps.mean(axis=0),
        "integrated_upper": float(tops.mean()),
        "stderr": float(tops.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        "residual_sums": [spec.residual_sum for _, spec in results],
    }, 0


def _cmd_dominate(cfg: ExperimentConfig):
    field = _load_field(cfg)
    x0 = _start_point(cfg, field)
    report = poincare.domination_check(
        field, x0, float(cfg.params["ell"]), float(cfg.params["horizon"]), cfg.integrator
    )
    rows = [
        (i, *minus, *plus)
        for i, (minus, plus) in enumerate(report.splitting)
    ]
    _write_csv(
        cfg,
        "domination_splitting.csv",
        ["sample"]
        + [f"minus{i}" for i in range(field.dim)]
        + [f"plus{i}" for i in range(field.dim)],
        rows,
    )
    return {"config": cfg.asdict(), "system": field.name, "report": report.to_dict()}, 0


def _cmd_suspend(cfg: ExperimentConfig):
    base = suspension.base_system(str(cfg.params["base"]))
    ceiling = suspension.parse_ceiling(str(cfg.params["ceiling"]))
    system = suspension.suspend(base, ceiling, seed=cfg.seed)
    count = int(cfg.params["count"])
    points = suspension.lift_measure_sample(system, cfg.seed, count)
    rows = [(*p.base_point, p.height) for p in points]
    _write_csv(
        cfg,
        "suspension_samples.csv",
        [f"x{i}" for i in range(base.dim)] + ["height"],
        rows,
    )
    summary = {
        "config": cfg.asdict(),
        "base": base.name,
        "invertible": base.inverse is not None,
        "ceiling": {
            "label": system.ceiling.label,
            "alpha": system.ceiling.alpha,
            "h_max": system.ceiling.h_max,
            "integral_estimate": system.ceiling.integral_estimate,
            "integral_stderr": system.ceiling.integral_stderr,
        },
        "mean_ceiling": system.mean_ceiling,
    }
    if base.known_entropy is not None:
        summary["base_entropy"] = base.known_entropy
        summary["abramov_prediction"] = suspension.abramov_check(system)
    return summary, 0


def _entropy_source(cfg: ExperimentConfig):
    if cfg.params.get("base"):
        base = suspension.base_system(str(cfg.params["base"]))
        ceiling = suspension.parse_ceiling(str(cfg.params.get("ceiling") or "const:1"))
        return suspension.suspend(base, ceiling, seed=cfg.seed), f"suspension:{base.name}"
    field = _load_field(cfg)
    return field, field.name


def _cmd_entropy(cfg: ExperimentConfig):
    source, label = _entropy_source(cfg)
    est = entropy.flow_entropy(
        source,
        int(cfg.params["resolution"]),
        float(cfg.params["time_step"]),
        int(cfg.params["n_max"]),
        int(cfg.params["orbits"]),
        int(cfg.params["length"]),
        cfg.seed,
        opts=cfg.integrator,
    )
    _write_csv(
        cfg,
        "entropy_diagnostics.csv",
        ["n", "H_n", "H_n/n", "occupied_cells", "samples"],
        [(d.n, d.block_entropy, d.rate, d.occupied, d.samples) for d in est.diagnostics],
    )
    return {"config": cfg.asdict(), "system": label, "estimate": est}, 0


def _cmd_pesin_check(cfg: ExperimentConfig):
    field = _load_field(cfg)
    sampler = None
    if cfg.params.get("energy_cap") is not None:
        sys_h = hamiltonian.load_hamiltonian(str(cfg.params["system"]))
        sampler = hamiltonian.energy_capped_sampler(sys_h, float(cfg.params["energy_cap"]))
    report = entropy.pesin_report(
        field,
        cfg.seed,
        entropy.EntropyRunConfig(
            resolution=int(cfg.params["resolution"]),
            time_step=float(cfg.params["time_step"]),
            n_max=int(cfg.params["n_max"]),
            n_orbits=int(cfg.params["orbits"]),
            orbit_length=int(cfg.params["length"]),
            integrator=cfg.integrator,
        ),
        entropy.ExponentRunConfig(
            n_samples=int(cfg.params["samples"]),
            t_horizon=float(cfg.params["t"]),
            renorm_interval=float(cfg.params["renorm"]),
            integrator=cfg.integrator,
        ),
        sampler=sampler,
        threads=cfg.threads,
    )
    _write_csv(
        cfg,
        "entropy_diagnostics.csv",
        ["n", "H_n", "H_n/n", "occupied_cells", "samples"],
        [
            (d.n, d.block_entropy, d.rate, d.occupied, d.samples)
            for d in report.entropy.diagnostics
        ],
    )
    return {"config": cfg.asdict(), "system": field.name, "report": report}, (
        4 if report.violation else 0
    )


def _cmd_hamiltonian(cfg: ExperimentConfig):
    sys_h = hamiltonian.load_hamiltonian(str(cfg.params["H"]))
    grid = _parse_levels(cfg.params["levels"])
    opts = IntegratorOptions(rtol=cfg.rtol, atol=cfg.atol)
    if (cfg.rtol, cfg.atol) == (DEFAULT_INTEGRATOR.rtol, DEFAULT_INTEGRATOR.atol):
        opts = dynamics.HAMILTONIAN_INTEGRATOR
    result = hamiltonian.integrated_level_entropy(
        sys_h,
        grid,
        n_samples=int(cfg.params["samples"]),
        t_horizon=float(cfg.params["t"]),
        seed=cfg.seed,
        opts=opts,
        renorm_interval=float(cfg.params["renorm"]),
    )
    _write_csv(
        cfg,
        "hamiltonian_levels.csv",
        ["e", "lambda_plus", "stderr", "n_rejected"],
        [
            (e, lv.value, lv.stderr, lv.n_rejected)
            for e, lv in zip(result.e_grid, result.levels)
        ],
    )
    return {"config": cfg.asdict(), "system": sys_h.name, "integral": result}, 0


def _cmd_list_systems(cfg: ExperimentConfig):
    return {
        "config": cfg.asdict(),
        "fields": list(dynamics.BUILTIN_FIELDS),
        "hamiltonians": list(hamiltonian.BUILTIN_HAMILTONIANS),
        "suspension_bases": list(suspension.BUILTIN_BASES),
    }, 0


HANDLERS = {
    "simulate": _cmd_simulate,
    "lyapunov": _cmd_lyapunov,
    "dominate": _cmd_dominate,
    "suspend": _cmd_suspend,
    "entropy": _cmd_entropy,
    "pesin-check": _cmd_pesin_check,
    "hamiltonian": _cmd_hamiltonian,
    "list-systems": _cmd_list_systems,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        summary, code = HANDLERS[args.command](cfg)
    except ValidationError as exc:
        _fail(exc)
        return 2
    except NumericalError as exc:
        _fail(exc)
        return 3
    except PesinLabError as exc:
        _fail(exc)
        return 2
    except FileNotFoundError as exc:
        _fail(ValidationError(str(exc)))
        return 2
    _emit(summary)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
