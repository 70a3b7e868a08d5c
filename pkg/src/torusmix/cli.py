"""``torusmix`` command line.

Subcommands: ``schedule``, ``transport``, ``solve``, ``experiment``,
``verify`` and ``report``. Exit status 0 means pass, 1 a usage or I/O
error, 2 a failed criterion (or calibration failure).

Config files are flat ``key = value`` text. Values are typed on read
(int, fraction, float, bool, comma list, else string); ``include = path``
pulls in another file (relative to the including one), and later keys
override earlier ones. Command-line flags override the file.

Every output file is written atomically and gets a ``<name>.meta.json``
sidecar holding the resolved config and the file's sha256. Outputs are
byte-identical for identical config and seed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from . import __version__
from .ade import SolverConfig, solve, trace_csv
from .composite import build_vv_params, dumps_spec, field_horizon, loads_spec
from .grid import tmxf_bytes
from .limits import (
    CalibrationError, ExperimentReport, MixConfig, VVConfig, calibrate_nu, mixing_spec,
    run_mixing_experiment, run_vv_experiment, tolerance,
)
from .schedule import generate_schedule, lex_iter, parse_quad, schedule_csv
from .transport import battery, compile_flow, datum, pullback

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config

def _typed(text: str):
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if "," in s and not s.startswith("("):
        return [_typed(p) for p in s.split(",") if p.strip()]
    for conv in (int, Fraction, float):
        try:
            v = conv(s)
        except (ValueError, ZeroDivisionError):
            continue
        if isinstance(v, Fraction) and v.denominator == 1:
            return int(v)
        return v
    return s


def load_config(path, _seen=None) -> dict:
    """Read a key-value config, resolving ``include`` lines depth first."""
    path = Path(path).resolve()
    seen = set() if _seen is None else _seen
    if path in seen:
        raise UsageError(f"include cycle at {path}")
    seen.add(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from None
    out: dict = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, val = key.strip(), val.strip()
        if key == "include":
            out.update(load_config(path.parent / val, seen))
        else:
            out[key] = _typed(val)
    seen.discard(path)
    return out


@dataclass
class RunConfig:
    """Resolved run parameters shared by the run-type subcommands."""

    experiment: str = "vv"  # vv | mixing
    kind: str = "fractal"  # fractal | mirrored | file
    K: int = 2
    N: int = 128
    nu: list = field(default_factory=lambda: [1e-3])
    auto_nu: bool = False
    datum: str = "sin"
    out: str = "out"
    seed: int = 0
    times: list = field(default_factory=list)
    spec_file: str | None = None
    interpolation: str = "cubic"
    record_runtime: bool = False

    def validate(self):
        if self.N < 4 or self.N & (self.N - 1):
            raise UsageError(f"N={self.N} must be a power of two >= 4")
        if self.K < 1:
            raise UsageError("K must be >= 1")
        if self.experiment not in ("vv", "mixing"):
            raise UsageError(f"unknown experiment {self.experiment!r}")
        if self.kind not in ("fractal", "mirrored", "file"):
            raise UsageError(f"unknown spec kind {self.kind!r}")
        try:
            datum(self.datum)
        except ValueError as e:
            raise UsageError(str(e)) from None
        if any(not float(v) > 0 for v in self.nu):
            raise UsageError("nu values must be positive")
        return self

    def resolved(self) -> dict:
        d = asdict(self)
        d["nu"] = [float(v) for v in self.nu]
        d["times"] = [str(Fraction(t)) for t in self.times]
        d["version"] = __version__
        return d


def _listify(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def resolve_config(args) -> RunConfig:
    kv = load_config(args.config) if getattr(args, "config", None) else {}
    for key in ("experiment", "kind", "K", "N", "datum", "out", "seed", "spec_file", "interpolation"):
        v = getattr(args, key, None)
        if v is not None:
            kv[key] = v
    if getattr(args, "nu", None) is not None:
        kv["nu"] = "auto" if args.nu == ["auto"] else args.nu
    if getattr(args, "times", None) is not None:
        kv["times"] = args.times
    if kv.get("nu") == "auto":
        kv["nu"], kv["auto_nu"] = [1e-3], True
    cfg = RunConfig()
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(kv) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key, v in kv.items():
        if key in ("nu", "times"):
            v = [_typed(x) if isinstance(x, str) else x for x in _listify(v)]
            v = [float(x) for x in v] if key == "nu" else [Fraction(str(x)) for x in v]
        elif key in ("K", "N", "seed"):
            v = int(v)
        elif key in ("auto_nu", "record_runtime"):
            v = bool(v)
        else:
            v = None if v is None else str(v)
        cfg = replace(cfg, **{key: v})
    if cfg.spec_file:
        cfg = replace(cfg, kind="file")
    return cfg.validate()


def build_spec(cfg: RunConfig):
    if cfg.kind == "file":
        try:
            return loads_spec(Path(cfg.spec_file).read_text())
        except (OSError, KeyError, ValueError) as e:
            raise UsageError(f"bad spec file {cfg.spec_file}: {e}") from None
    if cfg.kind == "fractal":
        return build_vv_params(cfg.K)
    return mixing_spec(cfg.K)


# ------------------------------------------------------------------ output

def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Outputs:
    """Collects files and writes them (with sidecars) only once everything succeeded."""

    def __init__(self, out_dir, meta: dict):
        self.dir = Path(out_dir)
        self.meta = meta
        self.files: list[tuple[str, bytes, dict]] = []

    def add(self, name: str, data: bytes | str, **extra):
        if isinstance(data, str):
            data = data.encode()
        self.files.append((name, data, extra))

    def check(self):
        if not self.dir.is_dir():
            raise UsageError(f"output directory {self.dir} does not exist")
        if not os.access(self.dir, os.W_OK):
            raise UsageError(f"output directory {self.dir} is not writable")

    def commit(self) -> list[str]:
        self.check()
        paths = []
        for name, data, extra in self.files:
            meta = {"file": name, "sha256": _sha256(data), "config": self.meta, **extra}
            atomic_write(self.dir / name, data)
            atomic_write(self.dir / f"{name}.meta.json", (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())
            paths.append(str(self.dir / name))
        return paths


def _time_tag(t: Fraction) -> str:
    return str(t).replace("/", "_")


# --------------------------------------------------------------- commands

def cmd_schedule(args) -> int:
    fam = args.family
    if fam == "dyadic":
        try:
            K = int(args.K)
        except ValueError:
            raise UsageError("dyadic depth must be an integer") from None
        if K < 0:
            raise UsageError("depth must be >= 0")
        if args.tau in (None, "auto"):
            taus = [lv[2] for lv in build_vv_params(K).levels]
        else:
            taus = [Fraction(x) for x in args.tau.split(",")]
        try:
            entries = generate_schedule(K, "dyadic", taus)
        except ValueError as e:
            raise UsageError(str(e)) from None
    else:
        try:
            if args.K.strip().lstrip("-").isdigit():
                K = int(args.K)
                if K < 0:
                    raise UsageError("depth must be >= 0")
                bound = list(lex_iter(K))[-1] if K > 0 else None
            else:
                bound = parse_quad(args.K)
            entries = generate_schedule(bound, "quad")
        except ValueError as e:
            raise UsageError(str(e)) from None
    text = schedule_csv(entries)
    total = sum((e.duration for e in entries), Fraction(0))
    if args.out:
        out = Outputs(Path(args.out).parent, {"family": fam, "K": args.K, "tau": args.tau, "version": __version__})
        out.add(Path(args.out).name, text)
        out.commit()
    else:
        sys.stdout.write(text)
    print(f"intervals: {len(entries)}", file=sys.stderr if not args.out else sys.stdout)
    print(f"total active time: {total}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _spec_meta(spec) -> dict:
    text = dumps_spec(spec)
    return {"spec": text, "spec_sha256": _sha256(text.encode())}


def cmd_transport(args) -> int:
    cfg = resolve_config(args)
    spec = build_spec(cfg)
    H = field_horizon(spec)
    times = cfg.times or [Fraction(0), H]
    bad = [t for t in times if t < 0 or t > H]
    if bad:
        raise UsageError(f"times {[str(t) for t in bad]} outside the horizon [0, {H}]")
    out = Outputs(cfg.out, cfg.resolved())
    out.check()
    f0 = datum(cfg.datum)
    prog = compile_flow(spec)
    out.add("spec.txt", dumps_spec(spec))
    for t in times:
        g = pullback(f0, prog, t, cfg.N)
        out.add(f"snapshot_t{_time_tag(t)}.tmxf", tmxf_bytes(g), time=str(t), **_spec_meta(spec))
    for p in out.commit():
        print(p)
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = resolve_config(args)
    spec = build_spec(cfg)
    H = field_horizon(spec)
    bad = [t for t in cfg.times if t < 0 or t > H]
    if bad:
        raise UsageError(f"times {[str(t) for t in bad]} outside the horizon [0, {H}]")
    out = Outputs(cfg.out, cfg.resolved())
    out.check()
    f0 = datum(cfg.datum)
    out.add("spec.txt", dumps_spec(spec))
    nus = cfg.nu
    if cfg.auto_nu:
        try:
            cal = calibrate_nu(spec, battery(), tolerance(cfg.K), N=cfg.N, interpolation=cfg.interpolation)
        except CalibrationError as e:
            print(f"torusmix: calibration failed: {e}", file=sys.stderr)
            return EXIT_FAIL
        nus = [cal.nu]
        print(f"calibrated nu = {cal.nu:.6e} (sup L1 distance {cal.distance:.3e} <= {cal.tol:.3g})")
    for nu in nus:
        sc = SolverConfig(N=cfg.N, nu=float(nu), interpolation=cfg.interpolation)
        tr, f = solve(f0, spec, sc, snapshot_times=cfg.times)
        tag = f"nu{float(nu):.6e}"
        prov = {"nu": float(nu), "N": cfg.N, "dt_max": tr.dt_max, **_spec_meta(spec)}
        out.add(f"final_{tag}.tmxf", tmxf_bytes(f), time=str(H), **prov)
        out.add(f"trace_{tag}.csv", trace_csv(tr), **prov)
        for t in cfg.times:
            out.add(f"snapshot_{tag}_t{_time_tag(t)}.tmxf", tmxf_bytes(tr.snapshots[float(t)]), time=str(t), **prov)
        print(f"nu={float(nu):.3e}: energy residual {tr.energy_residual:.2e}, mass drift {tr.mass_drift:.2e}")
    for p in out.commit():
        print(p)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = resolve_config(args)
    out = Outputs(cfg.out, cfg.resolved())
    out.check()
    f0 = datum(cfg.datum)
    if cfg.experiment == "vv":
        if cfg.K < 3:
            raise UsageError("the vv experiment needs K >= 3")
        rep = run_vv_experiment(f0, cfg.K, VVConfig(N=cfg.N, interpolation=cfg.interpolation))
    else:
        if cfg.K < 2:
            raise UsageError("the mixing experiment needs K >= 2")
        rep = run_mixing_experiment(f0, cfg.K, MixConfig(N=cfg.N, interpolation=cfg.interpolation))
    runtime = rep.metadata.pop("runtime_s", None)
    if cfg.record_runtime and runtime is not None:
        rep.metadata["runtime_s"] = runtime
    rep.artifacts = [str(Path(cfg.out) / "report.json")]
    out.add("report.json", rep.to_json() + "\n")
    out.commit()
    print(rep.render())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_report(args) -> int:
    try:
        rep = ExperimentReport.from_dict(json.loads(Path(args.path).read_text()))
    except (OSError, ValueError, KeyError) as e:
        raise UsageError(f"cannot read report {args.path}: {e}") from None
    print(rep.to_json() if args.json else rep.render())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    from .verify import run_all
    results = run_all(seed=args.seed, points=args.points)
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAIL


# ------------------------------------------------------------------ parser

def _run_args(p):
    p.add_argument("--config", help="key-value config file")
    p.add_argument("--kind", choices=["fractal", "mirrored", "file"])
    p.add_argument("--spec-file", dest="spec_file")
    p.add_argument("--K", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--datum")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--interpolation", choices=["cubic", "linear"])


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="torusmix", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("schedule", help="exact schedule CSV")
    p.add_argument("--family", choices=["dyadic", "quad"], default="dyadic")
    p.add_argument("--K", default="2", help="depth, or a quad bound '(k,m,i,n)' for the quad family")
    p.add_argument("--tau", default="auto", help="'auto' or comma-separated fractions")
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("transport", help="exact inviscid snapshots (TMXF)")
    _run_args(p)
    p.add_argument("--times", nargs="+", help="snapshot times (fractions allowed)")
    p.set_defaults(func=cmd_transport)

    p = sub.add_parser("solve", help="viscous runs: final field, trace CSV, snapshots")
    _run_args(p)
    p.add_argument("--nu", nargs="+", help="viscosities, or 'auto' to calibrate on the battery")
    p.add_argument("--times", nargs="+")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("experiment", help="run the vv or mixing experiment and write report.json")
    _run_args(p)
    p.add_argument("--experiment", choices=["vv", "mixing"])
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="fast exact-identity invariant checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=1000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="re-render a stored report")
    p.add_argument("path")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = make_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"torusmix: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"torusmix: I/O error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
