"""keldysh-lab: run experiments from TOML configs, list them, trace characteristics.

Exit codes: 0 when every check passes, 2 when a check fails, 1 for usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from .errors import KeldyshLabError
from .experiments import EXPERIMENTS, FORMS, ExperimentConfig
from .report import LadderReport, _plain

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_PASS, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2
FORMATS = ("csv", "json", "dat")
TOP_KEYS = {"experiment", "seed", "grids", "K", "domain", "operator", "multiplier",
            "output", "params"}


class ConfigError(Exception):
    pass


def _need(table: dict, key: str, where: str, kinds):
    if key not in table:
        raise ConfigError(f"{where}.{key}: missing")
    val = table[key]
    if not isinstance(val, kinds) or isinstance(val, bool):
        raise ConfigError(f"{where}.{key}: expected {_kind_names(kinds)}, got {val!r}")
    return val


def _kind_names(kinds) -> str:
    kinds = kinds if isinstance(kinds, tuple) else (kinds,)
    return " or ".join(k.__name__ for k in kinds)


def _table(data: dict, key: str, required: bool = True) -> dict:
    if key not in data:
        if required:
            raise ConfigError(f"{key}: missing table")
        return {}
    if not isinstance(data[key], dict):
        raise ConfigError(f"{key}: expected a table")
    return data[key]


def parse_config(text: str) -> ExperimentConfig:
    """Parse and check a config; raises ConfigError with the offending field."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax: {exc}") from exc
    unknown = set(data) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    name = _need(data, "experiment", "config", str)
    if name not in EXPERIMENTS:
        raise ConfigError(f"config.experiment: unknown experiment {name!r}; "
                          f"choose from {', '.join(EXPERIMENTS)}")
    grids = data.get("grids")
    if not isinstance(grids, list) or not grids or \
            not all(isinstance(g, int) and not isinstance(g, bool) and g >= 4 for g in grids):
        raise ConfigError("config.grids: expected a non-empty list of integers >= 4")
    if any(b <= a for a, b in zip(grids[:-1], grids[1:])):
        raise ConfigError("config.grids: must be strictly increasing")

    K = _table(data, "K")
    kind = _need(K, "kind", "K", str)
    if kind not in ("power", "sgn"):
        raise ConfigError(f"K.kind: expected 'power' or 'sgn', got {kind!r}")
    if kind == "power":
        k0 = _need(K, "k0", "K", int)
        if k0 < 1:
            raise ConfigError("K.k0: must be a positive integer")

    dom = _table(data, "domain")
    for key in ("a", "b", "d"):
        _need(dom, key, "domain", (int, float))

    op = _table(data, "operator", required=False) or {"form": "loword"}
    form = op.get("form", "loword")
    if form not in FORMS:
        raise ConfigError(f"operator.form: expected one of {', '.join(FORMS)}, got {form!r}")
    if form == "kappa":
        _need(op, "kappa", "operator", (int, float))
    if form == "general":
        _need(op, "k", "operator", (int, float))

    mult = _table(data, "multiplier", required=False) or {"delta": "auto"}
    delta = mult.get("delta", "auto")
    if delta != "auto" and (isinstance(delta, bool) or not isinstance(delta, (int, float))
                            or delta <= 0):
        raise ConfigError(f"multiplier.delta: expected 'auto' or a positive number, got {delta!r}")

    out = _table(data, "output", required=False)
    formats = out.get("formats", ["csv", "json"])
    if not isinstance(formats, list) or any(f not in FORMATS for f in formats):
        raise ConfigError(f"output.formats: expected a list drawn from {', '.join(FORMATS)}")
    seed = data.get("seed", 42)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"config.seed: expected int, got {seed!r}")
    return ExperimentConfig(name, dict(K), dict(dom), list(grids), dict(op), dict(mult),
                            {"dir": str(out.get("dir", "out")), "formats": list(formats)},
                            seed, dict(_table(data, "params", required=False)))


# ------------------------------------------------------------------ output

def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return "%.12e" % v if math.isfinite(v) else str(v)
    return "" if v is None else str(v)


def _columns(rows: list[dict]) -> list[str]:
    cols: list[str] = []
    for r in rows:
        cols += [k for k, v in r.items() if k not in cols and not isinstance(v, (list, dict))]
    return cols


def results_csv(rep: LadderReport) -> str:
    rows = _plain(rep.rows)
    cols = _columns(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in cols])
    return buf.getvalue()


def results_dat(rep: LadderReport) -> str:
    rows = _plain(rep.rows)
    cols = _columns(rows)
    lines = ["# " + " ".join(c.replace(" ", "_") for c in cols)]
    for r in rows:
        lines.append(" ".join(_cell(r.get(c)) or "nan" for c in cols))
    return "\n".join(lines) + "\n"


def write_outputs(rep: LadderReport, cfg: ExperimentConfig) -> Path:
    out = Path(cfg.output["dir"])
    out.mkdir(parents=True, exist_ok=True)
    formats = cfg.output["formats"]
    if "csv" in formats:
        (out / "results.csv").write_text(results_csv(rep))
    if "json" in formats:
        doc = rep.to_dict()
        doc["config"] = {"experiment": cfg.experiment, "K": cfg.K, "domain": cfg.domain,
                         "grids": cfg.grids, "operator": cfg.operator,
                         "multiplier": cfg.multiplier, "seed": cfg.seed, "params": cfg.params}
        (out / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if "dat" in formats:
        (out / f"{rep.experiment}.dat").write_text(results_dat(rep))
    return out


# ---------------------------------------------------------------- commands

def run(config_path) -> int:
    """Run one config; returns the exit code."""
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        print(f"error: cannot read {config_path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = parse_config(text)
        rep = EXPERIMENTS[cfg.experiment].run(cfg)
        out = write_outputs(rep, cfg)
    except ConfigError as exc:
        print(f"config error in {config_path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeldyshLabError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name, ok in rep.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"wrote {out}")
    return EXIT_PASS if rep.passed else EXIT_VIOLATION


def list_experiments() -> str:
    width = max(len(n) for n in EXPERIMENTS)
    lines = [f"{'name'.ljust(width)}  reproduces / description"]
    for e in EXPERIMENTS.values():
        lines.append(f"{e.name.ljust(width)}  {e.reproduces}")
        lines.append(f"{''.ljust(width)}    {e.description}")
    return "\n".join(lines)


def _trace(args) -> int:
    from .geometry import trace_characteristic
    from .typechange import parse_tag

    try:
        K = parse_tag(args.K)
        x0, y0 = (float(t) for t in args.start.split(","))
    except (KeldyshLabError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    y_stop = args.y_stop
    if y_stop is None:
        y_stop = y0 + 10.0 if args.branch == "plus" else y0 - 10.0
    try:
        ch = trace_characteristic(K, (x0, y0), args.branch, y_stop, args.step)
    except KeldyshLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = io.StringIO()
    out.write("x,y\n")
    for x, y in ch.vertices:
        out.write(f"{x:.12e},{y:.12e}\n")
    sys.stdout.write(out.getvalue())
    return EXIT_PASS


def _domain(args) -> int:
    from .geometry import build_domain
    from .typechange import parse_tag

    try:
        dom = build_domain(parse_tag(args.K), args.a, args.b, args.d)
    except KeldyshLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(dom.to_json(indent=1))
    return EXIT_PASS


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="keldysh-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment named in a TOML config")
    p_run.add_argument("config")
    sub.add_parser("list", help="list experiments")
    p_tr = sub.add_parser("trace", help="trace one characteristic and print its vertices")
    p_tr.add_argument("--K", default="power:1", help="power:<k0> or sgn")
    p_tr.add_argument("--start", required=True, help="x,y")
    p_tr.add_argument("--branch", choices=("plus", "minus"), default="plus")
    p_tr.add_argument("--y-stop", type=float, default=None)
    p_tr.add_argument("--step", type=float, default=1e-3)
    p_dom = sub.add_parser("domain", help="print the mixed domain as JSON")
    p_dom.add_argument("--K", default="power:1")
    p_dom.add_argument("--a", type=float, default=0.0)
    p_dom.add_argument("--b", type=float, default=2.0)
    p_dom.add_argument("--d", type=float, default=1.0)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    if args.command == "run":
        return run(args.config)
    if args.command == "list":
        print(list_experiments())
        return EXIT_PASS
    if args.command == "trace":
        return _trace(args)
    return _domain(args)


if __name__ == "__main__":
    sys.exit(main())
