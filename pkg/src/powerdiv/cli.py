"""Command line front end.

Commands
--------
``bound``    evaluate one error bound term by term
``table1``   the uniform-allocation bound on the standard 8 x 6 grid
``verify``   simulate, measure the empirical Kolmogorov distance, compare to a bound
``sweep``    evaluate a bound over a parameter grid, one CSV row per point

Configuration is a flat JSON document (``scheme.r``, ``grid.n``, ...).
Nested objects are flattened to dotted keys, and a report written by an
earlier run is accepted too, in which case its embedded manifest is
re-executed. Command line flags override values from the file.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 computational precondition failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import re
import sys
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import bounds
from .montecarlo import ExperimentConfig, default_workers, empirical_dk, simulate
from .report import RunManifest, dumps, format_float, manifest_header, read_manifest
from .scheme import ClassificationScheme, build_scheme

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3

COMMANDS = ("bound", "table1", "verify", "sweep")
BOUNDS = ("theorem1", "llr", "uniform", "dpd", "gaussian", "generalized")
FORMATS = ("text", "json", "csv")

CONFIG_KEYS = {
    "command", "bound", "scheme.kind", "scheme.r", "scheme.a", "scheme.file", "scheme.probs",
    "n", "lambda", "m", "var_r", "replicates", "seed", "target",
    "output.path", "output.format", "output.samples",
}
GRID_AXES = ("n", "r", "a", "lambda")

TABLE1_R = (300, 500, 700, 1000, 3000, 5000, 7000, 10000)
TABLE1_N = (5, 10, 20, 30, 40, 50)
DASH = "—"

SWEEP_COLUMNS = (
    "n", "r", "a", "lambda", "name", *bounds.TERM_FIELDS, "total",
    "mu", "c_lambda", "d_lambda", "valid", "ratio",
)


class ConfigError(Exception):
    """Bad or incomplete configuration (exit code 2)."""


class PreconditionError(Exception):
    """Inputs are well formed but the computation cannot proceed (exit code 3)."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def flatten(doc: Mapping[str, Any], prefix: str = "") -> dict:
    out = {}
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def load_config(path: str | Path) -> dict:
    """Flat config from a JSON document or from any report carrying a manifest."""
    path = Path(path)
    try:
        manifest = read_manifest(path)
        if manifest is not None:
            return dict(manifest["config"])
        doc = json.loads(path.read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ConfigError(f"config {path} must be a JSON object")
    return flatten(doc)


def check_keys(config: Mapping[str, Any]) -> None:
    unknown = [k for k in config if k not in CONFIG_KEYS and not _is_grid_key(k)]
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")


def _is_grid_key(key: str) -> bool:
    return key.startswith("grid.") and key[5:] in (*GRID_AXES, "couple")


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except ValueError:
        return text


def _parse_list(text: str) -> list:
    text = text.strip()
    if text.startswith("["):
        value = _parse_value(text)
        if not isinstance(value, list):
            raise ConfigError(f"grid values must be a list, got {text!r}")
        return value
    return [_parse_value(t) for t in text.split(",") if t.strip()]


def _number(config: Mapping[str, Any], key: str, kind: Callable = float, default: Any = None) -> Any:
    value = config.get(key, default)
    if value is None:
        raise ConfigError(f"missing required config key {key!r}")
    try:
        if kind is int:
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r} has invalid value {value!r}") from exc


DEFAULT_LAMBDA = 1.0


def _lambda(config: Mapping[str, Any], default: Any = DEFAULT_LAMBDA) -> float:
    value = config.get("lambda", default)
    if isinstance(value, str) and "/" in value:
        num, den = value.split("/", 1)
        try:
            return float(num) / float(den)
        except ValueError as exc:
            raise ConfigError(f"invalid lambda {value!r}") from exc
    return _number({"lambda": value}, "lambda", float)


def scheme_descriptor(config: Mapping[str, Any]) -> dict:
    kind = config.get("scheme.kind")
    if kind is None:
        kind = "explicit" if config.get("scheme.file") or config.get("scheme.probs") else "uniform"
    desc: dict[str, Any] = {"kind": kind}
    for key in ("r", "a", "file", "probs"):
        if config.get(f"scheme.{key}") is not None:
            desc[key] = config[f"scheme.{key}"]
    if "r" in desc:
        desc["r"] = _number(desc, "r", int)
    if "a" in desc:
        desc["a"] = _number(desc, "a", float)
    return desc


def resolve_scheme(config: Mapping[str, Any]) -> ClassificationScheme:
    try:
        return build_scheme(scheme_descriptor(config))
    except (ValueError, OSError) as exc:
        raise ConfigError(f"invalid scheme: {exc}") from exc


def default_bound(config: Mapping[str, Any]) -> str:
    kind = config.get("scheme.kind", "uniform")
    return {"uniform": "uniform", "power": "dpd"}.get(kind, "theorem1")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _warn_validity(b: bounds.BoundBreakdown) -> None:
    if b.violated:
        warn(f"{b.name} bound evaluated outside its hypotheses (failed: {'; '.join(b.violated)}); valid=false")


def _emit(manifest: RunManifest, config: Mapping[str, Any], payload: dict,
          text: str, csv_text: str | None = None) -> None:
    """Print the human-readable form and write the report file, if any."""
    fmt = config.get("output.format", "text")
    if fmt not in FORMATS:
        raise ConfigError(f"output.format must be one of {FORMATS}, got {fmt!r}")
    path = config.get("output.path")
    if path:
        manifest.outputs.append(str(path))
    manifest.finish()
    doc = {"manifest": manifest.to_dict(), **payload}
    if fmt == "json":
        body = dumps(doc)
    elif fmt == "csv":
        body = csv_text if csv_text is not None else text
    else:
        body = text
    if path:
        content = body if fmt == "json" else manifest_header(manifest) + body
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(content)
        sys.stdout.write(text)
    else:
        sys.stdout.write(body)


def _breakdown_text(b: bounds.BoundBreakdown) -> str:
    rows = [("bound", b.name)]
    rows += [(f, format_float(getattr(b, f))) for f in bounds.TERM_FIELDS]
    rows += [
        ("total", format_float(b.total)),
        ("total (4 d.p.)", round4(b.total)),
        ("mu", format_float(b.mu)),
        ("c_lambda", format_float(b.c_lambda_val)),
        ("d_lambda", format_float(b.d_lambda_val)),
        ("valid", str(b.valid).lower()),
    ]
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def round4(x: float) -> str:
    """Round half to even at 4 decimal places, on the exact binary value."""
    if not math.isfinite(x):
        return format_float(x)
    return str(Decimal(x).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))


def table1_cell(n: int, r: int) -> str:
    value = bounds.uniform_bound(n, r)
    return DASH if value > 1.0 else round4(value)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def compute_bound(name: str, config: Mapping[str, Any]) -> tuple[bounds.BoundBreakdown, dict]:
    """Evaluate bound ``name``; returns the breakdown and any extra report fields."""
    if name not in BOUNDS:
        raise ConfigError(f"unknown bound {name!r}; expected one of {BOUNDS}")
    n = _number(config, "n", int)
    extra: dict[str, Any] = {}
    try:
        if name == "uniform":
            r = _number(config, "scheme.r", int)
            return bounds.uniform_breakdown(n, r), extra
        if name == "dpd":
            r = _number(config, "scheme.r", int)
            a = _number(config, "scheme.a", float, 0.0)
            return bounds.dpd_bound(n, r, a, _lambda(config)), extra
        scheme = resolve_scheme(config)
        if name == "llr":
            return bounds.llr_bound(scheme, n), extra
        lam = _lambda(config)
        if name == "theorem1":
            return bounds.theorem1_bound(scheme, n, lam), extra
        if name == "gaussian":
            b = bounds.theorem1_bound(scheme, n, lam)
            extra["gaussian_theorem"] = bounds.gaussian_bound(scheme, n, lam)
            if scheme.is_uniform:
                extra["gaussian_uniform"] = bounds.gaussian_uniform_bound(n, scheme.r)
            return b, extra
        m = _number(config, "m", int, 2)
        if n < 2 * m:
            raise PreconditionError(f"generalized bound needs n >= 2m (n={n}, m={m})")
        var_r = config.get("var_r")
        var_r = bounds.d_lambda(scheme, n, lam) if var_r is None else _number(config, "var_r", float)
        spec = bounds.GeneralizedSpec(m, bounds.lambda_weights(scheme, lam), var_r)
        return bounds.generalized_bound(spec, scheme, n), extra
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise PreconditionError(str(exc)) from exc


def cmd_bound(config: dict) -> int:
    name = config.get("bound") or default_bound(config)
    config["bound"] = name
    if name not in ("uniform", "llr"):
        config["lambda"] = _lambda(config)
    manifest = RunManifest("bound", config)
    b, extra = compute_bound(name, config)
    _warn_validity(b)
    text = _breakdown_text(b)
    for key, value in extra.items():
        text += f"{key}  {format_float(value)}  ({round4(value)})\n"
    payload = {"bound": b.to_dict(), **extra}
    csv_text = b.to_csv()
    _emit(manifest, config, payload, text, csv_text)
    return EXIT_OK


def table1_grid() -> list[list[str]]:
    return [[table1_cell(n, r) for n in TABLE1_N] for r in TABLE1_R]


def render_table1(grid: Sequence[Sequence[str]]) -> str:
    head = "r \\ n".ljust(7) + "".join(f"{n:>8}" for n in TABLE1_N)
    lines = [head]
    for r, row in zip(TABLE1_R, grid):
        lines.append(f"{r:<7}" + "".join(f"{cell:>8}" for cell in row))
    return "\n".join(lines) + "\n"


def parse_table1(text: str) -> dict[tuple[int, int], str]:
    """Cells of a rendered table keyed by ``(r, n)``; comment lines are skipped."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    ns = [int(t) for t in lines[0].split()[3:]]
    cells = {}
    for line in lines[1:]:
        parts = line.split()
        for n, cell in zip(ns, parts[1:]):
            cells[(int(parts[0]), n)] = cell
    return cells


def cmd_table1(config: dict) -> int:
    manifest = RunManifest("table1", config)
    grid = table1_grid()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["r", *TABLE1_N])
    for r, row in zip(TABLE1_R, grid):
        writer.writerow([r, *row])
    payload = {
        "r": list(TABLE1_R),
        "n": list(TABLE1_N),
        "cells": grid,
        "values": [[bounds.uniform_bound(n, r) for n in TABLE1_N] for r in TABLE1_R],
    }
    _emit(manifest, config, payload, render_table1(grid), buf.getvalue())
    return EXIT_OK


def _verify_plan(config: Mapping[str, Any], scheme: ClassificationScheme, n: int, lam: float):
    """Bound value, reference law and sample transform for a verify run."""
    target = config.get("target", "t_tilde")
    m = _number(config, "m", int, 2)
    extra: dict[str, Any] = {}
    try:
        mu_val = bounds.mu(scheme, n, m if target == "occupancy" else 2)
        if target == "occupancy":
            if config.get("bound") not in (None, "occupancy"):
                raise ConfigError("the occupancy target is checked against the occupancy bound only")
            value = bounds.occupancy_bound(scheme, n, m)
            violated = bounds.occupancy_validity(scheme, n) if m == 2 else []
            return "occupancy", value, violated, ("poisson", mu_val), None, extra
        name = config.get("bound") or default_bound(config)
        if name == "gaussian":
            if mu_val <= 0:
                raise PreconditionError("Gaussian comparison needs mu > 0")
            b = bounds.theorem1_bound(scheme, n, lam)
            theorem_value = b.total + bounds.BERRY_ESSEEN / math.sqrt(b.mu)
            extra["gaussian_theorem"] = theorem_value
            value = theorem_value
            if scheme.is_uniform:
                value = bounds.gaussian_uniform_bound(n, scheme.r)
                extra["gaussian_uniform"] = value
            root = math.sqrt(mu_val)
            return "gaussian", value, list(b.violated), ("normal", None), (lambda x: (x - mu_val) / root), extra
        b, _ = compute_bound(name, config)
        return b.name, b.total, list(b.violated), ("poisson", mu_val), None, extra
    except (ValueError, ZeroDivisionError) as exc:
        raise PreconditionError(str(exc)) from exc


def cmd_verify(config: dict, workers: int | None = None) -> int:
    scheme = resolve_scheme(config)
    n = _number(config, "n", int)
    lam = _lambda(config)
    replicates = _number(config, "replicates", int)
    seed = _number(config, "seed", int, 0)
    target = config.get("target", "t_tilde")
    if target not in ("t_tilde", "occupancy"):
        raise ConfigError(f"target must be 't_tilde' or 'occupancy', got {target!r}")
    m = _number(config, "m", int, 2)
    config.update({"lambda": lam, "seed": seed, "target": target})
    manifest = RunManifest("verify", config, seed=seed)

    name, value, violated, (reference, mu_val), transform, extra = _verify_plan(config, scheme, n, lam)
    if violated:
        warn(f"{name} bound evaluated outside its hypotheses (failed: {'; '.join(violated)})")
    try:
        exp = ExperimentConfig(scheme_descriptor(config), n, lam, replicates, seed, (target,), m)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        batch = simulate(exp, workers=workers, scheme=scheme)
    except ValueError as exc:
        raise PreconditionError(str(exc)) from exc
    samples = batch.target(target)
    if transform is not None:
        samples = transform(samples)
    report = empirical_dk(samples, reference, mu_val)
    if report.dkw_margin >= 1.0:
        warn(f"dkw margin {report.dkw_margin:.3g} exceeds 1 with {replicates} replicate(s); the check is vacuous")
    passed = report.d_hat <= value + report.dkw_margin
    samples_path = config.get("output.samples")
    if samples_path:
        batch.write(samples_path)
        manifest.outputs.append(str(samples_path))

    verdict = "PASS" if passed else "FAIL"
    text = (
        f"bound       {name}  {format_float(value)}  ({round4(value)})\n"
        f"d_hat       {format_float(report.d_hat)}\n"
        f"dkw_margin  {format_float(report.dkw_margin)}\n"
        f"mu          {format_float(batch.mu if target == 't_tilde' else mu_val)}\n"
        f"result      {verdict}\n"
    )
    payload = {
        "bound": {"name": name, "value": value, "violated": violated, **extra},
        "kolmogorov": report.to_dict(),
        "mu": mu_val if mu_val is not None else batch.mu,
        "result": verdict,
    }
    csv_text = "bound,value,d_hat,dkw_margin,result\n" + ",".join(
        [name, format_float(value), format_float(report.d_hat), format_float(report.dkw_margin), verdict]) + "\n"
    _emit(manifest, config, payload, text, csv_text)
    return EXIT_OK if passed else EXIT_FAIL


_COUPLE = re.compile(r"^\s*r\s*=\s*(?:(?P<c>[0-9.eE+-]+)\s*\*\s*)?n\s*(?:\^|\*\*)\s*(?P<k>[0-9.eE+-]+)\s*$")


def parse_coupling(rule: str) -> Callable[[int], int]:
    """``"r = c*n^k"`` (``c`` optional, ``**`` accepted for ``^``) as a function of ``n``."""
    match = _COUPLE.match(str(rule))
    if not match:
        raise ConfigError(f"cannot parse coupling rule {rule!r}; expected 'r = c*n^k'")
    c = float(match.group("c") or 1.0)
    k = float(match.group("k"))
    return lambda n: int(round(c * float(n) ** k))


def sweep_points(config: Mapping[str, Any]) -> list[dict]:
    """Grid points with ``n`` varying fastest, so successive rows differ only in ``n``."""
    axes = {}
    for axis, base in (("n", "n"), ("r", "scheme.r"), ("a", "scheme.a"), ("lambda", "lambda")):
        values = config.get(f"grid.{axis}")
        if values is None:
            values = [config[base]] if config.get(base) is not None else [None]
        elif isinstance(values, str):
            values = _parse_list(values)
        elif not isinstance(values, (list, tuple)):
            values = [values]
        axes[axis] = list(values)
    couple = config.get("grid.couple")
    if couple:
        if config.get("grid.r") is not None:
            raise ConfigError("grid.r and grid.couple are mutually exclusive")
        rule = parse_coupling(couple)
        axes["r"] = [None]
    if not all(axes.values()) or axes["n"] == [None]:
        raise ConfigError("empty sweep grid")
    points = []
    for a, lam, r, n in itertools.product(axes["a"], axes["lambda"], axes["r"], axes["n"]):
        n = _number({"n": n}, "n", int)
        if couple:
            r = rule(n)
        points.append({"n": n, "r": r, "a": a, "lambda": lam})
    return points


def cmd_sweep(config: dict) -> int:
    name = config.get("bound") or default_bound(config)
    config["bound"] = name
    manifest = RunManifest("sweep", config)
    rows = []
    prev_key, prev_total = None, None
    for point in sweep_points(config):
        local = {k: v for k, v in config.items() if not k.startswith("grid.")}
        local.update({"n": point["n"], "scheme.r": point["r"], "scheme.a": point["a"], "lambda": point["lambda"]})
        if point["a"] is not None and local.get("scheme.kind") is None:
            local["scheme.kind"] = "power"
        b, _ = compute_bound(name, local)
        _warn_validity(b)
        key = (point["a"], point["lambda"], None if config.get("grid.couple") else point["r"])
        ratio = b.total / prev_total if key == prev_key and prev_total else None
        prev_key, prev_total = key, b.total
        rows.append({
            "n": point["n"], "r": point["r"], "a": point["a"], "lambda": point["lambda"], "name": b.name,
            **{f: getattr(b, f) for f in bounds.TERM_FIELDS}, "total": b.total, "mu": b.mu,
            "c_lambda": b.c_lambda_val, "d_lambda": b.d_lambda_val, "valid": b.valid, "ratio": ratio,
        })
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([_csv_cell(row[c]) for c in SWEEP_COLUMNS])
    csv_text = buf.getvalue()
    config.setdefault("output.format", "csv")
    _emit(manifest, config, {"rows": rows}, csv_text, csv_text)
    return EXIT_OK


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_float(value)
    return str(value)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powerdiv",
        description="Poisson and Gaussian approximation bounds for power divergence statistics.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {RunManifest('', {}).version}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="JSON config, or a report whose manifest is re-run")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="set any config key, e.g. --set grid.n=[20,40,80]")
    common.add_argument("-o", "--output", dest="output.path", help="report file")
    common.add_argument("--format", dest="output.format", choices=FORMATS, help="report format")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--bound", choices=BOUNDS)
    model.add_argument("--scheme", dest="scheme.kind", choices=("uniform", "power", "explicit"))
    model.add_argument("-r", "--cells", dest="scheme.r", type=int, help="number of cells")
    model.add_argument("-a", "--exponent", dest="scheme.a", type=float, help="power scheme exponent")
    model.add_argument("--probs-file", dest="scheme.file", help="one probability per line")
    model.add_argument("-n", "--trials", dest="n", type=int, help="trials per experiment")
    model.add_argument("-l", "--lambda", dest="lambda", help="divergence index (fractions like 2/3 allowed)")
    model.add_argument("-m", "--level", dest="m", type=int, help="occupancy level")

    sub.add_parser("bound", parents=[common, model], help="evaluate one bound")
    sub.add_parser("table1", parents=[common], help="uniform bound on the standard grid")
    verify = sub.add_parser("verify", parents=[common, model], help="compare a bound with simulation")
    verify.add_argument("--replicates", type=int)
    verify.add_argument("--seed", type=int)
    verify.add_argument("--target", choices=("t_tilde", "occupancy"))
    verify.add_argument("--samples", dest="output.samples", help="sample dump (.npz or .csv)")
    verify.add_argument("--workers", type=int, help="worker threads (default: env or CPU count)")
    sweep = sub.add_parser("sweep", parents=[common, model], help="evaluate a bound over a grid")
    for axis in GRID_AXES:
        sweep.add_argument(f"--grid-{axis}", dest=f"grid.{axis}", help=f"comma separated {axis} values")
    sweep.add_argument("--couple", dest="grid.couple", help="coupling rule such as 'r = 1*n^2'")
    return parser


_EXECUTION_ONLY = ("command", "config", "set", "workers")


def resolve_config(args: argparse.Namespace) -> dict:
    config = load_config(args.config) if args.config else {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        config[key.strip()] = _parse_value(value)
    for key, value in vars(args).items():
        if key in _EXECUTION_ONLY or value is None:
            continue
        config[key] = value
    for axis in GRID_AXES:
        key = f"grid.{axis}"
        if isinstance(config.get(key), str):
            config[key] = _parse_list(config[key])
    if isinstance(config.get("lambda"), str) and "/" not in config["lambda"]:
        config["lambda"] = _parse_value(config["lambda"])
    check_keys(config)
    if config.get("command") not in (None, args.command):
        warn(f"config was written by '{config['command']}', running '{args.command}'")
    config["command"] = args.command
    return config


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        config = resolve_config(args)
        if args.command == "bound":
            return cmd_bound(config)
        if args.command == "table1":
            return cmd_table1(config)
        if args.command == "verify":
            workers = args.workers or default_workers()
            return cmd_verify(config, workers=workers)
        return cmd_sweep(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
