"""Command-line front end: config parsing, sweep execution, CSV output.

Config files are "key = value" lines; blank lines and # comments are ignored.
A run is defined either by a preset (optionally overriding base parameters,
axis ranges, or point counts) or by an explicit axis1/axis1_range/axis1_points
triple.  A one-point axis evaluates at the base value of the axis parameter.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

import numpy as np

from .experiments import (
    PRESETS,
    SWEEPABLE,
    OBSERVABLE_COLUMNS,
    SweepResult,
    SweepSpec,
    convergence_audit,
    parabolic_extremum,
    run_sweep,
)
from .liouville import RESIDUAL_MAX
from .model import SystemParams

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class ConfigError(ValueError):
    pass


_FLOAT_KEYS = ("g", "kappa", "gamma", "chi", "e_a", "e_b", "r", "delta", "delta_a", "delta_b")
_INT_KEYS = ("n_a_max", "n_b_max", "axis1_points", "axis2_points", "workers")
_STR_KEYS = ("preset", "axis1", "axis2", "output")
_RANGE_KEYS = ("axis1_range", "axis2_range")
_ALL_KEYS = _FLOAT_KEYS + _INT_KEYS + _STR_KEYS + _RANGE_KEYS


def _parse_float(key: str, raw: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"malformed number for {key!r}: {raw!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"malformed number for {key!r}: {raw!r}")
    return v


def _parse_int(key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"malformed number for {key!r}: {raw!r}") from None


def parse_config(text: str) -> dict:
    """Parse and validate a config file; returns a dict of typed values."""
    cfg: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in _FLOAT_KEYS:
            cfg[key] = _parse_float(key, raw)
        elif key in _INT_KEYS:
            cfg[key] = _parse_int(key, raw)
        elif key in _RANGE_KEYS:
            parts = [p for p in raw.replace(",", " ").split() if p]
            if len(parts) != 2:
                raise ConfigError(f"line {lineno}: {key} needs two numbers, got {raw!r}")
            cfg[key] = (_parse_float(key, parts[0]), _parse_float(key, parts[1]))
        else:
            cfg[key] = raw

    if "e_b" in cfg and "r" in cfg:
        raise ConfigError("conflicting keys: e_b and r both set the mode-b drive")
    if "preset" in cfg:
        if cfg["preset"] not in PRESETS:
            raise ConfigError(
                f"unknown preset {cfg['preset']!r}; available: {', '.join(sorted(PRESETS))}"
            )
        for key in ("axis1", "axis2"):
            if key in cfg:
                raise ConfigError(f"key {key!r} conflicts with preset (axes are preset-defined)")
    else:
        for key in ("axis1", "axis2"):
            if key in cfg and cfg[key] not in SWEEPABLE:
                raise ConfigError(
                    f"{key} must be one of {', '.join(SWEEPABLE)}, got {cfg[key]!r}"
                )
        if "axis2" in cfg and "axis1" not in cfg:
            raise ConfigError("axis2 requires axis1")
    for key in ("axis1_points", "axis2_points", "workers"):
        if key in cfg and cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
    for key in ("n_a_max", "n_b_max"):
        if key in cfg and cfg[key] < 1:
            raise ConfigError(f"{key} must be >= 1")
    return cfg


_PARAM_KEYS = ("g", "kappa", "gamma", "chi", "e_a", "e_b", "delta", "delta_a", "delta_b", "n_a_max", "n_b_max")


def _base_params(cfg: dict, start: SystemParams | None = None) -> SystemParams:
    base = start if start is not None else SystemParams()
    updates = {k: cfg[k] for k in _PARAM_KEYS if k in cfg}
    if "r" in cfg:
        e_a = updates.get("e_a", base.e_a)
        if e_a == 0:
            raise ConfigError("r requires a nonzero e_a")
        updates["e_b"] = cfg["r"] * e_a
    try:
        return replace(base, **updates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _axis_base_value(base: SystemParams, name: str) -> float:
    if name == "r":
        if base.e_a == 0:
            raise ConfigError("r is undefined at e_a = 0")
        return base.e_b / base.e_a
    if name == "delta_b":
        return base.delta_b_value
    return float(getattr(base, name))


def _axis_grid(
    base: SystemParams,
    name: str,
    rng: tuple[float, float] | None,
    points: int | None,
    fallback_values: tuple[float, ...] | None,
) -> tuple[float, ...]:
    if fallback_values is not None:
        lo, hi = fallback_values[0], fallback_values[-1]
        n = len(fallback_values)
    else:
        lo = hi = None
        n = None
    if rng is not None:
        lo, hi = rng
    if points is not None:
        n = points
    if n is None:
        raise ConfigError(f"axis {name!r} needs a point count")
    if n == 1:
        return (_axis_base_value(base, name),)
    if lo is None:
        raise ConfigError(f"axis {name!r} needs a range")
    return tuple(np.linspace(lo, hi, n))


def spec_from_config(cfg: dict) -> SweepSpec:
    """Build the sweep from validated config values."""
    if "preset" in cfg:
        spec = PRESETS[cfg["preset"]]()
        base = _base_params(cfg, spec.base)
        axis1_values = _axis_grid(
            base, spec.axis1, cfg.get("axis1_range"), cfg.get("axis1_points"), spec.axis1_values
        )
        axis2_values = spec.axis2_values
        if spec.axis2 is not None:
            axis2_values = _axis_grid(
                base, spec.axis2, cfg.get("axis2_range"), cfg.get("axis2_points"), spec.axis2_values
            )
        return replace(spec, base=base, axis1_values=axis1_values, axis2_values=axis2_values)

    if "axis1" not in cfg:
        raise ConfigError("either preset or axis1 must be given")
    base = _base_params(cfg)
    axis1_values = _axis_grid(base, cfg["axis1"], cfg.get("axis1_range"), cfg.get("axis1_points"), None)
    axis2 = cfg.get("axis2")
    axis2_values: tuple[float, ...] = ()
    if axis2 is not None:
        axis2_values = _axis_grid(base, axis2, cfg.get("axis2_range"), cfg.get("axis2_points"), None)
    try:
        return SweepSpec(
            base=base,
            axis1=cfg["axis1"],
            axis1_values=axis1_values,
            axis2=axis2,
            axis2_values=axis2_values,
            columns=OBSERVABLE_COLUMNS,
            name="custom",
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def format_value(v) -> str:
    if v is None:
        return "undef"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: str, result: SweepResult) -> None:
    names = result.column_names
    lines = ["# cavity-qed-sim v1", ",".join(names)]
    for row in result.rows:
        lines.append(",".join(format_value(row.get(n)) for n in names))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_plot_script(path: str, csv_path: str, result: SweepResult) -> None:
    """Emit a gnuplot script next to the CSV, referencing it by relative path."""
    import os

    csv_rel = os.path.basename(csv_path)
    names = result.column_names
    spec = result.spec
    lines = [
        "# gnuplot script; run from this directory: gnuplot " + os.path.basename(path),
        'set datafile separator ","',
        'set datafile missing "undef"',
        "set key autotitle columnhead",
    ]
    if spec.axis2 is None and spec.axis1 is not None:
        xcol = names.index(spec.axis1) + 1
        lines.append(f'set xlabel "{spec.axis1}"')
        plots = [
            f'"{csv_rel}" using {names.index(c) + 1
              if False else xcol}:{names.index(c) + 1} with lines'
            for c in spec.columns
        ]
        lines.append("plot " + ", \\\n     ".join(plots))
    elif spec.axis2 is not None:
        xcol = names.index(spec.axis1) + 1
        ycol = names.index(spec.axis2) + 1
        zname = spec.columns[0]
        zcol = names.index(zname) + 1
        lines.extend(
            [
                f'set xlabel "{spec.axis1}"',
                f'set ylabel "{spec.axis2}"',
                "set view map",
                f'splot "{csv_rel}" using {xcol}:{ycol}:{zcol} with points palette pointtype 5 title "{zname}"',
            ]
        )
    else:
        lines.append(f'# single-point result; see {csv_rel}')
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _print_summary(result: SweepResult) -> None:
    spec = result.spec
    print(f"{spec.name}: {len(result.rows)} points, axis1 = {spec.axis1}"
          + (f", axis2 = {spec.axis2}" if spec.axis2 else ""))
    res_col = result.column("residual")
    print(f"  max solver residual: {np.nanmax(res_col):.3e}")
    if spec.axis2 is None:
        x = result.column(spec.axis1)
        for col in spec.columns:
            y = result.column(col)
            if np.all(np.isnan(y)):
                print(f"  {col}: undefined everywhere")
                continue
            xmin, ymin = parabolic_extremum(x, y, kind="min")
            xmax, ymax = parabolic_extremum(x, y, kind="max")
            print(
                f"  {col}: min {ymin:.6g} at {spec.axis1}={xmin:.6g}, "
                f"max {ymax:.6g} at {spec.axis1}={xmax:.6g}"
            )
    else:
        for col in spec.columns:
            y = result.column(col)
            if np.all(np.isnan(y)):
                print(f"  {col}: undefined everywhere")
                continue
            kmin, kmax = int(np.nanargmin(y)), int(np.nanargmax(y))
            def loc(k: int) -> str:
                return (f"{spec.axis1}={result.rows[k][spec.axis1]:.6g}, "
                        f"{spec.axis2}={result.rows[k][spec.axis2]:.6g}")
            print(f"  {col}: min {y[kmin]:.6g} at ({loc(kmin)}), max {y[kmax]:.6g} at ({loc(kmax)})")


def _print_audit(spec: SweepSpec) -> None:
    audit = convergence_audit(spec)
    lo, hi = audit.cutoffs_low, audit.cutoffs_high
    print(f"convergence audit: cutoffs {lo} vs {hi}, {len(audit.points)} points, tol {audit.tol:g}")
    for col, worst in audit.max_rel_change.items():
        flag = "ok" if worst <= audit.tol else "EXCEEDS"
        print(f"  {col}: max relative change {worst:.3e} [{flag}]")
    print(f"  overall: {'PASS' if audit.passed else 'FAIL'}")


def run(argv: list[str]) -> int:
    ap = argparse.ArgumentParser(
        prog="cavity-qed-sim",
        description="Steady-state photon statistics of a driven four-level QD in a bimodal cavity",
    )
    ap.add_argument("config", nargs="?", help="config file of 'key = value' lines")
    ap.add_argument("--preset", choices=sorted(PRESETS), help="named sweep preset")
    ap.add_argument("--output", help="CSV output path")
    ap.add_argument("--workers", type=int, help="worker threads (default 1)")
    ap.add_argument("--cutoff", help="Fock cutoffs, N or NA,NB")
    ap.add_argument("--emit-plot", action="store_true", help="ASCII plot of the lead observable")
    ap.add_argument("--audit", action="store_true", help="run a cutoff convergence audit")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK

    try:
        cfg: dict = {}
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from None
            cfg = parse_config(text)
        if args.preset:
            cfg.pop("axis1", None)
            cfg.pop("axis2", None)
            cfg["preset"] = args.preset
        if args.cutoff:
            parts = args.cutoff.split(",")
            if len(parts) == 1:
                cfg["n_a_max"] = cfg["n_b_max"] = _parse_int("cutoff", parts[0])
            elif len(parts) == 2:
                cfg["n_a_max"] = _parse_int("cutoff", parts[0])
                cfg["n_b_max"] = _parse_int("cutoff", parts[1])
            else:
                raise ConfigError(f"malformed --cutoff {args.cutoff!r}")
            if cfg["n_a_max"] < 1 or cfg["n_b_max"] < 1:
                raise ConfigError("cutoffs must be >= 1")
        spec = spec_from_config(cfg)
        workers = args.workers if args.workers is not None else cfg.get("workers", 1)
        if workers < 1:
            raise ConfigError("workers must be >= 1")
        output = args.output if args.output is not None else cfg.get("output")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = run_sweep(spec, workers=workers)
        worst = float(np.nanmax(result.column("residual")))
        if worst > RESIDUAL_MAX:
            print(f"error: solver residual {worst:.3e} above {RESIDUAL_MAX:g}", file=sys.stderr)
            return EXIT_RUNTIME
        if output:
            write_csv(output, result)
            print(f"wrote {len(result.rows)} rows to {output}")
        _print_summary(result)
        if args.emit_plot:
            if spec.axis2 is None:
                lead = spec.columns[0]
                print(ascii_plot(result.column(spec.axis1), result.column(lead),
                                 label=f"{lead} vs {spec.axis1}"))
            else:
                print("[plot skipped: 2D sweep]")
        if args.audit:
            _print_audit(spec)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure: no output file left behind
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
