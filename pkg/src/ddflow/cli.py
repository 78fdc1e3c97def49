"""Command-line driver.

Subcommands
-----------
``run``            integrate one configured scenario, writing CSV, snapshots and a JSON summary
``check-symbols``  random-point symbol trials, printed as a table
``convergence``    grid-refinement study of a scenario with an exact solution

Exit codes: 0 success, 1 configuration error, 2 the run stopped early or a
verdict failed.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import exact, flows, presets, symbols
from .errors import NondegeneracyLost, NotCompatible, NotTamed
from .fields import FormField, GridSpec, TensorField, form_index_lookup, load_snapshot
from .hermitian import HermitianPair

EXIT_OK, EXIT_CONFIG, EXIT_STOPPED = 0, 1, 2
SCENARIOS = {"t4_warped": ("t4_b", 4), "product_f": ("product_f", 6)}


class ConfigError(ValueError):
    """A configuration value is missing or invalid; the message names the field."""


# --- configuration --------------------------------------------------------------------


def bundled_config(name):
    """Path of a config shipped with the package, e.g. ``t4_warped``."""
    ref = resources.files("ddflow") / "configs" / f"{name}.ini"
    if not ref.is_file():
        raise ConfigError(f"config: no bundled config named {name!r}")
    return Path(str(ref))


def _floats(text, field_name):
    out = []
    for tok in text.replace(",", " ").split():
        tok = tok.strip().lower()
        try:
            out.append(math.pi * float(tok[:-2] or 1.0) if tok.endswith("pi") else float(tok))
        except ValueError:
            raise ConfigError(f"{field_name}: cannot parse {tok!r} as a number") from None
    return out


def _get(cp, section, key, conv, default=None, required=False):
    field_name = f"{section}.{key}"
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"{field_name}: missing")
        return default
    raw = cp.get(section, key)
    try:
        if conv is bool:
            return cp.getboolean(section, key)
        return conv(raw)
    except ValueError:
        raise ConfigError(f"{field_name}: invalid value {raw!r}") from None


def load_config(path):
    """Read a sectioned key-value config into a plain dict."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file {str(path)!r} not found")
    cp.read(path)
    for section in ("grid", "initial", "flow"):
        if not cp.has_section(section):
            raise ConfigError(f"{section}: section missing")
    dim = _get(cp, "grid", "dim", int, required=True)
    sizes = [int(v) for v in _floats(_get(cp, "grid", "sizes", str, required=True), "grid.sizes")]
    lengths = _floats(_get(cp, "grid", "lengths", str, "2pi"), "grid.lengths")
    if len(sizes) == 1:
        sizes = sizes * dim
    if len(lengths) == 1:
        lengths = lengths * dim
    cfg = {
        "path": str(path),
        "grid": {"dim": dim, "sizes": sizes, "lengths": lengths},
        "initial": {k: v for k, v in cp.items("initial")},
        "flow": {
            "flow_kind": _get(cp, "flow", "kind", str, required=True),
            "t_end": _get(cp, "flow", "t_end", float, required=True),
            "cfl_sigma": _get(cp, "flow", "cfl_sigma", float, 0.2),
            "retraction": _get(cp, "flow", "retraction", bool, True),
            "allow_exploratory": _get(cp, "flow", "allow_exploratory", bool, False),
            "background_metric": _get(cp, "flow", "background_metric", str, "flat"),
            "monitor_every": _get(cp, "flow", "monitor_every", int, 1),
            "snapshot_every": _get(cp, "flow", "snapshot_every", int, 0),
        },
        "stop": {k: _get(cp, "stop", k, float) for k in ("min_metric_eig", "min_pf", "max_monitor")
                 if cp.has_option("stop", k)},
        "output": {"dir": _get(cp, "output", "dir", str, None) if cp.has_section("output") else None},
        "seed": _get(cp, "run", "seed", int, 0) if cp.has_section("run") else 0,
    }
    return cfg


def make_flow_config(cfg) -> flows.FlowConfig:
    stop = flows.StopThresholds(**cfg["stop"])
    try:
        return flows.FlowConfig(stop=stop, **cfg["flow"])
    except flows.ConfigError as exc:
        raise ConfigError(f"flow.{exc}") from None


def make_grid(cfg) -> GridSpec:
    g = cfg["grid"]
    try:
        return GridSpec(g["dim"], tuple(g["sizes"]), tuple(g["lengths"]))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


_PARAM_TYPES = {"amplitude": float, "eps": float, "lam": float, "anti": float, "seed": int}


def make_initial(cfg, grid: GridSpec, seed=None) -> HermitianPair:
    init = dict(cfg["initial"])
    if "omega" in init or "j" in init:
        if "omega" not in init or "j" not in init:
            raise ConfigError("initial: snapshot data needs both omega and J paths")
        base = Path(cfg["path"]).parent
        omega = load_snapshot(base / init["omega"])
        J = load_snapshot(base / init["j"])
        if not isinstance(omega, FormField) or not isinstance(J, TensorField):
            raise ConfigError("initial: snapshots must hold a two-form and a (1,1) tensor")
        return HermitianPair(omega, J)
    name = init.pop("preset", None)
    if name is None:
        raise ConfigError("initial.preset: missing")
    params = {}
    for key, raw in init.items():
        if key not in _PARAM_TYPES:
            raise ConfigError(f"initial.{key}: unknown parameter")
        try:
            params[key] = _PARAM_TYPES[key](raw)
        except ValueError:
            raise ConfigError(f"initial.{key}: invalid value {raw!r}") from None
    if seed is not None:
        params["seed"] = seed
    else:
        params.setdefault("seed", cfg["seed"])
    try:
        return presets.build(name, grid, **params)
    except KeyError as exc:
        raise ConfigError(f"initial.preset: {exc.args[0]}") from None
    except (ValueError, NotTamed, exact.NotFound) as exc:
        raise ConfigError(f"initial: {exc}") from None


# --- subcommands ------------------------------------------------------------------------


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise ConfigError("threads: must be at least 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def cmd_run(args, out=sys.stdout):
    cfg = load_config(args.config if Path(args.config).suffix else bundled_config(args.config))
    if args.snapshot_every is not None:
        cfg["flow"]["snapshot_every"] = args.snapshot_every
    fc = make_flow_config(cfg)
    grid = make_grid(cfg)
    _set_threads(args.threads)
    pair = make_initial(cfg, grid, args.seed)
    outdir = Path(args.out or cfg["output"]["dir"] or "ddflow_out")
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        result = flows.run(pair, fc, csv_path=outdir / "diagnostics.csv",
                           snapshot_dir=outdir / "snapshots" if fc.snapshot_every else None)
    except (NotCompatible, NondegeneracyLost) as exc:
        raise ConfigError(f"initial: {exc}") from None
    d = result.final.diagnostics
    summary = {
        "config": cfg["path"],
        "flow_kind": fc.flow_kind,
        "final_t": result.final.t,
        "steps": result.steps,
        "exit_reason": result.reason,
        "wall_time_s": result.wall_time,
        "final_diagnostics": {k: _jsonable(v) for k, v in vars(d).items()},
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary, indent=2), file=out)
    return EXIT_OK if result.ok else EXIT_STOPPED


def _dims(text):
    dims = [int(v) for v in text.replace(",", " ").split()]
    bad = [d for d in dims if d < 2 or d % 2]
    if bad:
        raise ConfigError(f"dims: dimensions must be even and at least 2, got {bad}")
    return dims


def symbol_table(rows):
    head = f"{'operator':<10} {'dim':>3} {'trials':>6} {'min_constrained':>16} {'null_dim':>8} {'verdict':>7}"
    lines = [head, "-" * len(head)]
    for r in rows:
        mc = r["min_constrained"]
        mcs = "n/a" if mc != mc else f"{mc:.3e}"
        lines.append(f"{r['operator']:<10} {r['dim']:>3} {r['trials']:>6} {mcs:>16} {str(r['null_dim']):>8} "
                     f"{'PASS' if r['verdict'] else 'FAIL':>7}")
    return "\n".join(lines)


def cmd_check_symbols(args, out=sys.stdout):
    dims = _dims(args.dims)
    if args.trials < 1:
        raise ConfigError("trials: must be at least 1")
    rows = symbols.check_suite(dims=dims, trials=args.trials, seed=args.seed)
    print(symbol_table(rows), file=out)
    return EXIT_OK if all(r["verdict"] for r in rows) else EXIT_STOPPED


def scenario_grid(name, n):
    """Refinement grid: ``n`` points along the base direction the data varies in, 4 elsewhere."""
    dim = SCENARIOS[name][1]
    return GridSpec(dim, (n,) + (4,) * (dim - 1), (2.0 * math.pi,) * dim)


def scenario_error(name, n, t_end, sigma=0.2):
    """Max error of the warping function against the exact solution at ``t_end``."""
    kind, _ = SCENARIOS[name]
    grid = scenario_grid(name, n)
    pair = presets.build(name, grid)
    result = flows.run(pair, flows.FlowConfig("compatible_dstard", t_end, cfl_sigma=sigma, monitor_every=10 ** 9))
    if not result.ok:
        raise RuntimeError(result.reason)
    look = form_index_lookup(grid.dim, 2)
    f_num = np.asarray(result.final.omega.components)[..., look[(2, 3)]]
    f_ref = exact.warped_coefficient(kind, presets.warping_data(grid, kind), t_end)
    return float(np.max(np.abs(f_num - f_ref))), result


def observed_orders(ns, errors):
    return [math.log(e0 / e1) / math.log(n1 / n0) for (n0, e0), (n1, e1) in zip(zip(ns, errors), zip(ns[1:], errors[1:]))]


def cmd_convergence(args, out=sys.stdout):
    if args.scenario not in SCENARIOS:
        raise ConfigError(f"scenario: unknown {args.scenario!r}; expected one of {tuple(SCENARIOS)}")
    ns = [int(v) for v in args.grids.replace(",", " ").split()]
    if len(ns) < 2 or sorted(ns) != ns:
        raise ConfigError("grids: need at least two increasing sizes")
    errors = [scenario_error(args.scenario, n, args.t_end)[0] for n in ns]
    orders = observed_orders(ns, errors)
    print(f"{'N':>5} {'max_error':>12} {'order':>7}", file=out)
    for i, (n, e) in enumerate(zip(ns, errors)):
        o = f"{orders[i - 1]:.3f}" if i else ""
        print(f"{n:>5} {e:>12.4e} {o:>7}", file=out)
    ok = all(o >= args.min_order for o in orders)
    print("PASS" if ok else "FAIL", file=out)
    return EXIT_OK if ok else EXIT_STOPPED


def build_parser():
    p = argparse.ArgumentParser(prog="ddflow", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate a configured scenario")
    r.add_argument("--config", required=True, help="INI file, or the name of a bundled config")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.add_argument("--seed", type=int, help="seed for random presets (overrides run.seed)")
    r.add_argument("--threads", type=int, help="numba worker threads")
    r.add_argument("--snapshot-every", type=int, help="write omega and J every k steps")
    s = sub.add_parser("check-symbols", help="random-point principal-symbol trials")
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--dims", default="2,4,6")
    s.add_argument("--seed", type=int, default=0)
    c = sub.add_parser("convergence", help="grid-refinement study against an exact solution")
    c.add_argument("--scenario", default="t4_warped")
    c.add_argument("--grids", default="16,32,64")
    c.add_argument("--t-end", type=float, default=0.5)
    c.add_argument("--min-order", type=float, default=1.8)
    return p


def main(argv=None, out=sys.stdout):
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "check-symbols": cmd_check_symbols, "convergence": cmd_convergence}[args.command]
    try:
        return handler(args, out=out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
