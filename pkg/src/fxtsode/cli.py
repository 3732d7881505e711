"""Command-line entry point: train, eval/attack, bounds, trace and sweep.

Every command writes CSV with a header row and floats printed with 17
significant digits.  Exit codes: 0 success, 1 usage or configuration error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import bounds as bd
from .attacks import error_rows
from .config import ConfigError, RunConfig, parse_assignment
from .data import split_and_batch
from .lyapunov import cls_loss, lyapunov_value, optimal_state
from .model import ModelParams, forward
from .ode import SolverError
from .train import TrainingDiverged, train

log = logging.getLogger("fxtsode")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

METRICS_COLUMNS = ("kind", "magnitude", "error")
BOUNDS_COLUMNS = ("V0", "alpha1", "alpha2", "delta", "mu", "gamma", "regime", "v", "V_bar",
                  "I_bound", "I_quadrature", "abs_diff", "T_robust", "error")
TRACE_COLUMNS = ("sample_id", "label", "t", "V", "L_cls")
QUERY_FIELDS = ("V0", "alpha1", "alpha2", "delta", "mu", "gamma")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return "" if value is None else str(value)


def write_csv(rows: Iterable[Sequence], header: Sequence[str], path: str | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


# shared helpers

def _config(args) -> RunConfig:
    return RunConfig.build(args.config, args.set or ())


def _split(cfg: RunConfig):
    tc = cfg.train_config()
    return split_and_batch(cfg.load_dataset(), tc.train_frac, tc.batch, seed=tc.seed)


def _load_checkpoint(path: str, cfg: RunConfig, d_x: int, n_classes: int) -> ModelParams:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"checkpoint not found: {p}")
    try:
        params = ModelParams.load(p)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid checkpoint {p}: {exc}") from None
    expected = cfg.train_config().dims_for(d_x, n_classes)
    if params.dims != expected:
        raise ConfigError(f"checkpoint dims {params.dims} do not match config/data dims {expected}")
    return params


def run_train(cfg: RunConfig, out_dir: Path, mode: str | None = None):
    mode = mode or cfg["train.mode"]
    split = _split(cfg)
    params, report = train(cfg.train_config(), split, mode)
    out_dir.mkdir(parents=True, exist_ok=True)
    params.save(out_dir / "checkpoint.json")
    report.write_csv(out_dir / "report.csv")
    (out_dir / "config.txt").write_text(cfg.dumps())
    return params, report, split


def run_eval(cfg: RunConfig, params: ModelParams, split) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng([cfg["attack.seed"], 1])
    return error_rows(params, split.test.X, split.test.y, cfg.attack_settings(), rng,
                      cfg.train_config().solver, cfg.domain, cfg["attack.steps"])


# commands

def cmd_train(args) -> int:
    cfg = _config(args)
    out = Path(args.out or cfg["output.dir"])
    _, report, _ = run_train(cfg, out, args.mode)
    final = report.final
    if final is None:
        print(f"wrote {out / 'checkpoint.json'} (zero epochs)")
    else:
        print(f"final train_err={final.train_err:.4f} test_err={final.test_err:.4f} "
              f"violation_rate={final.violation_rate:.4f}; wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    split = _split(cfg)
    params = _load_checkpoint(args.checkpoint, cfg, split.train.d_x, split.train.n_classes)
    rows = run_eval(cfg, params, split)
    write_csv(rows, METRICS_COLUMNS, args.output)
    return EXIT_OK


def _queries(args) -> list[dict]:
    if args.queries:
        path = Path(args.queries)
        if not path.is_file():
            raise ConfigError(f"query file not found: {path}")
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(QUERY_FIELDS) - set(reader.fieldnames or ())
            if missing:
                raise ConfigError(f"query file lacks column(s): {', '.join(sorted(missing))}")
            try:
                return [{k: float(row[k]) for k in QUERY_FIELDS} for row in reader]
            except ValueError as exc:
                raise ConfigError(f"query file: {exc}") from None
    return [{k: getattr(args, k) for k in QUERY_FIELDS}]


def bounds_row(q: dict) -> list:
    """One bounds CSV row; precondition failures become a row-level error marker."""
    base = [q[k] for k in QUERY_FIELDS]
    try:
        query = bd.BoundQuery(**q)
        res = bd.bound_I(query)
        quad = bd.quadrature_I(query)
        rob = bd.robustness_time(bd.RobustnessQuery(rho=q["delta"], L=1.0, gamma=q["gamma"], alpha1=q["alpha1"],
                                                    alpha2=q["alpha2"], mu=q["mu"], L_psi=1.0))
    except bd.BoundDomainError as exc:
        return base + ["", None, None, None, None, None, None, f"precondition: {exc}"]
    return base + [res.regime, res.v, res.V_bar, res.I_bound, quad, abs(res.I_bound - quad), rob.T, ""]


def cmd_bounds(args) -> int:
    rows = [bounds_row(q) for q in _queries(args)]
    write_csv(rows, BOUNDS_COLUMNS, args.output)
    if args.curves:
        grid = np.geomspace(args.v_min, args.v_max, args.points)
        try:
            table = bd.scale_curves(args.mu, args.alpha1, args.alpha2, args.delta, grid)
        except bd.BoundDomainError as exc:
            raise ConfigError(f"curves: {exc}") from None
        write_csv(table.tolist(), bd.SCALE_COLUMNS, args.curves)
    failed = [r for r in rows if r[-1]]
    for r in failed:
        print(f"error: {r[-1]}", file=sys.stderr)
    return EXIT_USAGE if failed and args.strict else EXIT_OK


def trace_rows(params: ModelParams, X: np.ndarray, y: np.ndarray, cfg: RunConfig) -> list[list]:
    tc = cfg.train_config()
    traj, _ = forward(X, params, tc.solver)
    anchors = optimal_state(traj.end.data, y, params.psi, tc.eta2, tc.n_inner)
    V = np.stack([lyapunov_value(h.data, anchors) for h in traj.states], axis=1)
    L = np.stack([cls_loss(h.data, y, params.psi) for h in traj.states], axis=1)
    return [[i, int(y[i]), float(t), V[i, k], L[i, k]]
            for i in range(len(y)) for k, t in enumerate(traj.times)]


def cmd_trace(args) -> int:
    cfg = _config(args)
    split = _split(cfg)
    params = _load_checkpoint(args.checkpoint, cfg, split.train.d_x, split.train.n_classes)
    n = min(args.samples or cfg["trace.samples"], len(split.test))
    rows = trace_rows(params, split.test.X[:n], split.test.y[:n], cfg)
    write_csv(rows, TRACE_COLUMNS, args.output)
    return EXIT_OK


def sweep_cells(cfg: RunConfig, grid: Sequence[tuple[str, list[str]]]) -> list[RunConfig]:
    """Distinct configurations of the Cartesian grid, in grid order, deduplicated by hash."""
    keys = [k for k, _ in grid]
    cells, seen = [], set()
    for combo in itertools.product(*(values for _, values in grid)):
        cell = RunConfig.from_mapping({**cfg.values, **dict(zip(keys, combo))})
        digest = cell.digest()
        if digest not in seen:
            seen.add(digest)
            cells.append(cell)
    return cells


def parse_grid(items: Sequence[str]) -> list[tuple[str, list[str]]]:
    grid = []
    for item in items:
        key, values = parse_assignment(item)
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"grid entry {key!r} has no values")
        grid.append((key, vals))
    return grid


def cmd_sweep(args) -> int:
    cfg = _config(args)
    grid = parse_grid(args.grid or [])
    cap = args.cap or cfg["sweep.cap"]
    n_raw = int(np.prod([len(v) for _, v in grid])) if grid else 1
    cells = sweep_cells(cfg, grid)
    if len(cells) > cap:
        raise ConfigError(f"grid has {len(cells)} distinct cells (of {n_raw}), above the cap of {cap}")
    keys = [k for k, _ in grid]
    header = ["config_hash", *keys, "train_err", "test_err", "violation_rate", "fxts_loss"]
    header += [f"{kind}_{fmt(m)}" for kind, m in [("clean", 0.0)] + cfg.attack_settings()]
    root = Path(args.out or cfg["output.dir"])
    rows = []
    for cell in cells:
        digest = cell.digest()
        params, report, split = run_train(cell, root / digest)
        metrics = run_eval(cell, params, split)
        final = report.final
        stats = [final.train_err, final.test_err, final.violation_rate, final.fxts_loss] if final else [None] * 4
        rows.append([digest, *[fmt(cell[k]) if not isinstance(cell[k], tuple) else ",".join(map(fmt, cell[k]))
                               for k in keys], *stats, *[e for _, _, e in metrics]])
        log.info("sweep cell %s done", digest)
    write_csv(rows, header, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fxtsode", description="Fixed-time stable neural ODE classifiers.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    t = sub.add_parser("train", help="train a model and write checkpoint.json and report.csv")
    with_config(t)
    t.add_argument("--mode", choices=("fxts", "baseline"))
    t.add_argument("--out", help="output directory (default: output.dir)")
    t.set_defaults(func=cmd_train)

    for name in ("eval", "attack"):
        e = sub.add_parser(name, help="clean, noise and adversarial error rates of a checkpoint")
        with_config(e)
        e.add_argument("--checkpoint", required=True)
        e.add_argument("--output", help="CSV path (default: stdout)")
        e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bounds", help="closed-form settling-time bounds with a quadrature check")
    b.add_argument("--queries", help="CSV with columns " + ",".join(QUERY_FIELDS))
    b.add_argument("--V0", type=float, default=10.0)
    b.add_argument("--alpha1", type=float, default=1.0)
    b.add_argument("--alpha2", type=float, default=1.0)
    b.add_argument("--delta", type=float, default=1.0)
    b.add_argument("--mu", type=float, default=2.0)
    b.add_argument("--gamma", type=float, default=1.5)
    b.add_argument("--curves", metavar="PATH", help="also write the scale-function table here")
    b.add_argument("--v-min", type=float, default=1.0)
    b.add_argument("--v-max", type=float, default=100.0)
    b.add_argument("--points", type=int, default=50)
    b.add_argument("--strict", action="store_true", help="exit 1 if any query violates a precondition")
    b.add_argument("--output", help="CSV path (default: stdout)")
    b.set_defaults(func=cmd_bounds)

    tr = sub.add_parser("trace", help="V and classification loss along test trajectories")
    with_config(tr)
    tr.add_argument("--checkpoint", required=True)
    tr.add_argument("--samples", type=int)
    tr.add_argument("--output", help="CSV path (default: stdout)")
    tr.set_defaults(func=cmd_trace)

    s = sub.add_parser("sweep", help="train and evaluate every cell of a parameter grid")
    with_config(s)
    s.add_argument("--grid", action="append", metavar="KEY=V1,V2,...")
    s.add_argument("--cap", type=int, help="maximum number of distinct cells (default: sweep.cap)")
    s.add_argument("--out", help="directory for per-cell runs (default: output.dir)")
    s.add_argument("--output", help="aggregated CSV path (default: stdout)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, SolverError, bd.QuadratureError, OSError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
