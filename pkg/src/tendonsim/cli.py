"""Command-line entry point.

Every subcommand writes into an output directory (``--out``, default
``$TENDONSIM_OUT/<subcommand>`` or ``./tendonsim-out/<subcommand>``) together
with ``run_manifest.json`` holding the argv, the resolved config, the seed
and the library versions.

Exit codes: 0 ok, 2 usage, 3 config, 4 numerical, 5 IO / file format.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import ConfigError, ScenarioConfig, TimeSeriesLog, dump_config, load_config, with_overrides

log = logging.getLogger("tendonsim")

EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4, 5
OUT_ENV = "TENDONSIM_OUT"
REPORT_KINDS = ("force-step", "extreme-curl", "period", "detection", "sensitivity", "size")

# columns each report kind needs from its input table
REPORT_COLUMNS = {
    "force-step": ("t", "ref_0", "F_cmd_0", "F_obs_0", "F_base_0"),
    "extreme-curl": ("t", "dl_dot_0", "i_cmd_0", "i_obs_star_0", "i_obs_dstar_0"),
    "period": ("t", "i_obs_dstar_filt_0"),
    "detection": ("t", "i_obs_dstar_filt_1", "contact"),
    "sensitivity": ("link", "shift"),
    "size": ("D_true", "D_pred"),
}


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


# ------------------------------------------------------------------ helpers


def _read_text(path) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror}") from exc


def _config(args, default_kind: str | None = None) -> ScenarioConfig:
    text = _read_text(args.config) if args.config else ""
    if default_kind and "scenario" not in text:
        text = f"scenario = {default_kind}\n" + text
    text += "".join(f"{kv}\n" for kv in (args.set or []))
    cfg = load_config(text)
    if args.seed is not None:
        cfg = with_overrides(cfg, seed=args.seed)
    return cfg


def _outdir(args) -> Path:
    if args.out:
        d = Path(args.out)
    else:
        d = Path(os.environ.get(OUT_ENV, "tendonsim-out")) / args.command
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot create {d}: {exc.strerror}") from exc
    return d


def _versions() -> dict:
    import numba
    import scipy
    return {"tendonsim": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def write_manifest(out: Path, argv, cfg: ScenarioConfig | None = None, seed=None, extra=None):
    doc = {"argv": list(argv), "versions": _versions(), "seed": seed,
           "config": dump_config(cfg) if cfg is not None else None}
    if extra:
        doc.update(extra)
    (out / "run_manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return v


def write_summary(path: Path, items: dict) -> None:
    path.write_text("".join(f"{k} = {_fmt(v)}\n" for k, v in items.items()))


def read_table(path) -> dict[str, np.ndarray]:
    """Comment-tolerant CSV to columns; non-numeric columns stay strings."""
    lines = [ln for ln in _read_text(path).splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        return {}
    rows = list(csv.reader(lines))
    head, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(head):
        col = [r[j] for r in body]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def require_columns(table, kind: str) -> None:
    missing = [c for c in REPORT_COLUMNS[kind] if c not in table]
    if missing:
        raise CliError(EXIT_IO, f"{kind} report: missing columns {', '.join(missing)}")


def _load_log(path) -> TimeSeriesLog:
    try:
        return TimeSeriesLog.from_csv(_read_text(path))
    except ValueError as exc:
        raise CliError(EXIT_IO, f"{path}: malformed log ({exc})") from exc


# ------------------------------------------------------------- subcommands


def cmd_simulate(args, out: Path) -> int:
    from .loop import run_scenario
    cfg = _config(args)
    lg = run_scenario(cfg)
    lg.save(out / "log.csv")
    write_manifest(out, args.argv, cfg, cfg.seed)
    print(f"{out / 'log.csv'}: {len(lg)} samples, {len(lg.columns)} columns")
    return 0


def cmd_identify(args, out: Path) -> int:
    from . import ident
    kw = dict(max_evals=args.evals, n_starts=args.starts, seed=args.seed or 0, loss=args.loss)
    if args.ref:
        try:
            t, ref = ident.load_reference(args.ref)
        except ValueError as exc:
            raise CliError(EXIT_IO, str(exc)) from exc
        prob = ident.IdentProblem(t, ref, **kw)
    else:
        p_true = tuple(float(v) for v in args.synthetic.split(","))
        if len(p_true) != 3:
            raise CliError(EXIT_USAGE, "--synthetic needs eta,b_m,J_m")
        prob = ident.synthetic_problem(p_true, noise=args.noise, **kw)
        TimeSeriesLog({"t": prob.t, "i_real": prob.reference}).save(out / "reference.csv")
    res = ident.identify(prob)
    text = ident.report(res)
    (out / "ident_report.txt").write_text(text)
    write_table(out / "objective_trace.csv", ["evaluation", "best_objective"],
                ((k + 1, v) for k, v in enumerate(res.best_trace)))
    write_manifest(out, args.argv, seed=prob.seed)
    print(text, end="")
    return 0


def cmd_detect(args, out: Path) -> int:
    from .perception import DetectorConfig, detect_contact, events_to_csv
    lg = _load_log(args.log)
    col = args.column or f"i_obs_dstar_filt_{args.channel}"
    if col not in lg:
        raise CliError(EXIT_IO, f"{args.log}: missing column {col}")
    det = DetectorConfig(abs_rise=args.abs_rise, rel_rise=args.rel_rise, slope=args.slope)
    try:
        events = detect_contact(lg[col], lg.dt, det)
    except ValueError as exc:
        raise CliError(EXIT_IO, str(exc)) from exc
    (out / "events.csv").write_text(events_to_csv(events))
    write_manifest(out, args.argv, extra={"detector": det.__dict__, "column": col})
    print(f"{len(events)} event(s)")
    for e in events:
        print(f"  t = {e.t:.4f} s  rule = {e.rule}")
    return 0


def _links(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v.strip()]


def cmd_sensitivity(args, out: Path) -> int:
    from .analysis import spearman
    from .perception import sensitivity_profile
    cfg = _config(args, "single-contact")
    links = _links(args.links)
    shifts = sensitivity_profile(cfg, links, args.channel)
    write_table(out / "sensitivity.csv", ["link", "shift"], zip(links, shifts))
    summ = {"tip_over_base": shifts[-1] / shifts[0] if shifts[0] else math.inf}
    if len(links) > 2:
        summ["spearman"] = spearman(links, shifts)
    write_summary(out / "summary.txt", summ)
    write_manifest(out, args.argv, cfg, cfg.seed)
    for k, s in zip(links, shifts):
        print(f"link {k:2d}: {s:.6g} A")
    return 0


def cmd_period(args, out: Path) -> int:
    from .perception import PeriodNotRecoverable, apparent_period, periodic_trace
    cfg = _config(args, "periodic-contact")
    rows = []
    for k in _links(args.links):
        c = with_overrides(cfg, contact={"link": k})
        try:
            T = apparent_period(periodic_trace(c), c.dt)
        except PeriodNotRecoverable:
            T = math.nan
        rows.append((k, T, abs(T - 2 * math.pi / c.contact.omega)))
        print(f"link {k:2d}: apparent period {T:.4g} s")
    write_table(out / "periods.csv", ["link", "apparent_period", "abs_error"], rows)
    write_manifest(out, args.argv, cfg, cfg.seed)
    return 0


def cmd_uncurl(args, out: Path) -> int:
    from .perception import active_uncurl_scan, detection_latency, events_to_csv, seeded_obstacle
    cfg = _config(args, "active-uncurl")
    ob = None if args.obstacle_seed is None else seeded_obstacle(cfg, args.obstacle_seed)
    ev, lg = active_uncurl_scan(cfg, ob)
    lg.save(out / "log.csv")
    (out / "events.csv").write_text(events_to_csv([ev] if ev else []))
    lat = detection_latency(ev, lg)
    write_summary(out / "summary.txt", {"event_time": ev.t if ev else math.nan,
                                        "rule": ev.rule if ev else "none",
                                        "latency": lat})
    write_manifest(out, args.argv, cfg, cfg.seed,
                   {"obstacle": None if ob is None else {"center": ob.center, "diameter": ob.diameter}})
    print("no event" if ev is None else f"event at {ev.t:.4f} s ({ev.rule}), latency {lat:.4g} s")
    return 0


def cmd_gen_dataset(args, out: Path) -> int:
    from .sizeest import generate_dataset, save_dataset
    diam = [float(v) * 1e-3 for v in args.diameters.split(",")]
    ds = generate_dataset(diam, args.reps, args.seed or 0, workers=args.workers,
                          placement=args.placement)
    save_dataset(out, ds)
    write_manifest(out, args.argv, seed=args.seed or 0,
                   extra={"failures": ds.failures, "placement": args.placement})
    print(f"{len(ds)} sample(s) written to {out}, {len(ds.failures)} failure(s)")
    for sid, msg in ds.failures:
        print(f"  {sid}: {msg}", file=sys.stderr)
    return 0


def cmd_train(args, out: Path) -> int:
    from .sizeest import Hyperparams, load_dataset, save_model, train_ensemble
    from .sizeest.ensemble import holdout_split, metrics, predict
    try:
        samples = load_dataset(args.data)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_IO, f"cannot load dataset {args.data}: {exc}") from exc
    hp = Hyperparams(lam=args.lam, C=args.C, epsilon=args.epsilon, gamma=args.gamma,
                     n_trees=args.trees, depth=args.depth, learning_rate=args.learning_rate)
    seed = args.seed or 0
    rows = []
    if args.holdout:
        tr, te = holdout_split(samples, 0, args.folds, seed)
        m = train_ensemble(tr, args.folds, seed, hp)
        rows = [(s.sample_id, s.D_c, predict(m, s)) for s in te]
        mae, r2 = metrics([r[1] for r in rows], [r[2] for r in rows])
        write_table(out / "predictions.csv", ["sample_id", "D_true", "D_pred"], rows)
        print(f"held-out fold: MAE = {mae * 1e3:.3f} mm, R2 = {r2:.4f}")
    m = train_ensemble(samples, args.folds, seed, hp)
    save_model(out / "model.json", m)
    write_manifest(out, args.argv, seed=seed, extra={"samples": len(samples)})
    print(f"model written to {out / 'model.json'}")
    return 0


def cmd_predict(args, out: Path) -> int:
    from .sizeest import load_model, predict
    from .sizeest.dataset import load_sample, read_trace
    from .sizeest.ensemble import predict_traces
    mp = Path(args.model)
    try:
        m = load_model(mp / "model.json" if mp.is_dir() else mp)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_IO, f"cannot load model {args.model}: {exc}") from exc
    try:
        s = load_sample(args.sample)
        D = predict(m, s)
        print(f"D_pred = {D * 1e3:.3f} mm  D_true = {s.D_c * 1e3:.3f} mm")
    except LookupError:
        dt, cur, dis = read_trace(args.sample)
        D = predict_traces(m, cur, dis, dt)
        print(f"D_pred = {D * 1e3:.3f} mm  D_true = unknown")
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_IO, f"cannot read sample {args.sample}: {exc}") from exc
    return 0


def report(table, kind: str, out: Path) -> dict:
    """Tidy plot-data CSVs plus ``summary.txt`` for one report kind."""
    from .analysis import free_motion_rate, rise_time, spearman, xcorr_delay
    if kind not in REPORT_KINDS:
        raise CliError(EXIT_USAGE, f"unknown report kind {kind!r}")
    cols = table.columns if isinstance(table, TimeSeriesLog) else table
    require_columns(cols, kind)
    summ: dict = {}
    if kind in ("force-step", "extreme-curl", "period", "detection"):
        t = cols["t"]
        if len(t) < 3:
            raise CliError(EXIT_IO, f"{kind} report: fewer than three samples")
        dt = float(t[1] - t[0])
    if kind == "force-step":
        write_table(out / "force_step.csv", ["t", "F_ref", "F_cmd", "F_obs_full", "F_obs_base"],
                    zip(t, cols["ref_0"], cols["F_cmd_0"], cols["F_obs_0"], cols["F_base_0"]))
        ref = cols["ref_0"]
        k_on = int(np.argmax(ref != ref[0])) if np.any(ref != ref[0]) else 0
        from .analysis import SETTLE
        k_set = k_on + int(round(SETTLE / dt))
        summ["delay_full_ms"] = 1e3 * xcorr_delay(cols["F_cmd_0"][k_set:], cols["F_obs_0"][k_set:], dt)
        summ["delay_base_ms"] = 1e3 * xcorr_delay(ref[max(k_on - 1, 0):],
                                                  cols["F_base_0"][max(k_on - 1, 0):], dt)
        summ["rise_full_ms"] = 1e3 * rise_time(cols["F_obs_0"], dt, k_on)
        summ["rise_base_ms"] = 1e3 * rise_time(cols["F_base_0"], dt, k_on)
    elif kind == "extreme-curl":
        write_table(out / "extreme_curl.csv", ["t", "dl_dot", "i_cmd", "i_obs_star", "i_obs_dstar"],
                    zip(t, cols["dl_dot_0"], cols["i_cmd_0"], cols["i_obs_star_0"], cols["i_obs_dstar_0"]))
        v = cols["dl_dot_0"]
        free = free_motion_rate(v, dt)
        tail = v[-max(1, len(v) // 10):]
        summ["free_rate"] = free
        summ["final_rate_ratio"] = float(np.max(np.abs(tail)) / abs(free)) if free else math.nan
        summ["max_abs_i_cmd"] = float(np.max(np.abs(cols["i_cmd_0"])))
        summ["max_abs_i_obs_star"] = float(np.max(np.abs(cols["i_obs_star_0"])))
    elif kind == "period":
        from .perception import PeriodNotRecoverable, apparent_period
        write_table(out / "period_trace.csv", ["t", "i_filt"], zip(t, cols["i_obs_dstar_filt_0"]))
        try:
            summ["apparent_period"] = apparent_period(cols["i_obs_dstar_filt_0"], dt)
        except PeriodNotRecoverable:
            summ["apparent_period"] = math.nan
    elif kind == "detection":
        from .perception import detect_contact
        y = cols["i_obs_dstar_filt_1"]
        write_table(out / "detection_trace.csv", ["t", "i_filt", "contact"], zip(t, y, cols["contact"]))
        ev = detect_contact(y, dt) if len(y) > 500 else []
        write_table(out / "detection_markers.csv", ["time", "rule", "value"],
                    ((e.t, e.rule, e.value) for e in ev))
        c = np.flatnonzero(cols["contact"] > 0)
        summ["events"] = len(ev)
        summ["first_contact"] = float(t[c[0]]) if len(c) else math.nan
        summ["latency"] = ev[0].t - float(t[c[0]]) if ev and len(c) else math.nan
    elif kind == "sensitivity":
        link, shift = cols["link"], cols["shift"]
        write_table(out / "sensitivity_bars.csv", ["link", "shift"], zip(link.astype(int), shift))
        summ["tip_over_base"] = float(shift[-1] / shift[0]) if shift[0] else math.inf
        if len(link) > 2:
            summ["spearman"] = spearman(link, shift)
    elif kind == "size":
        from .sizeest import metrics
        y, p = cols["D_true"], cols["D_pred"]
        write_table(out / "size_scatter.csv", ["D_true", "D_pred"], zip(y, p))
        mae, r2 = metrics(y, p)
        summ["MAE_mm"] = 1e3 * mae
        summ["R2"] = r2
    write_summary(out / "summary.txt", summ)
    return summ


def cmd_report(args, out: Path) -> int:
    if args.kind in ("sensitivity", "size"):
        table = read_table(args.input)
    else:
        table = _load_log(args.input)
    summ = report(table, args.kind, out)
    write_manifest(out, args.argv, extra={"kind": args.kind, "input": str(args.input)})
    for k, v in summ.items():
        print(f"{k} = {_fmt(v)}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tendonsim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"tendonsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, config=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/{name})")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("-v", "--verbose", action="count", default=0)
        if config:
            p.add_argument("--config", help="scenario document")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override one config key (repeatable)")
        p.set_defaults(fn=fn)
        return p

    add("simulate", cmd_simulate, "run one scenario and write log.csv", config=True)

    p = add("identify", cmd_identify, "estimate eta, b_m, J_m from a current trace")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--ref", help="reference log with i_real or i_obs_dstar_0 on the excitation grid")
    g.add_argument("--synthetic", metavar="ETA,B_M,J_M", help="self-generated reference")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--starts", type=int, default=8)
    p.add_argument("--evals", type=int, default=400)
    p.add_argument("--loss", choices=("huber", "l2"), default="huber")

    p = add("detect", cmd_detect, "run the contact detector over a logged current")
    p.add_argument("--log", required=True)
    p.add_argument("--channel", type=int, default=1)
    p.add_argument("--column")
    p.add_argument("--abs-rise", type=float, default=0.8)
    p.add_argument("--rel-rise", type=float, default=0.5)
    p.add_argument("--slope", type=float, default=6.0)

    p = add("sensitivity", cmd_sensitivity, "current shift per impulse location", config=True)
    p.add_argument("--links", default="2,8,14,20,23")
    p.add_argument("--channel", type=int, default=0)

    p = add("period", cmd_period, "apparent period per pusher location", config=True)
    p.add_argument("--links", default="2,12,23")

    p = add("uncurl", cmd_uncurl, "active uncurl with online detection", config=True)
    p.add_argument("--obstacle-seed", type=int, default=None,
                   help="place a seeded obstacle (default: free motion)")

    p = add("gen-dataset", cmd_gen_dataset, "simulate wrap trials")
    p.add_argument("--diameters", default="10,20,30,40,50,60,70", help="mm, comma separated")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--placement", choices=("standoff", "along"), default="standoff")

    p = add("train", cmd_train, "fit the size-estimation ensemble")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--holdout", action="store_true", help="also score one held-out fold")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--C", type=float, default=10.0)
    p.add_argument("--epsilon", type=float, default=1.0, help="mm")
    p.add_argument("--gamma", type=float, default=1.0 / 16)
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--learning-rate", type=float, default=0.1)

    p = add("predict", cmd_predict, "estimate the diameter of one trial")
    p.add_argument("--model", required=True, help="model.json or its directory")
    p.add_argument("--sample", required=True)

    p = add("report", cmd_report, "plot-data CSVs and summary numbers")
    p.add_argument("--kind", required=True, choices=REPORT_KINDS)
    p.add_argument("--input", required=True, help="log.csv, sensitivity.csv or predictions.csv")
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    from .loop import NumericalError
    from .sizeest.models import SVRNotConverged
    try:
        out = _outdir(args)
        return args.fn(args, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError, SVRNotConverged) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
