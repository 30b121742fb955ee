"""Command-line front end.

Subcommands: select, estimate, ci, simulate.  Input is CSV with a header
containing a numeric column `y` (and optionally `mu`).  Output CSVs use
full round-trip precision.  Exit codes: 0 ok, 2 usage or input error,
3 statistical precondition failure (ties, degenerate regions), 4
internal error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import os
import sys
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from . import ebayes, estimators, intervals, selection, simlab
from .truncnorm import DegenerateRegion

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PRECONDITION = 3
EXIT_INTERNAL = 4


class UsageError(Exception):
    pass


def _fmt(x) -> str:
    """Shortest decimal string that parses back to the same float."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _read_csv(path: str):
    """Columns y (required) and mu (optional) from a headered CSV."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot open {path}: {e}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UsageError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "y" not in header:
            raise UsageError(f"{path}: header line has no `y` column")
        yi = header.index("y")
        mi = header.index("mu") if "mu" in header else None
        ys, mus = [], []
        for ln, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                ys.append(float(row[yi]))
                if mi is not None:
                    mus.append(float(row[mi]))
            except (ValueError, IndexError):
                raise UsageError(f"{path}, line {ln}: malformed row "
                                 f"{row!r}") from None
    if not ys:
        raise UsageError(f"{path}: no data rows")
    y = np.array(ys)
    mu = np.array(mus) if mi is not None else None
    return y, mu


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _artifact_version() -> str:
    try:
        return version("postsel")
    except PackageNotFoundError:
        return "unknown"


def _write_manifest(out_path: str, command: str, config: dict,
                    outputs: list) -> None:
    path = out_path + ".manifest"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"command={command}\n")
        for k in sorted(config):
            v = config[k]
            if v is not None:
                fh.write(f"{k}={_fmt(v)}\n")
        fh.write(f"artifact_version={_artifact_version()}\n")
        fh.write(f"timestamp={datetime.datetime.now(datetime.timezone.utc).isoformat()}\n")
        for o in outputs:
            fh.write(f"output={o}\n")


def _run_selection(y, args) -> selection.SelectionOutcome:
    if args.procedure == "topk":
        if args.k is None:
            raise UsageError("--k is required for topk")
        return selection.select_topk(y, args.k, args.sigma)
    if args.procedure == "bh":
        if args.q is None:
            raise UsageError("--q is required for bh")
        return selection.select_bh(y, args.q, args.sigma)
    if args.lam is None:
        raise UsageError("--lambda is required for fixed")
    return selection.select_fixed(y, args.lam, args.sigma)


def cmd_select(args) -> int:
    y, _ = _read_csv(args.input)
    o = _run_selection(y, args)
    ranks = np.empty(len(y), dtype=int)
    ranks[np.argsort(-np.abs(y), kind="stable")] = np.arange(1, len(y) + 1)
    in_sel = np.zeros(len(y), dtype=int)
    in_sel[o.selected] = 1
    rows = [(i, y[i], in_sel[i], ranks[i], 1 if y[i] >= 0 else -1, o.threshold)
            for i in range(len(y))]
    _write_csv(args.output, ["index", "y", "selected", "rank", "sign",
                             "threshold"], rows)
    _write_manifest(args.output, "select", _selection_config(args),
                    [args.output])
    return EXIT_OK


def _selection_config(args) -> dict:
    return {"input": args.input, "procedure": args.procedure, "k": args.k,
            "q": args.q, "lambda": args.lam, "sigma": args.sigma,
            "seed": getattr(args, "seed", None)}


_EST_METHODS = ("tn", "ht", "st", "js", "bc", "sure", "boot1", "boot2",
                "gmleb", "tweedie")


def cmd_estimate(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(","))
    bad = [m for m in methods if m not in _EST_METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {bad}; choose from {_EST_METHODS}")
    needs_seed = {"boot1", "boot2"} & set(methods)
    if needs_seed and args.seed is None:
        raise UsageError(f"--seed is required for {sorted(needs_seed)}")
    y, _ = _read_csv(args.input)
    o = _run_selection(y, args)
    sel = o.selected
    cols: dict[str, np.ndarray] = {}
    for m in methods:
        if m == "gmleb":
            prior = ebayes.gmleb_fit(y, args.sigma)
            cols[m] = ebayes.gmleb_mean(y[sel], prior)
        elif m == "tweedie":
            fit = ebayes.fit_lindsay(y)
            cols[m] = ebayes.tweedie_mean(y[sel], fit, args.sigma)
        else:
            rng = (np.random.default_rng(args.seed)
                   if m in ("boot1", "boot2") else None)
            rep = estimators.estimate_selected(o, y, m, rng=rng)
            cols[m] = rep.estimates
            if m == "tn" and o.k_hat > 0 and o.threshold > 0:
                from .truncnorm import tail_moments
                mm = np.abs(rep.estimates) / args.sigma
                lam = np.full_like(mm, o.threshold / args.sigma)
                h, _ = tail_moments(mm, lam)
                cond = args.sigma * np.sign(rep.estimates
                                            + (rep.estimates == 0)) * (mm + h)
                cols["tn_residual"] = np.abs(cond - y[sel])
    header = ["index", "y", "rank"] + list(cols)
    rows = [[sel[j], y[sel[j]], j + 1] + [cols[c][j] for c in cols]
            for j in range(len(sel))]
    _write_csv(args.output, header, rows)
    cfg = _selection_config(args)
    cfg.update({"methods": args.methods})
    _write_manifest(args.output, "estimate", cfg, [args.output])
    return EXIT_OK


def cmd_ci(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(","))
    bad = [m for m in methods if m not in ("tn", "by", "fisher", "efron")]
    if bad:
        raise UsageError(f"unknown interval method(s) {bad}")
    if not 0.0 < args.level < 1.0:
        raise UsageError("--level must be in (0, 1)")
    y, _ = _read_csv(args.input)
    o = _run_selection(y, args)
    sel = o.selected
    k = len(sel)
    cols: dict[str, np.ndarray] = {}
    failures = 0
    for m in methods:
        lo = np.full(k, np.nan)
        hi = np.full(k, np.nan)
        valid = np.zeros(k, dtype=int)
        try:
            if m == "tn":
                lo, hi = intervals.ci_tn(y[sel], o.threshold, args.sigma,
                                         args.level)
                valid[:] = 1
            elif m == "by":
                rep = intervals.ci_by(y, sel, args.sigma, args.level)
                lo, hi, valid = rep.lower, rep.upper, rep.valid.astype(int)
            elif m == "fisher":
                for j, i in enumerate(sel):
                    try:
                        lo[j], hi[j] = intervals.ci_fisher(
                            y[i], o.threshold, args.sigma, args.level)
                        valid[j] = 1
                    except intervals.InstabilityError as e:
                        print(f"warning: fisher interval for index {i}: {e}",
                              file=sys.stderr)
            else:
                fit = ebayes.fit_lindsay(y)
                lo, hi, v = intervals.ci_efron(y[sel], fit, args.pi0,
                                               args.level, args.sigma)
                valid = v.astype(int)
                if not np.all(v):
                    print(f"warning: {int(np.sum(~v))} efron interval(s) "
                          "invalid (nonpositive posterior variance)",
                          file=sys.stderr)
        except (ebayes.FitError, intervals.SolverError, ValueError) as e:
            print(f"warning: method {m} failed: {e}", file=sys.stderr)
            failures += 1
        cols[f"{m}_lower"] = lo
        cols[f"{m}_upper"] = hi
        cols[f"{m}_valid"] = valid
    if failures == len(methods):
        print("error: every interval method failed", file=sys.stderr)
        return EXIT_INTERNAL
    header = ["index", "y"] + list(cols)
    rows = [[sel[j], y[sel[j]]] + [cols[c][j] for c in cols]
            for j in range(k)]
    _write_csv(args.output, header, rows)
    cfg = _selection_config(args)
    cfg.update({"methods": args.methods, "level": args.level})
    _write_manifest(args.output, "ci", cfg, [args.output])
    return EXIT_OK


# --- simulate -------------------------------------------------------------

_SIM_KEYS = {
    "winners-curse": {"n": int, "s": int},
    "topk": {"n": int, "alpha": float, "nu": float, "sigma": float, "s": int,
             "k_grid": str, "methods": str},
    "bh": {"n": int, "alpha": float, "nu": float, "sigma": float, "s": int,
           "q_grid": str, "methods": str},
    "efron": {"nu": float, "s": int, "q": float, "p": float, "n": int,
              "n_signals": int, "methods": str},
    "pivot": {"n": int, "alpha": float, "nu": float, "sigma": float, "s": int,
              "procedure": str, "k": int, "q": float, "naive": int},
    "risk": {"space": str, "eta_n": float, "q": float, "r": float, "p": float,
             "n": int, "mc": int, "slack": float, "envelope_c": float,
             "delta": float},
    "squeeze": {"y_min": float, "y_max": float, "y_points": int,
                "t_min": float, "t_max": float, "t_points": int},
}


def _read_config(path: str, allowed: dict) -> dict:
    cfg = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot open config {path}: {e}") from e
    with fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}, line {ln}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in allowed:
                raise UsageError(f"{path}, line {ln}: unknown key {key!r}")
            try:
                cfg[key] = allowed[key](value.strip())
            except ValueError:
                raise UsageError(f"{path}, line {ln}: bad value for "
                                 f"{key!r}: {value.strip()!r}") from None
    return cfg


def _grid(txt: str, cast):
    return tuple(cast(x) for x in txt.split(",") if x.strip())


def _sim_winners(cfg, seed, threads):
    rep = simlab.winners_curse_demo(cfg.get("n", 100), cfg.get("s", 1000),
                                    seed, threads)
    rows = zip(rep["k"], rep["mse_raw"], rep["mse_js"], rep["mse_bc"],
               rep["approx_mean"])
    return ["K", "mse_raw", "mse_js", "mse_bc", "approx_mean"], rows


def _mse_rows(rep: simlab.MSEReport):
    rows = []
    for a, x in enumerate(rep.axis):
        for m, method in enumerate(rep.methods):
            rows.append((x, method, rep.median[a, m], rep.mean[a, m],
                         rep.counts[a] if rep.counts.ndim == 1
                         else rep.counts[a, m]))
    return [rep.axis_name, "method", "median_mse", "mean_mse", "count"], rows


def _sim_topk(cfg, seed, threads):
    sc = simlab.SimConfig(
        n=cfg.get("n", 1000), alpha=cfg.get("alpha", 0.15),
        nu=cfg.get("nu", 6.0), sigma=cfg.get("sigma", 1.0),
        s=cfg.get("s", 55), seed=seed,
        k_grid=_grid(cfg.get("k_grid", "5,10,20,50"), int),
        methods=_grid(cfg.get("methods", "tn,ht,st"), str))
    return _mse_rows(simlab.run_topk_experiment(sc, threads))


def _sim_bh(cfg, seed, threads):
    sc = simlab.SimConfig(
        n=cfg.get("n", 1000), alpha=cfg.get("alpha", 0.15),
        nu=cfg.get("nu", 6.0), sigma=cfg.get("sigma", 1.0),
        s=cfg.get("s", 55), seed=seed,
        q_grid=_grid(cfg.get("q_grid", "0.05,0.1,0.2"), float),
        methods=_grid(cfg.get("methods", "tn,ht,st"), str))
    return _mse_rows(simlab.run_bh_experiment(sc, threads))


def _sim_efron(cfg, seed, threads):
    rep = simlab.run_efron_experiment(
        nu=cfg.get("nu", -3.0), s=cfg.get("s", 30), q=cfg.get("q", 0.1),
        p=cfg.get("p", 0.1),
        methods=_grid(cfg.get("methods", "tn,by"), str),
        seed=seed, n=cfg.get("n", 10_000),
        n_signals=cfg.get("n_signals", 1000), threads=threads)
    header = ["replicate", "method", "k_hat", "threshold", "fcp",
              "mean_width", "miss_up_share", "invalid_rate"]
    rows = []
    for row in rep["rows"]:
        for m in rep["methods"]:
            met = row.get(m)
            if met is None:
                rows.append((row["replicate"], m, row["k_hat"],
                             row["threshold"], "", "", "", ""))
            else:
                rows.append((row["replicate"], m, row["k_hat"],
                             row["threshold"], met["fcp"], met["mean_width"],
                             "" if met["miss_up_share"] is None
                             else met["miss_up_share"], met["invalid_rate"]))
    return header, rows


def _sim_pivot(cfg, seed, threads):
    sc = simlab.SimConfig(
        n=cfg.get("n", 1000), alpha=cfg.get("alpha", 0.15),
        nu=cfg.get("nu", 0.0), sigma=cfg.get("sigma", 1.0),
        s=cfg.get("s", 1000), seed=seed,
        k_grid=(cfg.get("k", 10),))
    rep = simlab.pivot_uniformity(sc, cfg.get("procedure", "topk"),
                                  q=cfg.get("q", 0.1),
                                  naive=bool(cfg.get("naive", 0)),
                                  threads=threads)
    return (["n_pivots", "ks_stat", "p_value"],
            [(rep["n_pivots"], rep["ks_stat"], rep["p_value"])])


def _sim_risk(cfg, seed, threads):
    spec = simlab.RiskBoundSpec(
        space=cfg.get("space", "l0"), eta_n=cfg["eta_n"],
        q=cfg.get("q", 0.1), r=cfg.get("r", 2.0), p=cfg.get("p", 0.0),
        n=cfg.get("n", 10_000), envelope_c=cfg.get("envelope_c", 1.0),
        delta=cfg.get("delta", 0.05))
    rep = simlab.risk_bound_check(spec, cfg.get("mc", 200), seed,
                                  cfg.get("slack", 0.25), threads)
    header = ["empirical_risk", "bound", "ratio", "passed",
              "decomposition_ok", "sandwich_rate", "k_mu", "k_minus",
              "k_plus", "mc"]
    return header, [tuple(int(rep[h]) if isinstance(rep[h], bool)
                          else rep[h] for h in header)]


def _sim_squeeze(cfg, seed, threads):
    y = np.linspace(cfg.get("y_min", -12.0), cfg.get("y_max", 12.0),
                    cfg.get("y_points", 500))
    t = np.linspace(cfg.get("t_min", 0.0), cfg.get("t_max", 8.0),
                    cfg.get("t_points", 500))
    rep = simlab.squeeze_audit(y, t)
    return (["max_violation", "violations", "y_points", "t_points"],
            [(rep["max_violation"], rep["violations"], len(y), len(t))])


_SIM_RUNNERS = {
    "winners-curse": _sim_winners, "topk": _sim_topk, "bh": _sim_bh,
    "efron": _sim_efron, "pivot": _sim_pivot, "risk": _sim_risk,
    "squeeze": _sim_squeeze,
}


def cmd_simulate(args) -> int:
    sub = args.experiment
    cfg = _read_config(args.config, _SIM_KEYS[sub]) if args.config else {}
    if sub == "risk" and "eta_n" not in cfg:
        raise UsageError("risk experiment requires eta_n in the config")
    if args.seed is None and sub != "squeeze":
        raise UsageError("--seed is required (randomness never comes from "
                         "the clock)")
    seed = args.seed if args.seed is not None else 0
    os.makedirs(args.output, exist_ok=True)
    out_csv = os.path.join(args.output, f"{sub}.csv")
    header, rows = _SIM_RUNNERS[sub](cfg, seed, args.threads)
    _write_csv(out_csv, header, rows)
    manifest_cfg = dict(cfg)
    manifest_cfg.update({"experiment": sub, "seed": seed,
                         "config_file": args.config})
    _write_manifest(out_csv, "simulate", manifest_cfg, [out_csv])
    return EXIT_OK


def _add_selection_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("input", help="input CSV with a `y` column")
    p.add_argument("--procedure", required=True,
                   choices=("topk", "bh", "fixed"))
    p.add_argument("--k", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("-o", "--output", required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="postsel",
        description="Post-selection estimation for Gaussian means")
    sub = ap.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("select", help="run a selection procedure")
    _add_selection_args(ps)
    ps.set_defaults(fn=cmd_select)

    pe = sub.add_parser("estimate", help="point estimates on the selected set")
    _add_selection_args(pe)
    pe.add_argument("--methods", default="tn")
    pe.add_argument("--seed", type=int)
    pe.set_defaults(fn=cmd_estimate)

    pc = sub.add_parser("ci", help="confidence intervals on the selected set")
    _add_selection_args(pc)
    pc.add_argument("--methods", default="tn")
    pc.add_argument("--level", type=float, default=0.1,
                    help="miscoverage p; intervals are level 1-p")
    pc.add_argument("--pi0", type=float, default=0.9,
                    help="null proportion for efron intervals")
    pc.set_defaults(fn=cmd_ci)

    pm = sub.add_parser("simulate", help="run a seeded experiment")
    pm.add_argument("experiment", choices=sorted(_SIM_RUNNERS))
    pm.add_argument("--config", help="flat key=value config file")
    pm.add_argument("--seed", type=int)
    pm.add_argument("--threads", type=int,
                    default=int(os.environ.get("POSTSEL_THREADS", 0)) or None)
    pm.add_argument("-o", "--output", required=True, help="output directory")
    pm.set_defaults(fn=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (selection.TieAtBoundary, DegenerateRegion, ebayes.FitError) as e:
        print(f"error: statistical precondition failed: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
