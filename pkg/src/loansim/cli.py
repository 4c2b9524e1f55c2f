"""Command-line entry point: ``loansim <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from typing import Optional, Sequence

from .engine import enumerate_branches, generate_log
from .evaluation import POLICIES, benchmark, delta_sweep, format_table, run_experiment
from .interfaces.config import Settings, default_seed, load_config
from .interfaces.csvlog import export_csv
from .interventions import InterventionSequence

ALL = "choose_procedure,set_interest_rate,time_contact_hq"


def _deltas(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad delta list {text!r}") from None


def _interventions(text: str) -> InterventionSequence:
    try:
        return InterventionSequence.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loansim", description="Loan-application process simulator.")
    p.add_argument("--config", help="INI file overriding process, bank and learner constants")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate cases and write an event-log CSV")
    g.add_argument("--cases", type=int, required=True)
    g.add_argument("--delta", type=float, default=0.0, help="share of cases following bank rules")
    g.add_argument("--seed", type=int)
    g.add_argument("--interventions", type=_interventions, default=ALL)
    g.add_argument("--out", required=True)
    g.add_argument("--include-hidden", action="store_true", help="add the true client quality column")
    g.add_argument("--workers", type=int, default=1)

    def experiment_args(sp, reps=5):
        sp.add_argument("--interventions", type=_interventions, default="choose_procedure")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--reps", type=int, default=reps)
        sp.add_argument("--n-train", type=int)
        sp.add_argument("--n-val", type=int)
        sp.add_argument("--n-test", type=int)

    e = sub.add_parser("evaluate", help="Gain of one policy against the bank rules")
    e.add_argument("--policy", choices=[x for x in POLICIES if x != "external"], required=True)
    e.add_argument("--delta", type=float, default=0.0, help="confounding of the training log")
    experiment_args(e)

    b = sub.add_parser("benchmark", help="Gain table for every baseline and intervention")
    b.add_argument("--deltas", type=_deltas, default=[0.0, 0.999])
    experiment_args(b)

    s = sub.add_parser("sweep", help="Gain with confidence intervals over several deltas")
    s.add_argument("--delta-list", type=_deltas, required=True)
    s.add_argument("--policy", choices=("s-learner", "kmeans-q", "random", "bank", "oracle"), default="s-learner")
    s.add_argument("--plot-data", help="CSV path for delta, mean, ci_low, ci_high")
    experiment_args(s)

    v = sub.add_parser("serve", help="run the NDJSON environment server")
    v.add_argument("--port", type=int, default=7878)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--seed", type=int)

    c = sub.add_parser("counterfactuals", help="print every branch outcome of one case")
    c.add_argument("--case", type=int, required=True)
    c.add_argument("--interventions", type=_interventions, required=True)
    c.add_argument("--seed", type=int)
    return p


def _sizes(args, settings: Settings) -> dict:
    out = {"n_reps": args.reps}
    for name in ("n_train", "n_val", "n_test"):
        v = getattr(args, name)
        if v is not None:
            out[name] = v
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    settings = load_config(args.config) if args.config else Settings()
    seed = args.seed if getattr(args, "seed", None) is not None else default_seed()
    spec, bank = settings.spec, settings.bank

    if args.command == "generate":
        if args.cases < 1 or not 0.0 <= args.delta <= 1.0:
            parser.error("need --cases >= 1 and --delta in [0, 1]")
        t = time.perf_counter()
        log = generate_log(args.cases, args.delta, args.interventions, seed, 0, spec, bank, args.workers)
        export_csv(log, args.out, args.include_hidden)
        print(f"wrote {log.n_events} events from {len(log)} cases to {args.out} ({time.perf_counter() - t:.1f}s)")
        return 0

    if args.command == "counterfactuals":
        for branch, res in enumerate_branches(args.case, args.interventions, seed, spec, bank):
            label = " ".join(f"{k}[{i}]={a}" for k, i, a in branch)
            outcome = res.state.outcome
            print(f"{label:70s} {outcome:9s} profit {res.profit:12.2f} elapsed {res.elapsed:6.2f}d")
        return 0

    if args.command == "serve":
        from .interfaces.protocol import serve

        print(f"serving on {args.host}:{args.port} (seed {seed})", flush=True)
        try:
            serve(args.port, seed, args.host, spec, bank)
        except KeyboardInterrupt:
            pass
        return 0

    common = dict(config=settings.learners, spec=spec, bank=bank, **_sizes(args, settings))
    if args.command == "evaluate":
        r = run_experiment(args.policy, args.interventions, args.delta, seed, **common)
        print(format_table([r]))
        return 0
    if args.command == "benchmark":
        actives = [args.interventions] if "--interventions" in (argv or sys.argv) else None
        kw = {"actives": actives} if actives else {}
        print(format_table(benchmark(seed, args.deltas, **kw, **common)))
        return 0
    if args.command == "sweep":
        reports = delta_sweep(args.policy, args.interventions, args.delta_list, seed, **common)
        print(f"{'delta':>6s} {'gain':>7s} {'ci_low':>7s} {'ci_high':>7s}")
        rows = []
        for r in reports:
            lo, hi = r.ci()
            rows.append((r.delta, r.mean, lo, hi))
            print(f"{r.delta:6.3f} {r.mean:+.4f} {lo:+.4f} {hi:+.4f}")
        if args.plot_data:
            with open(args.plot_data, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("delta", "mean", "ci_low", "ci_high"))
                w.writerows([f"{x:.6f}" for x in row] for row in rows)
        return 0
    parser.error(f"unknown command {args.command}")  # pragma: no cover
    return 2


if __name__ == "__main__":
    sys.exit(main())
