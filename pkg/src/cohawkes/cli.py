"""Command-line interface: ``cohawkes fit|simulate|predict|evaluate``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__, evaluation, io, prediction
from .domain import ALL_MODELS, Dataset, is_hawkes
from .estimation import EstimationError, fit_model
from .simulation import SimulationError, build_samplers, default_samplers, simulate_dataset

log = logging.getLogger("cohawkes")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _provenance(argv) -> str:
    return f"cohawkes {__version__}; command: cohawkes {' '.join(shlex.quote(a) for a in argv)}"


def _deltas(text: str) -> list[float]:
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        out.append(math.inf if part in ("inf", "infinity") else float(part))
    if any(not d > 0 for d in out):
        raise argparse.ArgumentTypeError("horizons must be > 0")
    return out


def _horizon(text: str) -> float:
    return _deltas(text)[0]


def _load(args, need_concurrency: bool = False) -> Dataset:
    d = io.load_messages(args.messages, strict=not getattr(args, "lenient", False))
    assignments = getattr(args, "assignments", None)
    timelines = getattr(args, "timelines", None)
    if assignments:
        tl = io.derive_concurrency(assignments, {c.id: c.start_epoch for c in d})
        d = io.attach_concurrency(d, tl)
    elif timelines:
        d = io.attach_concurrency(d, io.load_timelines(timelines))
    elif need_concurrency:
        raise UsageError("concurrency source required: pass --assignments (or --timelines) for cbhp")
    return d


def _split(d: Dataset, before=None, after=None) -> Dataset:
    if before is not None:
        d = d.subset(lambda c: c.start_epoch < before)
    if after is not None:
        d = d.subset(lambda c: c.start_epoch >= after)
    if len(d) == 0:
        raise io.DataError("no conversations selected")
    return d


def _needs_concurrency(model) -> bool:
    return getattr(getattr(model, "marks", None), "kind", None) == "concurrency"


# --- commands ---------------------------------------------------------------


def cmd_fit(args, argv) -> int:
    d = _split(_load(args, need_concurrency=args.model == "cbhp"), before=args.train_before)
    model, trace = fit_model(args.model, d, seed=args.seed, tol=args.tol, max_iter=args.max_iter)
    meta = {"seed": args.seed, "n_conversations": len(d), "command": _provenance(argv)}
    if trace is not None:
        meta.update(iterations=trace.n_iter, converged=trace.converged, final_loglik=trace.final_loglik)
        print(f"final log-likelihood: {trace.final_loglik!r}")
        print(f"iterations: {trace.n_iter} ({'converged' if trace.converged else 'max_iter reached'})")
    io.save_params(model, args.out, meta)
    print(f"wrote {args.out}")
    return EXIT_OK


def _samplers(args):
    src = getattr(args, "samplers_from", None)
    return build_samplers(io.load_messages(src)) if src else default_samplers()


def cmd_simulate(args, argv) -> int:
    model = io.load_params(args.params)
    d = simulate_dataset(model, _samplers(args), args.n, args.seed, workers=args.threads)
    io.save_messages(d, args.out, provenance=_provenance(argv))
    if _needs_concurrency(model) and args.timelines_out:
        io.save_timelines(d, args.timelines_out)
    print(f"wrote {len(d)} conversations to {args.out}")
    return EXIT_OK


def cmd_predict(args, argv) -> int:
    model = io.load_params(args.params)
    d = _load(args, need_concurrency=_needs_concurrency(model) and args.agent is None)
    if args.agent is not None:
        if args.epoch is None:
            raise UsageError("--agent needs --epoch")
        group = [c for c in d if c.agent_id == args.agent]
        q = prediction.agent_log_quiet(model, group, args.epoch, args.delta)
        p = q.p
        print(f"agent: {args.agent} open conversations: {len(q.used)} excluded: {len(q.excluded)}")
    else:
        if args.conversation is None or args.t is None:
            raise UsageError("need --conversation and --t (or --agent and --epoch)")
        p = prediction.p_quiet_interval(model, d[args.conversation], args.t, args.delta)
    print(f"quiet probability: {p!r}")
    print(f"activity probability: {1.0 - p!r}")
    return EXIT_OK


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _delta_tag(delta: float) -> str:
    return "inf" if math.isinf(delta) else f"{delta:g}"


def cmd_evaluate_fit(args, argv) -> int:
    model = io.load_params(args.params)
    test = _split(_load(args), after=args.test_after)
    out = _out_dir(args)
    sim = simulate_dataset(model, _samplers(args), args.n, args.seed, workers=args.threads)
    prov = _provenance(argv)
    metrics = {
        "duration": (evaluation.extract_durations(test), evaluation.extract_durations(sim)),
        "gap": (evaluation.extract_gaps(test), evaluation.extract_gaps(sim)),
        "gap_customer": (evaluation.extract_gaps(test, "customer"), evaluation.extract_gaps(sim, "customer")),
        "gap_agent": (evaluation.extract_gaps(test, "agent"), evaluation.extract_gaps(sim, "agent")),
    }
    ks_rows = []
    for name, (x, y) in metrics.items():
        if len(x) == 0 or len(y) == 0:
            log.warning("metric %s: empty sample, skipped", name)
            continue
        D, p = evaluation.ks_two_sample(x, y)
        ks_rows.append((model.name, name, D, p))
        q = np.linspace(0.01, 0.99, 99)
        qq = evaluation.qq_points(x, y, q)
        evaluation.write_csv(out / f"qq_{name}.csv", evaluation.QQ_HEADER, ((a, b, c) for a, (b, c) in zip(q, qq)), prov)
        rows = [(v, f, "observed") for v, f in evaluation.ecdf(x)] + [(v, f, "simulated") for v, f in evaluation.ecdf(y)]
        evaluation.write_csv(out / f"cdf_{name}.csv", evaluation.CDF_HEADER, rows, prov)
    evaluation.write_csv(out / "ks.csv", evaluation.KS_HEADER, ks_rows, prov)
    for row in ks_rows:
        print(f"{row[1]}: D={row[2]:.4f} p={row[3]:.3g}")
    return EXIT_OK


def cmd_evaluate_predict(args, argv) -> int:
    model = io.load_params(args.params)
    test = _split(_load(args, need_concurrency=_needs_concurrency(model)), after=args.test_after)
    if args.strategy == "random" and args.seed is None:
        raise UsageError("--strategy random requires --seed")
    out = _out_dir(args)
    table, records = evaluation.evaluate_prediction(model, test, args.strategy, args.deltas, args.step, args.seed)
    prov = _provenance(argv)
    evaluation.write_records(out / "records.csv", records, prov)
    rows = []
    for delta in args.deltas:
        rs = [r for r in records if r.delta == delta]
        try:
            evaluation.write_roc(out / f"roc_delta_{_delta_tag(delta)}.csv", evaluation.roc_curve(rs), prov)
        except ValueError as e:
            log.warning("delta=%g: no ROC curve (%s)", delta, e)
        rows.append((model.name, delta, table[delta]))
        print(f"delta={_delta_tag(delta)} AUC={table[delta]:.4f}")
    evaluation.write_csv(out / "auc.csv", evaluation.AUC_HEADER, rows, prov)
    return EXIT_OK


def cmd_evaluate_idleness(args, argv) -> int:
    model = io.load_params(args.params)
    test = _split(_load(args), after=args.test_after)
    out = _out_dir(args)
    table, records = evaluation.evaluate_agent_idleness(model, test, args.step, args.deltas)
    prov = _provenance(argv)
    evaluation.write_records(out / "idleness_records.csv", records, prov)
    rows = [(model.name, ds, table.get(ds, math.nan)) for ds in args.deltas]
    evaluation.write_csv(out / "idleness_auc.csv", ("model", "delta_seconds", "auc"), rows, prov)
    for _, ds, a in rows:
        print(f"delta={ds:g}s AUC={a:.4f}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _add_data(p, concurrency=True):
    p.add_argument("--messages", required=True, help="message CSV (times in minutes)")
    if concurrency:
        p.add_argument("--assignments", help="agent assignment CSV (epochs in minutes) for concurrency")
        p.add_argument("--timelines", help="explicit concurrency timeline CSV (minutes)")
    p.add_argument("--lenient", action="store_true", help="drop invalid conversations instead of failing")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cohawkes", description="Hawkes models of two-party conversations.")
    ap.add_argument("--version", action="version", version=f"cohawkes {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a model and write a parameter document")
    p.add_argument("--model", required=True, choices=ALL_MODELS)
    _add_data(p)
    p.add_argument("--train-before", type=float, help="use conversations starting before this epoch (minutes)")
    p.add_argument("--seed", type=int, required=True, help="seed for the random EM start")
    p.add_argument("--tol", type=float, default=1e-6, help="L1 parameter-movement tolerance (default 1e-6)")
    p.add_argument("--max-iter", type=int, default=500, help="maximum EM iterations (default 500)")
    p.add_argument("--out", required=True, help="parameter document path (JSON)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate conversations to a message CSV")
    p.add_argument("--params", required=True, help="parameter document")
    p.add_argument("--n", type=int, required=True, help="number of conversations")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--samplers-from", help="message CSV whose marks and counts are resampled")
    p.add_argument("--threads", type=int, default=1, help="worker processes (output does not depend on it)")
    p.add_argument("--timelines-out", help="also write concurrency timelines (cbhp)")
    p.add_argument("--out", required=True, help="output message CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="quiet/activity probability for a conversation or agent")
    p.add_argument("--params", required=True)
    _add_data(p)
    p.add_argument("--conversation", help="conversation id")
    p.add_argument("--t", type=float, help="query time on the conversation clock (minutes)")
    p.add_argument("--delta", type=_horizon, required=True, help="horizon in minutes, or inf")
    p.add_argument("--agent", help="agent id (agent-level query)")
    p.add_argument("--epoch", type=float, help="absolute query time for --agent (minutes)")
    p.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="goodness of fit and prediction accuracy")
    evsub = ev.add_subparsers(dest="what", required=True, parser_class=_Parser)

    def common(q):
        q.add_argument("--params", required=True)
        _add_data(q)
        q.add_argument("--test-after", type=float, help="use conversations starting at/after this epoch (minutes)")
        q.add_argument("--out-dir", required=True)

    p = evsub.add_parser("fit", help="KS, QQ and CDF data against simulated conversations")
    common(p)
    p.add_argument("--n", type=int, default=100_000, help="simulated conversations (default 100000)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--samplers-from", help="message CSV whose marks and counts are resampled")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_evaluate_fit)

    p = evsub.add_parser("predict", help="AUC and ROC of conversation-level activity predictions")
    common(p)
    p.add_argument("--strategy", choices=evaluation.STRATEGIES, default="deterministic")
    p.add_argument("--step", type=float, default=10.0, help="sampling step in minutes (default 10)")
    p.add_argument("--deltas", type=_deltas, default=list(evaluation.DEFAULT_DELTAS),
                   help="comma-separated horizons in minutes (default 5,10,15,30,60,inf)")
    p.add_argument("--seed", type=int, help="seed (required for --strategy random)")
    p.set_defaults(func=cmd_evaluate_predict)

    p = evsub.add_parser("idleness", help="AUC of agent-level activity predictions")
    common(p)
    p.add_argument("--step", type=float, default=10.0, help="sampling step in minutes (default 10)")
    p.add_argument("--deltas", type=_deltas, default=list(evaluation.IDLENESS_DELTAS_SECONDS),
                   help="comma-separated horizons in seconds (default 10,30,60)")
    p.set_defaults(func=cmd_evaluate_idleness)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as e:
        print(f"cohawkes: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (EstimationError, SimulationError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"cohawkes: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.DataError, OSError, KeyError, ValueError) as e:
        print(f"cohawkes: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
