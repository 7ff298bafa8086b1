"""Command-line entry point.

Exit codes: 0 success, 2 malformed input, 3 invariant/capacity violation,
4 runtime failure, 64 bad command-line usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import calibrate as cal
from . import evaluate, report, synth
from .config import ConfigError, ValidationError, load_config, validate
from .mapper import activation_report, dump_placement
from .pipeline import Query, Simulator

EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_USAGE = 2, 3, 4, 64

log = logging.getLogger("cmasim")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def bundled(name: str) -> Path:
    """Resolve a path, falling back to the bundled ``data/<name>.cfg``."""
    p = Path(name)
    if p.exists():
        return p
    for candidate in (name, f"{name}.cfg", f"{name}.jsonl"):
        ref = resources.files("cmasim") / "data" / candidate
        if ref.is_file():
            return Path(str(ref))
    return p


def _load(args, workload: str | None = None):
    paths = [bundled(p) for p in (args.arch, args.fom, workload or args.workload) if p]
    arch, cost, work = load_config(*paths)
    if getattr(args, "seed", None) is not None:
        work = replace(work, seed=args.seed)
    validate(arch, work)
    return arch, cost, work


def read_queries(path: Path) -> list[Query]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                out.append(Query.from_record(json.loads(line)))
            except (json.JSONDecodeError, TypeError, ValueError, AttributeError) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return out


def cmd_run(args) -> int:
    arch, cost, work = _load(args)
    sim = Simulator(arch, cost, work)
    if args.queries:
        queries = read_queries(bundled(args.queries))
    else:
        queries = [Query.from_record(r)
                   for r in synth.make_query_records(work, args.synthetic, work.seed + 1)]
    results = []
    for i, q in enumerate(queries):
        try:
            results.append(sim.run_query(q))
        except (IndexError, KeyError) as exc:
            raise ValidationError(f"query {i}: {exc}") from exc
    targets = cal.load_targets(bundled(args.targets)) if args.targets else None
    rep = report.build_report(sim, results, targets)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.dumps(rep))
    (out / "summary.txt").write_text(report.summary(rep))
    with open(out / "results.jsonl", "w") as fh:
        for r in rep["per_query"]:
            fh.write(json.dumps({"query": r["query"], "top_k": r["top_k"], "ctrs": r["ctrs"],
                                 "stages": {s: {"latency_ns": v["latency_ns"],
                                                "energy_pj": v["energy_pj"]}
                                            for s, v in r["stages"].items()}},
                                sort_keys=True) + "\n")
    if args.trace:
        (out / "trace.csv").write_text(report.trace_csv(results))
    print(report.summary(rep), end="")
    return 0


def cmd_calibrate(args) -> int:
    if not args.workload:
        raise ConfigError("calibrate needs at least one --workload")
    sims = {}
    base_cost = None
    for w in args.workload:
        arch, cost, work = _load(args, w)
        base_cost = base_cost or cost
        sims[work.name] = Simulator(arch, cost, work)
    targets = cal.load_targets(bundled(args.targets))
    result = cal.calibrate(sims, base_cost, targets)
    text = cal.render(result)
    if "movielens" in sims and {"filtering", "ranking"} <= {
            k[1] for k in result.stage_costs if k[0] == "movielens"}:
        f = result.stage_costs[("movielens", "filtering")]
        r = result.stage_costs[("movielens", "ranking")]
        ok = r[0] >= f[0] and r[1] >= f[1]
        text += (f"\nmovielens ranking >= filtering under this setting: "
                 f"{'yes' if ok else 'NO'} (latency {r[0]:.1f} vs {f[0]:.1f} ns, "
                 f"energy {r[1]:.1f} vs {f[1]:.1f} pJ)\n")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "calibration.json").write_text(
            json.dumps(cal.to_dict(result), indent=2, sort_keys=True) + "\n")
        (out / "calibration.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_evaluate_recall(args) -> int:
    arch, cost, work = _load(args)
    sim = Simulator(arch, cost, work)
    lo, _, rest = args.thetas.partition(":")
    if rest:
        hi, _, step = rest.partition(":")
        thetas = range(int(lo), int(hi) + 1, int(step or 1))
    else:
        thetas = [int(t) for t in args.thetas.split(",")]
    rows = evaluate.evaluate_recall(sim, thetas, args.queries, args.top_n, seed=work.seed)
    print(evaluate.render(rows, args.top_n), end="")
    return 0


def cmd_dump_placement(args) -> int:
    arch, cost, work = _load(args)
    from .mapper import place_tables

    p = place_tables(arch, work)
    text = dump_placement(p)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    a = activation_report(p)
    print(f"# activated: {a.active_banks} banks, {a.active_mats} mats, {a.active_cmas} CMAs",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cmasim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, workload_many=False):
        sp.add_argument("--arch", help="architecture config (default: values in other files)")
        sp.add_argument("--fom", default="fom", help="figure-of-merit config (default: bundled)")
        if workload_many:
            sp.add_argument("--workload", action="append", help="workload config (repeatable)")
        else:
            sp.add_argument("--workload", required=True,
                            help="workload config path or bundled name (movielens, criteo)")
        sp.add_argument("--seed", type=int, help="override the workload seed")

    sp = sub.add_parser("run", help="simulate a batch of queries")
    common(sp)
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--queries", help="query file (JSON lines)")
    src.add_argument("--synthetic", type=int, default=0, help="generate N random queries")
    sp.add_argument("--out", default="out", help="output directory")
    sp.add_argument("--trace", action="store_true", help="write the per-event trace")
    sp.add_argument("--targets", help="reference targets for calibration deltas")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("calibrate", help="fit lookups/table and bus cost to reference figures")
    common(sp, workload_many=True)
    sp.add_argument("--targets", default="targets")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("evaluate-recall", help="recall of the radius search vs exact cosine")
    common(sp)
    sp.add_argument("--thetas", default="0:256:16", help="lo:hi:step or comma list")
    sp.add_argument("--queries", type=int, default=50)
    sp.add_argument("--top-n", type=int, default=10)
    sp.set_defaults(func=cmd_evaluate_recall)

    sp = sub.add_parser("dump-placement", help="write the table placement as CSV")
    common(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_dump_placement)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure code
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
