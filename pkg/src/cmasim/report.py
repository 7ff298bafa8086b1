"""Run reports: per-stage and per-category totals, breakdowns, calibration deltas."""

from __future__ import annotations

import json
from dataclasses import asdict

from .calibrate import Targets, et_lookup_cost
from .ledger import CATEGORIES, CostLedger, Totals
from .mapper import activation_report
from .pipeline import STAGES, QueryResult, Simulator

NOTES = (
    "controller clock generator and counters are not charged",
    "stage phases are barrier-synchronised across banks",
)


def _totals_dict(t: Totals) -> dict:
    cats = {c: {"latency_ns": t.by_category.get(c, (0.0, 0.0))[0],
                "energy_pj": t.by_category.get(c, (0.0, 0.0))[1]} for c in CATEGORIES}
    return {"latency_ns": t.latency_ns, "energy_pj": t.energy_pj, "categories": cats}


def _add(acc: dict, t: dict) -> None:
    acc["latency_ns"] += t["latency_ns"]
    acc["energy_pj"] += t["energy_pj"]
    for c, v in t["categories"].items():
        acc["categories"][c]["latency_ns"] += v["latency_ns"]
        acc["categories"][c]["energy_pj"] += v["energy_pj"]


def _zero() -> dict:
    return {"latency_ns": 0.0, "energy_pj": 0.0,
            "categories": {c: {"latency_ns": 0.0, "energy_pj": 0.0} for c in CATEGORIES}}


def _pct(part: float, whole: float) -> float:
    return 100.0 * part / whole if whole else 0.0


def build_report(sim: Simulator, results: list[QueryResult],
                 targets: Targets | None = None) -> dict:
    per_query = []
    stages = {s: _zero() for s in STAGES}
    for i, r in enumerate(results):
        st = {s: _totals_dict(r.ledger.totals(stage=s)) for s in STAGES}
        for s in STAGES:
            _add(stages[s], st[s])
        per_query.append({"query": i, "top_k": r.top_k, "ctrs": r.ctrs,
                          "candidates": r.candidates, "stages": st})
    e2e = {"latency_ns": sum(v["latency_ns"] for v in stages.values()),
           "energy_pj": sum(v["energy_pj"] for v in stages.values())}
    breakdown = {s: {c: {"latency_pct": _pct(v["categories"][c]["latency_ns"], v["latency_ns"]),
                         "energy_pct": _pct(v["categories"][c]["energy_pj"], v["energy_pj"])}
                     for c in CATEGORIES} for s, v in stages.items()}
    per_input = {}
    for stage in STAGES:
        if getattr(sim.work, stage) is not None:
            ns, pj = et_lookup_cost(sim, stage)
            per_input[stage] = {"latency_ns": ns, "energy_pj": pj}
    report = {
        "workload": sim.work.name,
        "seed": sim.seed,
        "queries": len(results),
        "settings": {"lookups_per_table": sim.work.lookups_per_table,
                     "bus_latency_ns": sim.arch.bus_latency_ns,
                     "bus_energy_pj": sim.arch.bus_energy_pj,
                     "lookup_energy_scope": sim.cost.lookup_energy_scope},
        "activation": asdict(activation_report(sim.placement)),
        "stages": stages,
        "end_to_end": e2e,
        "breakdown": breakdown,
        "et_lookup_per_input": per_input,
        "per_query": per_query,
        "notes": list(NOTES),
    }
    if targets is not None:
        deltas = []
        for t in targets.targets:
            if t.workload == sim.work.name and t.stage in per_input:
                got = per_input[t.stage]
                deltas.append({"stage": t.stage,
                               "latency_us": got["latency_ns"] / 1e3,
                               "target_latency_us": t.latency_us,
                               "latency_err": got["latency_ns"] / 1e3 / t.latency_us - 1,
                               "energy_uj": got["energy_pj"] / 1e6,
                               "target_energy_uj": t.energy_uj,
                               "energy_err": got["energy_pj"] / 1e6 / t.energy_uj - 1})
        report["calibration_deltas"] = deltas
    return report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def summary(report: dict) -> str:
    lines = [f"workload {report['workload']}  seed {report['seed']}  "
             f"queries {report['queries']}"]
    a = report["activation"]
    lines.append(f"activated: {a['active_banks']} banks, {a['active_mats']} mats, "
                 f"{a['active_cmas']} CMAs")
    s = report["settings"]
    lines.append(f"lookups/table {s['lookups_per_table']}, bus {s['bus_latency_ns']} ns / "
                 f"{s['bus_energy_pj']} pJ, lookup energy scope {s['lookup_energy_scope']}")
    lines.append("")
    lines.append(f"{'stage':<11}{'category':<11}{'latency ns':>14}{'energy pJ':>16}{'lat %':>8}")
    for stage, v in report["stages"].items():
        for c in CATEGORIES:
            cv = v["categories"][c]
            pct = report["breakdown"][stage][c]["latency_pct"]
            lines.append(f"{stage:<11}{c:<11}{cv['latency_ns']:14.1f}{cv['energy_pj']:16.1f}"
                         f"{pct:8.1f}")
        lines.append(f"{stage:<11}{'total':<11}{v['latency_ns']:14.1f}{v['energy_pj']:16.1f}")
    e = report["end_to_end"]
    lines.append(f"{'end-to-end':<22}{e['latency_ns']:14.1f}{e['energy_pj']:16.1f}")
    lines.append("")
    for stage, v in report["et_lookup_per_input"].items():
        lines.append(f"ET lookup per input ({stage}): {v['latency_ns'] / 1e3:.4f} us, "
                     f"{v['energy_pj'] / 1e6:.4f} uJ (worst-case placement)")
    for d in report.get("calibration_deltas", []):
        lines.append(f"  vs reference {d['stage']}: latency {d['latency_err']:+.1%}, "
                     f"energy {d['energy_err']:+.1%}")
    for n in report["notes"]:
        lines.append(f"note: {n}")
    return "\n".join(lines) + "\n"


def trace_csv(results: list[QueryResult]) -> str:
    """Concatenated event traces, one ``query`` column prepended."""
    out = []
    for i, r in enumerate(results):
        body = r.ledger.trace_csv().splitlines()
        if i == 0:
            out.append("query," + body[0])
        out.extend(f"{i},{line}" for line in body[1:])
    if not out:
        out.append("query," + CostLedger().trace_csv().strip())
    return "\n".join(out) + "\n"
