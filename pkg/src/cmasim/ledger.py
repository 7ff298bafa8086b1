"""Append-only cost ledger and latency/energy composition.

Timing rule: events sharing a ``group`` run concurrently; groups run one
after another.  Inside a group, events on the same ``lane`` form a serial
chain.  So

    latency = sum over groups of max over lanes of (sum of lane latencies)

and energy is always the plain sum.  With one event per lane this reduces
to "max within a parallel group, sum across groups".
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field

CATEGORIES = ("et_lookup", "dnn", "nns", "topk")
TRACE_HEADER = ("stage", "category", "component", "op", "ns", "pj", "group", "lane", "count")


@dataclass(frozen=True)
class CostEvent:
    stage: str
    category: str
    component: str
    op: str
    ns: float
    pj: float
    group: int
    lane: str
    count: int = 1


@dataclass
class Totals:
    latency_ns: float = 0.0
    energy_pj: float = 0.0
    by_component: dict[str, float] = field(default_factory=dict)
    by_op: dict[str, float] = field(default_factory=dict)
    by_category: dict[str, tuple[float, float]] = field(default_factory=dict)


def _latency(events) -> float:
    lanes: dict[int, dict[str, float]] = defaultdict(lambda: defaultdict(float))
    for e in events:
        lanes[e.group][e.lane] += e.ns
    return sum(max(chain.values()) for chain in lanes.values())


class CostLedger:
    def __init__(self):
        self._events: list[CostEvent] = []
        self._next_group = 0
        self.stage = "none"
        self.category = "none"

    def __len__(self):
        return len(self._events)

    @property
    def events(self) -> tuple[CostEvent, ...]:
        return tuple(self._events)

    def new_group(self) -> int:
        g = self._next_group
        self._next_group += 1
        return g

    def tag(self, stage: str | None = None, category: str | None = None) -> None:
        if stage is not None:
            self.stage = stage
        if category is not None:
            self.category = category

    def record(self, component: str, op: str, ns: float, pj: float,
               group: int | None = None, lane: str | None = None, count: int = 1) -> CostEvent:
        """Append one event; ``group=None`` puts it in a fresh serial group."""
        if group is None:
            group = self.new_group()
        ev = CostEvent(self.stage, self.category, component, op, float(ns), float(pj),
                       group, lane if lane is not None else component, count)
        self._events.append(ev)
        return ev

    def extend(self, other: CostLedger) -> None:
        """Append another ledger's events after this one's (serially)."""
        offset = self._next_group
        for e in other._events:
            self._events.append(CostEvent(e.stage, e.category, e.component, e.op, e.ns,
                                          e.pj, e.group + offset, e.lane, e.count))
        self._next_group += other._next_group

    def select(self, stage: str | None = None, category: str | None = None) -> list[CostEvent]:
        return [e for e in self._events
                if (stage is None or e.stage == stage)
                and (category is None or e.category == category)]

    def totals(self, stage: str | None = None, category: str | None = None) -> Totals:
        return ledger_totals(self, stage, category)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for e in self._events:
            w.writerow((e.stage, e.category, e.component, e.op, repr(e.ns), repr(e.pj),
                        e.group, e.lane, e.count))
        return buf.getvalue()


def ledger_totals(ledger: CostLedger, stage: str | None = None,
                  category: str | None = None) -> Totals:
    events = ledger.select(stage, category)
    t = Totals(latency_ns=_latency(events), energy_pj=sum(e.pj for e in events))
    comp: dict[str, float] = defaultdict(float)
    ops: dict[str, float] = defaultdict(float)
    cats: dict[str, list[CostEvent]] = defaultdict(list)
    for e in events:
        comp[e.component] += e.pj
        ops[e.op] += e.pj
        cats[e.category].append(e)
    t.by_component = dict(comp)
    t.by_op = dict(ops)
    t.by_category = {c: (_latency(evs), sum(e.pj for e in evs)) for c, evs in cats.items()}
    return t
