"""Fit the under-specified cost parameters against reference ET-lookup figures.

The swept parameters never touch functional state: the same populated
simulators are reused and only their cost table and bus costs are swapped.

Targets file (INI, ``[meta] schema_version = 1``)::

    [target.<workload>.<stage>]
    latency_us = 0.24
    energy_uj = 6.88
    fit = true                 # contributes to the objective
    gpu_latency_us = 14.97     # inert reference constants
    gpu_energy_uj = 329.34

    [grid]
    lookups = 1-32             # range or comma list
    bus_latency_ns = 0.5, 1, 2, 4
    bus_energy_pj = 1, 10, 100
    lookup_energy_scope = touched, activated

    [band]
    latency = 0.25
    energy = 0.5

Objective: the largest band-normalised relative error over fitted targets
(so a value <= 1 means every fitted target is inside its band); ties go to
the smaller sum of squared relative errors, then to grid order.
"""

from __future__ import annotations

import configparser
import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path

from .config import SCHEMA_VERSION, ConfigError, CostTable
from .ledger import CostLedger
from .pipeline import Simulator


@dataclass(frozen=True)
class Target:
    workload: str
    stage: str
    latency_us: float
    energy_uj: float
    fit: bool = False
    gpu_latency_us: float | None = None
    gpu_energy_uj: float | None = None


@dataclass(frozen=True)
class Grid:
    lookups: tuple[int, ...] = tuple(range(1, 33))
    bus_latency_ns: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    bus_energy_pj: tuple[float, ...] = (1.0, 10.0, 100.0)
    lookup_energy_scope: tuple[str, ...] = ("touched", "activated")

    def points(self):
        return itertools.product(self.lookups, self.bus_latency_ns, self.bus_energy_pj,
                                 self.lookup_energy_scope)

    def __len__(self):
        return (len(self.lookups) * len(self.bus_latency_ns) * len(self.bus_energy_pj)
                * len(self.lookup_energy_scope))


@dataclass(frozen=True)
class Targets:
    targets: tuple[Target, ...]
    grid: Grid = Grid()
    latency_band: float = 0.25
    energy_band: float = 0.5


@dataclass(frozen=True)
class Setting:
    lookups: int
    bus_latency_ns: float
    bus_energy_pj: float
    lookup_energy_scope: str


@dataclass
class Residual:
    target: Target
    latency_us: float
    energy_uj: float

    @property
    def latency_err(self) -> float:
        return self.latency_us / self.target.latency_us - 1.0

    @property
    def energy_err(self) -> float:
        return self.energy_uj / self.target.energy_uj - 1.0


@dataclass
class CalibrationResult:
    setting: Setting
    score: float
    residuals: list[Residual]
    latency_band: float
    energy_band: float
    grid_size: int
    stage_costs: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)

    def within(self, r: Residual) -> bool:
        return (abs(r.latency_err) <= self.latency_band
                and abs(r.energy_err) <= self.energy_band)

    @property
    def met_band(self) -> bool:
        fitted = [r for r in self.residuals if r.target.fit]
        return bool(fitted) and all(self.within(r) for r in fitted)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def load_targets(path) -> Targets:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(Path(path).read_text(), source=str(path))
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if parser.get("meta", "schema_version", fallback="").strip() != str(SCHEMA_VERSION):
        raise ConfigError(f"{path}: missing or unsupported [meta] schema_version")
    targets = []
    try:
        for sec in parser.sections():
            if not sec.startswith("target."):
                continue
            _, workload, stage = sec.split(".", 2)
            s = parser[sec]
            targets.append(Target(
                workload, stage, s.getfloat("latency_us"), s.getfloat("energy_uj"),
                s.getboolean("fit", fallback=False),
                s.getfloat("gpu_latency_us", fallback=None),
                s.getfloat("gpu_energy_uj", fallback=None)))
        grid = Grid()
        if parser.has_section("grid"):
            g = parser["grid"]
            grid = Grid(
                _ints(g["lookups"]) if "lookups" in g else grid.lookups,
                _floats(g["bus_latency_ns"]) if "bus_latency_ns" in g else grid.bus_latency_ns,
                _floats(g["bus_energy_pj"]) if "bus_energy_pj" in g else grid.bus_energy_pj,
                tuple(v.strip() for v in g["lookup_energy_scope"].split(","))
                if "lookup_energy_scope" in g else grid.lookup_energy_scope)
        band = parser["band"] if parser.has_section("band") else {}
        return Targets(tuple(targets), grid, float(band.get("latency", 0.25)),
                       float(band.get("energy", 0.5)))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def et_lookup_cost(sim: Simulator, stage: str, lookups: int | None = None) -> tuple[float, float]:
    """ET-lookup (latency ns, energy pJ) of one input, worst-case placement.

    Every pooled lookup of a table hits the same array.  The item table is
    looked up once per ranking input; in filtering it uses its own lookup
    count (or ``lookups``).
    """
    work = sim.work
    P = work.lookups_per_table if lookups is None else lookups
    requests = {}
    for spec in work.stage_tables(stage):
        n = spec.lookups if spec.lookups is not None else P
        requests[spec.id] = [i % sim.data[spec.id].entries for i in range(n)]
    item = work.item_table
    if item is not None and stage in ("filtering", "ranking"):
        n = 1 if stage == "ranking" else (item.lookups if item.lookups is not None else P)
        requests[item.id] = [i % sim.data[item.id].entries for i in range(n)]
    saved = sim.fabric.ledger
    led = CostLedger()
    led.tag(stage, "et_lookup")
    sim.fabric.ledger = led
    try:
        sim.pool_tables(requests, work.pooling)
    finally:
        sim.fabric.ledger = saved
    t = led.totals()
    return t.latency_ns, t.energy_pj


def apply_setting(sim: Simulator, base_cost: CostTable, s: Setting) -> None:
    sim.set_cost(replace(base_cost, lookup_energy_scope=s.lookup_energy_scope),
                 replace(sim.arch, bus_latency_ns=s.bus_latency_ns, bus_energy_pj=s.bus_energy_pj))


def _evaluate(sims, base_cost, targets: Targets, s: Setting):
    residuals, costs = [], {}
    for t in targets.targets:
        sim = sims[t.workload]
        apply_setting(sim, base_cost, s)
        key = (t.workload, t.stage)
        if key not in costs:
            costs[key] = et_lookup_cost(sim, t.stage, s.lookups)
        ns, pj = costs[key]
        residuals.append(Residual(t, ns / 1e3, pj / 1e6))
    return residuals, costs


def calibrate(sims: dict[str, Simulator], base_cost: CostTable, targets: Targets) -> CalibrationResult:
    missing = {t.workload for t in targets.targets} - set(sims)
    if missing:
        raise ConfigError(f"targets reference unknown workloads: {', '.join(sorted(missing))}")
    if len(targets.grid) == 0:
        raise ValueError("calibration grid is empty")
    fitted = [t for t in targets.targets if t.fit] or list(targets.targets)
    best = None
    for point in targets.grid.points():
        s = Setting(*point)
        residuals, costs = _evaluate(sims, base_cost, Targets(tuple(fitted), targets.grid,
                                                              targets.latency_band,
                                                              targets.energy_band), s)
        score = max(max(abs(r.latency_err) / targets.latency_band,
                        abs(r.energy_err) / targets.energy_band) for r in residuals)
        sq = sum(r.latency_err ** 2 + r.energy_err ** 2 for r in residuals)
        if best is None or (score, sq) < best[0]:
            best = ((score, sq), s)
    (score, _), setting = best
    residuals, costs = _evaluate(sims, base_cost, targets, setting)
    return CalibrationResult(setting, score, residuals, targets.latency_band,
                             targets.energy_band, len(targets.grid), costs)


def render(result: CalibrationResult) -> str:
    s = result.setting
    lines = [
        f"grid points evaluated: {result.grid_size}",
        f"best setting: lookups_per_table={s.lookups} bus_latency_ns={s.bus_latency_ns} "
        f"bus_energy_pj={s.bus_energy_pj} lookup_energy_scope={s.lookup_energy_scope}",
        f"objective (max band-normalised error): {result.score:.4f}",
        f"fitted targets inside band (+/-{result.latency_band:.0%} latency, "
        f"+/-{result.energy_band:.0%} energy): {'yes' if result.met_band else 'NO'}",
        "",
        f"{'target':<22}{'sim us':>9}{'ref us':>9}{'err':>9}{'sim uJ':>10}{'ref uJ':>9}"
        f"{'err':>9}  fit  in-band  speedup  energy-red.",
    ]
    for r in result.residuals:
        t = r.target
        speed = f"{t.gpu_latency_us / r.latency_us:8.1f}x" if t.gpu_latency_us else "       -"
        red = f"{t.gpu_energy_uj / r.energy_uj:9.1f}x" if t.gpu_energy_uj else "        -"
        lines.append(
            f"{t.workload + '.' + t.stage:<22}{r.latency_us:9.4f}{t.latency_us:9.3f}"
            f"{r.latency_err:+9.1%}{r.energy_uj:10.4f}{t.energy_uj:9.3f}{r.energy_err:+9.1%}"
            f"  {'*' if t.fit else ' '}    {'yes' if result.within(r) else 'no ':<7} {speed} {red}")
    return "\n".join(lines) + "\n"


def to_dict(result: CalibrationResult) -> dict:
    s = result.setting
    return {
        "setting": {"lookups_per_table": s.lookups, "bus_latency_ns": s.bus_latency_ns,
                    "bus_energy_pj": s.bus_energy_pj,
                    "lookup_energy_scope": s.lookup_energy_scope},
        "score": result.score,
        "met_band": result.met_band,
        "grid_size": result.grid_size,
        "residuals": [
            {"workload": r.target.workload, "stage": r.target.stage, "fit": r.target.fit,
             "latency_us": r.latency_us, "target_latency_us": r.target.latency_us,
             "latency_err": r.latency_err, "energy_uj": r.energy_uj,
             "target_energy_uj": r.target.energy_uj, "energy_err": r.energy_err,
             "within_band": result.within(r)}
            for r in result.residuals],
    }
