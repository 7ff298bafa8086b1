"""Architecture, figure-of-merit and workload configuration.

Configuration files are INI-style (``[section]`` headers, ``key = value``
lines, ``#`` comments).  Several files may be layered; later files override
earlier ones key by key.  Every file must carry ``[meta] schema_version``.

Recognised sections::

    [meta]        schema_version, name
    [arch]        banks, mats_per_bank, cmas_per_mat, cma_rows, cma_cols,
                  intra_bank_fanin, rsc_bus_width, ibc_shot_bytes,
                  bus_latency_ns, bus_energy_pj
    [cost]        <op>_pj / <op>_ns for every figure of merit,
                  crossbar_rows, crossbar_cols, lookup_energy_scope
    [workload]    lookups_per_table, theta, top_k, lsh_bits, seed, pooling,
                  clusters
    [table.<id>]  role, entries, dim, precision, lookups (optional override)
    [dnn.filtering] / [dnn.ranking]
                  dense = 16-96, main = 128-64-32
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields, replace
from pathlib import Path

SCHEMA_VERSION = 1

ROLES = ("UIET-filter", "UIET-rank", "UIET-shared", "ItET")
LOOKUP_SCOPES = ("touched", "activated")


class ConfigError(ValueError):
    """Malformed configuration text."""


class ValidationError(ValueError):
    """A configuration violates one of its invariants."""


class CapacityError(ValidationError):
    def __init__(self, message: str, offending: list[str]):
        super().__init__(message)
        self.offending = offending


@dataclass(frozen=True)
class ArchConfig:
    banks: int = 32
    mats_per_bank: int = 4
    cmas_per_mat: int = 32
    cma_rows: int = 256
    cma_cols: int = 256
    intra_bank_fanin: int = 4
    rsc_bus_width: int = 256
    ibc_shot_bytes: int = 128
    bus_latency_ns: float = 1.0
    bus_energy_pj: float = 10.0

    def __post_init__(self):
        for name in ("banks", "mats_per_bank", "cmas_per_mat", "cma_rows", "cma_cols",
                     "intra_bank_fanin", "rsc_bus_width", "ibc_shot_bytes"):
            if getattr(self, name) < 1:
                raise ValidationError(f"arch.{name} must be >= 1 (got {getattr(self, name)})")
        if self.bus_latency_ns < 0 or self.bus_energy_pj < 0:
            raise ValidationError("arch bus cost must be non-negative")

    @property
    def rows_per_bank(self) -> int:
        return self.mats_per_bank * self.cmas_per_mat * self.cma_rows

    @property
    def total_rows(self) -> int:
        return self.banks * self.rows_per_bank


@dataclass(frozen=True)
class Fom:
    """Energy (pJ) and latency (ns) of one operation."""

    energy_pj: float
    latency_ns: float


_FOM_FIELDS = ("cma_write", "cma_read", "cma_add", "cma_search",
               "intra_mat_add", "intra_bank_add", "crossbar_matmul")


@dataclass(frozen=True)
class CostTable:
    cma_write: Fom = Fom(49.1, 10.0)
    cma_read: Fom = Fom(3.2, 0.3)
    cma_add: Fom = Fom(108.0, 8.1)
    cma_search: Fom = Fom(13.8, 0.2)
    intra_mat_add: Fom = Fom(137.0, 14.7)
    intra_bank_add: Fom = Fom(956.0, 44.2)
    crossbar_matmul: Fom = Fom(13.8, 225.0)
    crossbar_rows: int = 256
    crossbar_cols: int = 128
    # "touched": only addressed arrays spend lookup energy.
    # "activated": every activated array of a table steps in lockstep.
    lookup_energy_scope: str = "touched"

    def __post_init__(self):
        for name in _FOM_FIELDS:
            f = getattr(self, name)
            if not (f.energy_pj > 0 and f.latency_ns > 0):
                raise ValidationError(f"cost.{name} entries must be strictly positive")
        if self.crossbar_rows < 1 or self.crossbar_cols < 1:
            raise ValidationError("crossbar tile shape must be positive")
        if self.lookup_energy_scope not in LOOKUP_SCOPES:
            raise ValidationError(f"cost.lookup_energy_scope must be one of {LOOKUP_SCOPES}")

    def scaled(self, factor: float) -> CostTable:
        """Copy with every figure of merit multiplied by ``factor``."""
        return replace(self, **{n: Fom(getattr(self, n).energy_pj * factor,
                                       getattr(self, n).latency_ns * factor)
                                for n in _FOM_FIELDS})


@dataclass(frozen=True)
class EtSpec:
    id: str
    role: str
    entries: int
    dim: int = 32
    precision: str = "int8"
    lookups: int | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"table {self.id}: role must be one of {ROLES}")
        if self.entries < 1:
            raise ValidationError(f"table {self.id}: entries must be >= 1")
        if self.dim < 1:
            raise ValidationError(f"table {self.id}: dim must be >= 1")
        if self.precision != "int8":
            raise ValidationError(f"table {self.id}: only int8 precision is supported")
        if self.lookups is not None and self.lookups < 1:
            raise ValidationError(f"table {self.id}: lookups must be >= 1")

    @property
    def is_item_table(self) -> bool:
        return self.role == "ItET"


@dataclass(frozen=True)
class StageDnn:
    """Dense-feature stack and main network widths of one stage."""

    dense: tuple[int, ...]
    main: tuple[int, ...]

    def __post_init__(self):
        for widths in (self.dense, self.main):
            if len(widths) < 2 or min(widths) < 1:
                raise ValidationError(f"DNN widths need >= 2 positive entries, got {widths}")


@dataclass(frozen=True)
class WorkloadConfig:
    name: str = "workload"
    tables: tuple[EtSpec, ...] = ()
    filtering: StageDnn | None = None
    ranking: StageDnn | None = None
    lookups_per_table: int = 10
    theta: int = 100
    top_k: int = 10
    lsh_bits: int = 256
    seed: int = 0
    pooling: str = "sum"
    clusters: int = 16

    def __post_init__(self):
        ids = [t.id for t in self.tables]
        if len(set(ids)) != len(ids):
            raise ValidationError("table ids must be unique (shared tables are listed once)")
        if sum(t.is_item_table for t in self.tables) > 1:
            raise ValidationError("at most one ItET is allowed")
        if self.lookups_per_table < 1:
            raise ValidationError("workload.lookups_per_table must be >= 1")
        if self.theta < 0 or self.top_k < 1 or self.lsh_bits < 1 or self.clusters < 1:
            raise ValidationError("workload theta >= 0, top_k >= 1, lsh_bits >= 1, clusters >= 1")
        if self.pooling not in ("sum", "concat"):
            raise ValidationError("workload.pooling must be 'sum' or 'concat'")

    @property
    def item_table(self) -> EtSpec | None:
        return next((t for t in self.tables if t.is_item_table), None)

    def table(self, table_id: str) -> EtSpec:
        for t in self.tables:
            if t.id == table_id:
                return t
        raise KeyError(f"unknown table {table_id!r}")

    def stage_tables(self, stage: str) -> list[EtSpec]:
        """User-item tables consulted by a stage, in declaration order."""
        own = "UIET-filter" if stage == "filtering" else "UIET-rank"
        return [t for t in self.tables if t.role in (own, "UIET-shared")]

    def lookups(self, spec: EtSpec) -> int:
        return spec.lookups if spec.lookups is not None else self.lookups_per_table


# --------------------------------------------------------------------------
# capacity check


@dataclass(frozen=True)
class CapacityReport:
    capacity_rows: int
    required_rows: int
    per_bank_rows: int
    oversized: tuple[str, ...]

    @property
    def fits(self) -> bool:
        return self.required_rows <= self.capacity_rows


def required_rows(spec: EtSpec) -> int:
    # item tables hold a signature row next to every embedding row
    return spec.entries * (2 if spec.is_item_table else 1)


def validate(arch: ArchConfig, work: WorkloadConfig) -> CapacityReport:
    """Compare the rows a workload needs with the fabric's CMA capacity."""
    need = sum(required_rows(t) for t in work.tables)
    oversized = tuple(t.id for t in work.tables if required_rows(t) > arch.rows_per_bank)
    report = CapacityReport(arch.total_rows, need, arch.rows_per_bank, oversized)
    if not report.fits:
        offending = list(oversized) or [t.id for t in work.tables]
        raise CapacityError(
            f"workload needs {need} CMA rows but the fabric holds {arch.total_rows}; "
            f"offending tables: {', '.join(offending)}", offending)
    if work.lsh_bits > arch.cma_cols and work.item_table is not None:
        raise ValidationError(
            f"lsh_bits={work.lsh_bits} exceeds cma_cols={arch.cma_cols}; "
            "signatures must fit one CMA row")
    for t in work.tables:
        if t.dim * 8 > arch.cma_cols:
            raise ValidationError(f"table {t.id}: dim {t.dim} x 8 bits exceeds cma_cols")
    return report


# --------------------------------------------------------------------------
# parsing / serialisation


def _widths(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(w) for w in text.replace(",", "-").split("-") if w.strip())
    except ValueError as exc:
        raise ConfigError(f"bad layer widths {text!r}") from exc


def _convert(value: str, default):
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value.strip()


def _section_values(parser, section: str, cls, skip=()) -> dict:
    out = {}
    if not parser.has_section(section):
        return out
    known = {f.name: f for f in fields(cls)}
    for key, raw in parser.items(section):
        if key in skip:
            continue
        if key not in known:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        default = getattr(cls(), key) if cls is not EtSpec else None
        try:
            out[key] = _convert(raw, default)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc
    return out


def _parse_cost(parser) -> CostTable:
    if not parser.has_section("cost"):
        return CostTable()
    base = CostTable()
    kwargs = {}
    items = dict(parser.items("cost"))
    for name in _FOM_FIELDS:
        fom = getattr(base, name)
        try:
            e = float(items.pop(f"{name}_pj", fom.energy_pj))
            t = float(items.pop(f"{name}_ns", fom.latency_ns))
        except ValueError as exc:
            raise ConfigError(f"[cost] {name}: {exc}") from exc
        kwargs[name] = Fom(e, t)
    for key in ("crossbar_rows", "crossbar_cols"):
        if key in items:
            kwargs[key] = int(items.pop(key))
    if "lookup_energy_scope" in items:
        kwargs["lookup_energy_scope"] = items.pop("lookup_energy_scope").strip()
    if items:
        raise ConfigError(f"[cost] unknown keys: {', '.join(sorted(items))}")
    return CostTable(**kwargs)


def _parse_table(parser, section: str) -> EtSpec:
    items = dict(parser.items(section))
    table_id = section.split(".", 1)[1]
    try:
        role = items.pop("role")
        entries = int(items.pop("entries"))
        dim = int(items.pop("dim", 32))
        precision = items.pop("precision", "int8")
        lookups = items.pop("lookups", None)
    except KeyError as exc:
        raise ConfigError(f"[{section}] missing key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc
    if items:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(items))}")
    return EtSpec(table_id, role.strip(), entries, dim, precision.strip(),
                  int(lookups) if lookups is not None else None)


def _parse_dnn(parser, stage: str) -> StageDnn | None:
    section = f"dnn.{stage}"
    if not parser.has_section(section):
        return None
    items = dict(parser.items(section))
    try:
        dnn = StageDnn(_widths(items.pop("dense")), _widths(items.pop("main")))
    except KeyError as exc:
        raise ConfigError(f"[{section}] missing key {exc}") from exc
    if items:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(items))}")
    return dnn


def parse_config(text: str, source: str = "<string>"):
    return _from_parser(_read([(text, source)]))


def _read(chunks) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    for text, source in chunks:
        layer = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
        try:
            layer.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from exc
        version = layer.get("meta", "schema_version", fallback=None)
        if version is None:
            raise ConfigError(f"{source}: missing [meta] schema_version")
        if version.strip() != str(SCHEMA_VERSION):
            raise ConfigError(f"{source}: unsupported schema_version {version.strip()}")
        parser.read_dict(layer)
    return parser


def _from_parser(parser):
    arch = ArchConfig(**_section_values(parser, "arch", ArchConfig))
    cost = _parse_cost(parser)
    wkw = _section_values(parser, "workload", WorkloadConfig, skip=("name",))
    wkw["name"] = parser.get("meta", "name", fallback="workload").strip()
    tables = tuple(_parse_table(parser, s) for s in parser.sections() if s.startswith("table."))
    known = {"meta", "arch", "cost", "workload", "dnn.filtering", "dnn.ranking"}
    stray = [s for s in parser.sections() if s not in known and not s.startswith("table.")]
    if stray:
        raise ConfigError(f"unknown sections: {', '.join(stray)}")
    work = WorkloadConfig(tables=tables, filtering=_parse_dnn(parser, "filtering"),
                          ranking=_parse_dnn(parser, "ranking"), **wkw)
    return arch, cost, work


def load_config(*paths) -> tuple[ArchConfig, CostTable, WorkloadConfig]:
    """Load and validate one or more layered config files.

    Fields absent from every file keep their defaults.  Raises
    :class:`ConfigError` for unreadable or malformed input and
    :class:`ValidationError` for invariant violations.
    """
    chunks = []
    for p in paths:
        p = Path(p)
        try:
            chunks.append((p.read_text(), str(p)))
        except OSError as exc:
            raise ConfigError(f"{p}: {exc.strerror}") from exc
    try:
        return _from_parser(_read(chunks))
    except ValidationError as exc:
        exc.args = (f"{', '.join(map(str, paths))}: {exc}",) + exc.args[1:]
        raise


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(arch: ArchConfig | None = None, cost: CostTable | None = None,
                work: WorkloadConfig | None = None) -> str:
    """Serialise configs back to the INI schema (inverse of :func:`parse_config`)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["meta"] = {"schema_version": str(SCHEMA_VERSION),
                      "name": work.name if work else "config"}
    if arch is not None:
        parser["arch"] = {f.name: _fmt(getattr(arch, f.name)) for f in fields(arch)}
    if cost is not None:
        sec = {}
        for name in _FOM_FIELDS:
            fom = getattr(cost, name)
            sec[f"{name}_pj"] = _fmt(fom.energy_pj)
            sec[f"{name}_ns"] = _fmt(fom.latency_ns)
        sec["crossbar_rows"] = str(cost.crossbar_rows)
        sec["crossbar_cols"] = str(cost.crossbar_cols)
        sec["lookup_energy_scope"] = cost.lookup_energy_scope
        parser["cost"] = sec
    if work is not None:
        parser["workload"] = {k: _fmt(getattr(work, k)) for k in (
            "lookups_per_table", "theta", "top_k", "lsh_bits", "seed", "pooling", "clusters")}
        for stage in ("filtering", "ranking"):
            dnn = getattr(work, stage)
            if dnn is not None:
                parser[f"dnn.{stage}"] = {"dense": "-".join(map(str, dnn.dense)),
                                          "main": "-".join(map(str, dnn.main))}
        for t in work.tables:
            sec = {"role": t.role, "entries": str(t.entries), "dim": str(t.dim),
                   "precision": t.precision}
            if t.lookups is not None:
                sec["lookups"] = str(t.lookups)
            parser[f"table.{t.id}"] = sec
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length() if n > 0 else 0
