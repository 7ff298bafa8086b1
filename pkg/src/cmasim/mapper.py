"""Placement of embedding tables onto banks, mats and CMAs.

Each table gets its own bank (declaration order).  Embedding rows fill CMAs
of a mat before spilling to the next mat.  Item tables store embedding and
LSH signature rows in a CMA pair (even slot, odd slot) of the same mat, so
one row index addresses both.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .config import ArchConfig, CapacityError, WorkloadConfig, next_pow2, validate


@dataclass(frozen=True)
class Slot:
    mat: int
    cma: int
    row_start: int
    row_end: int  # exclusive

    @property
    def rows(self) -> int:
        return self.row_end - self.row_start


@dataclass(frozen=True)
class TablePlacement:
    table: str
    role: str
    entries: int
    bank: int
    slots: tuple[Slot, ...]
    signature_slots: tuple[Slot, ...] = ()

    @property
    def cmas(self) -> int:
        return len(self.slots) + len(self.signature_slots)

    @property
    def mats(self) -> tuple[int, ...]:
        return tuple(sorted({s.mat for s in self.slots + self.signature_slots}))

    @property
    def provisioned_cmas(self) -> int:
        return next_pow2(self.cmas)


@dataclass(frozen=True)
class Location:
    bank: int
    mat: int
    cma: int
    row: int
    signature_cma: int | None = None


@dataclass(frozen=True)
class Activation:
    active_banks: int
    active_mats: int
    active_cmas: int


@dataclass(frozen=True)
class Placement:
    arch: ArchConfig
    tables: dict[str, TablePlacement]

    def __getitem__(self, table: str) -> TablePlacement:
        try:
            return self.tables[table]
        except KeyError:
            raise KeyError(f"unknown table {table!r}") from None

    def occupied(self, bank: int, mat: int, cma: int) -> tuple[int, int] | None:
        """Occupied row range of a CMA, or ``None`` for a deactivated array."""
        for tp in self.tables.values():
            if tp.bank != bank:
                continue
            for s in tp.slots + tp.signature_slots:
                if (s.mat, s.cma) == (mat, cma):
                    return s.row_start, s.row_end
        return None


def cmas_needed(entries: int, rows: int, item_table: bool = False) -> int:
    n = math.ceil(entries / rows)
    return 2 * n if item_table else n


def place_tables(arch: ArchConfig, work: WorkloadConfig) -> Placement:
    validate(arch, work)
    if len(work.tables) > arch.banks:
        raise CapacityError(f"{len(work.tables)} tables but only {arch.banks} banks",
                            [t.id for t in work.tables[arch.banks:]])
    R, C = arch.cma_rows, arch.cmas_per_mat
    placed = {}
    for bank, spec in enumerate(work.tables):
        n_emb = math.ceil(spec.entries / R)
        per_mat = C // 2 if spec.is_item_table else C
        if per_mat < 1 or math.ceil(n_emb / per_mat) > arch.mats_per_bank:
            raise CapacityError(f"table {spec.id} ({spec.entries} entries) exceeds one bank; "
                                "cross-bank splitting is not supported", [spec.id])
        slots, sigs = [], []
        for k in range(n_emb):
            start = 0
            end = min(R, spec.entries - k * R)
            mat, pos = divmod(k, per_mat)
            if spec.is_item_table:
                slots.append(Slot(mat, 2 * pos, start, end))
                sigs.append(Slot(mat, 2 * pos + 1, start, end))
            else:
                slots.append(Slot(mat, pos, start, end))
        placed[spec.id] = TablePlacement(spec.id, spec.role, spec.entries, bank,
                                         tuple(slots), tuple(sigs))
    return Placement(arch, placed)


def activation_report(p: Placement) -> Activation:
    banks, mats, cmas = set(), set(), set()
    for tp in p.tables.values():
        banks.add(tp.bank)
        for s in tp.slots + tp.signature_slots:
            mats.add((tp.bank, s.mat))
            cmas.add((tp.bank, s.mat, s.cma))
    return Activation(len(banks), len(mats), len(cmas))


def locate(p: Placement, table: str, entry: int) -> Location:
    tp = p[table]
    if not 0 <= entry < tp.entries:
        raise IndexError(f"entry {entry} outside table {table!r} of {tp.entries} entries")
    k, row = divmod(entry, p.arch.cma_rows)
    s = tp.slots[k]
    sig = tp.signature_slots[k].cma if tp.signature_slots else None
    return Location(tp.bank, s.mat, s.cma, s.row_start + row, sig)


def entry_at(p: Placement, table: str, slot_index: int, row: int) -> int:
    """Inverse of :func:`locate` for embedding slot ``slot_index``."""
    return slot_index * p.arch.cma_rows + row - p[table].slots[slot_index].row_start


def dump_placement(p: Placement) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("table", "bank", "mat", "cma", "row_start", "row_end", "role"))
    for tp in p.tables.values():
        for s in tp.slots:
            w.writerow((tp.table, tp.bank, s.mat, s.cma, s.row_start, s.row_end, "embedding"))
        for s in tp.signature_slots:
            w.writerow((tp.table, tp.bank, s.mat, s.cma, s.row_start, s.row_end, "signature"))
    return buf.getvalue()
