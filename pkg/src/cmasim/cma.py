"""Configurable memory array: RAM reads/writes, ternary CAM search, in-array add.

Cells are held bit-packed: ``value`` carries the stored bit and ``care`` is 0
for a don't-care (X) cell.  X reads back as 0 and never mismatches during a
search.  Every operation queues its figure-of-merit cost on ``pending``; the
owner (normally the fabric) drains it into a ledger.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .config import CostTable, Fom


class Mode(enum.Enum):
    RAM = "ram"
    CAM = "cam"
    GPCIM = "gpcim"


class ModeError(RuntimeError):
    """Operation issued while the array is in the wrong mode."""


@dataclass(frozen=True)
class SearchResult:
    matched_rows: tuple[int, ...]

    @property
    def first_match(self) -> int | None:
        # priority encoder: lowest matching row wins
        return self.matched_rows[0] if self.matched_rows else None


def lanes_from_bits(bits: np.ndarray, lanes: int = 32, lane_bits: int = 8) -> np.ndarray:
    """Interpret the leading ``lanes * lane_bits`` bits as signed MSB-first lanes."""
    if lane_bits == 8:
        return np.packbits(np.asarray(bits[: lanes * 8], dtype=np.uint8)).view(np.int8).astype(
            np.int64)
    b = np.asarray(bits[: lanes * lane_bits], dtype=np.int64).reshape(lanes, lane_bits)
    weights = 1 << np.arange(lane_bits - 1, -1, -1, dtype=np.int64)
    vals = b @ weights
    return np.where(vals >= 1 << (lane_bits - 1), vals - (1 << lane_bits), vals)


def bits_from_lanes(values, lane_bits: int = 8) -> np.ndarray:
    """Inverse of :func:`lanes_from_bits` for values that fit ``lane_bits``."""
    v = np.asarray(values, dtype=np.int64)
    lo, hi = -(1 << (lane_bits - 1)), (1 << (lane_bits - 1)) - 1
    if v.size and (v.min() < lo or v.max() > hi):
        raise ValueError(f"lane values must lie in [{lo}, {hi}]")
    u = v & ((1 << lane_bits) - 1)
    shifts = np.arange(lane_bits - 1, -1, -1)
    return ((u[:, None] >> shifts) & 1).astype(np.uint8).ravel()


_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1).astype(
    np.uint8)


class Cma:
    def __init__(self, rows: int = 256, cols: int = 256, cost: CostTable | None = None,
                 name: str = "cma"):
        if cols % 8:
            raise ValueError("cma_cols must be a multiple of 8")
        self.rows = rows
        self.cols = cols
        self.cost = cost or CostTable()
        self.name = name
        self.mode = Mode.RAM
        self.value = np.zeros((rows, cols // 8), dtype=np.uint8)
        self.care = np.full((rows, cols // 8), 0xFF, dtype=np.uint8)
        self.valid = np.zeros(rows, dtype=bool)
        self.accumulator: np.ndarray | None = None
        self.pending: list[tuple[str, Fom]] = []
        self._sensed: tuple[bytes, np.ndarray] | None = None

    # ---- bookkeeping -------------------------------------------------
    def drain(self) -> list[tuple[str, Fom]]:
        out, self.pending = self.pending, []
        return out

    def _charge(self, op: str) -> None:
        self.pending.append((op, getattr(self.cost, op)))

    def _check_row(self, row: int) -> None:
        if not 0 <= row < self.rows:
            raise IndexError(f"{self.name}: row {row} outside [0, {self.rows})")

    def _require(self, mode: Mode) -> None:
        if self.mode is not mode:
            raise ModeError(f"{self.name}: {mode.name} operation in {self.mode.name} mode")

    def set_mode(self, mode: Mode) -> None:
        self.mode = Mode(mode)

    def clear_accumulator(self) -> None:
        self.accumulator = None

    # ---- RAM mode ----------------------------------------------------
    def write_row(self, row: int, data) -> None:
        """Write binary ``data``; positions past ``len(data)`` become X."""
        bits = np.asarray(data, dtype=np.uint8)
        if bits.size and bits.max() > 1:
            raise ValueError("write_row takes binary data; use store_ternary for X cells")
        self.store_ternary(row, bits, np.ones(bits.size, dtype=np.uint8))

    def store_ternary(self, row: int, data, care) -> None:
        """Write a row with an explicit care mask (0 marks a don't-care cell)."""
        self._require(Mode.RAM)
        self._check_row(row)
        bits = np.asarray(data, dtype=np.uint8).ravel()
        mask = np.asarray(care, dtype=np.uint8).ravel()
        if bits.size > self.cols or bits.size != mask.size:
            raise ValueError(f"{self.name}: row data of {bits.size} bits does not fit "
                             f"{self.cols} columns")
        full_v = np.zeros(self.cols, dtype=np.uint8)
        full_c = np.zeros(self.cols, dtype=np.uint8)
        full_v[: bits.size] = bits & mask
        full_c[: mask.size] = mask != 0
        self._sensed = None
        self.value[row] = np.packbits(full_v)
        self.care[row] = np.packbits(full_c)
        self.valid[row] = True
        self._charge("cma_write")

    def load_rows(self, start: int, packed: np.ndarray, care: np.ndarray | None = None) -> None:
        """Offline bulk initialisation (table loading); no cost is charged."""
        packed = np.asarray(packed, dtype=np.uint8)
        n = packed.shape[0]
        if start < 0 or start + n > self.rows or packed.shape[1] > self.cols // 8:
            raise IndexError(f"{self.name}: bulk load of {n} rows at {start} does not fit")
        w = packed.shape[1]
        self._sensed = None
        self.value[start:start + n] = 0
        self.value[start:start + n, :w] = packed
        self.care[start:start + n] = 0
        if care is None:
            self.care[start:start + n, :w] = 0xFF
        else:
            self.care[start:start + n, :w] = care
            self.value[start:start + n] &= self.care[start:start + n]
        self.valid[start:start + n] = True

    def read_row(self, row: int) -> np.ndarray:
        self._require(Mode.RAM)
        self._check_row(row)
        self._charge("cma_read")
        return np.unpackbits(self.value[row] & self.care[row])

    # ---- GPCiM mode --------------------------------------------------
    def in_array_add(self, rows, lanes: int = 32, lane_bits: int = 8) -> np.ndarray:
        """Lane-wise sum of the given rows in a wide (int64) accumulator."""
        self._require(Mode.GPCIM)
        rows = list(rows)
        if not rows:
            raise ValueError(f"{self.name}: in_array_add needs at least one row")
        if lanes * lane_bits > self.cols:
            raise ValueError(f"{self.name}: {lanes}x{lane_bits} lanes exceed {self.cols} columns")
        for r in rows:
            self._check_row(r)
        acc = np.zeros(lanes, dtype=np.int64)
        for i, r in enumerate(rows):
            word = self.value[r] & self.care[r]
            if lane_bits == 8:
                acc += word[:lanes].view(np.int8)
            else:
                acc += lanes_from_bits(np.unpackbits(word), lanes, lane_bits)
            if i:
                self._charge("cma_add")
        self.accumulator = acc
        return acc.copy()

    # ---- CAM mode ----------------------------------------------------
    def mismatches(self, query) -> np.ndarray:
        """Per-row count of mismatching cared-for bits (no cost; sensing model)."""
        q = np.asarray(query, dtype=np.uint8).ravel()
        if q.size != self.cols:
            raise ValueError(f"{self.name}: query has {q.size} bits, array has {self.cols}")
        word = np.packbits(q)
        key = word.tobytes()
        # repeated searches with one query against unchanged contents reuse the counts
        if self._sensed is None or self._sensed[0] != key:
            diff = (self.value ^ word) & self.care
            self._sensed = (key, _POPCOUNT[diff].sum(axis=1, dtype=np.int64))
        return self._sensed[1].copy()

    def threshold_search(self, query, theta: int) -> SearchResult:
        """All valid rows within Hamming distance ``theta`` of ``query``."""
        self._require(Mode.CAM)
        dist = self.mismatches(query)
        hit = np.flatnonzero(self.valid & (dist <= theta))
        self._charge("cma_search")
        return SearchResult(tuple(hit.tolist()))
