"""Bank -> mat -> CMA hierarchy with adder trees, IBC network and RSC bus.

Parallelism contract: CMAs of a mat, and mats of a bank, operate
concurrently; intra-bank tree passes and every bus transfer are serialised.
Controller counters (clock generator, bank/mat counters) are not charged.
"""

from __future__ import annotations

import math

import numpy as np

from .cma import Cma
from .config import ArchConfig, CostTable
from .ledger import CostLedger

LANES = 32


def reduction_rounds(inputs: int, fanin: int) -> int:
    """Passes through one shared ``fanin``-ary tree to reduce ``inputs`` values."""
    rounds = 0
    while inputs > 1:
        passes = math.ceil(inputs / fanin)
        rounds += passes
        inputs = passes
    return rounds


def _component(bank: int, mat: int | None = None, cma: int | None = None) -> str:
    parts = [f"b{bank}"]
    if mat is not None:
        parts.append(f"m{mat}")
    if cma is not None:
        parts.append(f"c{cma}")
    return "/".join(parts)


class Fabric:
    def __init__(self, arch: ArchConfig, cost: CostTable | None = None,
                 ledger: CostLedger | None = None):
        self.arch = arch
        self.cost = cost or CostTable()
        self.ledger = ledger if ledger is not None else CostLedger()
        self._cmas: dict[tuple[int, int, int], Cma] = {}
        self._buffers: dict[str, Cma] = {}

    # ---- structure ---------------------------------------------------
    def cma(self, bank: int, mat: int, cma: int) -> Cma:
        a = self.arch
        if not (0 <= bank < a.banks and 0 <= mat < a.mats_per_bank and 0 <= cma < a.cmas_per_mat):
            raise IndexError(f"no CMA at bank {bank}, mat {mat}, cma {cma}")
        key = (bank, mat, cma)
        if key not in self._cmas:
            self._cmas[key] = Cma(a.cma_rows, a.cma_cols, self.cost, _component(*key))
        return self._cmas[key]

    def buffer(self, name: str, rows: int, cols: int) -> Cma:
        """Auxiliary CMA outside the bank hierarchy (e.g. the CTR buffer)."""
        if name not in self._buffers:
            self._buffers[name] = Cma(rows, cols, self.cost, name)
        return self._buffers[name]

    def clear_buffers(self) -> None:
        self._buffers.clear()

    def set_cost(self, cost: CostTable) -> None:
        """Swap the figure-of-merit table; stored contents are untouched."""
        self.cost = cost
        for c in list(self._cmas.values()) + list(self._buffers.values()):
            c.cost = cost

    def mat_order(self, mats) -> list[list[int]]:
        """Controller visiting order: ascending mats, in groups of the tree fan-in."""
        ordered = sorted(mats)
        f = self.arch.intra_bank_fanin
        return [ordered[i:i + f] for i in range(0, len(ordered), f)]

    # ---- CMA operations routed into the ledger ------------------------
    def run(self, key: tuple[int, int, int], op: str, *args, group: int | None = None,
            lane: str | None = None, **kwargs):
        return self.run_on(self.cma(*key), op, *args, group=group, lane=lane, **kwargs)

    def run_on(self, cma: Cma, op: str, *args, group: int | None = None,
               lane: str | None = None, **kwargs):
        try:
            result = getattr(cma, op)(*args, **kwargs)
        finally:
            for name, fom in cma.drain():
                self.ledger.record(cma.name, name, fom.latency_ns, fom.energy_pj,
                                   group=group, lane=lane)
        return result

    # ---- adder trees --------------------------------------------------
    @staticmethod
    def _stack(inputs) -> np.ndarray:
        vecs = [np.asarray(v, dtype=np.int64) for v in inputs]
        if not vecs:
            raise ValueError("reduction needs at least one input")
        width = vecs[0].shape
        if any(v.shape != width for v in vecs):
            raise ValueError("lane-width mismatch between reduction inputs")
        if width != (LANES,):
            raise ValueError(f"reduction inputs must be {LANES} lanes wide, got {width}")
        return np.stack(vecs)

    def intra_mat_reduce(self, bank: int, mat: int, inputs, group: int | None = None) -> np.ndarray:
        stack = self._stack(inputs)
        if len(stack) > self.arch.cmas_per_mat:
            raise ValueError(f"intra-mat tree takes at most {self.arch.cmas_per_mat} inputs")
        f = self.cost.intra_mat_add
        self.ledger.record(f"{_component(bank, mat)}/tree", "intra_mat_add", f.latency_ns,
                           f.energy_pj, group=group)
        return stack.sum(axis=0)

    def intra_bank_reduce(self, bank: int, inputs, group: int | None = None,
                          lane: str | None = None) -> np.ndarray:
        stack = self._stack(inputs)
        if len(stack) > self.arch.mats_per_bank:
            raise ValueError(f"intra-bank tree takes at most {self.arch.mats_per_bank} inputs")
        rounds = reduction_rounds(len(stack), self.arch.intra_bank_fanin)
        f = self.cost.intra_bank_add
        if group is None and rounds:
            group = self.ledger.new_group()
        comp = f"{_component(bank)}/tree"
        for _ in range(rounds):
            self.ledger.record(comp, "intra_bank_add", f.latency_ns, f.energy_pj,
                               group=group, lane=lane or comp)
        return stack.sum(axis=0)

    # ---- communication -----------------------------------------------
    def ibc_transfer(self, bank: int, payload_bytes: int, group: int | None = None,
                     lane: str | None = None) -> int:
        if payload_bytes < 0:
            raise ValueError("payload must be non-negative")
        shots = math.ceil(payload_bytes / self.arch.ibc_shot_bytes)
        if group is None and shots:
            group = self.ledger.new_group()
        comp = f"{_component(bank)}/ibc"
        for _ in range(shots):
            self.ledger.record(comp, "ibc_shot", self.arch.bus_latency_ns,
                               self.arch.bus_energy_pj, group=group, lane=lane or comp)
        return shots

    def rsc_transfer(self, src: str, dst: str, payload_bits: int,
                     group: int | None = None) -> int:
        if payload_bits < 0:
            raise ValueError("payload must be non-negative")
        words = math.ceil(payload_bits / self.arch.rsc_bus_width)
        if group is None and words:
            group = self.ledger.new_group()
        for _ in range(words):
            self.ledger.record(f"rsc:{src}->{dst}", "rsc_word", self.arch.bus_latency_ns,
                               self.arch.bus_energy_pj, group=group, lane="rsc")
        return words
