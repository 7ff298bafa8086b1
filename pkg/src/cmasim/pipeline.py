"""Two-stage recommendation inference executed on the modelled fabric.

Filtering: sparse lookups + pooling, dense-feature stack, filtering MLP
producing the user embedding, then a fixed-radius Hamming search over item
signatures.  Ranking: per candidate, item and user-item lookups, dense stack,
ranking MLP producing a CTR; CTRs land in a CAM buffer as thermometer codes
and the top-k is read out by threshold searches against the all-ones word.

Stage phases are barrier-synchronised by the controller: all banks finish
their lookups before the intra-mat trees fire, and so on.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import synth
from .cma import Mode, lanes_from_bits
from .config import ArchConfig, CostTable, ValidationError, WorkloadConfig
from .fabric import LANES, Fabric
from .ledger import CostLedger, Totals
from .mapper import Placement, entry_at, locate, place_tables
from .model import EmbeddingTableData, LshModel, Mlp, crossbar_tiles, quantize_table

STAGES = ("filtering", "ranking")


@dataclass
class Query:
    dense: np.ndarray
    sparse: dict[str, list[int]]
    theta: int | None = None
    top_k: int | None = None

    @classmethod
    def from_record(cls, rec: dict) -> Query:
        return cls(np.asarray(rec.get("dense", []), dtype=np.float64),
                   {k: [int(i) for i in v] for k, v in rec.get("sparse", {}).items()},
                   rec.get("theta"), rec.get("top_k"))


@dataclass
class CtrBuffer:
    items: list[int] = field(default_factory=list)
    ctrs: list[float] = field(default_factory=list)
    codes: list[np.ndarray] = field(default_factory=list)

    def __len__(self):
        return len(self.items)


@dataclass
class QueryResult:
    top_k: list[int]
    ctrs: list[float]
    candidates: int
    ledger: CostLedger

    def stage_totals(self) -> dict[str, Totals]:
        return {s: self.ledger.totals(stage=s) for s in STAGES}


def thermometer(ctr: float, width: int) -> np.ndarray:
    level = int(np.clip(round(float(ctr) * width), 0, width))
    code = np.zeros(width, dtype=np.uint8)
    code[:level] = 1
    return code


def _pad(x: np.ndarray, width: int, what: str) -> np.ndarray:
    if len(x) > width:
        raise ValidationError(f"{what}: feature vector of width {len(x)} exceeds DNN input {width}")
    # unused crossbar wordlines are driven at zero
    return np.concatenate([x, np.zeros(width - len(x))])


class Simulator:
    """Placement, populated fabric and model weights for one workload."""

    def __init__(self, arch: ArchConfig, cost: CostTable, work: WorkloadConfig,
                 tables: dict[str, np.ndarray] | None = None, seed: int | None = None):
        self.arch, self.work = arch, work
        self.seed = work.seed if seed is None else seed
        self.placement: Placement = place_tables(arch, work)
        self.fabric = Fabric(arch, cost)
        ss = np.random.SeedSequence(self.seed)
        data_seq, lsh_seq, dnn_seq = ss.spawn(3)
        raw = dict(tables) if tables is not None else synth.make_tables(
            work, np.random.default_rng(data_seq))
        item = work.item_table
        self.lsh = (LshModel.from_seed(int(lsh_seq.generate_state(1)[0]), work.lsh_bits, item.dim)
                    if item is not None else None)
        self.data: dict[str, EmbeddingTableData] = {}
        for t in work.tables:
            rows = np.asarray(raw[t.id], dtype=np.float64)
            if rows.shape[1] != t.dim or not 1 <= len(rows) <= t.entries:
                raise ValidationError(f"table {t.id}: data shape {rows.shape} does not match "
                                      f"{t.entries} x {t.dim}")
            q = quantize_table(rows)
            if t.is_item_table:
                q = EmbeddingTableData(q.rows, q.scale, self.lsh.signatures(q.dequantized()))
            self.data[t.id] = q
        rng = np.random.default_rng(dnn_seq)
        self.nets: dict[str, tuple[Mlp, Mlp]] = {}
        for stage in STAGES:
            spec = getattr(work, stage)
            if spec is not None:
                out = "linear" if stage == "filtering" else "sigmoid"
                self.nets[stage] = (Mlp.random(f"{stage}.dense", spec.dense, rng),
                                    Mlp.random(f"{stage}.main", spec.main, rng, out))
        if "filtering" in self.nets and self.nets["filtering"][1].widths[-1] != item.dim:
            raise ValidationError("filtering network must emit an item-sized user embedding")
        if "ranking" in self.nets and self.nets["ranking"][1].widths[-1] != 1:
            raise ValidationError("ranking network must emit a single CTR")
        self._populate()

    # ------------------------------------------------------------------
    def _populate(self) -> None:
        R = self.arch.cma_rows
        for t in self.work.tables:
            tp, d = self.placement[t.id], self.data[t.id]
            packed = d.rows.view(np.uint8)
            if d.signatures is not None:
                sig_packed = np.packbits(d.signatures, axis=1)
                sig_care = np.packbits(np.ones(d.signatures.shape[1], dtype=np.uint8))
            for k, slot in enumerate(tp.slots):
                chunk = slice(k * R, min((k + 1) * R, d.entries))
                if chunk.start >= chunk.stop:
                    continue
                self.fabric.cma(tp.bank, slot.mat, slot.cma).load_rows(slot.row_start, packed[chunk])
                if d.signatures is not None:
                    s = tp.signature_slots[k]
                    rows = sig_packed[chunk]
                    self.fabric.cma(tp.bank, s.mat, s.cma).load_rows(
                        s.row_start, rows, np.broadcast_to(sig_care, rows.shape))

    @property
    def cost(self) -> CostTable:
        return self.fabric.cost

    def set_cost(self, cost: CostTable, arch: ArchConfig | None = None) -> None:
        """Swap cost parameters; functional state is untouched."""
        self.fabric.set_cost(cost)
        if arch is not None:
            if (arch.banks, arch.mats_per_bank, arch.cmas_per_mat, arch.cma_rows,
                    arch.cma_cols) != (self.arch.banks, self.arch.mats_per_bank,
                                       self.arch.cmas_per_mat, self.arch.cma_rows,
                                       self.arch.cma_cols):
                raise ValueError("only bus parameters may change on a populated fabric")
            self.arch = arch
            self.fabric.arch = arch

    @property
    def ledger(self) -> CostLedger:
        return self.fabric.ledger

    # ---- embedding lookups --------------------------------------------
    def lookup_and_pool(self, table: str, indices, mode: str = "sum") -> np.ndarray:
        return self.pool_tables({table: list(indices)}, mode)[table]

    def pool_tables(self, requests: dict[str, list[int]], mode: str = "sum") -> dict[str, np.ndarray]:
        """Look up and pool several tables concurrently (one bank each).

        Returns integer lanes: the wide element-wise sum of the selected rows
        (``sum``) or their concatenation in index order (``concat``).
        """
        if mode not in ("sum", "concat"):
            raise ValueError("mode must be 'sum' or 'concat'")
        f, led = self.fabric, self.fabric.ledger
        activated = self.cost.lookup_energy_scope == "activated"
        g_read, g_mat, g_bank, g_rsc = (led.new_group() for _ in range(4))
        results, mat_outputs = {}, {}
        for table, indices in requests.items():
            tp = self.placement[table]
            spec = self.work.table(table)
            if not indices:
                raise ValueError(f"table {table}: empty index list")
            n_loaded = self.data[table].entries
            locs = []
            for i in indices:
                if not 0 <= i < n_loaded:
                    raise IndexError(f"table {table}: index {i} outside [0, {n_loaded})")
                locs.append(locate(self.placement, table, i))
            by_cma: dict[tuple[int, int], list[int]] = defaultdict(list)
            for loc in locs:
                by_cma[(loc.mat, loc.cma)].append(loc.row)
            lanes_per_row = {}
            partial: dict[int, list[np.ndarray]] = defaultdict(list)
            longest: list = []
            for (mat, cma), rows in sorted(by_cma.items()):
                key = (tp.bank, mat, cma)
                c = f.cma(*key)
                c.set_mode(Mode.RAM)
                for r in rows:
                    bits = f.run(key, "read_row", r, group=g_read)
                    lanes_per_row[(mat, cma, r)] = lanes_from_bits(bits, spec.dim)
                chain = ["cma_read"] * len(rows)
                if mode == "sum":
                    c.set_mode(Mode.GPCIM)
                    vec = f.run(key, "in_array_add", rows, lanes=spec.dim, group=g_read)
                    for _ in rows[1:]:
                        # partial sum written into the GPCiM accumulator
                        led.record(c.name, "cma_write", self.cost.cma_write.latency_ns,
                                   self.cost.cma_write.energy_pj, group=g_read)
                    c.set_mode(Mode.RAM)
                    partial[mat].append(_widen(vec))
                    chain += ["cma_add", "cma_write"] * (len(rows) - 1)
                if len(chain) > len(longest):
                    longest = chain
            idle = len(tp.slots) - len(by_cma)
            if activated and idle > 0:
                comp = f"b{tp.bank}/lockstep"
                for op in longest:
                    fom = getattr(self.cost, op)
                    led.record(comp, op, fom.latency_ns, fom.energy_pj * idle,
                               group=g_read, lane=comp, count=idle)
            if mode == "concat":
                results[table] = np.concatenate(
                    [lanes_per_row[(l.mat, l.cma, l.row)] for l in locs]).astype(np.int64)
                continue
            mats = sorted({s.mat for s in tp.slots}) if activated else sorted(partial)
            outs = {}
            for m in mats:
                ins = partial.get(m) or [np.zeros(LANES, dtype=np.int64)]
                outs[m] = f.intra_mat_reduce(tp.bank, m, ins, group=g_mat)
            mat_outputs[table] = outs
        for table, outs in mat_outputs.items():
            tp = self.placement[table]
            lane = f"b{tp.bank}"
            f.ibc_transfer(tp.bank, 32 * len(outs), group=g_bank, lane=lane)
            ordered = [outs[m] for grp in f.mat_order(outs) for m in grp]
            total = f.intra_bank_reduce(tp.bank, ordered, group=g_bank, lane=lane)
            results[table] = total[: self.work.table(table).dim]
        for table in requests:
            tp = self.placement[table]
            n_bits = 256 if mode == "sum" else 256 * len(requests[table])
            if mode == "concat":
                f.ibc_transfer(tp.bank, n_bits // 8, group=g_bank, lane=f"b{tp.bank}")
            f.rsc_transfer(f"b{tp.bank}", "xbar", n_bits, group=g_rsc)
        return results

    def pooled_real(self, table: str, lanes: np.ndarray) -> np.ndarray:
        return lanes.astype(np.float64) * self.data[table].scale

    # ---- crossbar DNN ---------------------------------------------------
    def dnn_forward(self, net: Mlp, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (net.widths[0],):
            raise ValueError(f"{net.name}: input width {x.shape} != {net.widths[0]}")
        fom, led = self.cost.crossbar_matmul, self.fabric.ledger
        for i, w in enumerate(net.weights):
            tiles = crossbar_tiles(w.shape[1], w.shape[0], self.cost.crossbar_rows,
                                   self.cost.crossbar_cols)
            g = led.new_group()
            for t in range(tiles):
                led.record(f"xbar:{net.name}/l{i}/t{t}", "crossbar_matmul", fom.latency_ns,
                           fom.energy_pj, group=g)
            x = net.layer(i, x)
        return x

    def _dense(self, stage: str, dense: np.ndarray) -> np.ndarray:
        self.ledger.tag(category="dnn")
        net = self.nets[stage][0]
        self.fabric.rsc_transfer("host", "xbar", 8 * len(dense))
        return self.dnn_forward(net, dense)

    # ---- filtering ----------------------------------------------------
    def filtering_stage(self, q: Query) -> tuple[np.ndarray, list[int]]:
        item = self.work.item_table
        if item is None or "filtering" not in self.nets:
            raise ValidationError("filtering needs an item table and a filtering network")
        led = self.ledger
        led.tag("filtering", "et_lookup")
        tables = [t.id for t in self.work.stage_tables("filtering")] + [item.id]
        pooled = self.pool_tables(self._requests(q, tables), self.work.pooling)
        sparse = self._combine(pooled)
        dense_out = self._dense("filtering", q.dense)
        net = self.nets["filtering"][1]
        x = _pad(np.concatenate([dense_out, sparse]), net.widths[0], "filtering")
        u = self.dnn_forward(net, x)
        theta = self.work.theta if q.theta is None else q.theta
        return u, self.nns_candidates(u, theta)

    def _requests(self, q: Query, tables) -> dict[str, list[int]]:
        out = {}
        for t in tables:
            if t not in q.sparse:
                raise ValidationError(f"query lacks indices for table {t!r}")
            out[t] = q.sparse[t]
        return out

    def _combine(self, pooled: dict[str, np.ndarray]) -> np.ndarray:
        vecs = [self.pooled_real(t, v) for t, v in pooled.items()]
        if self.work.pooling == "sum":
            return np.sum(vecs, axis=0) if vecs else np.zeros(0)
        return np.concatenate(vecs) if vecs else np.zeros(0)

    def nns_candidates(self, u, theta: int) -> list[int]:
        """Fixed-radius Hamming search of ``sig(u)`` over every signature CMA."""
        item = self.work.item_table
        if item is None:
            raise ValidationError("workload has no item table to search")
        led, f = self.ledger, self.fabric
        led.tag(category="nns")
        sig = self.lsh.signature(u)
        # the hash projection runs as one more crossbar layer
        tiles = crossbar_tiles(len(u), len(sig), self.cost.crossbar_rows, self.cost.crossbar_cols)
        g = led.new_group()
        for t in range(tiles):
            led.record(f"xbar:lsh/t{t}", "crossbar_matmul", self.cost.crossbar_matmul.latency_ns,
                       self.cost.crossbar_matmul.energy_pj, group=g)
        tp = self.placement[item.id]
        f.rsc_transfer("xbar", f"b{tp.bank}", len(sig))
        query = np.zeros(self.arch.cma_cols, dtype=np.uint8)
        query[: len(sig)] = sig
        g = led.new_group()
        found = []
        for k, s in enumerate(tp.signature_slots):
            key = (tp.bank, s.mat, s.cma)
            f.cma(*key).set_mode(Mode.CAM)
            res = f.run(key, "threshold_search", query, theta, group=g)
            f.cma(*key).set_mode(Mode.RAM)
            found.extend(entry_at(self.placement, item.id, k, r) for r in res.matched_rows)
        index_bits = max(1, math.ceil(math.log2(item.entries))) if item.entries > 1 else 1
        f.rsc_transfer(f"b{tp.bank}", "item_buffer", index_bits * len(found))
        return found

    # ---- ranking ------------------------------------------------------
    def score(self, q: Query, candidate: int | None) -> float:
        """CTR of one (query, candidate) input; ``None`` for item-less workloads."""
        led = self.ledger
        led.tag("ranking", "et_lookup")
        tables = [t.id for t in self.work.stage_tables("ranking")]
        requests = self._requests(q, tables)
        item = self.work.item_table
        if candidate is not None:
            requests[item.id] = [candidate]
        pooled = self.pool_tables(requests, self.work.pooling)
        item_vec = (self.pooled_real(item.id, pooled.pop(item.id))
                    if candidate is not None else np.zeros(0))
        sparse = self._combine(pooled)
        dense_out = self._dense("ranking", q.dense)
        net = self.nets["ranking"][1]
        x = _pad(np.concatenate([dense_out, item_vec, sparse]), net.widths[0], "ranking")
        return float(self.dnn_forward(net, x)[0])

    def ranking_stage(self, items: list[int], q: Query, k: int | None = None):
        if not items:
            raise ValueError("ranking needs at least one candidate")
        if "ranking" not in self.nets:
            raise ValidationError("workload has no ranking network")
        buf = CtrBuffer()
        for cand in items:
            ctr = self.score(q, cand)
            self._store_ctr(buf, cand, ctr)
        k = self.work.top_k if k is None else k
        return self.select_topk(buf, min(k, len(buf))), buf

    def _store_ctr(self, buf: CtrBuffer, item: int, ctr: float) -> None:
        led, f = self.ledger, self.fabric
        led.tag(category="topk")
        cols, R = self.arch.cma_cols, self.arch.cma_rows
        code = thermometer(ctr, cols)
        f.rsc_transfer("xbar", "ctr_buffer", self.arch.rsc_bus_width)
        row = len(buf)
        cma = f.buffer(f"ctrbuf{row // R}", R, cols)
        cma.set_mode(Mode.RAM)
        f.run_on(cma, "write_row", row % R, code)
        buf.items.append(item)
        buf.ctrs.append(ctr)
        buf.codes.append(code)

    def load_ctr_buffer(self, ctrs, items=None) -> CtrBuffer:
        """Fill a fresh CTR buffer (used directly by tests and tools)."""
        self.fabric.clear_buffers()
        buf = CtrBuffer()
        items = range(len(ctrs)) if items is None else items
        for it, c in zip(items, ctrs):
            self._store_ctr(buf, int(it), float(c))
        return buf

    def select_topk(self, buf: CtrBuffer, k: int) -> list[int]:
        """Top-k by repeated all-ones threshold searches with growing radius."""
        if k > len(buf):
            raise ValueError(f"k={k} exceeds the {len(buf)} buffered CTRs")
        if k <= 0:
            return []
        led, f = self.ledger, self.fabric
        led.tag(category="topk")
        cols, R = self.arch.cma_cols, self.arch.cma_rows
        buffers = [f.buffer(f"ctrbuf{i}", R, cols) for i in range(math.ceil(len(buf) / R))]
        for b in buffers:
            b.set_mode(Mode.CAM)
        ones = np.ones(cols, dtype=np.uint8)
        chosen: list[int] = []
        seen: set[int] = set()
        for theta in range(cols + 1):
            g = led.new_group()
            matched = []
            for i, b in enumerate(buffers):
                res = f.run_on(b, "threshold_search", ones, theta, group=g)
                matched.extend(i * R + r for r in res.matched_rows)
            fresh = [r for r in matched if r not in seen]
            for r in fresh:
                if len(chosen) == k:
                    break
                chosen.append(r)
                seen.add(r)
            if len(chosen) == k:
                break
        for b in buffers:
            b.set_mode(Mode.RAM)
        return [buf.items[r] for r in chosen]

    # ---- end to end ---------------------------------------------------
    def run_query(self, q: Query) -> QueryResult:
        led = CostLedger()
        self.fabric.ledger = led
        self.fabric.clear_buffers()
        k = self.work.top_k if q.top_k is None else q.top_k
        if self.work.item_table is None:
            ctr = self.score(q, None)
            return QueryResult([], [ctr], 0, led)
        _, candidates = self.filtering_stage(q)
        if not candidates or "ranking" not in self.nets:
            return QueryResult([], [], len(candidates), led)
        led.tag("ranking")
        top, buf = self.ranking_stage(candidates, q, k)
        ctr_of = dict(zip(buf.items, buf.ctrs))
        return QueryResult(top, [ctr_of[i] for i in top], len(candidates), led)


def _widen(v: np.ndarray) -> np.ndarray:
    out = np.zeros(LANES, dtype=np.int64)
    out[: len(v)] = v
    return out
