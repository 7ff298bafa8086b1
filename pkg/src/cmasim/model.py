"""Quantised embedding tables, random-hyperplane LSH and MLP weights."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EmbeddingTableData:
    rows: np.ndarray  # (n, dim) int8
    scale: float
    signatures: np.ndarray | None = None  # (n, L) uint8 bits

    def __post_init__(self):
        if self.signatures is not None and len(self.signatures) != len(self.rows):
            raise ValueError("one signature per embedding row is required")

    @property
    def entries(self) -> int:
        return len(self.rows)

    def dequantized(self) -> np.ndarray:
        return self.rows.astype(np.float64) * self.scale


def quantize_table(x) -> EmbeddingTableData:
    """Symmetric linear int8 quantisation with ``scale = max|x| / 127``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) < 1:
        raise ValueError("expected a non-empty (n, dim) table")
    if not np.all(np.isfinite(x)):
        raise ValueError("table contains non-finite values")
    peak = float(np.abs(x).max())
    scale = peak / 127.0 if peak > 0 else 1.0
    q = np.clip(np.rint(x / scale), -127, 127).astype(np.int8)
    return EmbeddingTableData(q, scale)


@dataclass(frozen=True)
class LshModel:
    hyperplanes: np.ndarray  # (L, dim)
    seed: int

    @classmethod
    def from_seed(cls, seed: int, bits: int = 256, dim: int = 32) -> LshModel:
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((bits, dim)), seed)

    @property
    def bits(self) -> int:
        return self.hyperplanes.shape[0]

    def signature(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.hyperplanes.shape[1],):
            raise ValueError(f"expected a {self.hyperplanes.shape[1]}-vector, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite input to LSH")
        return (self.hyperplanes @ v >= 0).astype(np.uint8)

    def signatures(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=np.float64)
        return (m @ self.hyperplanes.T >= 0).astype(np.uint8)


ACTIVATIONS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "linear": lambda z: z,
    "sigmoid": lambda z: 1.0 / (1.0 + np.exp(-z)),
}


@dataclass
class Mlp:
    """Fully connected stack; ReLU between layers, configurable output."""

    name: str
    weights: list[np.ndarray]  # each (out, in)
    biases: list[np.ndarray]
    output: str = "relu"

    @classmethod
    def random(cls, name: str, widths, rng: np.random.Generator, output: str = "relu") -> Mlp:
        ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            ws.append(rng.standard_normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in))
            bs.append(rng.standard_normal(fan_out) * 0.01)
        return cls(name, ws, bs, output)

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def layer(self, i: int, x: np.ndarray) -> np.ndarray:
        z = self.weights[i] @ x + self.biases[i]
        act = self.output if i == len(self.weights) - 1 else "relu"
        return ACTIVATIONS[act](z)


def crossbar_tiles(fan_in: int, fan_out: int, rows: int = 256, cols: int = 128) -> int:
    """Crossbar tiles (``rows`` inputs x ``cols`` outputs) covering one weight matrix."""
    return math.ceil(fan_in / rows) * math.ceil(fan_out / cols)
