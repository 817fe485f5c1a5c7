"""Symmetric mode sequences u_{-k} = u_k and their convolution products."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .radial import RadialFn, RadialGrid, norm_xq

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ModeSequence:
    """Modes u_0..u_K on one grid; row k of ``values`` holds u_k (negative k implicit)."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.grid.n:
            raise ValueError(f"expected shape (K+1, {self.grid.n}), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("mode values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_entries(cls, entries) -> "ModeSequence":
        entries = list(entries)
        grid = entries[0].grid
        for e in entries[1:]:
            if not grid.same_as(e.grid):
                raise ValueError("all modes must share one grid")
        return cls(grid, np.stack([e.values for e in entries]))

    @classmethod
    def zeros(cls, grid: RadialGrid, K: int) -> "ModeSequence":
        return cls(grid, np.zeros((K + 1, grid.n)))

    @classmethod
    def single(cls, grid: RadialGrid, K: int, k: int, f) -> "ModeSequence":
        v = np.zeros((K + 1, grid.n))
        v[k] = f.values if isinstance(f, RadialFn) else f
        return cls(grid, v)

    @property
    def K(self) -> int:
        return self.values.shape[0] - 1

    @property
    def entries(self) -> list[RadialFn]:
        return [RadialFn.from_values(self.grid, row) for row in self.values]

    def __getitem__(self, k: int) -> RadialFn:
        return RadialFn.from_values(self.grid, self.values[abs(k)])

    def _check(self, other: "ModeSequence"):
        if not self.grid.same_as(other.grid) or self.K != other.K:
            raise ValueError("mode sequences differ in grid or truncation")

    def __add__(self, other: "ModeSequence") -> "ModeSequence":
        self._check(other)
        return ModeSequence(self.grid, self.values + other.values)

    def __sub__(self, other: "ModeSequence") -> "ModeSequence":
        self._check(other)
        return ModeSequence(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "ModeSequence":
        return ModeSequence(self.grid, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "ModeSequence":
        return self * -1.0

    def truncate(self, K: int) -> "ModeSequence":
        v = np.zeros((K + 1, self.grid.n))
        j = min(K, self.K) + 1
        v[:j] = self.values[:j]
        return ModeSequence(self.grid, v)

    def mode_norms(self, q: float = 1) -> list[float]:
        return [norm_xq(e, q) for e in self.entries]

    def save(self, directory, prefix: str = "mode") -> None:
        """One CSV per mode plus ``<prefix>_manifest.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        files = []
        for k, e in enumerate(self.entries):
            name = f"{prefix}_{k:03d}.csv"
            e.to_csv(d / name)
            files.append(name)
        manifest = {"K": self.K, "norms": self.mode_norms(1), "files": files}
        (d / f"{prefix}_manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, directory, prefix: str = "mode", grid: RadialGrid | None = None) -> "ModeSequence":
        d = Path(directory)
        manifest = json.loads((d / f"{prefix}_manifest.json").read_text(encoding="utf-8"))
        first = RadialFn.from_csv(d / manifest["files"][0], grid)
        rest = [RadialFn.from_csv(d / f, first.grid) for f in manifest["files"][1:]]
        return cls.from_entries([first] + rest)


@lru_cache(maxsize=32)
def _cos_table(N: int, K: int) -> np.ndarray:
    t = 2 * np.pi * np.arange(N) / N
    return np.cos(np.outer(t, np.arange(K + 1)))


def _synthesize(c: np.ndarray, N: int) -> np.ndarray:
    """Time samples U(t_j) = c_0 + 2 sum_k c_k cos(k t_j) on N uniform nodes."""
    K = c.shape[0] - 1
    w = np.full(K + 1, 2.0)
    w[0] = 1.0
    return np.tensordot(_cos_table(N, K) * w, c, axes=(1, 0))


def mode_product(*factors: np.ndarray, K_out: int) -> np.ndarray:
    """Modes 0..K_out of the convolution a * b * ... of symmetric coefficient arrays.

    Each factor has mode index along axis 0.  The product of the cosine sums is
    sampled on enough time nodes to be alias-free, then projected back.
    """
    deg = sum(f.shape[0] - 1 for f in factors)
    N = 2 * max(deg, K_out) + 1
    prod = _synthesize(factors[0], N)
    for f in factors[1:]:
        prod = prod * _synthesize(f, N)
    out = np.tensordot(_cos_table(N, K_out).T, prod, axes=(1, 0)) / N
    if K_out > deg:
        out[deg + 1:] = 0.0
    return out


def triple_convolution(u: ModeSequence, K_out: int | None = None) -> ModeSequence:
    """(u * u * u)_k = sum over l + m + n = k of u_l u_m u_n, for k = 0..K_out."""
    K_out = u.K if K_out is None else K_out
    if K_out > 3 * u.K:
        log.debug("modes above 3K vanish identically")
    return ModeSequence(u.grid, mode_product(u.values, u.values, u.values, K_out=K_out))


def truncation_mass(u: ModeSequence) -> float:
    """X_3 mass 2 sum_{k=K+1}^{3K} |(u * u * u)_k| that the truncated cubic term discards."""
    full = mode_product(u.values, u.values, u.values, K_out=3 * u.K)[u.K + 1:]
    mass = 2 * sum(norm_xq(RadialFn.from_values(u.grid, row), 3) for row in full)
    log.debug("discarded cubic modes %d..%d carry X_3 mass %.3e", u.K + 1, 3 * u.K, mass)
    return float(mass)


def mode_norm(u: ModeSequence, q: float = 1) -> float:
    """norm_xq(u_0) + 2 sum_{k>=1} norm_xq(u_k)."""
    n = u.mode_norms(q)
    return float(n[0] + 2 * sum(n[1:]))


@dataclass(frozen=True)
class TailDecayReport:
    alpha: float
    constants: float
    ratios: list
    passed: bool

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "E_alpha": self.constants, "ratios": self.ratios,
                "pass": self.passed}


def tail_decay_report(u: ModeSequence, alpha: float, slack: float = 0.1) -> TailDecayReport:
    """Check ||u_k||_{X_1} (k^2+1)^{alpha/2} <= E_alpha, with E_alpha fitted on k <= K/2."""
    if u.K < 4:
        raise ValueError("need K >= 4 to fit a decay constant")
    k = np.arange(u.K + 1)
    ratios = np.array(u.mode_norms(1)) * (k * k + 1.0) ** (alpha / 2)
    head = k <= u.K / 2
    E = float(np.max(ratios[head]))
    ok = bool(np.all(ratios[~head] <= E * (1 + slack)))
    return TailDecayReport(float(alpha), E, [float(x) for x in ratios], ok)
