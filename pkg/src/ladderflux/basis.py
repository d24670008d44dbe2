"""Fixed particle-number sector of ``n_sites`` bosonic modes.

Configurations are occupation tuples ordered lexicographically (site 0 is the
most significant digit), so ``(0, ..., 0, N)``-like tails come first.  Ranking
is combinatorial: ``rank(c) = sum_i W[i, prefix_i, c_i]`` where ``W`` counts the
completions skipped by choosing a smaller digit at site ``i``.  For hard-core
bosons ``W`` reduces to binomial coefficients and configurations double as
bitmasks (site ``i`` is bit ``n_sites - 1 - i``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_INDEX_MAX = np.iinfo(np.int64).max


class SectorOverflowError(OverflowError):
    pass


@lru_cache(maxsize=None)
def _count_table(n_sites: int, local_dim: int, total_n: int) -> tuple[tuple[int, ...], ...]:
    """``table[m][n]`` = number of ways ``m`` sites hold ``n`` particles."""
    cap = local_dim - 1
    table = [[0] * (total_n + 1) for _ in range(n_sites + 1)]
    table[0][0] = 1
    for m in range(1, n_sites + 1):
        prev = table[m - 1]
        row = table[m]
        for n in range(total_n + 1):
            row[n] = sum(prev[n - v] for v in range(min(cap, n) + 1))
    return tuple(tuple(r) for r in table)


def _check_args(n_sites: int, local_dim: int, total_n: int) -> None:
    if n_sites < 1:
        raise ValueError(f"n_sites must be positive, got {n_sites}")
    if local_dim < 2:
        raise ValueError(f"local_dim must be >= 2, got {local_dim}")
    if not 0 <= total_n <= n_sites * (local_dim - 1):
        raise ValueError(
            f"total_n={total_n} out of range [0, {n_sites * (local_dim - 1)}] "
            f"for {n_sites} sites with local_dim={local_dim}")


def sector_dimension(n_sites: int, local_dim: int, total_n: int) -> int:
    """Number of configurations with exactly ``total_n`` particles."""
    _check_args(n_sites, local_dim, total_n)
    dim = _count_table(n_sites, local_dim, total_n)[n_sites][total_n]
    if dim > _INDEX_MAX:
        raise SectorOverflowError(
            f"sector dimension {dim} does not fit a 64-bit index "
            f"(n_sites={n_sites}, local_dim={local_dim}, total_n={total_n})")
    return dim


@dataclass(frozen=True, eq=False)
class SectorBasis:
    n_sites: int
    local_dim: int
    total_n: int
    configs: np.ndarray = field(repr=False)
    _weights: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.configs)

    def __len__(self) -> int:
        return len(self.configs)

    def rank(self, config) -> int:
        c = np.asarray(config, dtype=np.int64)
        if c.shape != (self.n_sites,):
            raise ValueError(f"expected {self.n_sites} occupations, got shape {c.shape}")
        if c.min() < 0 or c.max() >= self.local_dim:
            raise ValueError(f"occupation outside [0, {self.local_dim - 1}]: {tuple(c)}")
        if int(c.sum()) != self.total_n:
            raise ValueError(f"configuration holds {int(c.sum())} particles, sector has {self.total_n}")
        return int(self.rank_many(c[None, :])[0])

    def rank_many(self, configs: np.ndarray) -> np.ndarray:
        """Vectorised rank of in-sector configurations (no validation)."""
        configs = np.asarray(configs, dtype=np.int64)
        prefix = np.zeros(len(configs), dtype=np.int64)
        out = np.zeros(len(configs), dtype=np.int64)
        for i in range(self.n_sites):
            ci = configs[:, i]
            out += self._weights[i, prefix, ci]
            prefix += ci
        return out

    def unrank(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dim:
            raise IndexError(f"index {index} outside [0, {self.dim})")
        return tuple(int(v) for v in self.configs[index])

    def masks(self) -> np.ndarray:
        """Hard-core configurations packed as integers (site 0 = most significant bit)."""
        if self.local_dim != 2:
            raise ValueError("bitmasks only exist for local_dim = 2")
        shifts = np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        return (self.configs.astype(np.int64) << shifts).sum(axis=1)


def _weight_table(n_sites: int, local_dim: int, total_n: int) -> np.ndarray:
    cnt = _count_table(n_sites, local_dim, total_n)
    W = np.zeros((n_sites, total_n + 1, local_dim), dtype=np.int64)
    for i in range(n_sites):
        rest = n_sites - i - 1
        for s in range(total_n + 1):
            acc = 0
            for v in range(local_dim):
                W[i, s, v] = acc
                need = total_n - s - v
                if need >= 0:
                    acc += cnt[rest][need]
    return W


def _enumerate(n_sites: int, local_dim: int, total_n: int) -> np.ndarray:
    """All sector configurations in ascending lexicographic order."""
    cap = local_dim - 1
    rows: list[tuple[int, ...]] = []
    cur = [0] * n_sites

    def fill(i: int, left: int):
        if i == n_sites - 1:
            if left <= cap:
                cur[i] = left
                rows.append(tuple(cur))
            return
        room = cap * (n_sites - i - 1)
        for v in range(max(0, left - room), min(cap, left) + 1):
            cur[i] = v
            fill(i + 1, left - v)

    fill(0, total_n)
    return np.array(rows, dtype=np.int8).reshape(len(rows), n_sites)


@lru_cache(maxsize=64)
def build_sector(n_sites: int, local_dim: int, total_n: int) -> SectorBasis:
    dim = sector_dimension(n_sites, local_dim, total_n)
    configs = _enumerate(n_sites, local_dim, total_n)
    assert len(configs) == dim
    configs.setflags(write=False)
    return SectorBasis(n_sites, local_dim, total_n, configs, _weight_table(n_sites, local_dim, total_n))


def rank(basis: SectorBasis, config) -> int:
    return basis.rank(config)


def unrank(basis: SectorBasis, index: int) -> tuple[int, ...]:
    return basis.unrank(index)
