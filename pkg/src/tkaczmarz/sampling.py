"""Block families over row indices and their sampling distributions."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np

from .errors import ConfigError
from .rng import PARTITION, RandomStream
from .spectral import ENUMERATION_LIMIT, spectrum
from .tensor import _check3

__all__ = [
    "BlockSet",
    "BlockConstants",
    "make_all_of_size",
    "make_singletons",
    "make_whole",
    "make_explicit",
    "make_equal_partition",
    "make_variable_partition",
    "sample_block",
    "block_constants",
    "sigma_min_plus_sq",
]

ALL_OF_SIZE = "all_of_size"
EXPLICIT = "explicit"
PARTITION_KIND = "partition"
UNIFORM = "uniform"
SIGMA = "sigma"


@dataclass(frozen=True)
class BlockSet:
    """A family ``T`` of row blocks of an ``m``-row tensor plus a distribution on it.

    ``kind`` is one of ``"all_of_size"`` (every ``size``-subset of ``[m]``, never
    materialised), ``"explicit"`` or ``"partition"``.  ``distribution`` is
    ``"uniform"`` or ``"sigma"``; the latter samples ``tau`` with probability
    proportional to ``weights[tau] = sigma_min+^2(bcirc(M[tau]))``.
    """

    kind: str
    host_rows: int
    size: int | None = None
    members: tuple[tuple[int, ...], ...] | None = None
    distribution: str = UNIFORM
    weights: tuple[float, ...] | None = None
    _cumulative: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = self.host_rows
        if m < 1:
            raise ConfigError(f"host must have at least one row, got {m}")
        if self.kind == ALL_OF_SIZE:
            if self.size is None or not 1 <= self.size <= m:
                raise ConfigError(f"block size must be in [1, {m}], got {self.size}")
            if self.distribution != UNIFORM:
                raise ConfigError("all-of-size families are sampled uniformly; enumerate them first")
            return
        if self.kind not in (EXPLICIT, PARTITION_KIND):
            raise ConfigError(f"unknown block family kind {self.kind!r}")
        if not self.members:
            raise ConfigError("empty block family")
        for tau in self.members:
            if not tau:
                raise ConfigError("empty block in family")
            if len(set(tau)) != len(tau):
                raise ConfigError(f"block {list(tau)} repeats a row")
            if min(tau) < 0 or max(tau) >= m:
                raise ConfigError(f"block {list(tau)} out of range for {m} rows")
        if self.kind == PARTITION_KIND:
            flat = sorted(i for tau in self.members for i in tau)
            if flat != list(range(m)):
                raise ConfigError("partition blocks must be disjoint and cover every row")
        if self.distribution == SIGMA:
            if self.weights is None or len(self.weights) != len(self.members):
                raise ConfigError("sigma-weighted sampling needs one weight per block")
            if min(self.weights) <= 0:
                raise ConfigError("sigma-weighted sampling needs strictly positive weights")
            object.__setattr__(self, "_cumulative", np.cumsum(self.weights))
        elif self.distribution != UNIFORM:
            raise ConfigError(f"unknown distribution {self.distribution!r}")

    # -- family statistics -------------------------------------------------

    @property
    def n_members(self) -> int:
        if self.kind == ALL_OF_SIZE:
            return comb(self.host_rows, self.size)
        return len(self.members)

    @property
    def d_T(self) -> int:
        """Size of the largest block."""
        if self.kind == ALL_OF_SIZE:
            return self.size
        return max(len(tau) for tau in self.members)

    @property
    def c_max(self) -> int:
        """Largest number of blocks any single row belongs to."""
        if self.kind == ALL_OF_SIZE:
            return comb(self.host_rows - 1, self.size - 1)
        counts = np.zeros(self.host_rows, dtype=int)
        for tau in self.members:
            counts[list(tau)] += 1
        return int(counts.max())

    def probabilities(self) -> np.ndarray:
        n = self.n_members
        if self.distribution == SIGMA:
            w = np.asarray(self.weights, dtype=float)
            return w / w.sum()
        return np.full(n, 1.0 / n)

    def iter_members(self):
        if self.kind == ALL_OF_SIZE:
            return itertools.combinations(range(self.host_rows), self.size)
        return iter(self.members)

    def members_with_prob(self):
        """Yield ``(block, probability)`` over the whole family."""
        if self.kind == ALL_OF_SIZE:
            prob = 1.0 / self.n_members
            for tau in self.iter_members():
                yield tau, prob
        else:
            yield from zip(self.members, self.probabilities())

    def member(self, index: int) -> tuple[int, ...]:
        """Deterministic ``index``-th block, cycling; used by the cyclic debug mode."""
        if self.kind == ALL_OF_SIZE:
            if self.size != 1:
                raise ConfigError("cyclic order is only defined for singleton or explicit families")
            return (index % self.host_rows,)
        return self.members[index % len(self.members)]

    def sample(self, stream: RandomStream) -> tuple[int, ...]:
        return sample_block(self, stream)

    def check_host(self, m: np.ndarray, what: str = "tensor") -> None:
        """Blocks must index rows of ``m`` and be no taller than ``m`` is wide."""
        _check3(m)
        if m.shape[0] != self.host_rows:
            raise ConfigError(f"block family is over {self.host_rows} rows but {what} has {m.shape[0]}")
        if self.d_T > m.shape[1]:
            raise ConfigError(
                f"blocks of size {self.d_T} cannot have invertible grams: {what} has only {m.shape[1]} columns"
            )

    def with_sigma_weights(self, m: np.ndarray, enumeration_limit: int = ENUMERATION_LIMIT) -> BlockSet:
        """Same family, sampled proportionally to ``sigma_min+^2(bcirc(m[tau]))``."""
        fam = self
        if self.kind == ALL_OF_SIZE:
            if self.n_members > enumeration_limit:
                raise ConfigError("sigma weighting needs an enumerable family")
            fam = make_explicit(self.host_rows, list(self.iter_members()))
        w = tuple(sigma_min_plus_sq(m, tau) for tau in fam.members)
        return replace(fam, distribution=SIGMA, weights=w)

    def describe(self) -> dict:
        d = {"kind": self.kind, "host_rows": self.host_rows, "distribution": self.distribution}
        if self.kind == ALL_OF_SIZE:
            d["size"] = self.size
        else:
            d["members"] = [list(t) for t in self.members]
        if self.weights is not None:
            d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> BlockSet:
        kind = d["kind"]
        if kind == ALL_OF_SIZE:
            return make_all_of_size(int(d["host_rows"]), int(d["size"]))
        members = tuple(tuple(int(i) for i in t) for t in d["members"])
        weights = tuple(float(w) for w in d["weights"]) if d.get("weights") is not None else None
        return cls(kind, int(d["host_rows"]), members=members,
                   distribution=d.get("distribution", UNIFORM), weights=weights)


@dataclass(frozen=True)
class BlockConstants:
    d_T: int
    c_max: int
    theta: float
    sigma_weighted: bool
    exact: bool


def sigma_min_plus_sq(m: np.ndarray, tau) -> float:
    return spectrum(m[list(tau)]).sigma_min_plus ** 2


def make_all_of_size(m: int, k: int) -> BlockSet:
    if k > m or k < 1:
        raise ConfigError(f"block size {k} not in [1, {m}]")
    return BlockSet(ALL_OF_SIZE, m, size=k)


def make_singletons(m: int) -> BlockSet:
    return BlockSet(EXPLICIT, m, members=tuple((i,) for i in range(m)))


def make_whole(m: int) -> BlockSet:
    """The single block containing every row."""
    return BlockSet(EXPLICIT, m, members=(tuple(range(m)),))


def make_explicit(m: int, members) -> BlockSet:
    return BlockSet(EXPLICIT, m, members=tuple(tuple(int(i) for i in t) for t in members))


def _cut(order: list[int], sizes: list[int]) -> tuple[tuple[int, ...], ...]:
    out, start = [], 0
    for s in sizes:
        out.append(tuple(sorted(order[start:start + s])))
        start += s
    return tuple(out)


def make_equal_partition(m: int, k: int, seed: int) -> BlockSet:
    """Random partition of ``[m]`` into blocks of ``k`` rows (the last may be short)."""
    if not 1 <= k <= m:
        raise ConfigError(f"block size {k} not in [1, {m}]")
    order = RandomStream(seed, PARTITION).permutation(m)
    sizes = [k] * (m // k) + ([m % k] if m % k else [])
    return BlockSet(PARTITION_KIND, m, members=_cut(order, sizes))


def make_variable_partition(m: int, mean_k: int, spread: int, seed: int) -> BlockSet:
    """Random partition with block sizes uniform on ``[max(1, mean_k - spread), mean_k + spread]``.

    Sizes are drawn until they would overshoot ``m``; the last block takes
    whatever rows remain.
    """
    lo, hi = max(1, mean_k - spread), mean_k + spread
    if mean_k < 1 or spread < 0 or hi > m:
        raise ConfigError(f"infeasible variable partition: m={m}, mean={mean_k}, spread={spread}")
    stream = RandomStream(seed, PARTITION)
    sizes, total = [], 0
    while total < m:
        s = lo + stream.integer(hi - lo + 1)
        if total + s >= m:
            s = m - total
        sizes.append(s)
        total += s
    order = stream.permutation(m)
    return BlockSet(PARTITION_KIND, m, members=_cut(order, sizes))


def sample_block(bs: BlockSet, stream: RandomStream) -> tuple[int, ...]:
    if bs.kind == ALL_OF_SIZE:
        if bs.size == 1:
            return (stream.integer(bs.host_rows),)
        return stream.subset(bs.host_rows, bs.size)
    if bs.distribution == SIGMA:
        return bs.members[stream.choice(bs._cumulative)]
    return bs.members[stream.integer(len(bs.members))]


def block_constants(bs: BlockSet, m: np.ndarray, *, monte_carlo: int | None = None,
                    stream: RandomStream | None = None,
                    enumeration_limit: int = ENUMERATION_LIMIT) -> BlockConstants:
    """``d_T``, ``c_max`` and the theta constant of ``bs`` on tensor ``m``.

    theta is ``d_T p c_max / sum_tau sigma_min+^2(bcirc(m[tau]))`` for
    sigma-weighted sampling and ``d_T p E[sigma_min+^-2(bcirc(m[tau]))]``
    otherwise.
    """
    bs.check_host(m)
    p = m.shape[2]
    d, c = bs.d_T, bs.c_max
    if bs.distribution == SIGMA:
        theta = d * p * c / float(sum(bs.weights))
        return BlockConstants(d, c, theta, True, True)
    if bs.n_members <= enumeration_limit:
        acc = sum(prob / sigma_min_plus_sq(m, tau) for tau, prob in bs.members_with_prob())
        return BlockConstants(d, c, d * p * acc, False, True)
    if not monte_carlo or stream is None:
        raise ConfigError(
            f"block family has {bs.n_members} members (> {enumeration_limit}); "
            "pass a Monte-Carlo sample count and stream"
        )
    acc = sum(1.0 / sigma_min_plus_sq(m, bs.sample(stream)) for _ in range(monte_carlo)) / monte_carlo
    return BlockConstants(d, c, d * p * acc, False, False)
