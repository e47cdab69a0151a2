"""Randomized Kaczmarz iterations for t-product systems.

Single-operator methods solve ``A * X = B``:

* :func:`trk`   -- one row slice per step
* :func:`tbrk`  -- one row block per step
* :func:`tbrek` -- row blocks plus a column step that strips the part of the
  data outside ``range(A)``, so inconsistent systems converge to the
  least-squares solution

Factorized methods solve ``U * V * X = Y`` by interlacing a step on the outer
system ``U * Z = Y`` with a step on the inner system ``V * X = Z``:
:func:`factbrk` and :func:`factbrek` (the latter with the extended outer step).

Each method has a pure step function acting on real tensors, and a driver
that runs the same iteration on the half spectrum (see
:mod:`tkaczmarz.spectral`) and records a :class:`SolveTrace`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import COLUMN, INNER, OUTER, RandomStream
from .sampling import BlockSet, make_singletons, make_whole
from .spectral import (
    DENSE_ELEMENT_BUDGET,
    ctranspose,
    gram_solve,
    half_weights,
    hat_sqnorm,
    irfft3,
    least_norm_lsq,
    block_pinv,
    rfft3,
    tprod,
)
from .tensor import _check3, bcirc, fro_norm, ttranspose, unfold

__all__ = [
    "SolverConfig",
    "SolveTrace",
    "FactorizedSystem",
    "trk",
    "tbrk",
    "tbrek",
    "factbrk",
    "factbrek",
    "trk_step",
    "tbrk_step",
    "tbrek_column_step",
    "tbrek_step",
    "factbrk_step",
    "factbrek_step",
    "matricized_equivalents",
    "scale_blocks",
]

# finite families at most this large get their per-block factors cached
CACHE_LIMIT = 4096


@dataclass
class SolverConfig:
    """Driver settings.

    ``reference`` is the solution the relative error is measured against; with
    no reference the trace records the relative residual instead.
    ``cyclic`` walks the block family in order and is meant for unit tests
    only.  ``col_weights`` optionally replaces the uniform distribution of the
    column index in the extended methods.
    """

    max_iters: int = 1000
    seed: int = 0
    trace_every: int = 1
    reference: np.ndarray | None = None
    stop_tol: float | None = None
    cyclic: bool = False
    col_weights: tuple[float, ...] | None = None
    x0: np.ndarray | None = None
    z0: np.ndarray | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.trace_every < 1:
            raise ConfigError(f"trace_every must be >= 1, got {self.trace_every}")


@dataclass
class SolveTrace:
    """Per-iteration error record of one solve.

    ``records`` holds ``(t, value)`` pairs where value is the relative error
    ``||X_t - X_ref|| / ||X_ref||`` (``metric == "relative_error"``) or the
    relative residual (``metric == "residual"``).  ``z_records`` tracks the
    outer iterate against its own reference, ``w_records`` the absolute
    distance ``||W_t - Y_perp||_F`` of the extended iterate.
    """

    metric: str
    records: list[tuple[int, float]]
    final_iterate: np.ndarray
    residual_final: float
    z_records: list[tuple[int, float]] | None = None
    w_records: list[tuple[int, float]] | None = None
    final_z: np.ndarray | None = None
    final_w: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def iterations(self) -> np.ndarray:
        return np.array([t for t, _ in self.records])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.records])

    @property
    def final_value(self) -> float:
        return self.records[-1][1]

    def value_at(self, t: int) -> float:
        for s, v in self.records:
            if s == t:
                return v
        raise KeyError(f"iteration {t} was not traced")

    def first_below(self, tol: float) -> int | None:
        for t, v in self.records:
            if v < tol:
                return t
        return None

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", self.metric])
            for t, v in self.records:
                w.writerow([t, repr(float(v))])

    def to_json(self, path=None) -> dict:
        doc = {
            "metric": self.metric,
            "records": [[t, float(v)] for t, v in self.records],
            "residual_final": float(self.residual_final),
            "meta": self.meta,
        }
        if self.z_records is not None:
            doc["z_records"] = [[t, float(v)] for t, v in self.z_records]
        if self.w_records is not None:
            doc["w_records"] = [[t, float(v)] for t, v in self.w_records]
        if path is not None:
            Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))
        return doc


@dataclass
class FactorizedSystem:
    """``U * V * X = Y`` with cached references.

    ``Z_dag`` is the least-norm least-squares solution of ``U * Z = Y`` and
    ``X_dag`` the least-norm least-squares solution of ``V * X = Z_dag``.
    ``X_min`` is the minimum-norm least-squares solution of the full system
    ``(U * V) * X = Y``; it coincides with ``X_dag`` whenever ``bcirc(U)`` has
    full column rank.
    """

    U: np.ndarray
    V: np.ndarray
    Y: np.ndarray
    Z_dag: np.ndarray | None = None
    X_dag: np.ndarray | None = None
    X_min: np.ndarray | None = None
    consistent: bool | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("U", "V", "Y"):
            _check3(getattr(self, name), name)
        u, v, y = self.U.shape, self.V.shape, self.Y.shape
        if u[1] != v[0] or y[0] != u[0] or not u[2] == v[2] == y[2]:
            raise ShapeError(f"inconsistent factorized dims U{u} V{v} Y{y}")

    @property
    def dims(self) -> dict:
        m, m1, p = self.U.shape
        return {"m": m, "m1": m1, "n": self.V.shape[1], "l": self.Y.shape[1], "p": p}

    def with_references(self) -> FactorizedSystem:
        """Fill in the reference solutions if they are missing."""
        if self.Z_dag is None:
            self.Z_dag = least_norm_lsq(self.U, self.Y)
        if self.X_dag is None:
            self.X_dag = least_norm_lsq(self.V, self.Z_dag)
        if self.X_min is None:
            self.X_min = least_norm_lsq(tprod(self.U, self.V), self.Y)
        return self

    def residual(self, x: np.ndarray) -> float:
        """Relative residual ``||U * V * X - Y|| / ||Y||``."""
        r = tprod(self.U, tprod(self.V, x)) - self.Y
        return fro_norm(r) / fro_norm(self.Y)


# ---------------------------------------------------------------------------
# pure step functions (real tensors in, real tensors out)


def trk_step(a, b, x, i):
    return tbrk_step(a, b, x, (i,))


def tbrk_step(u, y, x, mu):
    """``X - U_mu* (U_mu U_mu*)^{-1} (U_mu X - Y_mu)``."""
    mu = list(mu)
    um = u[mu]
    return x - gram_solve(um, tprod(um, x) - y[mu])


def tbrek_column_step(u, w, l):
    """``W - U_{:l:} (U_{:l:}* U_{:l:})^{-1} U_{:l:}* W``, i.e. a row step on ``U* W = 0``."""
    col_t = ttranspose(u[:, l:l + 1, :])
    return w - gram_solve(col_t, tprod(col_t, w))


def tbrek_step(u, y, w, x, l, mu):
    """One TBREK iteration; returns ``(W, X)``."""
    w = tbrek_column_step(u, w, l)
    mu = list(mu)
    um = u[mu]
    x = x - gram_solve(um, tprod(um, x) - y[mu] + w[mu])
    return w, x


def factbrk_step(sys: FactorizedSystem, z, x, mu, nu):
    """One FacTBRK iteration; returns ``(Z, X)``."""
    z = tbrk_step(sys.U, sys.Y, z, mu)
    x = tbrk_step(sys.V, z, x, nu)
    return z, x


def factbrek_step(sys: FactorizedSystem, w, z, x, l, mu, nu):
    """One FacTBREK iteration; returns ``(W, Z, X)``."""
    w, z = tbrek_step(sys.U, sys.Y, w, z, l, mu)
    x = tbrk_step(sys.V, z, x, nu)
    return w, z, x


# ---------------------------------------------------------------------------
# spectral-domain driver


class _Projector:
    """Row-block projection steps on the half spectrum of one operator."""

    def __init__(self, hat: np.ndarray, blocks: BlockSet | None):
        self.hat = hat
        n = blocks.n_members if blocks is not None else 0
        self._cache = {} if n <= CACHE_LIMIT else None

    def factors(self, block):
        cache = self._cache
        hit = cache.get(block) if cache is not None else None
        if hit is None:
            sub = self.hat[:, list(block), :]
            hit = (sub, block_pinv(sub, block))
            if cache is not None:
                cache[block] = hit
        return hit

    def step(self, xhat, rhs, block):
        sub, qh = self.factors(block)
        xhat -= qh @ (sub @ xhat - rhs)

    def null_step(self, xhat, block):
        sub, qh = self.factors(block)
        xhat -= qh @ (sub @ xhat)


class _Picker:
    def __init__(self, blocks: BlockSet, stream: RandomStream, cyclic: bool):
        self.blocks, self.stream, self.cyclic = blocks, stream, cyclic
        self.count = 0

    def __call__(self):
        if self.cyclic:
            tau = self.blocks.member(self.count)
        else:
            tau = self.blocks.sample(self.stream)
        self.count += 1
        return tau


def _column_picker(m1: int, cfg: SolverConfig):
    stream = RandomStream(cfg.seed, COLUMN)
    if cfg.col_weights is None:
        return _Picker(make_singletons(m1), stream, cfg.cyclic)
    if len(cfg.col_weights) != m1:
        raise ConfigError(f"need {m1} column weights, got {len(cfg.col_weights)}")
    fam = BlockSet("explicit", m1, members=tuple((j,) for j in range(m1)),
                   distribution="sigma", weights=tuple(float(w) for w in cfg.col_weights))
    return _Picker(fam, stream, cfg.cyclic)


def _solve(algorithm, U, Y, blocks_U, cfg, *, V=None, blocks_V=None, extended=False, z_ref=None):
    _check3(U, "U")
    _check3(Y, "Y")
    if Y.shape[0] != U.shape[0] or Y.shape[2] != U.shape[2]:
        raise ShapeError(f"data {Y.shape} does not match operator {U.shape}")
    blocks_U.check_host(U, "U")
    if V is not None:
        _check3(V, "V")
        if V.shape[0] != U.shape[1] or V.shape[2] != U.shape[2]:
            raise ShapeError(f"V {V.shape} does not chain with U {U.shape}")
        blocks_V.check_host(V, "V")

    p = U.shape[2]
    wts = half_weights(p)
    uhat = rfft3(U)
    yhat = rfft3(Y)
    ynorm = np.sqrt(hat_sqnorm(yhat, wts))
    outer = _Projector(uhat, blocks_U)
    pick_mu = _Picker(blocks_U, RandomStream(cfg.seed, OUTER), cfg.cyclic)

    nf, l = uhat.shape[0], Y.shape[1]
    zhat = rfft3(cfg.z0 if V is not None and cfg.z0 is not None else
                 (cfg.x0 if V is None and cfg.x0 is not None else np.zeros((U.shape[1], l, p))))
    if V is not None:
        vhat = rfft3(V)
        inner = _Projector(vhat, blocks_V)
        pick_nu = _Picker(blocks_V, RandomStream(cfg.seed, INNER), cfg.cyclic)
        xhat = rfft3(cfg.x0 if cfg.x0 is not None else np.zeros((V.shape[1], l, p)))
        system_hat = uhat @ vhat
    else:
        xhat = zhat
        system_hat = uhat

    if extended:
        columns = _Projector(ctranspose(uhat), make_singletons(U.shape[1]))
        pick_l = _column_picker(U.shape[1], cfg)
        what = yhat.copy()
        yperp_hat = yhat - uhat @ rfft3(least_norm_lsq(U, Y))

    if cfg.reference is not None:
        ref_hat = rfft3(cfg.reference)
        ref_norm = np.sqrt(hat_sqnorm(ref_hat, wts))
        if ref_norm == 0:
            raise ConfigError("reference solution has zero norm")
        metric = "relative_error"

        def measure():
            return np.sqrt(hat_sqnorm(xhat - ref_hat, wts)) / ref_norm
    else:
        metric = "residual"

        def measure():
            return np.sqrt(hat_sqnorm(system_hat @ xhat - yhat, wts)) / ynorm

    track_z = V is not None and z_ref is not None
    if track_z:
        zref_hat = rfft3(z_ref)
        zref_norm = np.sqrt(hat_sqnorm(zref_hat, wts)) or 1.0

    records = [(0, measure())]
    z_records = [(0, np.sqrt(hat_sqnorm(zhat - zref_hat, wts)) / zref_norm)] if track_z else None
    w_records = [(0, np.sqrt(hat_sqnorm(what - yperp_hat, wts)))] if extended else None

    for t in range(1, cfg.max_iters + 1):
        if extended:
            columns.null_step(what, pick_l())
            mu = pick_mu()
            outer.step(zhat, yhat[:, list(mu), :] - what[:, list(mu), :], mu)
        else:
            mu = pick_mu()
            outer.step(zhat, yhat[:, list(mu), :], mu)
        if V is not None:
            nu = pick_nu()
            inner.step(xhat, zhat[:, list(nu), :], nu)
        if t % cfg.trace_every == 0 or t == cfg.max_iters:
            value = measure()
            records.append((t, value))
            if track_z:
                z_records.append((t, np.sqrt(hat_sqnorm(zhat - zref_hat, wts)) / zref_norm))
            if extended:
                w_records.append((t, np.sqrt(hat_sqnorm(what - yperp_hat, wts))))
            if cfg.stop_tol is not None and value <= cfg.stop_tol:
                break

    final = irfft3(xhat, p)
    residual = np.sqrt(hat_sqnorm(system_hat @ xhat - yhat, wts)) / ynorm
    meta = {
        "algorithm": algorithm,
        "seed": cfg.seed,
        "max_iters": cfg.max_iters,
        "trace_every": cfg.trace_every,
        "cyclic": cfg.cyclic,
        "blocks_U": blocks_U.describe() if blocks_U.n_members <= CACHE_LIMIT else
        {"kind": blocks_U.kind, "host_rows": blocks_U.host_rows, "size": blocks_U.size},
    }
    if blocks_V is not None:
        meta["blocks_V"] = (blocks_V.describe() if blocks_V.n_members <= CACHE_LIMIT else
                            {"kind": blocks_V.kind, "host_rows": blocks_V.host_rows, "size": blocks_V.size})
    return SolveTrace(
        metric=metric,
        records=[(t, float(v)) for t, v in records],
        final_iterate=final,
        residual_final=float(residual),
        z_records=[(t, float(v)) for t, v in z_records] if track_z else None,
        w_records=[(t, float(v)) for t, v in w_records] if extended else None,
        final_z=irfft3(zhat, p) if V is not None else None,
        final_w=irfft3(what, p) if extended else None,
        meta=meta,
    )


def trk(A, B, cfg: SolverConfig) -> SolveTrace:
    """Tensor randomized Kaczmarz: project onto one uniformly drawn row slice per step."""
    return _solve("trk", A, B, make_singletons(A.shape[0]), cfg)


def tbrk(U, Y, blocks: BlockSet, cfg: SolverConfig) -> SolveTrace:
    """Tensor block randomized Kaczmarz on ``U * X = Y``."""
    return _solve("tbrk", U, Y, blocks, cfg)


def tbrek(U, Y, blocks: BlockSet, cfg: SolverConfig) -> SolveTrace:
    """Tensor block randomized extended Kaczmarz on ``U * X = Y``.

    ``W`` starts at ``Y`` and is driven towards the component of ``Y``
    orthogonal to ``range(U)`` by column steps; the row steps use ``Y - W``.
    """
    return _solve("tbrek", U, Y, blocks, cfg, extended=True)


def factbrk(sys: FactorizedSystem, blocks_U: BlockSet, blocks_V: BlockSet, cfg: SolverConfig) -> SolveTrace:
    """Factorized TBRK: one outer step on ``U Z = Y`` then one inner step on ``V X = Z``."""
    return _solve("factbrk", sys.U, sys.Y, blocks_U, cfg, V=sys.V, blocks_V=blocks_V, z_ref=sys.Z_dag)


def factbrek(sys: FactorizedSystem, blocks_U: BlockSet, blocks_V: BlockSet, cfg: SolverConfig) -> SolveTrace:
    """Factorized TBREK: column step, extended outer step, then inner step."""
    return _solve("factbrek", sys.U, sys.Y, blocks_U, cfg, V=sys.V, blocks_V=blocks_V,
                  extended=True, z_ref=sys.Z_dag)


# ---------------------------------------------------------------------------
# matricized comparison


def matricized_equivalents(sys: FactorizedSystem,
                           element_budget: int = DENSE_ELEMENT_BUDGET) -> FactorizedSystem:
    """The system ``bcirc(U) bcirc(V) unfold(X) = unfold(Y)`` as depth-1 tensors.

    References are carried over by unfolding, so traces of both systems
    measure the same quantity.
    """
    m, m1, p = sys.U.shape
    n = sys.V.shape[1]
    if (m * p) * (m1 * p) > element_budget or (m1 * p) * (n * p) > element_budget:
        raise ConfigError("bcirc of the factors exceeds the dense element budget")

    def flat(a):
        return None if a is None else unfold(a)[:, :, None]

    return FactorizedSystem(
        U=bcirc(sys.U)[:, :, None],
        V=bcirc(sys.V)[:, :, None],
        Y=flat(sys.Y),
        Z_dag=flat(sys.Z_dag),
        X_dag=flat(sys.X_dag),
        X_min=flat(sys.X_min),
        consistent=sys.consistent,
        meta={**sys.meta, "matricized": True, "depth": p},
    )


def scale_blocks(blocks: BlockSet, p: int) -> BlockSet:
    """Same kind of family on the ``p``-times taller matricized operator."""
    from .sampling import make_all_of_size, make_explicit

    if blocks.kind == "all_of_size":
        return make_all_of_size(blocks.host_rows * p, blocks.size * p)
    # row i of the tensor owns matrix rows i, i + m, ..., i + (p-1) m
    m = blocks.host_rows
    members = [tuple(sorted(i + k * m for i in tau for k in range(p))) for tau in blocks.members]
    if len(members) == 1 and len(members[0]) == m * p:
        return make_whole(m * p)
    return make_explicit(m * p, members)
