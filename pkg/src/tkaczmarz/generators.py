"""Synthetic factorized systems with cached reference solutions.

All randomness comes from the ``GENERATOR`` stream of :mod:`tkaczmarz.rng`
keyed by the seed, drawn in a fixed order: ``U``, ``V``, ``X_gen``, then
``Y~`` (the raw perturbation).  ``Y~`` is drawn even for consistent systems,
so a consistent system and an inconsistent one with the same seed share
``U``, ``V`` and ``X_gen`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GenerationError
from .rng import GENERATOR, RandomStream
from .solvers import FactorizedSystem
from .spectral import least_norm_lsq, tprod
from .tensor import fro_norm, inner

__all__ = [
    "gen_consistent",
    "gen_inconsistent",
    "gen_pair",
    "gen_case",
    "CaseSpec",
    "CASES",
    "DEFAULT_EPS",
]

DEFAULT_EPS = 1e-4
CONSISTENCY_RTOL = 1e-9
ORTHO_RTOL = 1e-8
PERP_FLOOR = 1e-10
# substreams tried before giving up on reference verification
MAX_RESAMPLES = 8


@dataclass(frozen=True)
class CaseSpec:
    """One grid cell of the under/over-determined experiment matrix."""

    case_id: str
    m: int
    r: int
    nu_sizes: tuple[int, ...]
    mu_sizes: tuple[int, ...]
    theory_holds: bool
    n: int = 20
    l: int = 10
    p: int = 30

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "U_dims": [self.m, self.r, self.p],
            "V_dims": [self.r, self.n, self.p],
            "X_dims": [self.n, self.l, self.p],
            "A_dims": [self.m, self.n, self.p],
            "nu_sizes": list(self.nu_sizes),
            "mu_sizes": list(self.mu_sizes),
            "theory_holds": self.theory_holds,
        }


CASES = {
    "1a": CaseSpec("1a", 10, 5, (1, 3, 5), (1, 3, 5), True),
    "1b": CaseSpec("1b", 10, 25, (1, 5, 10), (1, 5, 10), False),
    "1c": CaseSpec("1c", 10, 15, (1, 5, 15), (1, 5, 10), False),
    "2a": CaseSpec("2a", 30, 15, (1, 5, 10, 15), (1, 5, 10, 15), True),
    "2b": CaseSpec("2b", 30, 25, (1, 5, 10, 20), (1, 5, 10, 20, 25), True),
    "2c": CaseSpec("2c", 30, 35, (1, 10, 20), (1, 10, 20), False),
}


def _check_dims(**dims):
    for k, v in dims.items():
        if int(v) != v or v < 1:
            raise ConfigError(f"{k} must be a positive integer, got {v!r}")


def _draw(m, m1, n, l, p, seed, substream):
    # substream 0 is the documented default; later ones only on resampling
    rs = RandomStream(seed, GENERATOR + substream)
    U = rs.normal((m, m1, p))
    V = rs.normal((m1, n, p))
    X_gen = rs.normal((n, l, p))
    Y_tilde = rs.normal((m, l, p))
    return U, V, X_gen, Y_tilde


def _build(m, m1, n, l, p, seed, eps, require_consistent_check):
    _check_dims(m=m, m1=m1, n=n, l=l, p=p)
    if eps < 0 or not np.isfinite(eps):
        raise ConfigError(f"eps must be finite and nonnegative, got {eps}")
    last = None
    for sub in range(MAX_RESAMPLES):
        U, V, X_gen, Y_tilde = _draw(m, m1, n, l, p, seed, sub)
        Y0 = tprod(U, tprod(V, X_gen))
        Y_perp = Y_tilde - tprod(U, least_norm_lsq(U, Y_tilde))
        perp_norm = fro_norm(Y_perp)
        if eps > 0:
            if perp_norm < PERP_FLOOR * max(fro_norm(Y_tilde), 1.0):
                raise GenerationError(
                    f"U ({m}x{m1}x{p}) is surjective after matricization, so range(U) has no "
                    "orthogonal complement and no inconsistent perturbation exists; use m > m1"
                )
            dot = abs(inner(Y_perp, Y0))
            if dot >= ORTHO_RTOL * perp_norm * fro_norm(Y0):
                last = f"perturbation not orthogonal to range(U): |<Y_perp, Y0>| = {dot:.3e}"
                continue
            Y = Y0 + eps * Y_perp
        else:
            Y = Y0
        sys = FactorizedSystem(U=U, V=V, Y=Y, consistent=eps == 0,
                               meta={"dims": {"m": m, "m1": m1, "n": n, "l": l, "p": p},
                                     "seed": int(seed), "eps": float(eps), "substream": sub})
        sys.with_references()
        res = fro_norm(tprod(U, sys.Z_dag) - Y)
        if eps == 0 and require_consistent_check:
            if res >= CONSISTENCY_RTOL * fro_norm(Y):
                last = f"outer reference residual {res / fro_norm(Y):.3e} is not below {CONSISTENCY_RTOL:g}"
                continue
        sys.meta.update({
            "norm_Z_dag": fro_norm(sys.Z_dag),
            "norm_X_dag": fro_norm(sys.X_dag),
            "norm_X_min": fro_norm(sys.X_min),
            "norm_Y_perp": perp_norm,
            "outer_residual": res,
        })
        return sys, X_gen, Y_perp
    raise GenerationError(f"reference verification failed for seed {seed} after {MAX_RESAMPLES} substreams: {last}")


def gen_consistent(m: int, m1: int, n: int, l: int, p: int, seed: int) -> FactorizedSystem:
    """Gaussian factors with ``Y = U * V * X_gen``.

    The outer reference must solve ``U * Z = Y`` to 1e-9 relative; if it does
    not (only possible when ``bcirc(U)`` is numerically rank deficient) the
    draw is repeated from the next generator substream.
    """
    sys, X_gen, _ = _build(m, m1, n, l, p, seed, 0.0, True)
    sys.meta["norm_X_gen"] = fro_norm(X_gen)
    return sys


def gen_inconsistent(m: int, m1: int, n: int, l: int, p: int, seed: int,
                     eps: float = DEFAULT_EPS) -> FactorizedSystem:
    """``Y = U * V * X_gen + eps * Y_perp`` with ``Y_perp`` orthogonal to ``range(U)``.

    ``Y_perp = Y~ - U * (U^+ * Y~)`` for a Gaussian ``Y~``.  With ``eps = 0``
    the result equals :func:`gen_consistent` for the same seed.

    Raises
    ------
    GenerationError
        If ``range(U)`` is everything (``Y_perp`` vanishes).
    """
    if eps == 0:
        return gen_consistent(m, m1, n, l, p, seed)
    sys, X_gen, _ = _build(m, m1, n, l, p, seed, eps, False)
    sys.meta["norm_X_gen"] = fro_norm(X_gen)
    return sys


def gen_pair(m: int, m1: int, n: int, l: int, p: int, seed: int,
             eps: float = DEFAULT_EPS) -> tuple[FactorizedSystem, FactorizedSystem]:
    """Matched consistent and inconsistent systems sharing ``U``, ``V`` and ``X_gen``."""
    return gen_consistent(m, m1, n, l, p, seed), gen_inconsistent(m, m1, n, l, p, seed, eps)


def gen_case(case_id: str, seed: int, eps: float = 0.0) -> FactorizedSystem:
    """System for one cell of the experiment grid.

    ``X`` is ``20 x 10 x 30``; ``U`` is ``m x r x 30`` and ``V`` is
    ``r x 20 x 30`` where ``m`` (10 or 30) is the row count of ``A = U * V``.
    The block-size menus and the ``theory_holds`` flag are stored in
    ``meta["case"]``.
    """
    spec = CASES.get(str(case_id))
    if spec is None:
        raise ConfigError(f"unknown case {case_id!r}; expected one of {sorted(CASES)}")
    if eps:
        sys = gen_inconsistent(spec.m, spec.r, spec.n, spec.l, spec.p, seed, eps)
    else:
        sys, _, _ = _build(spec.m, spec.r, spec.n, spec.l, spec.p, seed, 0.0, False)
    sys.meta["case"] = spec.to_dict()
    return sys
