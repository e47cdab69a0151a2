"""Convergence constants and the expected-error bounds they feed.

The rates are ``alpha = 1 - sigma_min(E[bcirc(P_{M_tau})])`` for the row
families of ``U`` and ``V`` and ``beta_U`` for the column slices of ``U``
(rows of ``U*``).  Two readings of ``sigma_min`` are supported:

``floor="sigma_min"``
    the smallest eigenvalue of the expected projector, as written in the
    definition.  When ``M`` has fewer rows than columns per frequency (a wide
    ``V``, or ``U*`` for a tall ``U``) this is zero and the rate is exactly 1.
``floor="range"``
    the smallest *nonzero* eigenvalue.  Iterates started from zero never leave
    the row space of ``M``, so this is the contraction that actually governs
    them; it is the sharper, still rigorous choice.

``bound_*`` evaluate the stated formulas verbatim; ``enumeration_exact``
records whether the expectations were computed exactly or by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .rng import MONTE_CARLO, RandomStream
from .sampling import BlockSet, block_constants, make_singletons, make_whole, sigma_min_plus_sq
from .spectral import ENUMERATION_LIMIT, expected_projector, spectrum
from .tensor import _check3, identity_tensor, ttranspose

__all__ = [
    "ConvergenceConstants",
    "compute_constants",
    "expected_rate",
    "bound_factbrk",
    "bound_factbrek",
    "bound_tbrek",
    "horizon_tbrk",
    "horizon_additive",
    "uses_geometric_branch",
    "UniquenessReport",
    "check_unique_minimizer",
    "bound_curve",
]

BRANCH_RTOL = 1e-12
EIG_ZERO_TOL = 1e-10
UNIQUE_RTOL = 1e-10


@dataclass(frozen=True)
class ConvergenceConstants:
    alpha_U: float
    alpha_V: float
    beta_U: float
    alpha_max: float
    alpha_min: float
    phi_max: float
    phi_min: float
    theta_U: float
    theta_V: float
    sigma_max_bcirc_U: float
    sigma_max_bcirc_V: float
    enumeration_exact: bool
    floor: str = "sigma_min"
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flags"] = list(self.flags)
        return d


def _ratio_min(a: float, b: float) -> float:
    """``min(a/b, b/a)``; zero if either is zero."""
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return min(a / b, b / a)


def uses_geometric_branch(a: float, b: float) -> bool:
    """True iff ``0 != a != b != 0`` in the floating-point sense used throughout."""
    if a == 0.0 or b == 0.0:
        return False
    return abs(a - b) > BRANCH_RTOL * max(abs(a), abs(b))


def expected_rate(m: np.ndarray, blocks: BlockSet, floor: str = "sigma_min", *,
                  monte_carlo: int | None = None, stream: RandomStream | None = None,
                  enumeration_limit: int = ENUMERATION_LIMIT) -> tuple[float, bool]:
    """``1 - sigma_min(E[bcirc(P_{m[tau]})])`` and whether it was computed exactly."""
    e = expected_projector(m, blocks, monte_carlo=monte_carlo, stream=stream,
                           enumeration_limit=enumeration_limit)
    eig = e.eigenvalues()
    if floor == "sigma_min":
        low = eig[0]
    elif floor == "range":
        nz = eig[eig > EIG_ZERO_TOL]
        low = nz[0] if nz.size else 0.0
    else:
        raise ConfigError(f"unknown floor {floor!r}; use 'sigma_min' or 'range'")
    return float(min(1.0, max(0.0, 1.0 - low))), e.exact


def compute_constants(U: np.ndarray, V: np.ndarray | None, blocks_U: BlockSet,
                      blocks_V: BlockSet | None = None, col_dist: BlockSet | None = None, *,
                      floor: str = "sigma_min", monte_carlo: int | None = None, seed: int = 0,
                      enumeration_limit: int = ENUMERATION_LIMIT) -> ConvergenceConstants:
    """Every constant the bounds use.

    Parameters
    ----------
    U, V : ndarray
        Outer and inner factors.  ``V=None`` stands for the identity with the
        whole-set inner block, the single-factor (TBREK) setting.
    blocks_U, blocks_V : BlockSet
        Row families with their sampling distributions.
    col_dist : BlockSet, optional
        Distribution of the column index ``l`` as a singleton family over the
        ``m1`` columns of ``U``; uniform when omitted.
    floor : {"sigma_min", "range"}
        Which eigenvalue of the expected projector sets the rate.
    monte_carlo : int, optional
        Sample count for families too large to enumerate.
    """
    _check3(U, "U")
    m, m1, p = U.shape
    if V is None:
        V = identity_tensor(m1, p)
        blocks_V = make_whole(m1)
    elif blocks_V is None:
        raise ConfigError("blocks_V is required when V is given")
    if col_dist is None:
        col_dist = make_singletons(m1)
    stream = RandomStream(seed, MONTE_CARLO) if monte_carlo else None
    kw = dict(monte_carlo=monte_carlo, stream=stream, enumeration_limit=enumeration_limit)

    alpha_U, ex_u = expected_rate(U, blocks_U, floor, **kw)
    alpha_V, ex_v = expected_rate(V, blocks_V, floor, **kw)
    beta_U, ex_b = expected_rate(ttranspose(U), col_dist, floor, **kw)
    bc_U = block_constants(blocks_U, U, **kw)
    bc_V = block_constants(blocks_V, V, **kw)

    flags = []
    if (alpha_U == 0.0) != (alpha_V == 0.0):
        flags.append("exactly one of alpha_U, alpha_V is zero: alpha_min set to 0, else-branch used")
    if (alpha_U == 0.0) != (beta_U == 0.0):
        flags.append("exactly one of alpha_U, beta_U is zero: phi_min set to 0")
    if beta_U >= 1.0:
        flags.append("beta_U == 1: the column expected projector is singular")
    if alpha_V >= 1.0 or alpha_U >= 1.0:
        flags.append("a row rate equals 1: the bound does not decay")

    return ConvergenceConstants(
        alpha_U=alpha_U,
        alpha_V=alpha_V,
        beta_U=beta_U,
        alpha_max=max(alpha_U, alpha_V),
        alpha_min=_ratio_min(alpha_U, alpha_V),
        phi_max=max(alpha_U, beta_U),
        phi_min=_ratio_min(alpha_U, beta_U),
        theta_U=bc_U.theta,
        theta_V=bc_V.theta,
        sigma_max_bcirc_U=spectrum(U).sigma_max,
        sigma_max_bcirc_V=spectrum(V).sigma_max,
        enumeration_exact=bool(ex_u and ex_v and ex_b and bc_U.exact and bc_V.exact),
        floor=floor,
        flags=tuple(flags),
    )


def _geom(ratio: float) -> float:
    return ratio / (1.0 - ratio)


def bound_factbrk(t: int, k: ConvergenceConstants, norm_Xdag: float) -> float:
    """Expected squared error bound of FacTBRK after ``t`` iterations (consistent system)."""
    sv2 = k.sigma_max_bcirc_V**2
    if uses_geometric_branch(k.alpha_U, k.alpha_V):
        extra = k.theta_V * k.alpha_max**t * _geom(k.alpha_min) * sv2
    else:
        extra = k.theta_V * t * k.alpha_max**t * sv2
    return (k.alpha_V**t + extra) * norm_Xdag**2


def bound_factbrek(t: int, k: ConvergenceConstants, norm_Xdag: float) -> float:
    """Expected squared error bound of FacTBREK after ``t`` iterations.

    Raises
    ------
    ConfigError
        If ``alpha_V == 0``: the inner step is then an exact projection and
        the bound's case split does not apply.
    """
    if k.alpha_V == 0.0:
        raise ConfigError(
            "alpha_V == 0: the inner block family projects exactly, outside the bound's hypotheses; "
            "the inner error is then the outer error mapped through V's pseudoinverse"
        )
    h = t // 2
    sv2 = k.sigma_max_bcirc_V**2
    su2 = k.sigma_max_bcirc_U**2
    if uses_geometric_branch(k.alpha_U, k.beta_U):
        gamma = k.alpha_U**h + k.theta_U * k.phi_max**h * _geom(k.phi_min) * su2
    else:
        gamma = k.alpha_U**h + k.theta_U * t * k.phi_max**h * su2
    return (k.alpha_V**t + k.theta_V * sv2 * (t + 1) * k.alpha_V**h * gamma) * norm_Xdag**2


def bound_tbrek(t: int, k: ConvergenceConstants, norm_Xdag: float) -> float:
    """Expected squared error bound of TBREK after ``t`` iterations.

    Unlike the factorized bounds, the geometric branch here only needs
    ``alpha_U != beta_U``; when one of them is zero ``phi_min`` is zero and the
    bound collapses to ``alpha_U**t * ||X||^2``.
    """
    su2 = k.sigma_max_bcirc_U**2
    a, b = k.alpha_U, k.beta_U
    if abs(a - b) > BRANCH_RTOL * max(abs(a), abs(b)):
        extra = k.theta_U * k.phi_max**t * _geom(k.phi_min) * su2
    else:
        extra = k.theta_U * t * k.phi_max**t * su2
    return (k.alpha_U**t + extra) * norm_Xdag**2


def bound_curve(kind: str, ts, k: ConvergenceConstants, norm_Xdag: float) -> list[tuple[int, float]]:
    fn = {"factbrk": bound_factbrk, "factbrek": bound_factbrek, "tbrek": bound_tbrek}.get(kind)
    if fn is None:
        raise ConfigError(f"no bound for {kind!r}")
    return [(int(t), float(fn(int(t), k, norm_Xdag))) for t in ts]


def horizon_additive(U: np.ndarray, blocks: BlockSet, E: np.ndarray) -> float:
    """``d_T p E[sigma_min+^-2(bcirc(U[mu])) ||E[mu]||_F^2]`` by enumeration."""
    _check3(U, "U")
    _check3(E, "E")
    if E.shape[0] != U.shape[0] or E.shape[2] != U.shape[2]:
        raise ConfigError(f"perturbation {E.shape} does not match U {U.shape}")
    blocks.check_host(U, "U")
    if blocks.n_members > ENUMERATION_LIMIT:
        raise ConfigError("the horizon needs an enumerable block family")
    acc = 0.0
    for tau, prob in blocks.members_with_prob():
        acc += prob * float(np.sum(E[list(tau)] ** 2)) / sigma_min_plus_sq(U, tau)
    return blocks.d_T * U.shape[2] * acc


def horizon_tbrk(k: ConvergenceConstants, U: np.ndarray, blocks: BlockSet, E: np.ndarray) -> float:
    """Fixed point ``additive / (1 - alpha_U)`` of the one-step TBRK recursion.

    Returns ``inf`` when ``alpha_U == 1`` (no contraction, unbounded horizon)
    unless the perturbation itself vanishes.
    """
    add = horizon_additive(U, blocks, E)
    if add == 0.0:
        return 0.0
    if k.alpha_U >= 1.0:
        return math.inf
    return add / (1.0 - k.alpha_U)


@dataclass(frozen=True)
class UniquenessReport:
    unique: bool
    sigma_min: float
    sigma_max: float
    ratio: float


def check_unique_minimizer(U: np.ndarray, rtol: float = UNIQUE_RTOL) -> UniquenessReport:
    """Full column rank test for ``bcirc(U)``: ``sigma_min > rtol * sigma_max``.

    Over the reals this is exactly uniqueness of the least-squares minimizer
    of ``||U * Z - Y||``; the tolerance makes it a numerical judgement.
    """
    s = spectrum(U)
    if U.shape[0] < U.shape[1]:
        smin = 0.0
    else:
        smin = s.sigma_min
    ratio = smin / s.sigma_max if s.sigma_max > 0 else 0.0
    return UniquenessReport(ratio > rtol, smin, s.sigma_max, ratio)
