"""Frequency-domain t-product algebra.

``bcirc(A)`` is block-diagonalised by a DFT along the third mode, so
products, gram solves, pseudoinverses and singular values can all be done
one frequency at a time on ``n1 x n2`` complex blocks.  The dense
:mod:`tkaczmarz.tensor` path stays the reference these are checked against.

Internally the solvers only keep the ``p // 2 + 1`` non-redundant
frequencies of real tensors (``numpy.fft.rfft``); frequency ``p - k`` is the
complex conjugate of frequency ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolation, ConfigError, InternalConsistencyError, ShapeError
from .tensor import _check3, bcirc, fro_norm

__all__ = [
    "SpectralTensor",
    "SpectrumSummary",
    "ExpectedProjector",
    "to_spectral",
    "from_spectral",
    "tprod_fast",
    "tprod",
    "spectrum",
    "gram_solve",
    "block_pinv",
    "projector_apply",
    "least_norm_lsq",
    "expected_projector",
    "expected_projector_bcirc",
    "GRAM_RTOL",
    "RANK_RTOL",
    "DENSE_ELEMENT_BUDGET",
    "ENUMERATION_LIMIT",
]

GRAM_RTOL = 1e-12
RANK_RTOL = 1e-12
IMAG_RTOL = 1e-8
DENSE_ELEMENT_BUDGET = 10**7
ENUMERATION_LIMIT = 10**4


@dataclass(frozen=True)
class SpectralTensor:
    """Per-frequency blocks ``blocks[k]`` of shape ``(n1, n2)``, ``k = 0..n3-1``."""

    blocks: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        n3, n1, n2 = self.blocks.shape
        return (n1, n2, n3)


@dataclass(frozen=True)
class SpectrumSummary:
    sigma_max: float
    sigma_min_plus: float
    sigma_min: float
    rank: int

    def to_dict(self) -> dict:
        return {
            "sigma_max": self.sigma_max,
            "sigma_min_plus": self.sigma_min_plus,
            "sigma_min": self.sigma_min,
            "rank": self.rank,
        }


# ---------------------------------------------------------------------------
# half-spectrum helpers used by the solvers


def rfft3(a: np.ndarray) -> np.ndarray:
    """Non-redundant DFT blocks of a real tensor, shape ``(p//2 + 1, n1, n2)``."""
    return np.ascontiguousarray(np.fft.rfft(a, axis=2).transpose(2, 0, 1))


def irfft3(hat: np.ndarray, p: int) -> np.ndarray:
    return np.ascontiguousarray(np.fft.irfft(hat.transpose(1, 2, 0), n=p, axis=2))


def half_weights(p: int) -> np.ndarray:
    """Parseval weights: ``||A||_F^2 == sum_k w[k] ||hat_k||_F^2``."""
    w = np.full(p // 2 + 1, 2.0 / p)
    w[0] = 1.0 / p
    if p % 2 == 0:
        w[-1] = 1.0 / p
    return w


def hat_sqnorm(hat: np.ndarray, weights: np.ndarray) -> float:
    per_freq = np.einsum("kij,kij->k", hat.real, hat.real) + np.einsum("kij,kij->k", hat.imag, hat.imag)
    return float(per_freq @ weights)


def ctranspose(hat: np.ndarray) -> np.ndarray:
    """Blockwise conjugate transpose; the spectral image of :func:`ttranspose`."""
    return np.ascontiguousarray(np.conj(hat.transpose(0, 2, 1)))


def _violation(k: int, low: float, top: float, block=None) -> AssumptionViolation:
    return AssumptionViolation(
        f"gram tensor is singular at frequency {k} "
        f"(sigma_min={low:.3e}, sigma_max={top:.3e}, ratio below {GRAM_RTOL:g})"
        + (f" for block {list(block)}" if block is not None else ""),
        frequency=k,
        block=None if block is None else tuple(block),
    )


def block_pinv(mhat: np.ndarray, block=None) -> np.ndarray:
    """``M^H (M M^H)^{-1}`` per frequency for a wide block ``M`` (``k <= n2`` rows).

    The gram is invertible exactly when every ``M_k`` has full row rank.  That
    is checked on the singular values of ``M_k`` with the same relative cutoff
    used for numerical rank everywhere else: ``sigma_min(M_k) < GRAM_RTOL *
    sigma_max`` (largest over all frequencies) raises
    :class:`AssumptionViolation` naming the first offending frequency.  The
    product is then formed from a QR factorization of ``M^H`` and a triangular
    solve, so its accuracy degrades with ``cond(M)`` rather than ``cond(M)^2``.
    """
    nf, k, n2 = mhat.shape
    if k > n2:
        raise AssumptionViolation(f"block of {k} rows cannot have full row rank with {n2} columns",
                                  frequency=0, block=None if block is None else tuple(block))
    if k == 1:
        sq = np.einsum("kij,kij->ki", mhat, np.conj(mhat)).real[:, 0]
        s = np.sqrt(sq)
        top = float(s.max())
        bad = np.flatnonzero(s <= GRAM_RTOL * top) if top > 0 else np.arange(nf)
        if bad.size:
            raise _violation(int(bad[0]), float(s[bad[0]]), top, block)
        return ctranspose(mhat) / sq[:, None, None]
    s = np.linalg.svd(mhat, compute_uv=False)  # (nf, k), descending
    top = float(s[:, 0].max())
    low = s[:, -1]
    bad = np.flatnonzero(low <= GRAM_RTOL * top) if top > 0 else np.arange(nf)
    if bad.size:
        raise _violation(int(bad[0]), float(low[bad[0]]), top, block)
    q, r = np.linalg.qr(ctranspose(mhat))  # M^H = Q R, so M^H (M M^H)^{-1} = Q R^{-H}
    return ctranspose(np.linalg.solve(r, ctranspose(q)))


# ---------------------------------------------------------------------------
# public API


def to_spectral(a: np.ndarray) -> SpectralTensor:
    _check3(a)
    return SpectralTensor(np.ascontiguousarray(np.fft.fft(a, axis=2).transpose(2, 0, 1)))


def from_spectral(s: SpectralTensor) -> np.ndarray:
    """Back to a real tensor; refuses spectra that are not conjugate symmetric."""
    full = np.fft.ifft(s.blocks, axis=0).transpose(1, 2, 0)
    real = np.ascontiguousarray(full.real)
    residue = float(np.sqrt(np.sum(full.imag**2)))
    scale = fro_norm(real)
    if residue > IMAG_RTOL * scale:
        raise InternalConsistencyError(
            f"imaginary residue {residue:.3e} exceeds {IMAG_RTOL:g} * ||A||_F = {IMAG_RTOL * scale:.3e}"
        )
    return real


def tprod_fast(a: SpectralTensor, b: SpectralTensor) -> SpectralTensor:
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(f"cannot t-multiply {a.shape} by {b.shape}")
    return SpectralTensor(a.blocks @ b.blocks)


def tprod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Real t-product through the half spectrum."""
    _check3(a, "left operand")
    _check3(b, "right operand")
    if a.shape[1] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(f"cannot t-multiply {a.shape} by {b.shape}")
    return irfft3(rfft3(a) @ rfft3(b), a.shape[2])


def singular_values(a: np.ndarray) -> np.ndarray:
    """All singular values of ``bcirc(a)``, sorted descending."""
    _check3(a)
    blocks = to_spectral(a).blocks
    return np.sort(np.linalg.svd(blocks, compute_uv=False).ravel())[::-1]


def spectrum(a: np.ndarray) -> SpectrumSummary:
    """Extreme singular values and numerical rank of ``bcirc(a)``."""
    sv = singular_values(a)
    smax = float(sv[0]) if sv.size else 0.0
    positive = sv[sv >= RANK_RTOL * smax] if smax > 0 else sv[:0]
    return SpectrumSummary(
        sigma_max=smax,
        sigma_min_plus=float(positive[-1]) if positive.size else 0.0,
        sigma_min=float(sv[-1]) if sv.size else 0.0,
        rank=int(positive.size),
    )


def gram_solve(m: np.ndarray, r: np.ndarray) -> np.ndarray:
    """``M* (M M*)^{-1} R`` without forming an inverse.

    Raises
    ------
    AssumptionViolation
        If ``M M*`` is numerically singular at some frequency.
    """
    _check3(m, "M")
    _check3(r, "R")
    if r.shape[0] != m.shape[0] or r.shape[2] != m.shape[2]:
        raise ShapeError(f"gram_solve: M {m.shape} and R {r.shape} are not conformable")
    p = m.shape[2]
    return irfft3(block_pinv(rfft3(m)) @ rfft3(r), p)


def projector_apply(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection ``P_M X = M* (M M*)^{-1} M X``."""
    _check3(m, "M")
    _check3(x, "X")
    if x.shape[0] != m.shape[1] or x.shape[2] != m.shape[2]:
        raise ShapeError(f"projector_apply: M {m.shape} and X {x.shape} are not conformable")
    mhat = rfft3(m)
    return irfft3(block_pinv(mhat) @ (mhat @ rfft3(x)), m.shape[2])


def _pinv_blocks(hat: np.ndarray, cutoff: float) -> np.ndarray:
    u, s, vh = np.linalg.svd(hat, full_matrices=False)
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return ctranspose(vh) @ (inv[:, :, None] * ctranspose(u))


def least_norm_lsq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-Frobenius-norm minimiser of ``||A * X - B||_F``.

    Singular values below ``RANK_RTOL * sigma_max(bcirc(A))`` are treated as
    zero, the same cutoff :func:`spectrum` uses.
    """
    _check3(a, "A")
    _check3(b, "B")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(f"least_norm_lsq: A {a.shape} and B {b.shape} are not conformable")
    p = a.shape[2]
    ahat = rfft3(a)
    smax = float(np.linalg.svd(ahat, compute_uv=False).max()) if ahat.size else 0.0
    return irfft3(_pinv_blocks(ahat, RANK_RTOL * smax) @ rfft3(b), p)


# ---------------------------------------------------------------------------
# expected projectors


@dataclass(frozen=True)
class ExpectedProjector:
    """``E[P_{M_tau}]`` over a block distribution, as a real tensor.

    ``exact`` is False for Monte-Carlo estimates (``n_samples`` draws).
    """

    tensor: np.ndarray
    exact: bool
    n_samples: int | None = None

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``bcirc(E[P])`` (it is symmetric PSD), ascending."""
        blocks = to_spectral(self.tensor).blocks
        herm = 0.5 * (blocks + ctranspose(blocks))
        return np.sort(np.linalg.eigvalsh(herm).ravel())

    @property
    def sigma_min(self) -> float:
        return float(max(self.eigenvalues()[0], 0.0))


def expected_projector(m: np.ndarray, blocks, *, monte_carlo: int | None = None, stream=None,
                       enumeration_limit: int = ENUMERATION_LIMIT) -> ExpectedProjector:
    """Average ``P_{M_tau}`` over the block family ``blocks``.

    Exact enumeration is used whenever the family has at most
    ``enumeration_limit`` members.  Larger families need ``monte_carlo`` (a
    sample count) and a random ``stream`` to draw from.

    Raises
    ------
    ConfigError
        Family too large and no Monte-Carlo sample count given.
    AssumptionViolation
        Some member has a singular gram.
    """
    _check3(m, "M")
    p = m.shape[2]
    mhat = rfft3(m)
    acc = np.zeros((mhat.shape[0], m.shape[1], m.shape[1]), dtype=complex)

    def projector_hat(tau):
        sub = mhat[:, list(tau), :]
        return block_pinv(sub, tau) @ sub

    if blocks.n_members <= enumeration_limit:
        for tau, prob in blocks.members_with_prob():
            acc += prob * projector_hat(tau)
        exact, n = True, None
    else:
        if not monte_carlo:
            raise ConfigError(
                f"block family has {blocks.n_members} members (> enumeration limit "
                f"{enumeration_limit}); pass a Monte-Carlo sample count to estimate"
            )
        if stream is None:
            raise ConfigError("Monte-Carlo estimation needs a random stream")
        for _ in range(int(monte_carlo)):
            acc += projector_hat(blocks.sample(stream))
        acc /= int(monte_carlo)
        exact, n = False, int(monte_carlo)
    return ExpectedProjector(irfft3(acc, p), exact, n)


def expected_projector_bcirc(m: np.ndarray, blocks, **kwargs) -> np.ndarray:
    """Dense ``E[bcirc(P_{M_tau})]`` (symmetric, eigenvalues in [0, 1])."""
    e = expected_projector(m, blocks, **kwargs)
    n, _, p = e.tensor.shape
    if (n * p) ** 2 > DENSE_ELEMENT_BUDGET:
        raise ConfigError(f"bcirc of size {n * p}x{n * p} exceeds the dense element budget")
    return bcirc(e.tensor)
