"""Video deblurring as a factorized t-linear system.

A video is stored as ``frames[a, b, f]`` (height ``m``, width ``n``, ``p``
frames).  Refolding to ``Xr[b, f, a] = frames[a, b, f]`` (an ``n x p x m``
tensor whose frontal slice ``a`` holds image row ``a`` of every frame) turns
frame-wise 2-D circular convolution with a kernel ``K`` into the t-product
``H * Xr`` with the ``n x n x m`` blur tensor whose frontal slice ``i`` is the
circulant matrix of row ``i`` of the zero-padded kernel.  Two successive blurs
give ``U * V * Xr`` with ``U``, ``V`` the two blur tensors.

Kernels are anchored at pixel ``(0, 0)`` with circular wrap; a centred anchor
would only shift the pixel grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .sampling import BlockSet, make_all_of_size
from .solvers import FactorizedSystem, SolverConfig, SolveTrace, factbrek, factbrk
from .spectral import tprod
from .tensor import _check3

__all__ = [
    "BlurKernel",
    "gaussian_kernel",
    "averaging_kernel",
    "custom_kernel",
    "pad_kernel",
    "build_blur_tensor",
    "refold_video",
    "unrefold",
    "blur_frames",
    "blur_video",
    "deblur_system",
    "deblur_factorized",
    "smooth_video",
]


@dataclass(frozen=True)
class BlurKernel:
    """Convolution taps plus the recipe that produced them."""

    taps: np.ndarray
    kind: str = "custom"
    sigma: float | None = None

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.size == 0:
            raise ConfigError(f"kernel taps must be a non-empty matrix, got shape {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ConfigError("kernel taps must be finite")
        if self.kind in ("gaussian", "averaging") and abs(taps.sum() - 1.0) > 1e-12:
            raise ConfigError(f"{self.kind} kernel must sum to 1, got {taps.sum()!r}")
        object.__setattr__(self, "taps", taps)

    def describe(self) -> dict:
        d = {"kind": self.kind, "shape": list(self.taps.shape)}
        if self.sigma is not None:
            d["sigma"] = self.sigma
        if self.kind == "custom":
            d["taps"] = self.taps.tolist()
        return d


def gaussian_kernel(size: int = 5, sigma: float = 1.0) -> BlurKernel:
    """Sampled Gaussian on a ``size x size`` grid centred in the window, unit sum."""
    if size < 1 or sigma <= 0:
        raise ConfigError(f"need size >= 1 and sigma > 0, got size={size}, sigma={sigma}")
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    taps = np.outer(g, g)
    return BlurKernel(taps / taps.sum(), "gaussian", float(sigma))


def averaging_kernel(size: int = 5) -> BlurKernel:
    if size < 1:
        raise ConfigError(f"need size >= 1, got {size}")
    return BlurKernel(np.full((size, size), 1.0 / size**2), "averaging")


def custom_kernel(taps) -> BlurKernel:
    return BlurKernel(np.asarray(taps, dtype=np.float64), "custom")


def pad_kernel(kernel: BlurKernel, m: int, n: int) -> np.ndarray:
    """Zero-pad the taps to ``m x n``, anchored at ``(0, 0)``."""
    kh, kw = kernel.taps.shape
    if kh > m or kw > n:
        raise ConfigError(f"kernel {kh}x{kw} does not fit a {m}x{n} frame")
    out = np.zeros((m, n))
    out[:kh, :kw] = kernel.taps
    return out


def _circulant(c: np.ndarray) -> np.ndarray:
    n = c.shape[0]
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return c[idx]


def build_blur_tensor(kernel: BlurKernel, m: int, n: int) -> np.ndarray:
    """``n x n x m`` tensor with frontal slice ``i`` = ``circ(padded kernel row i)``."""
    padded = pad_kernel(kernel, m, n)
    out = np.empty((n, n, m))
    for i in range(m):
        out[:, :, i] = _circulant(padded[i])
    return out


def refold_video(frames: np.ndarray) -> np.ndarray:
    """``(m, n, p)`` frames to the ``(n, p, m)`` system layout."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 2:
        frames = frames[:, :, None]
    if frames.ndim != 3:
        raise ShapeError(f"video must be (height, width, frames), got shape {frames.shape}")
    return np.ascontiguousarray(frames.transpose(1, 2, 0))


def unrefold(t: np.ndarray) -> np.ndarray:
    """Inverse of :func:`refold_video`."""
    _check3(t, "refolded video")
    return np.ascontiguousarray(t.transpose(2, 0, 1))


def blur_frames(frames: np.ndarray, kernel: BlurKernel) -> np.ndarray:
    """Frame-wise 2-D circular convolution via the 2-D DFT."""
    frames = np.asarray(frames, dtype=np.float64)
    m, n = frames.shape[:2]
    kf = np.fft.fft2(pad_kernel(kernel, m, n))
    return np.real(np.fft.ifft2(np.fft.fft2(frames, axes=(0, 1)) * kf[:, :, None], axes=(0, 1)))


def blur_video(frames: np.ndarray, k1: BlurKernel, k2: BlurKernel) -> np.ndarray:
    """Blur by ``k2`` then ``k1``: the data ``U * V * X`` of the deblurring system."""
    return blur_frames(blur_frames(frames, k2), k1)


def deblur_system(blurred: np.ndarray, k1: BlurKernel, k2: BlurKernel,
                  truth: np.ndarray | None = None) -> FactorizedSystem:
    """``U = H(k1)``, ``V = H(k2)`` and the refolded blurred video ``Y``.

    With ``truth`` given, its refolded form is attached as the reference
    ``X_dag`` (no least-squares solve is run).
    """
    m, n = blurred.shape[:2]
    U = build_blur_tensor(k1, m, n)
    V = build_blur_tensor(k2, m, n)
    sys = FactorizedSystem(U=U, V=V, Y=refold_video(blurred),
                           meta={"kernels": [k1.describe(), k2.describe()], "frame_shape": [m, n]})
    if truth is not None:
        sys.X_dag = refold_video(truth)
        sys.Z_dag = tprod(V, sys.X_dag)
    return sys


def deblur_factorized(blurred: np.ndarray, k1: BlurKernel, k2: BlurKernel, solver: str = "factbrk",
                      blocks: tuple[BlockSet, BlockSet] | None = None,
                      cfg: SolverConfig | None = None) -> tuple[np.ndarray, SolveTrace]:
    """Recover frames from ``k1 (k2 frames)`` with FacTBRK or FacTBREK.

    Defaults to single-row blocks on both factors.  The trace records the
    relative residual unless ``cfg.reference`` is set.

    Returns
    -------
    frames : ndarray
        Recovered video, same layout as ``blurred``.
    trace : SolveTrace
    """
    fn = {"factbrk": factbrk, "factbrek": factbrek}.get(solver)
    if fn is None:
        raise ConfigError(f"unknown deblurring solver {solver!r}; use 'factbrk' or 'factbrek'")
    blurred = np.asarray(blurred, dtype=np.float64)
    if blurred.ndim == 2:
        blurred = blurred[:, :, None]
    sys = deblur_system(blurred, k1, k2)
    n = sys.U.shape[0]
    if blocks is None:
        blocks = (make_all_of_size(n, 1), make_all_of_size(n, 1))
    cfg = cfg or SolverConfig(max_iters=20000, trace_every=100)
    trace = fn(sys, blocks[0], blocks[1], cfg)
    trace.meta["kernels"] = sys.meta["kernels"]
    return unrefold(trace.final_iterate), trace


def smooth_video(m: int, n: int, p: int, seed: int = 0, modes: int = 3) -> np.ndarray:
    """Deterministic band-limited test frames in ``[0, 1]``.

    Each frame is a sum of a few low-frequency 2-D cosines with random
    amplitudes and phases that drift from frame to frame, min-max scaled to
    the unit interval.
    """
    from .rng import GENERATOR, RandomStream

    rs = RandomStream(seed, GENERATOR + 100)
    a = np.arange(m)[:, None] / m
    b = np.arange(n)[None, :] / n
    amp = rs.normal((modes, modes))
    phase = 2 * np.pi * rs.uniform(modes * modes).reshape(modes, modes)
    drift = 2 * np.pi * rs.uniform(modes * modes).reshape(modes, modes) / max(p, 1)
    out = np.empty((m, n, p))
    for f in range(p):
        img = np.zeros((m, n))
        for u in range(modes):
            for v in range(modes):
                img += amp[u, v] * np.cos(2 * np.pi * (u * a + v * b) + phase[u, v] + f * drift[u, v])
        lo, hi = img.min(), img.max()
        out[:, :, f] = (img - lo) / (hi - lo) if hi > lo else 0.5
    return out
