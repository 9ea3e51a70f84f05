"""Monte Carlo oracle: Euler scheme for the Wishart SDE with PSD clipping.

Paths are generated in fixed-size chunks. Chunk ``i`` draws from a Philox
stream keyed by the seed and jumped ``i`` times, so results depend only on
``(seed, chunk_size)`` and not on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import InvalidModel
from .model import LaplaceQuery, WishartModel

__all__ = ["McConfig", "PathSummary", "simulate_paths", "mc_laplace"]


@dataclass(frozen=True)
class McConfig:
    paths: int = 100_000
    step: float = 1e-3
    seed: int = 0
    projection: str = "eigenvalue-clip"
    chunk_size: int = 10_000

    def __post_init__(self):
        if self.paths < 100:
            raise InvalidModel("paths must be at least 100")
        if not self.step > 0:
            raise InvalidModel("step must be positive")
        if self.projection != "eigenvalue-clip":
            raise InvalidModel(f"unknown projection {self.projection!r}")
        if self.chunk_size < 1:
            raise InvalidModel("chunk_size must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidModel("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class PathSummary:
    t: float
    paths: int
    steps: int
    mean: np.ndarray
    stderr: np.ndarray
    integral_mean: np.ndarray
    clip_fraction: float


def _steps(t: float, h: float) -> list[float]:
    n = max(0, math.ceil(t / h - 1e-9))
    return [h] * (n - 1) + [t - h * (n - 1)] if n else []


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of stacks of small matrices stored component-major, shape (d, d, n)."""
    return (a[:, :, None, ...] * b[None, :, :, ...]).sum(axis=1)


def _tr(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, 0, 1)


def _clip_and_sqrt(S: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Project each ``S[:, :, p]`` onto the PSD cone and return its square root.

    ``d <= 2`` uses closed forms; larger ``d`` goes through ``eigh``.
    """
    d = S.shape[0]
    if d == 1:
        neg = S[0, 0] < 0.0
        S = np.where(neg, 0.0, S)
        return S, np.sqrt(S), int(neg.sum())
    if d == 2:
        a, b, c = S[0, 0], S[0, 1], S[1, 1]
        half_tr = 0.5 * (a + c)
        disc = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
        lo = half_tr - disc
        clip = lo < 0.0
        if clip.any():
            # keep the top eigenpair only: S = hi * u u^T
            hi = np.maximum(half_tr + disc, 0.0)
            ang = 0.5 * np.arctan2(2.0 * b, a - c)
            u0, u1 = np.cos(ang), np.sin(ang)
            a = np.where(clip, hi * u0 * u0, a)
            b = np.where(clip, hi * u0 * u1, b)
            c = np.where(clip, hi * u1 * u1, c)
            S = np.array([[a, b], [b, c]])
        det = np.maximum(a * c - b * b, 0.0)
        sd = np.sqrt(det)
        norm = np.sqrt(a + c + 2.0 * sd)
        inv = np.divide(1.0, norm, out=np.zeros_like(norm), where=norm > 0.0)
        root = np.array([[(a + sd) * inv, b * inv], [b * inv, (c + sd) * inv]])
        return S, root, int(clip.sum())
    stack = np.moveaxis(S, -1, 0)
    lam, vecs = np.linalg.eigh(stack)
    clip = (lam < 0.0).any(axis=1)
    lam = np.maximum(lam, 0.0)
    vt = np.swapaxes(vecs, 1, 2)
    S = np.moveaxis((vecs * lam[:, None, :]) @ vt, 0, -1)
    root = np.moveaxis((vecs * np.sqrt(lam)[:, None, :]) @ vt, 0, -1)
    return S, root, int(clip.sum())


def _chunks(model: WishartModel, t: float, config: McConfig) -> Iterator[tuple[np.ndarray, np.ndarray, int]]:
    """Yield ``(S_t, int_0^t S ds, clip_count)`` per chunk, arrays of shape (n, d, d)."""
    d = model.dim
    M = model.M[:, :, None]
    Q = model.Q[:, :, None]
    b = model.drift_constant[:, :, None]
    steps = _steps(t, config.step)
    base = np.random.Philox(config.seed)
    for start in range(0, config.paths, config.chunk_size):
        n = min(config.chunk_size, config.paths - start)
        rng = np.random.Generator(base.jumped(start // config.chunk_size))
        S = np.repeat(model.S0[:, :, None], n, axis=2)
        integral = np.zeros((d, d, n))
        clips = 0
        S, root, _ = _clip_and_sqrt(S)
        for h in steps:
            dB = rng.standard_normal((d, d, n)) * math.sqrt(h)
            noise = _mm(_mm(root, dB), Q)
            MS = _mm(M, S)
            S_new = S + (MS + _tr(MS) + b) * h + noise + _tr(noise)
            S_new = 0.5 * (S_new + _tr(S_new))
            S_new, root, c = _clip_and_sqrt(S_new)
            clips += c
            integral += 0.5 * h * (S + S_new)
            S = S_new
        yield np.moveaxis(S, -1, 0), np.moveaxis(integral, -1, 0), clips


def simulate_paths(model: WishartModel, t: float, config: McConfig | None = None) -> PathSummary:
    """Mean and standard error of ``S_t`` plus the mean of ``int_0^t S ds``."""
    config = config or McConfig()
    if t < 0:
        raise InvalidModel("t must be nonnegative")
    finals, integrals, clips = [], [], 0
    for S, integral, c in _chunks(model, t, config):
        finals.append(S)
        integrals.append(integral)
        clips += c
    S = np.concatenate(finals)
    integral = np.concatenate(integrals)
    steps = len(_steps(t, config.step))
    n = config.paths
    return PathSummary(
        t=t,
        paths=n,
        steps=steps,
        mean=np.sum(S, axis=0) / n,
        stderr=np.std(S, axis=0, ddof=1) / math.sqrt(n),
        integral_mean=np.sum(integral, axis=0) / n,
        clip_fraction=clips / (n * steps) if steps else 0.0,
    )


def mc_laplace(model: WishartModel, query: LaplaceQuery,
               config: McConfig | None = None) -> tuple[float, float]:
    """Sample mean and standard error of ``exp(-Tr[w S_t] - Tr[v int_0^t S ds])``."""
    config = config or McConfig()
    if query.dim != model.dim:
        raise InvalidModel("query and model dimensions differ")
    if np.iscomplexobj(query.w) or np.iscomplexobj(query.v):
        raise InvalidModel("Monte Carlo estimates need real w and v")
    values = []
    for S, integral, _ in _chunks(model, query.t, config):
        expo = np.einsum("ij,nji->n", query.w, S) + np.einsum("ij,nji->n", query.v, integral)
        values.append(np.exp(-expo))
    x = np.concatenate(values)
    if np.ptp(x) == 0.0:
        return float(x[0]), 0.0
    return float(np.sum(x) / x.size), float(np.std(x, ddof=1) / math.sqrt(x.size))
