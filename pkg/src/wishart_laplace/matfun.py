"""Dense matrix functions over real and complex square matrices.

Everything except :func:`mat_exp` is computed from a complex
eigendecomposition, guarded by a condition estimate on the eigenvector
matrix. ``mat_exp`` uses scaling and squaring with a diagonal Padé
approximant so that it also handles defective and strongly non-normal
inputs such as the block generator of the linearised Riccati flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    IllConditioned,
    InputError,
    MatrixOverflow,
    NotPositiveSemidefinite,
    Singular,
)

__all__ = [
    "EigenDecomposition",
    "BranchTracker",
    "as_square",
    "eig_decompose",
    "mat_exp",
    "mat_sqrt_psd",
    "mat_sqrt",
    "mat_cosh_sinh",
    "mat_log",
    "trace_log_det",
    "trace_weighted_log",
    "continued_log_det",
    "mat_solve",
    "mat_det",
    "is_symmetric",
]

CONDITION_LIMIT = 1e8
SYMMETRY_TOL = 1e-12
PSD_CLIP_TOL = 1e-10


def is_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    """Entrywise symmetry test relative to the largest entry."""
    scale = 1.0 + float(np.max(np.abs(a))) if a.size else 1.0
    return float(np.max(np.abs(a - a.T))) <= tol * scale


def as_square(a, *, name: str = "matrix", symmetric: bool = False,
              tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Validate and copy ``a`` into a finite square float/complex array.

    With ``symmetric=True`` the input must be symmetric to ``tol`` (relative
    to ``1 + max|a_ij|``) and the returned copy is exactly symmetrised.
    """
    arr = np.array(a, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InputError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    if np.iscomplexobj(arr):
        arr = arr.astype(complex)
    else:
        try:
            arr = arr.astype(float)
        except (TypeError, ValueError) as exc:
            raise InputError(f"{name} has non-numeric entries") from exc
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    if symmetric:
        if not is_symmetric(arr, tol):
            raise InputError(f"{name} is not symmetric")
        arr = 0.5 * (arr + arr.T)
    return arr


def _maybe_real(x: np.ndarray, want_real: bool) -> np.ndarray:
    if not want_real or not np.iscomplexobj(x):
        return x
    scale = max(1.0, float(np.max(np.abs(x))))
    if float(np.max(np.abs(x.imag))) <= 1e-10 * scale:
        return np.ascontiguousarray(x.real)
    return x


# -- eigendecomposition -----------------------------------------------------

@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray
    condition_estimate: float

    @property
    def inverse_vectors(self) -> np.ndarray:
        return np.linalg.inv(self.vectors)

    def apply(self, f_values: np.ndarray) -> np.ndarray:
        """``V diag(f_values) V^{-1}``."""
        v = self.vectors
        return (v * f_values) @ np.linalg.inv(v)

    def residual(self, a: np.ndarray) -> float:
        rec = self.apply(self.values)
        return float(np.linalg.norm(rec - a) / max(np.linalg.norm(a), np.finfo(float).tiny))


def eig_decompose(a: np.ndarray, *, hermitian: bool | None = None) -> EigenDecomposition:
    """Eigendecomposition with a condition estimate of the eigenvector matrix.

    Real symmetric (or complex Hermitian) input takes the ``eigh`` path,
    whose eigenvectors are orthonormal, so the condition estimate is 1.
    """
    a = np.asarray(a)
    if hermitian is None:
        scale = 1.0 + float(np.max(np.abs(a)))
        hermitian = float(np.max(np.abs(a - a.conj().T))) <= SYMMETRY_TOL * scale
    if hermitian:
        vals, vecs = np.linalg.eigh(0.5 * (a + a.conj().T))
        return EigenDecomposition(vals.astype(complex), vecs.astype(complex), 1.0)
    vals, vecs = np.linalg.eig(a)
    with np.errstate(divide="ignore"):
        cond = float(np.linalg.cond(vecs))
    return EigenDecomposition(vals.astype(complex), vecs.astype(complex), cond)


def _guarded(dec: EigenDecomposition, what: str) -> EigenDecomposition:
    if not np.isfinite(dec.condition_estimate) or dec.condition_estimate > CONDITION_LIMIT:
        raise IllConditioned(f"{what}: eigenvector matrix is near-defective", dec.condition_estimate)
    return dec


# -- exponential --------------------------------------------------------------

_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
# 1-norm bounds below which the degree-m approximant is accurate to unit roundoff
_PADE_THETA = ((3, 1.495585217958292e-2), (5, 2.539398330063230e-1),
               (7, 9.504178996162932e-1), (9, 2.097847961257068e0))
_THETA_13 = 5.371920351148152e0


def _pade(a: np.ndarray, m: int) -> np.ndarray:
    c = _PADE_COEFFS[m]
    n = a.shape[0]
    ident = np.eye(n, dtype=a.dtype)
    a2 = a @ a
    if m == 13:
        a4 = a2 @ a2
        a6 = a2 @ a4
        u = a @ (a6 @ (c[13] * a6 + c[11] * a4 + c[9] * a2)
                 + c[7] * a6 + c[5] * a4 + c[3] * a2 + c[1] * ident)
        v = (a6 @ (c[12] * a6 + c[10] * a4 + c[8] * a2)
             + c[6] * a6 + c[4] * a4 + c[2] * a2 + c[0] * ident)
    else:
        powers = [ident, a2]
        for _ in range(2, (m + 1) // 2):
            powers.append(powers[-1] @ a2)
        u = a @ sum(c[2 * j + 1] * powers[j] for j in range((m + 1) // 2))
        v = sum(c[2 * j] * powers[j] for j in range((m + 1) // 2))
    return np.linalg.solve(v - u, v + u)


def mat_exp(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with Padé approximants.

    Raises :class:`MatrixOverflow` when the result is not representable.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError("mat_exp expects a square matrix")
    if not np.all(np.isfinite(a)):
        raise InputError("mat_exp: non-finite input")
    a = a.astype(complex if np.iscomplexobj(a) else float)
    norm1 = float(np.linalg.norm(a, 1)) if a.size else 0.0
    if norm1 == 0.0:
        return np.eye(a.shape[0], dtype=a.dtype)
    for m, theta in _PADE_THETA:
        if norm1 <= theta:
            return _pade(a, m)
    s = max(0, int(math.ceil(math.log2(norm1 / _THETA_13))))
    # e^{||A||} overflows long before 2^1100 squarings would be needed
    if s > 1100 or norm1 > 1e300:
        raise MatrixOverflow(f"mat_exp: norm {norm1:.3e} out of range")
    with np.errstate(over="ignore", invalid="ignore"):
        x = _pade(a / (2.0 ** s), 13)
        for _ in range(s):
            x = x @ x
    if not np.all(np.isfinite(x)):
        raise MatrixOverflow(f"mat_exp: result overflows (1-norm of input {norm1:.3e})")
    return x


# -- square roots, hyperbolic functions, logarithm ----------------------------

def mat_sqrt_psd(a) -> np.ndarray:
    """Symmetric PSD square root with clipping of roundoff-level negatives."""
    a = as_square(a, name="mat_sqrt_psd argument", symmetric=True)
    if np.iscomplexobj(a):
        raise InputError("mat_sqrt_psd expects a real symmetric matrix")
    vals, vecs = np.linalg.eigh(a)
    scale = float(np.linalg.norm(a, 2))
    lo = float(vals.min())
    if lo < -PSD_CLIP_TOL * scale:
        raise NotPositiveSemidefinite(
            f"matrix has eigenvalue {lo:.3e} below -1e-10*||A|| = {-PSD_CLIP_TOL * scale:.3e}",
            min_eigenvalue=lo)
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return 0.5 * (root + root.T)


def mat_sqrt(a) -> np.ndarray:
    """Principal square root through the eigendecomposition (complex allowed)."""
    a = np.asarray(a)
    dec = _guarded(eig_decompose(a), "mat_sqrt")
    return _maybe_real(dec.apply(np.sqrt(dec.values)), not np.iscomplexobj(a))


def mat_cosh_sinh(a) -> tuple[np.ndarray, np.ndarray]:
    """``(cosh A, sinh A)`` from the exponential definition."""
    a = np.asarray(a)
    ep = mat_exp(a)
    em = mat_exp(-a)
    return 0.5 * (ep + em), 0.5 * (ep - em)


def _check_nonsingular(values: np.ndarray, a: np.ndarray, what: str) -> None:
    scale = max(float(np.linalg.norm(a, 2)), np.finfo(float).tiny)
    if float(np.min(np.abs(values))) <= 1e-14 * scale:
        raise Singular(f"{what}: matrix is singular")


def mat_log(a, branch: "BranchTracker | None" = None) -> np.ndarray:
    """Principal matrix logarithm (or branch-continued with ``branch``)."""
    a = np.asarray(a)
    dec = _guarded(eig_decompose(a), "mat_log")
    _check_nonsingular(dec.values, a, "mat_log")
    logs = branch.logs(dec.values) if branch is not None else np.log(dec.values)
    return _maybe_real(dec.apply(logs), not np.iscomplexobj(a) and branch is None)


class BranchTracker:
    """Continuous eigenvalue logarithms along an ordered sweep.

    Each call to :meth:`logs` matches the new eigenvalues to the previous
    ones (minimum total distance) and chooses for every eigenvalue the
    argument closest to its predecessor's. ``max_jump`` records the largest
    absolute phase step seen; steps above ``warn_jump`` are counted in
    ``ambiguous_steps`` because they are close to the pi resolution limit.
    """

    def __init__(self, warn_jump: float = 0.5 * math.pi):
        self.warn_jump = warn_jump
        self.max_jump = 0.0
        self.ambiguous_steps = 0
        self.steps = 0
        self._vals: np.ndarray | None = None
        self._logs: np.ndarray | None = None

    def reset(self) -> None:
        self._vals = None
        self._logs = None

    def logs(self, eigenvalues: np.ndarray) -> np.ndarray:
        vals = np.asarray(eigenvalues, dtype=complex)
        principal = np.log(vals)
        if self._vals is None or self._vals.shape != vals.shape:
            out = principal
        else:
            cost = np.abs(vals[:, None] - self._vals[None, :])
            rows, cols = linear_sum_assignment(cost)
            out = np.empty_like(principal)
            step_max = 0.0
            for i, j in zip(rows, cols):
                prev_arg = self._logs[j].imag
                delta = (np.angle(vals[i]) - prev_arg + math.pi) % (2 * math.pi) - math.pi
                step_max = max(step_max, abs(delta))
                out[i] = complex(principal[i].real, prev_arg + delta)
            self.max_jump = max(self.max_jump, step_max)
            if step_max > self.warn_jump:
                self.ambiguous_steps += 1
        self.steps += 1
        self._vals = vals
        self._logs = out
        return out


def trace_log_det(a, branch: BranchTracker | None = None) -> complex:
    """``Tr log A = log det A`` as a sum of eigenvalue logarithms."""
    a = np.asarray(a)
    vals = np.linalg.eigvals(a)
    _check_nonsingular(vals, a, "trace_log_det")
    logs = branch.logs(vals) if branch is not None else np.log(vals.astype(complex))
    return complex(np.sum(logs))


def continued_log_det(g_of_t, t: float, *, start_steps: int = 8,
                      max_steps: int = 4096) -> complex:
    """``log det G(t)`` continued along ``[0, t]`` from ``G(0) = I``.

    ``g_of_t`` maps a time to the matrix ``G``. The sweep is refined until no
    eigenvalue phase moves by more than pi/3 between consecutive nodes.
    """
    steps = start_steps
    while True:
        tracker = BranchTracker(warn_jump=math.pi / 3)
        val = 0j
        for s in np.linspace(0.0, t, steps + 1):
            val = trace_log_det(g_of_t(float(s)), tracker)
        if tracker.ambiguous_steps == 0 or steps >= max_steps:
            return val
        steps *= 2


def trace_weighted_log(weight, a, branch: BranchTracker | None = None) -> complex:
    """``Tr[weight @ log A]`` without forming ``log A`` explicitly."""
    a = np.asarray(a)
    dec = _guarded(eig_decompose(a, hermitian=False), "trace_weighted_log")
    _check_nonsingular(dec.values, a, "trace_weighted_log")
    logs = branch.logs(dec.values) if branch is not None else np.log(dec.values)
    v = dec.vectors
    diag = np.einsum("ij,ji->i", np.linalg.solve(v, np.asarray(weight)), v)
    return complex(np.sum(diag * logs))


def mat_solve(a, b, *, what: str = "linear system", t: float | None = None) -> np.ndarray:
    """``a^{-1} b`` raising :class:`Singular` instead of returning garbage."""
    a = np.asarray(a)
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise Singular(f"{what}: matrix is singular", t=t) from exc
    if np.linalg.cond(a) > 1e14 or not np.all(np.isfinite(x)):
        raise Singular(f"{what}: matrix is numerically singular", t=t)
    return x


def mat_det(a) -> complex | float:
    return np.linalg.det(np.asarray(a))
