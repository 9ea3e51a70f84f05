"""Riccati-ODE based transform methods and algebraic Riccati solvers.

All methods integrate or represent the same flow

    psi' = psi M + M^T psi - 2 psi Q^T Q psi + v,   psi(0) = w
    phi' = Tr[b psi],                               phi(0) = 0

with ``b = alpha Q^T Q`` in the scalar case, and return a
:class:`~wishart_laplace.transform_cm.TransformResult` so callers can swap
methods freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
import scipy.linalg

from .errors import (
    AccuracyWarning,
    InvalidModel,
    NoStabilizingSolution,
    NotPositiveSemidefinite,
    NumericalBreakdown,
    PreconditionFailed,
    Singular,
)
from .matfun import (
    BranchTracker,
    as_square,
    continued_log_det,
    mat_exp,
    mat_sqrt_psd,
    trace_log_det,
)
from .model import COMMUTATION_TOL, LaplaceQuery, WishartModel, bar_matrices, commutation_residual
from .transform_cm import TransformResult, cm_transform, cm_transform_general

__all__ = [
    "RiccatiProblem",
    "MethodConfig",
    "METHODS",
    "riccati_rhs",
    "linearization_transform",
    "solve_are",
    "variation_of_constants_transform",
    "rk4_transform",
    "laplace_transform",
]

METHODS = ("cameron_martin", "linearization", "variation_of_constants", "rk4")
_ALIASES = {"cm": "cameron_martin", "lin": "linearization", "vc": "variation_of_constants"}

ARE_RESIDUAL_TOL = 1e-9
RICHARDSON_TARGET = 1e-6


@dataclass(frozen=True, eq=False)
class RiccatiProblem:
    """Coefficients of the Riccati flow. ``S0`` is only used to form ``value``."""

    M: np.ndarray
    Q: np.ndarray
    v: np.ndarray
    w: np.ndarray
    S0: np.ndarray | None = None
    alpha: float | None = None
    b: np.ndarray | None = None

    def __post_init__(self):
        M = as_square(self.M, name="M")
        d = M.shape[0]
        Q = as_square(self.Q, name="Q")
        v = as_square(self.v, name="v", symmetric=True)
        w = as_square(self.w, name="w", symmetric=True)
        for name, x in (("Q", Q), ("v", v), ("w", w)):
            if x.shape != (d, d):
                raise InvalidModel(f"{name} must be {d}x{d}")
        if np.linalg.cond(Q) > 1e12:
            raise InvalidModel("Q must be invertible")
        if (self.alpha is None) == (self.b is None):
            raise InvalidModel("give exactly one of alpha and b")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        S0 = np.zeros((d, d)) if self.S0 is None else as_square(self.S0, name="S0", symmetric=True)
        object.__setattr__(self, "S0", S0)
        if self.b is not None:
            object.__setattr__(self, "b", as_square(self.b, name="b", symmetric=True))

    @classmethod
    def from_model(cls, model: WishartModel, query: LaplaceQuery) -> "RiccatiProblem":
        return cls(model.M, model.Q, query.v, query.w, S0=model.S0, alpha=model.alpha,
                   b=None if model.alpha is not None else model.b)

    @property
    def dim(self) -> int:
        return self.M.shape[0]

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(x) for x in (self.M, self.v, self.w))

    @cached_property
    def QtQ(self) -> np.ndarray:
        return self.Q.T @ self.Q

    @cached_property
    def drift(self) -> np.ndarray:
        return self.alpha * self.QtQ if self.b is None else self.b

    def value(self, phi: complex, psi: np.ndarray) -> complex:
        return np.exp(-phi - np.trace(psi @ self.S0))


@dataclass(frozen=True)
class MethodConfig:
    method: str = "cameron_martin"
    rk4_step: float = 1e-3
    quadrature_points: int = 2000
    are_solver: str = "schur"

    def __post_init__(self):
        method = _ALIASES.get(self.method, self.method)
        if method not in METHODS:
            raise InvalidModel(f"unknown method {self.method!r}")
        object.__setattr__(self, "method", method)
        if not self.rk4_step > 0:
            raise InvalidModel("rk4_step must be positive")
        if self.quadrature_points <= 0 or self.quadrature_points % 2:
            raise InvalidModel("quadrature_points must be a positive even integer")
        if self.are_solver not in ("schur", "closed_form"):
            raise InvalidModel(f"unknown ARE solver {self.are_solver!r}")


def _sym(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + x.T)


def riccati_rhs(psi, prob: RiccatiProblem) -> np.ndarray:
    """``psi M + M^T psi - 2 psi Q^T Q psi + v``, symmetrised."""
    psi = np.asarray(psi)
    out = psi @ prob.M + prob.M.T @ psi - 2.0 * psi @ prob.QtQ @ psi + prob.v
    return _sym(out)


def _scalar_drift(prob: RiccatiProblem, what: str) -> complex:
    if prob.alpha is not None:
        return prob.alpha
    ratio = np.trace(prob.b) / np.trace(prob.QtQ)
    if np.linalg.norm(prob.b - ratio * prob.QtQ) > 1e-12 * np.linalg.norm(prob.b):
        raise InvalidModel(f"{what} needs b proportional to Q^T Q")
    return ratio


def _finish(prob, phi, psi, method, diag, real) -> TransformResult:
    if not (np.all(np.isfinite(psi)) and np.isfinite(phi)):
        raise NumericalBreakdown("non-finite psi/phi", stage=method)
    val = prob.value(phi, psi)
    if real:
        return TransformResult(complex(np.real(phi)), np.real(psi), complex(np.real(val)), method, diag)
    return TransformResult(complex(phi), psi, complex(val), method, diag)


# -- linearisation --------------------------------------------------------------

def _linearization_blocks(prob: RiccatiProblem, t: float):
    d = prob.dim
    gen = np.block([[prob.M, 2.0 * prob.QtQ], [prob.v, -prob.M.T]])
    e = mat_exp(t * gen)
    p11, p12, p21, p22 = e[:d, :d], e[:d, d:], e[d:, :d], e[d:, d:]
    return prob.w @ p12 + p22, prob.w @ p11 + p21


def linearization_transform(prob: RiccatiProblem, t: float, *,
                            branch: BranchTracker | None = None) -> TransformResult:
    """Transform from the exponential of ``t [[M, 2Q^T Q], [v, -M^T]]``.

    With blocks ``psi_ij`` of that exponential, ``D = w psi_12 + psi_22`` and

        psi = D^{-1} (w psi_11 + psi_21),
        phi = alpha/2 (Tr log D + Tr(M) t).
    """
    alpha = _scalar_drift(prob, "linearization")
    den, num = _linearization_blocks(prob, t)
    cond = float(np.linalg.cond(den))
    # relative to the pair (D, numerator) so that d = 1 blow-ups are caught too
    sv = np.linalg.svd(den, compute_uv=False)
    scale = max(float(sv[0]), float(np.linalg.norm(num, 2)))
    if not np.isfinite(cond) or cond > 1e14 or sv[-1] <= 1e-14 * scale:
        raise Singular("w psi_12 + psi_22 is singular: the transform blows up", t=t)
    psi = _sym(np.linalg.solve(den, num))
    real = not prob.is_complex
    if real:
        sign, logdet = np.linalg.slogdet(den)
        if sign <= 0:
            raise NumericalBreakdown("det(w psi_12 + psi_22) is not positive", stage=f"t={t:g}")
    elif branch is not None:
        logdet = trace_log_det(den, branch)
    else:
        logdet = continued_log_det(lambda s: _linearization_blocks(prob, s)[0], t)
    phi = 0.5 * alpha * (logdet + np.trace(prob.M) * t)
    diag = {"warnings": [], "t": t, "block_condition": cond}
    return _finish(prob, phi, psi, "linearization", diag, real)


# -- algebraic Riccati equation ----------------------------------------------------

def _are_residual(psi: np.ndarray, prob: RiccatiProblem) -> float:
    return float(np.linalg.norm(riccati_rhs(psi, prob)))


def _are_closed_form(prob: RiccatiProblem) -> np.ndarray:
    res = commutation_residual(prob.M, prob.Q)
    if res > COMMUTATION_TOL:
        raise PreconditionFailed("closed-form ARE needs the commutation condition", {"commutation": res})
    QtQ_inv = np.linalg.inv(prob.QtQ)
    v_bar, _ = bar_matrices(prob.M, prob.Q, prob.v, prob.w, QtQ_inv)
    try:
        root = mat_sqrt_psd(v_bar)
    except NotPositiveSemidefinite as exc:
        raise PreconditionFailed("closed-form ARE needs v_bar PSD",
                                 {"v_bar_min_eigenvalue": exc.min_eigenvalue or float("nan")}) from exc
    q_inv = np.linalg.inv(prob.Q)
    return _sym(q_inv @ root @ q_inv.T / 2 + QtQ_inv @ prob.M / 2)


def _are_schur(prob: RiccatiProblem) -> np.ndarray:
    d = prob.dim
    ham = np.block([[prob.M, -2.0 * prob.QtQ], [-prob.v, -prob.M.T]])
    _, z, sdim = scipy.linalg.schur(ham, output="real", sort="lhp")
    if sdim != d:
        raise NoStabilizingSolution(
            f"Hamiltonian has {sdim} stable eigenvalues, need {d} (imaginary-axis eigenvalues)")
    u1, u2 = z[:d, :d], z[d:, :d]
    if np.linalg.cond(u1) > 1e12:
        raise NoStabilizingSolution("stable invariant subspace is not a graph (singular upper block)")
    return _sym(np.linalg.solve(u1.T, u2.T).T)


def solve_are(prob: RiccatiProblem, solver: str = "schur") -> np.ndarray:
    """Symmetric stabilizing solution of ``psi M + M^T psi - 2 psi Q^T Q psi + v = 0``.

    ``schur`` takes the stable invariant subspace of the Hamiltonian
    ``[[M, -2Q^T Q], [-v, -M^T]]``; ``closed_form`` uses
    ``Q^{-1} sqrt(v_bar) Q^{-T} / 2 + (Q^T Q)^{-1} M / 2`` and needs the
    commutation condition. Both results are checked for residual and
    closed-loop stability.
    """
    if prob.is_complex:
        raise InvalidModel("solve_are supports real coefficients only")
    if solver == "schur":
        psi = _are_schur(prob)
    elif solver == "closed_form":
        psi = _are_closed_form(prob)
    else:
        raise InvalidModel(f"unknown ARE solver {solver!r}")
    res = _are_residual(psi, prob)
    if res > ARE_RESIDUAL_TOL * (1.0 + np.linalg.norm(prob.v)):
        raise NoStabilizingSolution(f"ARE residual {res:.3e} too large")
    closed = np.linalg.eigvals(prob.M - 2.0 * prob.QtQ @ psi)
    if float(closed.real.max()) >= 0.0:
        raise NoStabilizingSolution(
            f"closed-loop matrix not stable (max real part {closed.real.max():.3e})")
    return psi


# -- variation of constants -------------------------------------------------------

def _simpson(values: np.ndarray, h: float) -> np.ndarray:
    """Composite Simpson over an even number of intervals along axis 0."""
    return h / 3.0 * (values[0] + values[-1] + 4.0 * values[1:-1:2].sum(axis=0)
                      + 2.0 * values[2:-1:2].sum(axis=0))


def variation_of_constants_transform(prob: RiccatiProblem, t: float,
                                     config: MethodConfig | None = None) -> TransformResult:
    """Transform as the ARE solution plus an explicit perturbation.

    With ``psi'`` from :func:`solve_are`, ``K = M - 2 Q^T Q psi'`` and
    ``P(s) = e^{K s}``:

        psi(t) = psi' + P(t)^T [(w - psi')^{-1} + 2 int_0^t P Q^T Q P^T ds]^{-1} P(t)

    The inner integral is accumulated interval by interval with Simpson's
    rule (midpoints included); ``phi`` is composite Simpson of
    ``Tr[b psi]`` over the nodes, with a Richardson estimate from the
    half-density grid.
    """
    config = config or MethodConfig(method="variation_of_constants")
    if prob.is_complex:
        raise InvalidModel("variation of constants supports real coefficients only")
    d = prob.dim
    psi_are = solve_are(prob, config.are_solver)
    w_shift = prob.w - psi_are
    if np.linalg.cond(w_shift) > 1e12:
        raise Singular("w - psi' is singular: variation of constants is inapplicable for this w; "
                       "use cameron_martin or linearization")
    diag: dict[str, Any] = {"warnings": [], "t": t, "psi_are": psi_are}
    if t == 0.0:
        diag.update({"quadrature_step": 0.0, "intervals": 0, "richardson_estimate": 0.0})
        return _finish(prob, 0.0, prob.w.copy(), "variation_of_constants", diag, True)

    n = max(4, 4 * math.ceil(config.quadrature_points * t / 4))
    h = t / n
    K = prob.M - 2.0 * prob.QtQ @ psi_are
    step = mat_exp(0.5 * h * K)
    # P at nodes and midpoints: P[2j] = e^{K jh}, P[2j+1] = e^{K (j+1/2)h}
    P = np.empty((2 * n + 1, d, d))
    P[0] = np.eye(d)
    for i in range(2 * n):
        P[i + 1] = step @ P[i]
    F = P @ prob.QtQ @ np.swapaxes(P, 1, 2)
    pieces = h / 6.0 * (F[0:-1:2] + 4.0 * F[1::2] + F[2::2])
    inner = np.concatenate([np.zeros((1, d, d)), np.cumsum(pieces, axis=0)])
    nodes = P[::2]
    mid = np.linalg.inv(w_shift) + 2.0 * inner
    try:
        core = np.linalg.solve(mid, nodes)
    except np.linalg.LinAlgError as exc:
        raise Singular("variation-of-constants kernel is singular", t=t) from exc
    psi_nodes = psi_are + np.swapaxes(nodes, 1, 2) @ core
    psi_nodes = 0.5 * (psi_nodes + np.swapaxes(psi_nodes, 1, 2))

    integrand = np.einsum("ij,nji->n", prob.drift, psi_nodes)
    phi = float(_simpson(integrand, h))
    phi_coarse = float(_simpson(integrand[::2], 2.0 * h))
    estimate = abs(phi - phi_coarse) / 15.0
    if estimate > RICHARDSON_TARGET:
        diag["warnings"].append(
            f"{AccuracyWarning.__name__}: Richardson estimate {estimate:.3e} exceeds {RICHARDSON_TARGET:g}")
    diag.update({"quadrature_step": h, "intervals": n, "richardson_estimate": estimate})
    return _finish(prob, phi, psi_nodes[-1], "variation_of_constants", diag, True)


# -- Runge-Kutta ----------------------------------------------------------------------

def rk4_transform(prob: RiccatiProblem, t: float,
                  config: MethodConfig | None = None) -> TransformResult:
    """Classical RK4 on the joint state ``(psi, phi)``.

    Steps have length ``config.rk4_step``; the last one is shortened to land
    on ``t``.
    """
    config = config or MethodConfig(method="rk4")
    h = config.rk4_step
    n = max(0, math.ceil(t / h - 1e-9))
    M, Mt, v = prob.M, prob.M.T, prob.v
    QtQ2 = 2.0 * prob.QtQ
    drift_t = prob.drift.T

    def g(p):
        # overflow is reported below as NumericalBreakdown
        with np.errstate(over="ignore", invalid="ignore"):
            return p @ M + Mt @ p - p @ QtQ2 @ p + v

    def dphi(p):
        return np.sum(drift_t * p)

    psi = prob.w.astype(complex if prob.is_complex else float)
    phi = 0.0
    done = 0.0
    for i in range(n):
        hi = h if i < n - 1 else t - done
        k1 = g(psi)
        p2 = psi + 0.5 * hi * k1
        k2 = g(p2)
        p3 = psi + 0.5 * hi * k2
        k3 = g(p3)
        p4 = psi + hi * k3
        k4 = g(p4)
        phi = phi + hi / 6.0 * (dphi(psi) + 2.0 * dphi(p2) + 2.0 * dphi(p3) + dphi(p4))
        psi = psi + hi / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        psi = 0.5 * (psi + psi.T)
        if not (np.all(np.isfinite(psi)) and np.isfinite(phi)):
            raise NumericalBreakdown("non-finite state during RK4", stage="rk4", step=i)
        done += hi
    diag = {"warnings": [], "t": t, "steps": n, "step": h}
    return _finish(prob, phi, psi, "rk4", diag, not prob.is_complex)


# -- dispatch ---------------------------------------------------------------------------

def laplace_transform(model: WishartModel, query: LaplaceQuery,
                      config: MethodConfig | None = None) -> TransformResult:
    """Evaluate the joint transform at ``query.t`` with ``config.method``."""
    config = config or MethodConfig()
    if config.method == "cameron_martin":
        if model.scalar_gindikin:
            return cm_transform(model, query)
        return cm_transform_general(model, query, phi_mode="quadrature")
    prob = RiccatiProblem.from_model(model, query)
    if config.method == "linearization":
        res = linearization_transform(prob, query.t)
    elif config.method == "variation_of_constants":
        res = variation_of_constants_transform(prob, query.t, config)
    else:
        res = rk4_transform(prob, query.t, config)
    res.diagnostics["warnings"].extend(n for n in model.notes if "alpha" in n)
    return res
