"""Closed-form joint Laplace transform of a Wishart process and its integral.

For a model satisfying ``M^T (Q^T Q)^{-1} = (Q^T Q)^{-1} M`` the transform

    E[exp(-Tr[w S_t + int_0^t v S_s ds])] = exp(-phi(t) - Tr[psi(t) S_0])

is available without integrating any ODE:

    v_bar = Q (2v + M^T (Q^T Q)^{-1} M) Q^T
    w_bar = Q (2w - (Q^T Q)^{-1} M) Q^T
    k     = -(X cosh(Xt) + w_bar sinh(Xt))^{-1} (X sinh(Xt) + w_bar cosh(Xt)),  X = sqrt(v_bar)
    psi   = (Q^T Q)^{-1} M / 2 - Q^{-1} X k Q^{-T} / 2
    phi   = -(alpha/2) log det(e^{-Mt} (cosh(Xt) + sinh(Xt) k))

The same kernel serves complex drift/weight substitutes used by the pricing
module, so every quantity here may be complex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np

from .errors import (
    IllConditioned,
    InvalidModel,
    NotPositiveSemidefinite,
    NumericalBreakdown,
    PreconditionFailed,
    Singular,
)
from .matfun import (
    CONDITION_LIMIT,
    PSD_CLIP_TOL,
    BranchTracker,
    continued_log_det,
    eig_decompose,
    trace_log_det,
    trace_weighted_log,
)
from .model import COMMUTATION_TOL, LaplaceQuery, WishartModel, bar_matrices, commutation_residual

__all__ = [
    "TransformResult",
    "CMIntermediates",
    "CameronMartinKernel",
    "cm_intermediates",
    "cm_transform",
    "cm_transform_grid",
    "cm_transform_general",
    "marginal_transform_generalized",
]

# sqrt(v_bar) is treated as structurally singular below this relative size
_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TransformResult:
    """Output shared by every transform method."""

    phi: complex
    psi: np.ndarray
    value: complex
    method: str
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def real_value(self) -> float:
        """``value`` as a float; raises if the imaginary part is not roundoff."""
        z = complex(self.value)
        if abs(z.imag) > 1e-10 * max(1.0, abs(z)):
            raise ValueError(f"transform value {z} is not real")
        return z.real

    @property
    def warnings(self) -> list[str]:
        return list(self.diagnostics.get("warnings", []))


@dataclass(frozen=True, eq=False)
class CMIntermediates:
    v_bar: np.ndarray
    w_bar: np.ndarray
    sqrt_v_bar: np.ndarray
    k: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)


def _scalar(z: complex, real: bool) -> complex:
    z = complex(z)
    return complex(z.real, 0.0) if real else z


class CameronMartinKernel:
    """Closed-form Riccati solution for one ``(M, Q, v, w)`` and many ``t``.

    The eigendecomposition of ``v_bar`` is computed once; ``cosh``, ``sinh``
    and the square root at any ``t`` are then diagonal rescalings.
    ``psi_shift`` and ``Q_inv``/``QtQ_inv`` can be passed in when the
    caller already holds them.
    """

    def __init__(self, M, Q, v, w, *, QtQ_inv=None, Q_inv=None, allow_complex: bool = True):
        self.M = np.asarray(M)
        self.Q = np.asarray(Q)
        self.QtQ_inv = np.linalg.inv(self.Q.T @ self.Q) if QtQ_inv is None else QtQ_inv
        self.Q_inv = np.linalg.inv(self.Q) if Q_inv is None else Q_inv
        v = np.asarray(v)
        w = np.asarray(w)
        self.v_bar, self.w_bar = bar_matrices(self.M, self.Q, v, w, self.QtQ_inv)
        self.psi_shift = self.QtQ_inv @ self.M / 2
        self.trace_M = complex(np.trace(self.M))
        self.real = not any(np.iscomplexobj(x) for x in (self.M, v, w))
        self.diagnostics: dict[str, Any] = {"warnings": []}

        if self.real:
            lam, vecs = np.linalg.eigh(self.v_bar)
            scale = max(float(np.abs(lam).max()), np.finfo(float).tiny)
            lo = float(lam.min())
            if lo >= -PSD_CLIP_TOL * scale:
                self.path = "real"
                lam = np.clip(lam, 0.0, None)
                self._s = np.sqrt(lam)
            else:
                if not allow_complex:
                    raise NotPositiveSemidefinite(
                        f"v_bar has eigenvalue {lo:.3e}; real closed form unavailable", lo)
                self.path = "complex"
                self.diagnostics["warnings"].append(
                    f"v_bar not PSD (min eigenvalue {lo:.3e}); using complex square root")
                self._s = np.sqrt(lam.astype(complex))
            self._V = vecs
            self._Vinv = vecs.T
            self.condition_estimate = 1.0
        else:
            dec = eig_decompose(self.v_bar, hermitian=False)
            if dec.condition_estimate > CONDITION_LIMIT:
                raise IllConditioned("v_bar eigendecomposition", dec.condition_estimate)
            self.path = "complex"
            self._s = np.sqrt(dec.values)
            self._V = dec.vectors
            self._Vinv = np.linalg.inv(dec.vectors)
            self.condition_estimate = dec.condition_estimate
        smax = float(np.abs(self._s).max())
        self.structural = smax == 0.0 or float(np.abs(self._s).min()) <= _RANK_TOL * smax
        if self.structural:
            self.diagnostics["warnings"].append(
                "sqrt(v_bar) is rank-deficient; using the even-function form of the solution")
        self.diagnostics["path"] = self.path
        self.diagnostics["v_bar_condition_estimate"] = self.condition_estimate

    # matrix functions of X t, X = sqrt(v_bar)
    def _fn(self, values: np.ndarray) -> np.ndarray:
        return (self._V * values) @ self._Vinv

    @property
    def sqrt_v_bar(self) -> np.ndarray:
        return self._fn(self._s)

    def hyperbolic(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        st = self._s * t
        return self._fn(np.cosh(st)), self._fn(np.sinh(st))

    def _sinhc(self, t: float) -> np.ndarray:
        st = self._s * t
        out = np.empty_like(st)
        small = np.abs(st) < 1e-8
        out[small] = t * (1.0 + st[small] ** 2 / 6.0)
        out[~small] = np.sinh(st[~small]) / self._s[~small]
        return self._fn(out)

    def k(self, t: float) -> np.ndarray:
        if self.structural:
            raise Singular("k is undefined for singular sqrt(v_bar)", t=t)
        return self._k_decaying(t)[0]

    def _k_decaying(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        # k = -(X cosh + w_bar sinh)^{-1}(X sinh + w_bar cosh) rewritten with E = exp(-Xt):
        # k = -I - 2 E D^{-1} (w_bar - X) E,  D = X (I + E^2) + w_bar (I - E^2)
        x = self.sqrt_v_bar
        e = self._fn(np.exp(-self._s * t))
        e2 = e @ e
        eye = np.eye(len(self._s))
        den = x @ (eye + e2) + self.w_bar @ (eye - e2)
        k = -eye - 2.0 * e @ _solve(den, (self.w_bar - x) @ e, "k denominator", t)
        return k, den

    def solve(self, t: float) -> tuple[np.ndarray, np.ndarray, float]:
        """``(psi, G, cond)`` with ``G = cosh(Xt) + sinh(Xt) k``."""
        ch, sh = self.hyperbolic(t)
        if self.structural:
            # X k = -(cosh + w_bar S)^{-1}(v_bar S + w_bar cosh), S = sinh(Xt)/X
            sc = self._sinhc(t)
            den = ch + self.w_bar @ sc
            xk = -_solve(den, self.v_bar @ sc + self.w_bar @ ch, "k denominator", t)
            g = ch + sc @ xk
        else:
            k, den = self._k_decaying(t)
            xk = self.sqrt_v_bar @ k
            # cosh + sinh k = (I + tanh(Xt) X^{-1} w_bar)^{-1} sech(Xt); forming the
            # sum directly cancels catastrophically once |Xt| is large
            st = self._s * t
            lhs = np.eye(len(st)) + self._fn(np.tanh(st) / self._s) @ self.w_bar
            g = _solve(lhs, self._fn(1.0 / np.cosh(st)), "k denominator", t)
        cond = float(np.linalg.cond(den))
        psi = self.psi_shift - self.Q_inv @ xk @ self.Q_inv.T / 2
        return 0.5 * (psi + psi.T), g, cond

    def log_det_g(self, g: np.ndarray, branch: BranchTracker | None, t: float) -> complex:
        if self.real and self.path == "real":
            if self.structural:
                sign, logabs = np.linalg.slogdet(g)
            else:
                # det G = det(sech) / det(I + tanh X^-1 w_bar); det(sech) alone underflows
                st = self._s * t
                lhs = np.eye(len(st)) + self._fn(np.tanh(st) / self._s) @ self.w_bar
                sign, logabs = np.linalg.slogdet(lhs)
                logabs = -logabs - float(np.sum(np.logaddexp(st, -st) - np.log(2.0)))
            if sign <= 0:
                raise NumericalBreakdown(
                    "det(cosh + sinh k) is not positive: outside the transform domain",
                    stage=f"log det at t={t:g}")
            return complex(logabs)
        if branch is not None:
            return trace_log_det(g, branch)
        return self._continued_log_det(t)

    def _continued_log_det(self, t: float) -> complex:
        return continued_log_det(lambda s: self.solve(s)[1], t)

    def result(self, t: float, drift_trace_weight: float, S0: np.ndarray, *,
               branch: BranchTracker | None = None, method: str = "cameron_martin",
               extra_phi: complex = 0.0, logdet_offset: complex = 0.0) -> TransformResult:
        """Transform value for the scalar drift ``alpha Q^T Q``.

        ``drift_trace_weight`` is ``alpha``; ``extra_phi`` is added to phi
        (the short-rate level ``a * tau`` or a log-spot term).
        ``logdet_offset`` shifts a branch-tracked ``log det`` by a multiple
        of ``2 pi i`` onto the branch continued from ``t = 0``.
        """
        psi, g, cond = self.solve(t)
        logdet = self.log_det_g(g, branch, t) + logdet_offset
        phi = -(drift_trace_weight / 2.0) * (-self.trace_M * t + logdet) + extra_phi
        expo = -phi - np.trace(psi @ S0)
        if not (np.all(np.isfinite(psi)) and np.isfinite(phi)):
            raise NumericalBreakdown("non-finite psi/phi", stage="cameron_martin")
        real = self.real and self.path == "real"
        diag = dict(self.diagnostics)
        diag["warnings"] = list(self.diagnostics["warnings"])
        diag.update({"t": t, "k_denominator_condition": cond})
        if branch is not None:
            diag["branch_max_jump"] = branch.max_jump
        if real:
            psi = psi.real if np.iscomplexobj(psi) else psi
        return TransformResult(
            phi=_scalar(phi, real),
            psi=psi,
            value=_scalar(np.exp(expo), real),
            method=method,
            diagnostics=diag,
        )


def _solve(a: np.ndarray, b: np.ndarray, what: str, t: float) -> np.ndarray:
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise Singular(f"{what} is singular", t=t) from exc
    if not np.all(np.isfinite(x)):
        raise Singular(f"{what} is numerically singular", t=t)
    return x


def _require_commutation(model: WishartModel) -> float:
    res = commutation_residual(model.M, model.Q)
    if res > COMMUTATION_TOL:
        raise PreconditionFailed("commutation condition M^T (Q^T Q)^-1 = (Q^T Q)^-1 M fails",
                                 {"commutation": res})
    return res


def _kernel(model: WishartModel, query: LaplaceQuery, allow_complex: bool = True) -> CameronMartinKernel:
    if query.dim != model.dim:
        raise InvalidModel(f"query dimension {query.dim} != model dimension {model.dim}")
    _require_commutation(model)
    return CameronMartinKernel(model.M, model.Q, query.v, query.w, QtQ_inv=model.QtQ_inv,
                               Q_inv=model.Q_inv, allow_complex=allow_complex)


def cm_intermediates(model: WishartModel, query: LaplaceQuery, *,
                     allow_complex: bool = False) -> CMIntermediates:
    """``v_bar``, ``w_bar``, ``sqrt(v_bar)`` and ``k`` at ``query.t``.

    By default this is the real path and raises
    :class:`NotPositiveSemidefinite` when ``v_bar`` has a negative eigenvalue.
    """
    kern = _kernel(model, query, allow_complex=allow_complex)
    k = kern.k(query.t)
    x = kern.sqrt_v_bar
    ch, sh = kern.hyperbolic(query.t)
    diag = dict(kern.diagnostics)
    diag["k_denominator_condition"] = float(np.linalg.cond(x @ ch + kern.w_bar @ sh))
    return CMIntermediates(kern.v_bar, kern.w_bar, x, k, diag)


def _hypothesis_notes(model: WishartModel) -> list[str]:
    return [n for n in model.notes if "alpha" in n]


def cm_transform(model: WishartModel, query: LaplaceQuery, *,
                 branch: BranchTracker | None = None) -> TransformResult:
    """Closed-form transform for a model with scalar Gindikin parameter."""
    if not model.scalar_gindikin:
        raise InvalidModel("cm_transform needs a scalar alpha; use cm_transform_general for b")
    kern = _kernel(model, query)
    res = kern.result(query.t, model.alpha, model.S0, branch=branch)
    res.diagnostics["warnings"].extend(_hypothesis_notes(model))
    return res


def cm_transform_grid(model: WishartModel, query: LaplaceQuery,
                      ts: Iterable[float]) -> list[TransformResult]:
    """Closed form on an increasing time grid with one shared kernel."""
    ts = [float(t) for t in ts]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise InvalidModel("time grid must be nondecreasing")
    kern = _kernel(model, query)
    branch = None if kern.path == "real" else BranchTracker()
    notes = _hypothesis_notes(model)
    out = []
    for t in ts:
        res = kern.result(t, model.alpha, model.S0, branch=branch)
        res.diagnostics["warnings"].extend(notes)
        out.append(res)
    return out


def cm_transform_general(model: WishartModel, query: LaplaceQuery, *,
                         phi_mode: str = "closed_form",
                         branch: BranchTracker | None = None) -> TransformResult:
    """Closed form for the generalised drift ``M S + S M^T + b``.

    ``psi`` is identical to the scalar case. In ``closed_form`` mode

        phi = Tr[b (Q^T Q)^{-1} M / 2] t
              + 1/2 Tr[Q^{-T} b Q^{-1} log(X^{-1} (X cosh(Xt) + w_bar sinh(Xt)))]

    which reproduces ``int_0^t Tr[b psi(s)] ds`` exactly when
    ``Q^{-T} b Q^{-1}`` is a multiple of the identity; otherwise a warning is
    attached. ``quadrature`` mode integrates ``Tr[b psi]`` with composite
    Gauss-Legendre instead and is exact for any admissible ``b``.
    """
    if phi_mode not in ("closed_form", "quadrature"):
        raise InvalidModel(f"unknown phi_mode {phi_mode!r}")
    kern = _kernel(model, query)
    t = query.t
    b = model.drift_constant
    psi, _, cond = kern.solve(t)
    diag = dict(kern.diagnostics)
    diag["warnings"] = list(kern.diagnostics["warnings"])
    diag.update({"t": t, "k_denominator_condition": cond, "phi_mode": phi_mode})

    if phi_mode == "quadrature":
        phi = _phi_by_quadrature(kern, b, t)
    else:
        b_tilde = model.Q_inv.T @ b @ model.Q_inv
        scalar_part = np.trace(b_tilde) / model.dim
        if np.linalg.norm(b_tilde - scalar_part * np.eye(model.dim)) > 1e-12 * np.linalg.norm(b_tilde):
            diag["warnings"].append(
                "Q^-T b Q^-1 is not a multiple of I: closed-form phi is not exact "
                "(use phi_mode='quadrature')")
        phi = np.trace(b @ kern.psi_shift) * t
        if t > 0.0:
            x = kern.sqrt_v_bar
            ch, sh = kern.hyperbolic(t)
            rhs = x @ ch + kern.w_bar @ sh
            if kern.structural:
                y = np.linalg.lstsq(x, rhs, rcond=None)[0]
                diag["warnings"].append("sqrt(v_bar) singular: log argument from least squares")
            else:
                y = _solve(x, rhs, "sqrt(v_bar)", t)
            phi = phi + 0.5 * trace_weighted_log(b_tilde, y, branch)
    real = kern.path == "real"
    phi = _scalar(phi, real)
    expo = -phi - np.trace(psi @ model.S0)
    if not (np.all(np.isfinite(psi)) and np.isfinite(phi)):
        raise NumericalBreakdown("non-finite psi/phi", stage="cameron_martin_general")
    return TransformResult(phi, psi, _scalar(np.exp(expo), real), "cameron_martin_general", diag)


def _phi_by_quadrature(kern: CameronMartinKernel, b: np.ndarray, t: float,
                       nodes: int = 16) -> complex:
    if t == 0.0:
        return 0j
    panels = max(4, int(math.ceil(4 * t)))
    x, wts = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(0.0, t, panels + 1)
    total = 0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        for xi, wi in zip(x, wts):
            psi, _, _ = kern.solve(mid + half * xi)
            total += half * wi * np.trace(b @ psi)
    return total


def marginal_transform_generalized(b, Q, S0, u, t: float) -> complex:
    """``E[exp(-Tr[u S_t])]`` for ``dS = sqrt(S) dB Q + Q^T dB^T sqrt(S) + b dt``.

    Equal to ``exp(-1/2 Tr[Q^{-T} b Q^{-1} log(I + 2t Q u Q^T)]
    - Tr[(I + 2t u Q^T Q)^{-1} u S0])``.
    """
    b = np.asarray(b, dtype=float)
    Q = np.asarray(Q, dtype=float)
    S0 = np.asarray(S0, dtype=float)
    u = np.asarray(u)
    d = Q.shape[0]
    if t < 0:
        raise InvalidModel("t must be nonnegative")
    ident = np.eye(d)
    qinv = np.linalg.inv(Q)
    b_tilde = qinv.T @ b @ qinv
    lhs = ident + 2.0 * t * u @ Q.T @ Q
    sym = ident + 2.0 * t * Q @ u @ Q.T
    try:
        if np.linalg.cond(lhs) > 1e14:
            raise np.linalg.LinAlgError
        psi = np.linalg.solve(lhs, u)
    except np.linalg.LinAlgError as exc:
        raise Singular("I + 2t u Q^T Q is singular (boundary of the transform domain)", t=t) from exc
    phi = 0.5 * trace_weighted_log(b_tilde, sym)
    val = np.exp(-phi - np.trace(psi @ S0))
    if not np.iscomplexobj(u) and abs(complex(val).imag) <= 1e-14 * abs(val):
        return complex(complex(val).real)
    return complex(val)

