"""Log-price transforms, zero-coupon bonds and Fourier call pricing.

Stochastic volatility (one asset, Wishart variance ``Tr S``)::

    dX/X = r dt + Tr[sqrt(S) (dB R^T + dW sqrt(I - R R^T))]

Stochastic correlation (``d`` assets with covariance ``S``)::

    dX_i/X_i = r dt + (sqrt(S) (dB rho + sqrt(1 - rho^T rho) dW))_i

For a fixed Laplace argument both reduce to the Cameron-Martin kernel with a
substituted drift and state weight, so every transform here reuses
:class:`~wishart_laplace.transform_cm.CameronMartinKernel`, over complex
scalars when the argument is complex.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable

import numpy as np
from scipy.integrate import trapezoid

from .errors import (
    BranchError,
    BranchWarning,
    DampingInvalid,
    DomainError,
    InvalidModel,
    PreconditionFailed,
)
from .matfun import BranchTracker, as_square, trace_log_det
from .model import COMMUTATION_TOL, WishartModel, commutation_residual
from .transform_cm import CameronMartinKernel, TransformResult

__all__ = [
    "SVModel",
    "SCModel",
    "ShortRateModel",
    "CarrMadanConfig",
    "sv_substitutes",
    "sc_substitutes",
    "sv_log_price_transform",
    "sv_transform_grid",
    "sc_log_price_transform",
    "zcb_price",
    "yield_curve",
    "carr_madan_call",
    "carr_madan_put",
    "CallPrice",
]

BRANCH_ERROR_JUMP = 0.9 * math.pi


def _require_scalar_alpha(core: WishartModel) -> None:
    if not core.scalar_gindikin:
        raise InvalidModel("pricing models need a scalar alpha")


@dataclass(frozen=True, eq=False)
class SVModel:
    core: WishartModel
    R: np.ndarray
    X0: float
    r: float = 0.0

    def __post_init__(self):
        _require_scalar_alpha(self.core)
        R = as_square(self.R, name="R")
        if R.shape != self.core.M.shape:
            raise InvalidModel("R must match the dimension of the model")
        lo = float(np.linalg.eigvalsh(np.eye(R.shape[0]) - R @ R.T).min())
        if lo < -1e-12:
            raise InvalidModel(f"I - R R^T is not PSD (min eigenvalue {lo:.3e})")
        if not self.X0 > 0:
            raise InvalidModel("X0 must be positive")
        R.setflags(write=False)
        object.__setattr__(self, "R", R)

    def condition_residuals(self) -> dict[str, float]:
        core = self.core
        lhs = self.R @ core.Q @ core.QtQ_inv
        rhs = core.QtQ_inv @ core.Q.T @ self.R.T
        scale = 1.0 + float(np.abs(lhs).max())
        return {"commutation": commutation_residual(core.M, core.Q),
                "correlation": float(np.abs(lhs - rhs).max()) / scale}


@dataclass(frozen=True, eq=False)
class SCModel:
    core: WishartModel
    rho: np.ndarray
    spots: np.ndarray
    r: float = 0.0

    def __post_init__(self):
        _require_scalar_alpha(self.core)
        d = self.core.dim
        rho = np.array(self.rho, dtype=float).reshape(-1)
        spots = np.array(self.spots, dtype=float).reshape(-1)
        if rho.shape != (d,) or spots.shape != (d,):
            raise InvalidModel(f"rho and spots must have length {d}")
        if float(rho @ rho) > 1.0 + 1e-12:
            raise InvalidModel("rho^T rho must not exceed 1")
        if not np.all(spots > 0):
            raise InvalidModel("spots must be positive")
        rho.setflags(write=False)
        spots.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "spots", spots)

    def condition_residuals(self, omega) -> dict[str, float]:
        core = self.core
        omega = np.asarray(omega).reshape(-1)
        lhs = np.outer(omega, self.rho) @ core.Q_inv.T
        rhs = core.Q_inv @ np.outer(self.rho, omega)
        scale = 1.0 + float(np.abs(lhs).max())
        return {"commutation": commutation_residual(core.M, core.Q),
                "correlation": float(np.abs(lhs - rhs).max()) / scale}


@dataclass(frozen=True, eq=False)
class ShortRateModel:
    """``r_t = a + Tr[v S_t]``."""

    core: WishartModel
    a: float
    v: np.ndarray

    def __post_init__(self):
        _require_scalar_alpha(self.core)
        if self.a < 0:
            raise InvalidModel("a must be nonnegative")
        v = as_square(self.v, name="v", symmetric=True)
        if v.shape != self.core.M.shape:
            raise InvalidModel("v must match the dimension of the model")
        lo = float(np.linalg.eigvalsh(v).min())
        if lo < -1e-12 * (1.0 + float(np.abs(v).max())):
            raise InvalidModel(f"v must be PSD (min eigenvalue {lo:.3e})")
        v.setflags(write=False)
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class CarrMadanConfig:
    damping: float = 1.5
    omega_max: float = 200.0
    points: int = 4096

    def __post_init__(self):
        if not self.damping > 0:
            raise InvalidModel("damping must be positive")
        if not self.omega_max > 0:
            raise InvalidModel("omega_max must be positive")
        if self.points < 2 or self.points & (self.points - 1):
            raise InvalidModel("points must be a power of two")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, self.omega_max, self.points)


def _check(residuals: dict[str, float], what: str) -> None:
    if max(residuals.values()) > COMMUTATION_TOL:
        raise PreconditionFailed(f"{what}: commutation system fails", residuals)


# -- stochastic volatility ------------------------------------------------------------

def sv_substitutes(model: SVModel, omega: complex) -> tuple[np.ndarray, np.ndarray]:
    """Drift and state weight of the Riccati problem for ``E[exp(-omega Y_T)]``."""
    core = model.core
    d = core.dim
    omega = omega if np.iscomplexobj(omega) else float(omega)
    M_sub = core.M - omega * core.Q.T @ model.R.T
    v_sub = -0.5 * (omega * omega + omega) * np.eye(d)
    return M_sub, v_sub


def _sv_kernel(model: SVModel, omega) -> CameronMartinKernel:
    M_sub, v_sub = sv_substitutes(model, omega)
    core = model.core
    return CameronMartinKernel(M_sub, core.Q, v_sub, np.zeros_like(v_sub),
                               QtQ_inv=core.QtQ_inv, Q_inv=core.Q_inv)


def _spot_term(model: SVModel, omega, tau: float) -> complex:
    return omega * (math.log(model.X0) + model.r * tau)


def sv_log_price_transform(model: SVModel, omega: complex, tau: float, *,
                           branch: BranchTracker | None = None) -> TransformResult:
    """``E[exp(-omega log X_T)] = exp(-phi - Tr[psi S_0])``.

    ``phi`` includes the spot term ``omega (log X0 + r tau)``. Without a
    ``branch`` the determinant logarithm is continued in time from ``tau = 0``.
    """
    _check(model.condition_residuals(), "stochastic volatility transform")
    kern = _sv_kernel(model, omega)
    return kern.result(tau, model.core.alpha, model.core.S0, branch=branch,
                       method="sv_log_price", extra_phi=_spot_term(model, omega, tau))


def sv_transform_grid(model: SVModel, omegas: Iterable[complex], tau: float) -> list[TransformResult]:
    """Transforms along an ordered argument grid with phase tracking.

    The first node fixes the branch by continuation in time; later nodes
    follow it eigenvalue by eigenvalue. Phase steps above pi/2 emit a
    :class:`BranchWarning`, steps above 0.9 pi raise :class:`BranchError`.
    """
    _check(model.condition_residuals(), "stochastic volatility transform")
    tracker = BranchTracker()
    out: list[TransformResult] = []
    offset = 0j
    for j, omega in enumerate(omegas):
        kern = _sv_kernel(model, omega)
        if j == 0:
            _, g, _ = kern.solve(tau)
            offset = kern._continued_log_det(tau) - trace_log_det(g, tracker)
            tracker.reset()
        res = kern.result(tau, model.core.alpha, model.core.S0, branch=tracker,
                          method="sv_log_price", extra_phi=_spot_term(model, omega, tau),
                          logdet_offset=offset)
        if tracker.max_jump > BRANCH_ERROR_JUMP:
            raise BranchError(f"log det phase jumped by {tracker.max_jump:.3f} at grid node {j}; "
                              "refine the grid")
        out.append(res)
    if tracker.ambiguous_steps:
        warnings.warn(f"{tracker.ambiguous_steps} ambiguous phase steps along the argument grid "
                      f"(max jump {tracker.max_jump:.3f})", BranchWarning, stacklevel=2)
    return out


# -- stochastic correlation ------------------------------------------------------------

def sc_substitutes(model: SCModel, omega) -> tuple[np.ndarray, np.ndarray]:
    """Drift and state weight for ``E[exp(-omega^T Y_T)]``."""
    omega = np.asarray(omega).reshape(-1)
    core = model.core
    M_sub = core.M - core.Q.T @ np.outer(model.rho, omega)
    v_sub = -0.5 * (np.diag(omega) + np.outer(omega, omega))
    return M_sub, v_sub


def sc_log_price_transform(model: SCModel, omega, tau: float, *,
                           branch: BranchTracker | None = None) -> TransformResult:
    """``E[exp(-omega^T log X_T)]`` for the vector of log-prices."""
    omega = np.asarray(omega).reshape(-1)
    if omega.shape != (model.core.dim,):
        raise InvalidModel(f"omega must have length {model.core.dim}")
    _check(model.condition_residuals(omega), "stochastic correlation transform")
    M_sub, v_sub = sc_substitutes(model, omega)
    core = model.core
    kern = CameronMartinKernel(M_sub, core.Q, v_sub, np.zeros_like(v_sub),
                               QtQ_inv=core.QtQ_inv, Q_inv=core.Q_inv)
    spot = omega @ (np.log(model.spots) + model.r * tau)
    return kern.result(tau, core.alpha, core.S0, branch=branch,
                       method="sc_log_price", extra_phi=spot)


# -- short rate --------------------------------------------------------------------------

def _zcb_result(model: ShortRateModel, tau: float) -> TransformResult:
    core = model.core
    res = commutation_residual(core.M, core.Q)
    if res > COMMUTATION_TOL:
        raise PreconditionFailed("bond pricing needs the commutation condition", {"commutation": res})
    kern = CameronMartinKernel(core.M, core.Q, model.v, np.zeros_like(model.v),
                               QtQ_inv=core.QtQ_inv, Q_inv=core.Q_inv, allow_complex=False)
    return kern.result(tau, core.alpha, core.S0, method="zcb", extra_phi=model.a * tau)


def zcb_price(model: ShortRateModel, tau: float) -> float:
    """``E[exp(-int_0^tau r_s ds)]``."""
    if tau < 0:
        raise InvalidModel("tau must be nonnegative")
    return _zcb_result(model, tau).real_value


def yield_curve(model: ShortRateModel, taus: Iterable[float]) -> dict[str, Any]:
    """Prices and continuously compounded yields with a monotonicity flag."""
    taus = [float(t) for t in taus]
    prices = [zcb_price(model, t) for t in taus]
    yields = [(-math.log(p) / t) if t > 0 else None for t, p in zip(taus, prices)]
    decreasing = all(b <= a for a, b in zip(prices, prices[1:]))
    return {"tau": taus, "price": prices, "yield": yields, "price_decreasing": decreasing}


# -- Carr-Madan -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CallPrice:
    price: float
    damping: float
    diagnostics: dict[str, Any] = field(default_factory=dict)


def _probe(model: SVModel, damping: float, maturity: float) -> float:
    """``E[X_T^{damping + 1}]``; :class:`DampingInvalid` if not finite."""
    try:
        val = sv_log_price_transform(model, -(damping + 1.0), maturity).value
    except DomainError as exc:
        raise DampingInvalid(f"E[X_T^(alpha+1)] is not finite for alpha={damping}: {exc}",
                             damping) from exc
    val = complex(val)
    if not np.isfinite(val) or val.real <= 0 or abs(val.imag) > 1e-8 * abs(val):
        raise DampingInvalid(f"E[X_T^(alpha+1)] = {val} is not a finite positive moment "
                             f"for alpha={damping}", damping)
    return val.real


def _damped_price(model: SVModel, strike: float, maturity: float, damping: float,
                  config: CarrMadanConfig) -> CallPrice:
    if not strike > 0 or not maturity >= 0:
        raise InvalidModel("strike must be positive and maturity nonnegative")
    moment = _probe(model, damping, maturity)
    k = math.log(strike)
    omegas = config.grid
    # characteristic function argument u = omega - (damping + 1) i  <->  Laplace argument -i u
    laplace_args = -1j * omegas - (damping + 1.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BranchWarning)
        results = sv_transform_grid(model, laplace_args, maturity)
    cf = np.array([complex(r.value) for r in results])
    denom = damping * damping + damping - omegas ** 2 + 1j * (2.0 * damping + 1.0) * omegas
    integrand = np.real(np.exp(-1j * omegas * k) * math.exp(-model.r * maturity) * cf / denom)
    price = math.exp(-damping * k) / math.pi * float(trapezoid(integrand, omegas))
    tail = abs(integrand[-1])
    diag = {
        "strike": strike,
        "maturity": maturity,
        "omega_max": config.omega_max,
        "points": config.points,
        "moment_probe": moment,
        "integrand_tail": tail,
        "branch_warnings": [str(w.message) for w in caught if issubclass(w.category, BranchWarning)],
    }
    for w in caught:
        if not issubclass(w.category, BranchWarning):
            warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return CallPrice(price, damping, diag)


def carr_madan_call(model: SVModel, strike: float, maturity: float,
                    config: CarrMadanConfig | None = None) -> CallPrice:
    """European call by Fourier inversion of the damped call price.

    ``C(k) = e^{-alpha k}/pi int_0^inf Re(e^{-i w k} C_hat(w)) dw`` with
    ``C_hat(w) = e^{-rT} Psi(w - (alpha+1) i) / (alpha^2 + alpha - w^2 + i (2 alpha + 1) w)``
    and ``Psi`` the characteristic function of ``log X_T``; trapezoidal
    rule on ``config.grid``.
    """
    config = config or CarrMadanConfig()
    out = _damped_price(model, strike, maturity, config.damping, config)
    forward_bound = max(0.0, model.X0 - strike * math.exp(-model.r * maturity))
    slack = 10.0 * out.diagnostics["integrand_tail"] + 1e-10 * model.X0
    out.diagnostics["within_bounds"] = bool(forward_bound - slack <= out.price <= model.X0 + slack)
    return out


def carr_madan_put(model: SVModel, strike: float, maturity: float,
                   config: CarrMadanConfig | None = None) -> CallPrice:
    """European put from the same inversion with damping ``-config.damping``.

    For a damping below ``-1`` the damped-call integral equals the put price,
    so this is an independent route to put-call parity.
    """
    config = config or CarrMadanConfig()
    if config.damping <= 1.0:
        raise DampingInvalid("put inversion needs damping > 1 (used as -damping < -1)", config.damping)
    return _damped_price(model, strike, maturity, -config.damping, config)
