import cmath
import math

import numpy as np
import pytest
from scipy.stats import norm

from conftest import ALPHA, M, Q, S0, commuting_model
from wishart_laplace.errors import DampingInvalid, InvalidModel, PreconditionFailed
from wishart_laplace.model import LaplaceQuery, WishartModel
from wishart_laplace.pricing import (
    CarrMadanConfig,
    SCModel,
    ShortRateModel,
    SVModel,
    carr_madan_call,
    carr_madan_put,
    sc_log_price_transform,
    sc_substitutes,
    sv_log_price_transform,
    sv_substitutes,
    sv_transform_grid,
    yield_curve,
    zcb_price,
)
from wishart_laplace.transform_ode import MethodConfig, RiccatiProblem, rk4_transform

SMALL_GRID = CarrMadanConfig(points=1024, omega_max=100.0)


@pytest.fixture
def core():
    return WishartModel(S0, M, Q, alpha=ALPHA)


@pytest.fixture
def sv(core):
    # R = T Q^T with T symmetric satisfies the correlation condition
    T = np.array([[-2.0, 0.5], [0.5, -1.0]])
    return SVModel(core, T @ Q.T, 100.0)


def admissible_sv(seed):
    rng = np.random.default_rng(seed)
    core = commuting_model(rng, d=2)
    Tm = rng.normal(size=(2, 2))
    Tm = 0.5 * (Tm + Tm.T)
    R = Tm @ core.Q.T
    R *= 0.5 / max(1.0, np.linalg.norm(R, 2))
    return SVModel(core, R, float(rng.uniform(50, 150)))


def rk4_oracle(core, M_sub, v_sub, tau, spot_phi):
    prob = RiccatiProblem(M_sub, core.Q, v_sub, np.zeros_like(v_sub), S0=core.S0, alpha=core.alpha)
    res = rk4_transform(prob, tau, MethodConfig(method="rk4", rk4_step=1e-3))
    return res.value * cmath.exp(-spot_phi)


# -- models ------------------------------------------------------------------------

def test_sv_model_validation(core):
    with pytest.raises(InvalidModel):
        SVModel(core, 2.0 * np.eye(2), 100.0)
    with pytest.raises(InvalidModel):
        SVModel(core, np.zeros((2, 2)), -1.0)
    with pytest.raises(InvalidModel):
        SCModel(core, [0.9, 0.9], [1.0, 1.0])
    with pytest.raises(InvalidModel):
        ShortRateModel(core, -0.1, np.zeros((2, 2)))
    with pytest.raises(InvalidModel):
        ShortRateModel(core, 0.1, -np.eye(2))
    with pytest.raises(InvalidModel):
        CarrMadanConfig(points=1000)
    with pytest.raises(InvalidModel):
        CarrMadanConfig(damping=0.0)


def test_sv_condition_enforced(core):
    bad = SVModel(core, np.array([[0.0, 0.3], [0.0, 0.0]]), 100.0)
    with pytest.raises(PreconditionFailed) as info:
        sv_log_price_transform(bad, 0.5, 1.0)
    assert set(info.value.residuals) == {"commutation", "correlation"}


# -- stochastic volatility ---------------------------------------------------------------

def test_sv_omega_zero_is_one(sv):
    assert abs(sv_log_price_transform(sv, 0.0, 1.0).value - 1.0) <= 1e-12


@pytest.mark.parametrize("omega", [0.5, -1.3, 0.3 + 0.7j, -2.5 - 3.0j])
def test_sv_matches_rk4(sv, omega):
    M_sub, v_sub = sv_substitutes(sv, omega)
    ref = rk4_oracle(sv.core, M_sub, v_sub, 1.0, omega * math.log(sv.X0))
    assert abs(sv_log_price_transform(sv, omega, 1.0).value - ref) <= 1e-8 * abs(ref)


@pytest.mark.parametrize("seed", [3, 17, 2024])
def test_sv_random_admissible_models(seed):
    model = admissible_sv(seed)
    for omega in (0.7, -1.5, 0.4 - 2.0j):
        M_sub, v_sub = sv_substitutes(model, omega)
        ref = rk4_oracle(model.core, M_sub, v_sub, 1.5, omega * math.log(model.X0))
        assert abs(sv_log_price_transform(model, omega, 1.5).value - ref) <= 1e-8 * abs(ref)


def test_sv_scalar_heston_oracle():
    # d = 1, R = 0: the variance is CIR and the transform is the CIR integral transform
    m, q, alpha, s0, x0, tau = -0.8, 0.3, 2.0, 0.05, 100.0, 2.0
    model = SVModel(WishartModel([[s0]], [[m]], [[q]], alpha=alpha), np.zeros((1, 1)), x0)
    kappa, sigma, kt = -2 * m, 2 * q, alpha * q * q
    for omega in (0.5, -1.5, 1.0j, -1.5 - 2.0j):
        lam = -(omega * omega + omega) / 2
        g = cmath.sqrt(kappa ** 2 + 2 * sigma ** 2 * lam)
        e = cmath.exp(g * tau) - 1
        den = (g + kappa) * e + 2 * g
        A = (2 * g * cmath.exp((kappa + g) * tau / 2) / den) ** (2 * kt / sigma ** 2)
        B = 2 * lam * e / den
        ref = cmath.exp(-omega * math.log(x0)) * A * cmath.exp(-B * s0)
        assert abs(sv_log_price_transform(model, omega, tau).value - ref) <= 1e-10 * abs(ref)


def test_sv_conjugate_symmetry(sv):
    for w in (0.4, 2.0, 7.5):
        a = sv_log_price_transform(sv, 1j * w, 1.0).value
        b = sv_log_price_transform(sv, -1j * w, 1.0).value
        assert abs(a - b.conjugate()) <= 1e-12 * abs(a)


def test_sv_grid_matches_pointwise(sv):
    args = -1j * np.linspace(0.0, 20.0, 64) - 2.5
    grid = sv_transform_grid(sv, args, 1.0)
    for z, res in zip(args[::9], grid[::9]):
        assert abs(res.value - sv_log_price_transform(sv, z, 1.0).value) <= 1e-12 * abs(res.value)


# -- stochastic correlation -----------------------------------------------------------------

def test_sc_omega_zero_is_one(core):
    sc = SCModel(core, [0.2, -0.1], [100.0, 50.0])
    assert abs(sc_log_price_transform(sc, [0.0, 0.0], 1.0).value - 1.0) <= 1e-12


def test_sc_uncorrelated_matches_rk4(core):
    sc = SCModel(core, [0.0, 0.0], [100.0, 50.0])
    omega = np.array([0.6, -0.4])
    M_sub, v_sub = sc_substitutes(sc, omega)
    ref = rk4_oracle(core, M_sub, v_sub, 1.0, omega @ np.log(sc.spots))
    assert abs(sc_log_price_transform(sc, omega, 1.0).value - ref) <= 1e-8 * abs(ref)


def test_sc_correlated_first_asset(core):
    omega = np.array([1.0, 0.0])
    rho = 0.3 * Q @ omega / np.linalg.norm(Q @ omega)
    sc = SCModel(core, rho, [100.0, 50.0])
    M_sub, v_sub = sc_substitutes(sc, omega)
    ref = rk4_oracle(core, M_sub, v_sub, 1.0, omega @ np.log(sc.spots))
    assert abs(sc_log_price_transform(sc, omega, 1.0).value - ref) <= 1e-8 * abs(ref)
    with pytest.raises(PreconditionFailed):
        sc_log_price_transform(sc, [0.0, 1.0], 1.0)


def test_sc_wrong_length(core):
    sc = SCModel(core, [0.0, 0.0], [100.0, 50.0])
    with pytest.raises(InvalidModel):
        sc_log_price_transform(sc, [1.0], 1.0)


# -- bonds ---------------------------------------------------------------------------------------

def test_zcb_zero_state_weight(core):
    model = ShortRateModel(core, 0.02, np.zeros((2, 2)))
    for tau in (0.5, 5.0, 30.0):
        assert zcb_price(model, tau) == pytest.approx(math.exp(-0.02 * tau), abs=1e-14)


def test_zcb_tau_zero(core):
    assert zcb_price(ShortRateModel(core, 0.03, 0.1 * np.eye(2)), 0.0) == pytest.approx(1.0, abs=1e-15)


def test_zcb_matches_rk4(core):
    model = ShortRateModel(core, 0.01, 0.1 * np.eye(2))
    prob = RiccatiProblem.from_model(core, LaplaceQuery(np.zeros((2, 2)), 0.1 * np.eye(2), 1.0))
    ref = rk4_transform(prob, 1.0, MethodConfig(method="rk4", rk4_step=1e-3)).real_value * math.exp(-0.01)
    assert zcb_price(model, 1.0) == pytest.approx(ref, rel=1e-8)


def test_zcb_decreasing_in_maturity(core):
    model = ShortRateModel(core, 0.01, np.array([[0.2, 0.05], [0.05, 0.1]]))
    curve = yield_curve(model, np.linspace(0.0, 10.0, 41))
    assert curve["price_decreasing"]
    assert all(b < a for a, b in zip(curve["price"], curve["price"][1:]))
    assert all(0 < p <= 1 for p in curve["price"])


# -- Carr-Madan ---------------------------------------------------------------------------------

def test_put_call_parity(sv):
    call = carr_madan_call(sv, 100.0, 1.0)
    put = carr_madan_put(sv, 100.0, 1.0)
    assert abs(call.price - put.price - (sv.X0 - 100.0)) <= 1e-6 * sv.X0
    assert call.diagnostics["within_bounds"]
    assert not call.diagnostics["branch_warnings"]


def test_call_tiny_strike_is_spot(sv):
    price = carr_madan_call(sv, 1e-6 * sv.X0, 1.0, SMALL_GRID).price
    assert abs(price - sv.X0) <= 1e-3 * sv.X0


def test_call_black_scholes_limit():
    sigma2 = 0.04
    core = WishartModel([[sigma2]], [[-1e-8]], [[1e-5]], alpha=1.0)
    model = SVModel(core, np.zeros((1, 1)), 100.0)
    for K, T in ((90.0, 0.5), (110.0, 1.0)):
        s = math.sqrt(sigma2 * T)
        d1 = (math.log(100.0 / K) + 0.5 * s * s) / s
        bs = 100.0 * norm.cdf(d1) - K * norm.cdf(d1 - s)
        assert carr_madan_call(model, K, T).price == pytest.approx(bs, abs=1e-3)


def test_call_monotone_and_convex_in_strike(sv):
    strikes = np.arange(80.0, 121.0, 5.0)
    prices = np.array([carr_madan_call(sv, K, 1.0, SMALL_GRID).price for K in strikes])
    assert np.all(np.diff(prices) < 0)
    assert np.diff(prices, 2).min() >= -1e-8


def test_damping_validation(sv):
    with pytest.raises(DampingInvalid):
        carr_madan_put(sv, 100.0, 1.0, CarrMadanConfig(damping=0.5))
    # a moment that explodes before maturity: very large damping on a volatile model
    wild = SVModel(WishartModel(np.eye(1), [[-0.1]], [[1.0]], alpha=2.0), np.zeros((1, 1)), 100.0)
    with pytest.raises(DampingInvalid) as info:
        carr_madan_call(wild, 100.0, 5.0, CarrMadanConfig(damping=20.0))
    assert info.value.damping == 20.0
