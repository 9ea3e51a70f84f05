import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import M, Q, V, W
from wishart_laplace.errors import (
    IllConditioned,
    InputError,
    MatrixOverflow,
    NotPositiveSemidefinite,
    Singular,
)
from wishart_laplace.matfun import (
    BranchTracker,
    as_square,
    eig_decompose,
    mat_cosh_sinh,
    mat_det,
    mat_exp,
    mat_log,
    mat_sqrt,
    mat_sqrt_psd,
    trace_log_det,
    trace_weighted_log,
)
from wishart_laplace.model import LaplaceQuery, WishartModel
from wishart_laplace.transform_cm import CameronMartinKernel

entries = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


def square(d, elements=entries):
    return arrays(np.float64, (d, d), elements=elements)


def taylor_exp(a, terms=30):
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, terms):
        term = term @ a / k
        out = out + term
    return out


# -- validation ---------------------------------------------------------------

def test_as_square_rejects_bad_shapes_and_values():
    with pytest.raises(InputError):
        as_square(np.zeros((2, 3)))
    with pytest.raises(InputError):
        as_square([[1.0, np.nan], [0.0, 1.0]])
    with pytest.raises(InputError):
        as_square([[1.0, 2.0], [0.0, 1.0]], symmetric=True)


def test_as_square_symmetrizes_within_tolerance():
    a = as_square([[1.0, 2.0 + 1e-13], [2.0, 1.0]], symmetric=True)
    assert a[0, 1] == a[1, 0]


def test_eig_reconstruction_residual():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4))
    dec = eig_decompose(a)
    assert dec.residual(a) <= 1e-10


# -- exp ------------------------------------------------------------------------

def test_exp_zero_is_identity():
    assert np.array_equal(mat_exp(np.zeros((2, 2))), np.eye(2))


def test_exp_diagonal():
    np.testing.assert_allclose(mat_exp(np.diag([1.0, -1.0])), np.diag([math.e, 1 / math.e]), rtol=1e-14)


def test_exp_nilpotent():
    np.testing.assert_allclose(mat_exp(np.array([[0.0, 1.0], [0.0, 0.0]])), [[1.0, 1.0], [0.0, 1.0]],
                               rtol=0, atol=1e-15)


@given(square(3))
def test_exp_matches_taylor_series(a):
    a = a / max(1.0, np.linalg.norm(a, 2))
    np.testing.assert_allclose(mat_exp(a), taylor_exp(a), rtol=0, atol=1e-12)


@given(square(4, st.floats(-25.0, 25.0)))
def test_exp_matches_scipy_expm(a):
    ref = scipy.linalg.expm(a)
    assert np.linalg.norm(mat_exp(a) - ref) <= 1e-11 * max(1.0, np.linalg.norm(ref))


def test_exp_complex_argument():
    a = np.array([[0.3j, 1.0], [-0.2, 0.1 - 0.4j]])
    np.testing.assert_allclose(mat_exp(a), scipy.linalg.expm(a), rtol=1e-13)


def test_exp_overflow_raises():
    with pytest.raises(MatrixOverflow):
        mat_exp(np.diag([800.0, 1.0]))


@given(square(3), st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_exp_of_commuting_sum_factorizes(a, x, y):
    a = a / max(1.0, np.linalg.norm(a, 2))
    # polynomials in the same matrix commute
    b1 = x * a + 0.5 * a @ a
    b2 = y * a - 0.3 * np.eye(3)
    lhs = mat_exp(b1 + b2)
    rhs = mat_exp(b1) @ mat_exp(b2)
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * max(1.0, np.linalg.norm(lhs))


@given(square(3, st.floats(-1.0, 1.0)))
def test_exp_of_stable_matrix_decays(a):
    # shift so every eigenvalue has real part <= -0.1
    shift = np.max(np.linalg.eigvals(a).real) + 0.1
    stable = a - shift * np.eye(3)
    cond = np.linalg.cond(np.linalg.eig(stable)[1])
    if cond > 1e6:
        return
    # ||e^{tA}|| <= cond(V) e^{t max Re lambda} for diagonalizable A
    bound = cond * math.exp(-0.1 * 200.0)
    assert np.linalg.norm(mat_exp(200.0 * stable), 2) <= bound * (1 + 1e-6) + 1e-300


# -- sqrt --------------------------------------------------------------------------

def test_sqrt_psd_diagonal():
    np.testing.assert_allclose(mat_sqrt_psd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), rtol=1e-15)


def test_sqrt_psd_identity():
    np.testing.assert_allclose(mat_sqrt_psd(np.eye(3)), np.eye(3), rtol=1e-15)


def test_sqrt_psd_reconstructs_random_rotation():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    a = q @ np.diag([0.1, 2.0]) @ q.T
    b = mat_sqrt_psd(a)
    assert np.linalg.norm(b @ b - a) <= 1e-10 * np.linalg.norm(a)
    assert np.all(np.linalg.eigvalsh(b) >= 0)


def test_sqrt_psd_clips_roundoff_and_rejects_negative():
    a = np.diag([1.0, -1e-13])
    assert np.all(np.isfinite(mat_sqrt_psd(a)))
    with pytest.raises(NotPositiveSemidefinite) as info:
        mat_sqrt_psd(np.diag([1.0, -1e-3]))
    assert info.value.min_eigenvalue == pytest.approx(-1e-3)


@given(square(3))
def test_sqrt_psd_squares_back(x):
    a = x @ x.T
    b = mat_sqrt_psd(a)
    assert np.linalg.norm(b @ b - a) <= 1e-10 * max(np.linalg.norm(a), 1e-300) + 1e-15
    np.testing.assert_allclose(b, b.T, atol=1e-15)


def test_principal_sqrt_of_negative_definite_is_imaginary():
    r = mat_sqrt(-np.diag([4.0, 9.0]))
    np.testing.assert_allclose(r, np.diag([2j, 3j]), atol=1e-15)


# -- cosh / sinh ----------------------------------------------------------------------

def test_cosh_sinh_zero():
    c, s = mat_cosh_sinh(np.zeros((2, 2)))
    np.testing.assert_array_equal(c, np.eye(2))
    np.testing.assert_array_equal(s, np.zeros((2, 2)))


def test_cosh_sinh_diagonal():
    x = np.array([0.5, 1.5])
    c, s = mat_cosh_sinh(np.diag(x))
    np.testing.assert_allclose(np.diag(c), np.cosh(x), rtol=1e-14)
    np.testing.assert_allclose(np.diag(s), np.sinh(x), rtol=1e-14)


@given(square(3, st.floats(-5.0, 5.0)))
def test_cosh_squared_minus_sinh_squared_is_identity(x):
    a = 0.5 * (x + x.T)
    a = a * min(1.0, 5.0 / max(np.linalg.norm(a, 2), 1e-300))
    c, s = mat_cosh_sinh(a)
    resid = c @ c - s @ s - np.eye(3)
    assert np.linalg.norm(resid) <= 1e-10 * max(1.0, np.linalg.norm(c @ c))


def test_tanh_limit_for_well_separated_spectrum():
    # lambda_min >= 0.5: cosh and sinh of 30*O agree to roundoff, relative to their size
    rng = np.random.default_rng(5)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    o = q @ np.diag([0.5, 1.0, 2.0]) @ q.T
    c, s = mat_cosh_sinh(30.0 * o)
    assert np.linalg.norm(c - s) <= 1e-10 * np.linalg.norm(c)
    # the smallest eigenvalue alone still satisfies the scalar limit
    c1, s1 = mat_cosh_sinh(np.array([[15.0]]))
    assert abs(s1[0, 0] / c1[0, 0] - 1.0) <= 1e-10


# -- log ----------------------------------------------------------------------------------

def test_log_identity_is_zero():
    np.testing.assert_array_equal(mat_log(np.eye(2)), np.zeros((2, 2)))


def test_log_exp_diagonal_roundtrip():
    a = np.diag([0.3, -0.2])
    np.testing.assert_allclose(mat_log(mat_exp(a)), a, atol=1e-15)


@given(square(3))
def test_log_exp_roundtrip_symmetric(x):
    a = 0.5 * (x + x.T)
    a = a / max(1.0, np.linalg.norm(a, 2))
    np.testing.assert_allclose(mat_log(mat_exp(a)), a, atol=1e-8)


@given(square(3))
def test_exp_log_roundtrip_general(x):
    a = np.eye(3) + 0.4 * x / max(1.0, np.linalg.norm(x, 2))
    try:
        la = mat_log(a)
    except IllConditioned:
        return
    assert np.linalg.norm(mat_exp(la) - a) <= 1e-8 * np.linalg.norm(a)


def test_log_singular_raises():
    with pytest.raises(Singular):
        mat_log(np.diag([1.0, 0.0]))


def test_log_defective_raises_with_estimate():
    with pytest.raises(IllConditioned) as info:
        mat_log(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert info.value.condition_estimate > 1e8


def test_log_is_real_for_real_positive_spectrum():
    a = np.array([[2.0, 0.3], [0.1, 1.5]])
    la = mat_log(a)
    assert not np.iscomplexobj(la)
    np.testing.assert_allclose(la, scipy.linalg.logm(a).real, atol=1e-13)


# -- trace log det, Sylvester, branch tracking --------------------------------------------

def test_trace_log_det_identity_and_diagonal():
    assert trace_log_det(np.eye(3)) == 0
    assert trace_log_det(np.diag([2.0, 3.0])) == pytest.approx(math.log(6.0), rel=1e-15)


def test_trace_log_det_singular_raises():
    with pytest.raises(Singular):
        trace_log_det(np.zeros((2, 2)))


@given(square(3), square(3))
def test_sylvester_determinant_identity(a, b):
    lhs = np.linalg.det(np.eye(3) + a @ b)
    rhs = np.linalg.det(np.eye(3) + b @ a)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@given(square(3))
def test_trace_log_det_agrees_with_det(x):
    a = np.eye(3) + 0.5 * x / max(1.0, np.linalg.norm(x, 2))
    val = trace_log_det(a)
    assert np.exp(val) == pytest.approx(mat_det(a), rel=1e-10)


def test_trace_weighted_log_reduces_to_trace_log_det():
    a = np.array([[2.0, 0.5], [0.2, 1.0]])
    assert trace_weighted_log(np.eye(2), a) == pytest.approx(trace_log_det(a), rel=1e-14)
    w = np.array([[1.0, 0.2], [0.2, 3.0]])
    ref = np.trace(w @ scipy.linalg.logm(a))
    assert trace_weighted_log(w, a) == pytest.approx(ref, rel=1e-12)


def test_branch_tracker_unwraps_full_turns():
    tracker = BranchTracker()
    thetas = np.linspace(0.0, 6 * math.pi, 400)
    vals = [trace_log_det(np.diag([np.exp(1j * th), 2.0]), tracker) for th in thetas]
    assert vals[-1].imag == pytest.approx(6 * math.pi, abs=1e-10)
    assert max(abs(b.imag - a.imag) for a, b in zip(vals, vals[1:])) < 0.1
    assert tracker.ambiguous_steps == 0


def test_branch_tracker_flags_coarse_steps():
    tracker = BranchTracker()
    for th in (0.0, 2.0, 4.0):
        tracker.logs(np.array([np.exp(1j * th)]))
    assert tracker.ambiguous_steps == 2
    assert tracker.max_jump == pytest.approx(2.0)


def test_log_det_continuity_along_long_horizon():
    model = WishartModel(np.array([[0.012, 0.001], [0.001, 0.003]]), M, Q, alpha=3.0)
    kern = CameronMartinKernel(model.M, model.Q, LaplaceQuery(W, V).v, W)
    tracker = BranchTracker()
    vals = [trace_log_det(kern.solve(t)[1], tracker) for t in np.linspace(0.0, 100.0, 2001)]
    jumps = [abs(b.imag - a.imag) for a, b in zip(vals, vals[1:])]
    assert max(jumps) < math.pi
