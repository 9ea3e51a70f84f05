import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wishart_laplace.model import LaplaceQuery, WishartModel, build_Q_from_A

settings.register_profile(
    "repro", derandomize=True, deadline=None, max_examples=200,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repro")

S0 = np.array([[0.012, 0.001], [0.001, 0.003]])
Q = np.array([[0.141421356237310, -0.070710678118655], [0.0, 0.070710678118655]])
M = np.array([[-0.02, -0.02], [-0.01, -0.02]])
ALPHA = 3.0
V = np.array([[0.1, 0.04], [0.04, 0.1]])
W = np.array([[0.11, 0.03], [0.03, 0.11]])

# printed Lin. and C.-M. columns of the two tables
TABLE1 = [
    (0.0, 0.998291461216988, 0.998291461216988),
    (0.1, 0.997303305375919, 0.997303305375919),
    (0.2, 0.996253721242885, 0.996253721242885),
    (0.3, 0.995143124879428, 0.995143124879428),
    (0.4, 0.993971944944528, 0.993971944944528),
    (0.5, 0.992740622447456, 0.992740622447456),
    (0.6, 0.991449610496379, 0.991449610496380),
    (0.7, 0.990099374042951, 0.990099374042951),
    (0.8, 0.988690389623073, 0.988690389623073),
    (0.9, 0.987223145094070, 0.987223145094070),
    (1.0, 0.985698139368470, 0.985698139368470),
    (1.1, 0.984115882144609, 0.984115882144608),
    (1.2, 0.982476893634278, 0.982476893634278),
    (1.3, 0.980781704287638, 0.980781704287638),
    (1.4, 0.979030854515581, 0.979030854515582),
    (1.5, 0.977224894409802, 0.977224894409802),
    (1.6, 0.975364383460752, 0.975364383460752),
    (1.7, 0.973449890273708, 0.973449890273707),
    (1.8, 0.971481992283166, 0.971481992283166),
    (1.9, 0.969461275465768, 0.969461275465768),
    (2.0, 0.967388334051965, 0.967388334051964),
    (2.1, 0.965263770236630, 0.965263770236631),
    (2.2, 0.963088193888842, 0.963088193888842),
    (2.3, 0.960862222260992, 0.960862222260992),
    (2.4, 0.958586479697485, 0.958586479697484),
    (2.5, 0.956261597343174, 0.956261597343174),
    (2.6, 0.953888212851758, 0.953888212851759),
    (2.7, 0.951466970094322, 0.951466970094322),
    (2.8, 0.948998518868209, 0.948998518868209),
    (2.9, 0.946483514606424, 0.946483514606425),
    (3.0, 0.943922618087738, 0.943922618087738),
]
TABLE1_VC_T3 = 0.940848141282233
TABLE1_RK4_T3 = 0.943072180564490
TABLE2_LONG = [(5.0, 0.884120166104796), (10.0, 0.691634000576684), (100.0, 0.000001636282753)]


@pytest.fixture
def reference_model():
    return WishartModel(S0, M, Q, alpha=ALPHA)


@pytest.fixture
def reference_query():
    return LaplaceQuery(W, V, 1.0)


def commuting_model(rng, d=2, alpha=None, scale=1.0, stiff=1.0):
    """Random model satisfying the commutation condition.

    M = A^-1 S with A SPD and S symmetric negative definite, Q from A.
    """
    X = rng.normal(size=(d, d))
    A = X @ X.T + d * np.eye(d)
    Y = rng.normal(size=(d, d))
    S = -(Y @ Y.T + 0.5 * np.eye(d)) * stiff
    Mr = np.linalg.solve(A, S) * scale
    Qr = build_Q_from_A(A, Mr)
    Z = rng.normal(size=(d, d))
    S0r = 0.05 * (Z @ Z.T) + 0.01 * np.eye(d)
    return WishartModel(S0r, Mr, Qr, alpha=float(d + 1) if alpha is None else alpha)


def random_psd(rng, d, scale=0.1):
    Z = rng.normal(size=(d, d))
    return scale * (Z @ Z.T) / d
