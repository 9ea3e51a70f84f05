"""Wishart model parameters, admissibility checks and the JSON model format."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    CommutationUnsatisfiable,
    InvalidModel,
    NotPositiveDefinite,
    StabilityWarning,
)
from .matfun import as_square, is_symmetric

COMMUTATION_TOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WishartModel:
    """Parameters of ``dS = sqrt(S) dB Q + Q^T dB^T sqrt(S) + (M S + S M^T + drift) dt``.

    The constant drift is either ``alpha * Q^T Q`` (scalar Gindikin
    parameter) or a symmetric matrix ``b``; exactly one must be given.
    """

    S0: np.ndarray
    M: np.ndarray
    Q: np.ndarray
    alpha: float | None = None
    b: np.ndarray | None = None
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        try:
            s0 = as_square(self.S0, name="S0", symmetric=True)
            m = as_square(self.M, name="M")
            q = as_square(self.Q, name="Q")
        except ValueError as exc:
            raise InvalidModel(str(exc)) from exc
        d = s0.shape[0]
        if m.shape != (d, d) or q.shape != (d, d):
            raise InvalidModel(f"S0, M, Q must share dimension {d}")
        if any(np.iscomplexobj(x) for x in (s0, m, q)):
            raise InvalidModel("model matrices must be real")
        if float(np.linalg.eigvalsh(s0).min()) < -1e-12 * float(np.linalg.norm(s0, 2)):
            raise InvalidModel("S0 is not positive semidefinite")
        sv = np.linalg.svd(q, compute_uv=False)
        if sv[-1] < 1e-12 * sv[0] or sv[0] == 0.0:
            raise InvalidModel("Q is not invertible")

        if (self.alpha is None) == (self.b is None):
            raise InvalidModel("exactly one of alpha or b must be given")
        notes = list(self.notes)
        b = None
        alpha = None
        if self.alpha is not None:
            alpha = float(self.alpha)
            if not np.isfinite(alpha) or alpha < d - 1:
                raise InvalidModel(f"Gindikin condition violated: alpha={alpha} < d-1={d - 1}")
            if alpha < d + 1:
                notes.append(f"alpha={alpha:g} < d+1={d + 1}: closed form used outside its proven range")
        else:
            try:
                b = as_square(self.b, name="b", symmetric=True)
            except ValueError as exc:
                raise InvalidModel(str(exc)) from exc
            if b.shape != (d, d) or np.iscomplexobj(b):
                raise InvalidModel("b must be a real symmetric d x d matrix")
            gap = b - (d - 1) * (q.T @ q)
            if float(np.linalg.eigvalsh(gap).min()) < -1e-12 * max(1.0, float(np.linalg.norm(b, 2))):
                raise InvalidModel("Gindikin condition violated: b - (d-1) Q^T Q is not PSD")

        if float(np.max(np.linalg.eigvals(m).real)) >= 0.0:
            msg = "M has an eigenvalue with nonnegative real part (process is not stationary)"
            warnings.warn(msg, StabilityWarning, stacklevel=3)
            notes.append(msg)

        object.__setattr__(self, "S0", _frozen(s0))
        object.__setattr__(self, "M", _frozen(m))
        object.__setattr__(self, "Q", _frozen(q))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "b", None if b is None else _frozen(b))
        object.__setattr__(self, "notes", tuple(dict.fromkeys(notes)))

    @property
    def dim(self) -> int:
        return self.S0.shape[0]

    @property
    def scalar_gindikin(self) -> bool:
        return self.alpha is not None

    @cached_property
    def QtQ(self) -> np.ndarray:
        return self.Q.T @ self.Q

    @cached_property
    def QtQ_inv(self) -> np.ndarray:
        return np.linalg.inv(self.QtQ)

    @cached_property
    def Q_inv(self) -> np.ndarray:
        return np.linalg.inv(self.Q)

    @cached_property
    def drift_constant(self) -> np.ndarray:
        """``alpha Q^T Q`` or ``b``."""
        return self.alpha * self.QtQ if self.b is None else self.b

    def with_gindikin_matrix(self, b: np.ndarray) -> "WishartModel":
        return WishartModel(self.S0, self.M, self.Q, b=b)

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "dim": self.dim,
            "S0": self.S0.tolist(),
            "M": self.M.tolist(),
            "Q": self.Q.tolist(),
        }
        if self.alpha is not None:
            doc["alpha"] = self.alpha
        else:
            doc["b"] = self.b.tolist()
        return doc


@dataclass(frozen=True, eq=False)
class LaplaceQuery:
    """Arguments of ``E[exp(-Tr[w S_t + int_0^t v S_s ds])]``."""

    w: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        try:
            w = as_square(self.w, name="w", symmetric=True)
            v = as_square(self.v, name="v", symmetric=True)
        except ValueError as exc:
            raise InvalidModel(str(exc)) from exc
        if w.shape != v.shape:
            raise InvalidModel("w and v must have the same shape")
        t = float(self.t)
        if not np.isfinite(t) or t < 0:
            raise InvalidModel(f"time horizon must be a finite nonnegative number, got {self.t}")
        object.__setattr__(self, "w", _frozen(w))
        object.__setattr__(self, "v", _frozen(v))
        object.__setattr__(self, "t", t)

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def at(self, t: float) -> "LaplaceQuery":
        return LaplaceQuery(self.w, self.v, t)


# -- commutation condition ---------------------------------------------------

def commutation_residual(M: np.ndarray, Q: np.ndarray) -> float:
    """``||M^T (Q^T Q)^{-1} - (Q^T Q)^{-1} M||_F / ||(Q^T Q)^{-1} M||_F``."""
    a = np.linalg.inv(Q.T @ Q)
    rhs = a @ M
    denom = float(np.linalg.norm(rhs))
    diff = float(np.linalg.norm(M.T @ a - rhs))
    if denom == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / denom


def check_commutation(model: WishartModel) -> tuple[bool, float]:
    res = commutation_residual(model.M, model.Q)
    return res <= COMMUTATION_TOL, res


def build_Q_from_A(A, M) -> np.ndarray:
    """Upper-triangular ``Q`` with ``Q^T Q = A^{-1}``, given ``A M = M^T A``.

    ``A`` plays the role of ``(Q^T Q)^{-1}``; the returned ``Q`` therefore
    satisfies the commutation condition together with ``M``.
    """
    a = as_square(A, name="A", symmetric=True)
    m = as_square(M, name="M")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("A is not positive definite") from exc
    am = a @ m
    scale = max(float(np.linalg.norm(am)), np.finfo(float).tiny)
    res = float(np.linalg.norm(am - m.T @ a)) / scale
    if res > COMMUTATION_TOL and float(np.linalg.norm(am)) > 0:
        raise CommutationUnsatisfiable(f"A M != M^T A (relative residual {res:.3e})")
    lower = np.linalg.cholesky(np.linalg.inv(a))
    return lower.T.copy()


# -- domain diagnostics --------------------------------------------------------

def bar_matrices(M, Q, v, w, QtQ_inv=None) -> tuple[np.ndarray, np.ndarray]:
    """``(v_bar, w_bar)`` for drift ``M``, volatility ``Q`` and weights ``v``, ``w``.

    ``M``, ``v`` and ``w`` may be complex (Fourier arguments).
    """
    a = np.linalg.inv(Q.T @ Q) if QtQ_inv is None else QtQ_inv
    v_bar = Q @ (2.0 * v + M.T @ a @ M) @ Q.T
    w_bar = Q @ (2.0 * w - a @ M) @ Q.T
    return 0.5 * (v_bar + v_bar.T), 0.5 * (w_bar + w_bar.T)


@dataclass
class DomainReport:
    v_bar_min_eigenvalue: float
    v_bar_psd: bool
    closed_loop_max_real: float | None
    closed_loop_stable: bool | None
    commutation_residual: float
    notes: list[str] = field(default_factory=list)

    @property
    def in_domain(self) -> bool:
        return self.v_bar_psd and bool(self.closed_loop_stable)

    def as_dict(self) -> dict[str, Any]:
        return {
            "in_domain": self.in_domain,
            "v_bar_psd": self.v_bar_psd,
            "v_bar_min_eigenvalue": self.v_bar_min_eigenvalue,
            "closed_loop_stable": self.closed_loop_stable,
            "closed_loop_max_real": self.closed_loop_max_real,
            "commutation_residual": self.commutation_residual,
            "notes": list(self.notes),
        }


def check_convergence_domain(model: WishartModel, query: LaplaceQuery) -> DomainReport:
    """Sufficient-condition diagnostics for the real closed-form path.

    Reports whether ``v_bar`` is PSD and whether the closed-loop matrix
    ``M - 2 Q^T Q psi'`` built from the closed-form ARE solution is stable.
    Advisory only: a negative report does not mean the transform diverges.
    """
    v_bar, _ = bar_matrices(model.M, model.Q, query.v, query.w, model.QtQ_inv)
    notes: list[str] = []
    lam, vecs = np.linalg.eigh(v_bar)
    lo = float(lam.min())
    psd = lo >= -1e-10 * max(float(np.abs(lam).max()), np.finfo(float).tiny)
    cl_max = None
    stable = None
    if psd:
        root = (vecs * np.sqrt(np.clip(lam, 0, None))) @ vecs.T
        psi_are = model.Q_inv @ root @ model.Q_inv.T / 2 + model.QtQ_inv @ model.M / 2
        cl = model.M - 2.0 * model.QtQ @ psi_are
        cl_max = float(np.max(np.linalg.eigvals(cl).real))
        stable = cl_max < 0.0
        if not stable:
            notes.append("closed-loop matrix M - 2 Q^T Q psi' is not stable")
    else:
        notes.append(f"v_bar has negative eigenvalue {lo:.3e}: outside the real closed-form domain")
    res = commutation_residual(model.M, model.Q)
    if res > COMMUTATION_TOL:
        notes.append(f"commutation condition fails (residual {res:.3e})")
    return DomainReport(lo, psd, cl_max, stable, res, notes)


# -- JSON model documents ------------------------------------------------------

_REQUIRED = ("dim", "S0", "M", "Q")
_OPTIONAL = ("alpha", "b", "name", "query", "contract", "sv", "sc", "short_rate")


@dataclass
class ModelDocument:
    """A parsed model file: the Wishart core plus optional application blocks."""

    model: WishartModel
    name: str | None = None
    query: dict[str, np.ndarray] | None = None
    contract: dict[str, float] | None = None
    sv: dict[str, Any] | None = None
    sc: dict[str, Any] | None = None
    short_rate: dict[str, Any] | None = None

    def to_dict(self) -> dict[str, Any]:
        doc = self.model.to_dict()
        if self.name is not None:
            doc["name"] = self.name
        if self.query is not None:
            doc["query"] = {k: np.asarray(v).tolist() for k, v in self.query.items()}
        for key in ("contract", "sv", "sc", "short_rate"):
            block = getattr(self, key)
            if block is not None:
                doc[key] = {k: (np.asarray(v).tolist() if isinstance(v, np.ndarray) else v)
                            for k, v in block.items()}
        return doc


def _matrix(doc: dict, key: str, d: int) -> np.ndarray:
    try:
        arr = np.array(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidModel(f"{key}: expected a numeric row-major matrix") from exc
    if arr.shape != (d, d):
        raise InvalidModel(f"{key}: expected shape ({d}, {d}), got {arr.shape}")
    return arr


def _block(doc: dict, key: str, allowed: dict[str, str], d: int) -> dict[str, Any] | None:
    if key not in doc:
        return None
    block = doc[key]
    if not isinstance(block, dict):
        raise InvalidModel(f"{key}: expected an object")
    unknown = set(block) - set(allowed)
    if unknown:
        raise InvalidModel(f"{key}: unknown fields {sorted(unknown)}")
    out: dict[str, Any] = {}
    for name, kind in allowed.items():
        if name not in block:
            continue
        if kind == "matrix":
            out[name] = _matrix(block, name, d)
        elif kind == "vector":
            vec = np.array(block[name], dtype=float)
            if vec.shape != (d,):
                raise InvalidModel(f"{key}.{name}: expected length-{d} vector")
            out[name] = vec
        else:
            try:
                out[name] = float(block[name])
            except (TypeError, ValueError) as exc:
                raise InvalidModel(f"{key}.{name}: expected a number") from exc
    return out


def parse_model_document(doc: dict[str, Any]) -> ModelDocument:
    if not isinstance(doc, dict):
        raise InvalidModel("model document must be a JSON object")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise InvalidModel(f"missing fields {missing}")
    unknown = set(doc) - set(_REQUIRED) - set(_OPTIONAL)
    if unknown:
        raise InvalidModel(f"unknown fields {sorted(unknown)}")
    if ("alpha" in doc) == ("b" in doc):
        raise InvalidModel("exactly one of 'alpha' or 'b' must be present")
    d = doc["dim"]
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise InvalidModel("dim must be a positive integer")
    S0, M, Q = (_matrix(doc, k, d) for k in ("S0", "M", "Q"))
    if "alpha" in doc:
        if isinstance(doc["alpha"], bool) or not isinstance(doc["alpha"], (int, float)):
            raise InvalidModel("alpha must be a number")
        model = WishartModel(S0, M, Q, alpha=float(doc["alpha"]))
    else:
        model = WishartModel(S0, M, Q, b=_matrix(doc, "b", d))
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise InvalidModel("name must be a string")
    return ModelDocument(
        model=model,
        name=name,
        query=_block(doc, "query", {"w": "matrix", "v": "matrix"}, d),
        contract=_block(doc, "contract", {"strike": "number", "maturity": "number",
                                          "damping": "number"}, d),
        sv=_block(doc, "sv", {"R": "matrix", "X0": "number"}, d),
        sc=_block(doc, "sc", {"rho": "vector", "spots": "vector"}, d),
        short_rate=_block(doc, "short_rate", {"a": "number", "v": "matrix"}, d),
    )


def load_model(path: str | Path) -> ModelDocument:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidModel(f"cannot read model file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidModel(f"{path}: invalid JSON ({exc})") from exc
    return parse_model_document(doc)


def symmetric_matrix(x, name: str) -> np.ndarray:
    """Helper for callers that accept nested lists for weights."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2 or not is_symmetric(arr):
        raise InvalidModel(f"{name} must be a symmetric matrix")
    return arr
