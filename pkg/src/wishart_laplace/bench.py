"""Method comparison and timing harness behind the ``transform`` and ``bench`` commands."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import statistics
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import scipy

from . import __version__
from .errors import WishartError
from .model import LaplaceQuery, ModelDocument
from .transform_ode import MethodConfig, laplace_transform

__all__ = ["BenchReport", "format_number", "model_hash", "time_call", "run_transform", "run_bench"]

MIN_REPS = 11


def format_number(x) -> str:
    """15 significant digits, locale independent; complex as ``a+bj``."""
    z = complex(x)
    if z.imag == 0.0:
        return format(z.real, ".15g")
    return f"{z.real:.15g}{z.imag:+.15g}j"


def model_hash(doc: ModelDocument) -> str:
    text = json.dumps(doc.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _error_token(exc: Exception) -> str:
    return f"ERROR:{type(exc).__name__}"


@dataclass
class BenchReport:
    methods: list[str]
    rows: list[dict[str, Any]] = field(default_factory=list)
    timing: list[dict[str, Any]] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def _table(self, kind: str) -> tuple[list[str], list[list[str]]]:
        if kind == "values":
            header = ["t"] + self.methods
            body = [[format_number(r["t"])] + [r[m] if isinstance(r[m], str) else format_number(r[m])
                                                for m in self.methods] for r in self.rows]
        else:
            header = ["t"] + [f"{m}_ns" for m in self.methods] + ["reps"]
            body = [[format_number(r["t"])] + [str(r[m]) for m in self.methods] + [str(r["reps"])]
                    for r in self.timing]
        return header, body

    def to_csv(self, kind: str = "values") -> str:
        header, body = self._table(kind)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        return buf.getvalue()

    def to_json(self) -> str:
        def enc(x):
            if isinstance(x, (complex, np.complexfloating)):
                return format_number(x) if complex(x).imag else float(complex(x).real)
            if isinstance(x, np.generic):
                return x.item()
            return x

        doc = {
            "methods": self.methods,
            "rows": [{k: enc(v) for k, v in r.items()} for r in self.rows],
            "timing": self.timing,
            "metadata": self.metadata,
            "warnings": self.warnings,
        }
        return json.dumps(doc, indent=2, sort_keys=True)


def _metadata(doc: ModelDocument, config: MethodConfig) -> dict[str, Any]:
    return {
        "model_hash": model_hash(doc),
        "model_name": doc.name,
        "config": {"rk4_step": config.rk4_step, "quadrature_points": config.quadrature_points,
                   "are_solver": config.are_solver},
        "versions": {"wishart_laplace": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
    }


def _evaluate(doc: ModelDocument, query: LaplaceQuery, method: str, t: float,
              config: MethodConfig):
    cfg = MethodConfig(method=method, rk4_step=config.rk4_step,
                       quadrature_points=config.quadrature_points, are_solver=config.are_solver)
    return laplace_transform(doc.model, query.at(t), cfg)


def run_transform(doc: ModelDocument, query: LaplaceQuery, methods: Sequence[str],
                  grid: Sequence[float], config: MethodConfig | None = None) -> BenchReport:
    """One row per ``t`` with each method's value or an ``ERROR:<type>`` token."""
    config = config or MethodConfig()
    methods = [MethodConfig(method=m).method for m in methods]
    report = BenchReport(methods, metadata=_metadata(doc, config))
    for t in grid:
        row: dict[str, Any] = {"t": float(t)}
        for m in methods:
            try:
                res = _evaluate(doc, query, m, float(t), config)
                row[m] = res.value
                report.warnings.extend(f"t={t:g} {m}: {w}" for w in res.warnings)
            except WishartError as exc:
                row[m] = _error_token(exc)
                report.warnings.append(f"t={t:g} {m}: {exc}")
        report.rows.append(row)
    report.warnings = list(dict.fromkeys(report.warnings))
    return report


def time_call(fn: Callable[[], Any], reps: int = MIN_REPS) -> int:
    """Median wall time in nanoseconds over ``reps`` calls after one discarded warmup."""
    if reps < 1:
        raise ValueError("reps must be positive")
    fn()
    samples = []
    for _ in range(reps):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    return int(statistics.median(samples))


def run_bench(doc: ModelDocument, query: LaplaceQuery, methods: Sequence[str],
              grid: Sequence[float], reps: int = MIN_REPS,
              config: MethodConfig | None = None) -> BenchReport:
    """Median timing per ``(method, t)``; cells run serially."""
    if reps < MIN_REPS:
        raise ValueError(f"timings need at least {MIN_REPS} repetitions")
    config = config or MethodConfig()
    methods = [MethodConfig(method=m).method for m in methods]
    report = BenchReport(methods, metadata=_metadata(doc, config))
    report.metadata["reps"] = reps
    for t in grid:
        row: dict[str, Any] = {"t": float(t), "reps": reps}
        for m in methods:
            try:
                row[m] = time_call(lambda m=m: _evaluate(doc, query, m, float(t), config), reps)
            except WishartError as exc:
                row[m] = _error_token(exc)
        report.timing.append(row)
    return report
