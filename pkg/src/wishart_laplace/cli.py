"""Command-line front end.

Exit codes: 0 success, 2 input error (bad model file, flags or matrices),
3 domain error (the evaluation is outside a method's domain). Errors are
reported as a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .bench import MIN_REPS, format_number, run_bench, run_transform
from .errors import DomainError, InputError, InvalidModel, WishartError
from .model import LaplaceQuery, ModelDocument, load_model, symmetric_matrix
from .presets import PRESETS, preset_document, preset_grid, preset_methods
from .pricing import (
    CarrMadanConfig,
    ShortRateModel,
    SVModel,
    carr_madan_call,
    carr_madan_put,
    yield_curve,
)
from .simulate import McConfig, mc_laplace
from .transform_cm import cm_transform
from .transform_ode import MethodConfig

EXIT_OK, EXIT_INPUT, EXIT_DOMAIN = 0, 2, 3


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop included), a comma list, or a single number."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9))
            return [round(start + i * step, 12) for i in range(n + 1)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InvalidModel(f"cannot parse time grid {text!r}") from None


def _json_matrix(text: str, name: str) -> np.ndarray:
    try:
        return symmetric_matrix(json.loads(text), name)
    except json.JSONDecodeError as exc:
        raise InvalidModel(f"--{name}: invalid JSON ({exc})") from exc


def _document(args) -> ModelDocument:
    if args.model:
        return load_model(args.model)
    if getattr(args, "preset", None):
        return preset_document(args.preset)
    raise InvalidModel("give --model or --preset")


def _query(args, doc: ModelDocument) -> LaplaceQuery:
    q = dict(doc.query or {})
    if args.w is not None:
        q["w"] = _json_matrix(args.w, "w")
    if args.v is not None:
        q["v"] = _json_matrix(args.v, "v")
    d = doc.model.dim
    if not q:
        raise InvalidModel("no weights: add a 'query' block to the model or pass --w/--v")
    return LaplaceQuery(q.get("w", np.zeros((d, d))), q.get("v", np.zeros((d, d))))


def _methods_and_grid(args) -> tuple[list[str], list[float]]:
    preset = getattr(args, "preset", None)
    if args.method:
        methods = [m.strip() for m in args.method.split(",") if m.strip()]
    elif preset:
        methods = preset_methods(preset)
    else:
        methods = ["cameron_martin"]
    if args.t_grid is not None:
        grid = parse_grid(args.t_grid)
    elif preset:
        grid = preset_grid(preset)
    else:
        raise InvalidModel("give --t-grid")
    return methods, grid


def _method_config(args) -> MethodConfig:
    return MethodConfig(rk4_step=args.rk4_step, quadrature_points=args.quadrature_points,
                        are_solver=args.are_solver)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def cmd_transform(args) -> int:
    doc = _document(args)
    query = _query(args, doc)
    methods, grid = _methods_and_grid(args)
    report = run_transform(doc, query, methods, grid, _method_config(args))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(report.to_json() if args.format == "json" else report.to_csv("values"), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.reps < MIN_REPS:
        raise InvalidModel(f"--reps must be at least {MIN_REPS}")
    doc = _document(args)
    query = _query(args, doc)
    methods, grid = _methods_and_grid(args)
    report = run_bench(doc, query, methods, grid, args.reps, _method_config(args))
    _emit(report.to_json() if args.format == "json" else report.to_csv("timing"), args.out)
    return EXIT_OK


def _contract_value(args, doc: ModelDocument, key: str, default=None) -> float:
    val = getattr(args, key, None)
    if val is None and doc.contract:
        val = doc.contract.get(key)
    if val is None:
        val = default
    if val is None:
        raise InvalidModel(f"missing contract field {key!r} (flag --{key} or model contract block)")
    return float(val)


def _price_call(args, doc: ModelDocument) -> dict[str, Any]:
    block = doc.sv or {}
    if "X0" not in block:
        raise InvalidModel("call pricing needs an 'sv' block with X0 (and optional R)")
    d = doc.model.dim
    sv = SVModel(doc.model, block.get("R", np.zeros((d, d))), block["X0"])
    strike = _contract_value(args, doc, "strike")
    maturity = _contract_value(args, doc, "maturity")
    damping = _contract_value(args, doc, "damping", 1.5)
    config = CarrMadanConfig(damping=damping, omega_max=args.omega_max, points=args.points)
    call = carr_madan_call(sv, strike, maturity, config)
    out: dict[str, Any] = {
        "kind": "call",
        "price": call.price,
        "damping": call.damping,
        "grid": {"omega_max": config.omega_max, "points": config.points},
        "diagnostics": call.diagnostics,
    }
    if args.parity:
        put = carr_madan_put(sv, strike, maturity, config)
        residual = call.price - put.price - (sv.X0 - strike * math.exp(-sv.r * maturity))
        out["put"] = put.price
        out["parity_residual"] = residual
        out["parity_ok"] = abs(residual) <= 1e-6 * sv.X0
    return out


def _price_zcb(args, doc: ModelDocument) -> dict[str, Any]:
    block = dict(doc.short_rate or {})
    if args.a is not None:
        block["a"] = args.a
    if args.rate_v is not None:
        block["v"] = _json_matrix(args.rate_v, "rate-v")
    d = doc.model.dim
    model = ShortRateModel(doc.model, float(block.get("a", 0.0)), block.get("v", np.zeros((d, d))))
    taus = parse_grid(args.tau) if args.tau is not None else [_contract_value(args, doc, "maturity")]
    curve = yield_curve(model, taus)
    out: dict[str, Any] = {"kind": "zcb", "tau": taus, "price": curve["price"],
                           "diagnostics": {"yield": curve["yield"],
                                           "price_decreasing": curve["price_decreasing"]}}
    if len(taus) == 1:
        out["tau"], out["price"] = taus[0], curve["price"][0]
    return out


def cmd_price(args) -> int:
    doc = _document(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = _price_call(args, doc) if args.kind == "call" else _price_zcb(args, doc)
    out.setdefault("diagnostics", {})["warnings"] = [str(w.message) for w in caught]
    _emit(json.dumps(out, indent=2, sort_keys=True, default=_json_default), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    doc = _document(args)
    if not doc.model.scalar_gindikin:
        raise InvalidModel("validate needs a scalar-alpha model")
    query = _query(args, doc)
    try:
        mc = dict(json.loads(args.mc_config)) if args.mc_config else {}
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise InvalidModel(f"--mc-config: expected a JSON object ({exc})") from exc
    for key in ("paths", "step", "seed"):
        if getattr(args, key) is not None:
            mc[key] = getattr(args, key)
    try:
        config = McConfig(**mc)
    except TypeError as exc:
        raise InvalidModel(f"--mc-config: {exc}") from exc
    grid = parse_grid(args.t_grid) if args.t_grid else [1.0]
    rows = []
    for t in grid:
        q = query.at(t)
        cm = cm_transform(doc.model, q).real_value
        est, se = mc_laplace(doc.model, q, config)
        if se > 0:
            z = (est - cm) / se
        else:
            z = 0.0 if abs(est - cm) <= 1e-12 * max(1.0, abs(cm)) else math.inf
        rows.append({"t": t, "cameron_martin": cm, "mc": est, "stderr": se, "z": z,
                     "pass": abs(z) <= 3.0})
    report = {"rows": rows, "pass": all(r["pass"] for r in rows),
              "mc_config": {"paths": config.paths, "step": config.step, "seed": config.seed}}
    _emit(json.dumps(report, indent=2, sort_keys=True, default=_json_default), args.out)
    return EXIT_OK


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, complex):
        return format_number(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wishart-laplace",
                                     description="Wishart joint Laplace transforms, benchmarks and pricing")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, preset=True):
        p.add_argument("--model", help="model JSON file")
        if preset:
            p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--out", help="write output to this file instead of stdout")

    def query_flags(p):
        p.add_argument("--w", help="terminal weight as a JSON matrix")
        p.add_argument("--v", help="integral weight as a JSON matrix")

    def method_flags(p):
        p.add_argument("--method", help="comma-separated: cm, lin, vc, rk4 or full names")
        p.add_argument("--t-grid", help="start:stop:step or comma list")
        p.add_argument("--rk4-step", type=float, default=1e-3)
        p.add_argument("--quadrature-points", type=int, default=2000,
                       help="Simpson intervals per unit time for variation of constants")
        p.add_argument("--are-solver", choices=["schur", "closed_form"], default="schur")
        p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("transform", help="transform values per method and t")
    common(p)
    query_flags(p)
    method_flags(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("bench", help="median wall time per method and t")
    common(p)
    query_flags(p)
    method_flags(p)
    p.add_argument("--reps", type=int, default=11)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("price", help="call (Carr-Madan) or zero-coupon bond prices")
    p.add_argument("kind", choices=["call", "zcb"])
    common(p, preset=False)
    p.add_argument("--strike", type=float)
    p.add_argument("--maturity", type=float)
    p.add_argument("--damping", type=float)
    p.add_argument("--omega-max", type=float, default=200.0)
    p.add_argument("--points", type=int, default=4096)
    p.add_argument("--parity", action="store_true", help="also price the put and report parity")
    p.add_argument("--tau", help="bond maturities: number, list or start:stop:step")
    p.add_argument("--a", type=float, help="short-rate level")
    p.add_argument("--rate-v", help="short-rate state weight as a JSON matrix")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("validate", help="closed form against Monte Carlo")
    common(p)
    query_flags(p)
    p.add_argument("--t-grid", help="time points (default 1)")
    p.add_argument("--mc-config", help='JSON object, e.g. {"paths": 100000, "step": 0.001, "seed": 7}')
    p.add_argument("--paths", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_validate)
    return parser


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    damping = getattr(exc, "damping", None)
    if damping is not None:
        payload["damping"] = damping
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        return _fail(exc, EXIT_INPUT)
    except DomainError as exc:
        return _fail(exc, EXIT_DOMAIN)
    except WishartError as exc:
        return _fail(exc, EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
