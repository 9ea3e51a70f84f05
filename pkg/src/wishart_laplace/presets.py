"""Built-in benchmark configurations: a two-factor model, weights and time grids."""

from __future__ import annotations

from typing import Any

import numpy as np

from .model import LaplaceQuery, ModelDocument, parse_model_document

__all__ = ["PRESETS", "preset_document", "preset_query", "preset_grid", "preset_methods"]

_BASE: dict[str, Any] = {
    "dim": 2,
    "S0": [[0.012, 0.001], [0.001, 0.003]],
    "M": [[-0.02, -0.02], [-0.01, -0.02]],
    "Q": [[0.141421356237310, -0.070710678118655], [0.0, 0.070710678118655]],
    "alpha": 3.0,
    "query": {"v": [[0.1, 0.04], [0.04, 0.1]], "w": [[0.11, 0.03], [0.03, 0.11]]},
}

PRESETS: dict[str, dict[str, Any]] = {
    "table1": {
        "document": _BASE,
        "grid": [round(0.1 * i, 10) for i in range(31)],
        "methods": ["linearization", "cameron_martin", "variation_of_constants", "rk4"],
    },
    "table2": {
        "document": _BASE,
        "grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 10.0, 100.0],
        "methods": ["linearization", "cameron_martin", "rk4"],
    },
}


def _get(name: str) -> dict[str, Any]:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset_document(name: str) -> ModelDocument:
    return parse_model_document(_get(name)["document"])


def preset_query(name: str, t: float = 0.0) -> LaplaceQuery:
    q = _get(name)["document"]["query"]
    return LaplaceQuery(np.array(q["w"]), np.array(q["v"]), t)


def preset_grid(name: str) -> list[float]:
    return list(_get(name)["grid"])


def preset_methods(name: str) -> list[str]:
    return list(_get(name)["methods"])
