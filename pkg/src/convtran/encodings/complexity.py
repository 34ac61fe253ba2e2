"""Parameter, memory and multiply-add accounting for each position encoding."""
from __future__ import annotations

import json

from .absolute import AbsKind, build_table
from .relative import ShawBias, VectorBias, erpe_new

METHODS = ("tAPE", "VanillaAPE", "Learned", "Shaw", "Vector", "eRPE")

_ALIASES = {
    "tape": "tAPE",
    "vanilla": "VanillaAPE",
    "vanillaape": "VanillaAPE",
    "learned": "Learned",
    "learn": "Learned",
    "shaw": "Shaw",
    "vector": "Vector",
    "erpe": "eRPE",
}


def canonical_method(method: str) -> str:
    key = method.replace("_", "").replace("-", "").lower()
    if key not in _ALIASES:
        raise ValueError(f"unknown encoding method {method!r}; expected one of {METHODS}")
    return _ALIASES[key]


def complexity_report(method: str, L: int, d_z: int, d_model: int | None = None, heads: int = 1,
                      shaw_values: bool = False) -> dict:
    """Trainable parameters, memory cells and multiply-adds of one encoding.

    ``d_model`` defaults to ``d_z``.  eRPE parameters scale with ``heads``;
    Shaw counts the key table, plus an equal value table when
    ``shaw_values`` is set.  ``memory_components`` splits memory into the
    encoding's own storage and the L x L attention-sized buffer.
    """
    method = canonical_method(method)
    d_model = d_z if d_model is None else d_model
    if method in ("tAPE", "VanillaAPE", "Learned"):
        params = L * d_model if method == "Learned" else 0
        own, attn = L * d_model, 0
        mult_adds = L * d_model
    elif method == "Shaw":
        params = (2 * L - 1) * d_z * (2 if shaw_values else 1)
        own, attn = L * L * d_z, L * L
        mult_adds = L * L * d_z
    elif method == "Vector":
        params = L * d_z
        own, attn = L * d_z, L * L
        mult_adds = L * L * d_z
    else:
        params = (2 * L - 1) * heads
        own, attn = L, L * L
        mult_adds = L * L
    return {
        "method": method,
        "L": L,
        "d_z": d_z,
        "params": params,
        "memory_cells": own + attn,
        "mult_adds": mult_adds,
        "memory_components": {"encoding": own, "attention_matrix": attn},
    }


def live_parameter_count(method: str, L: int, d_z: int, d_model: int | None = None, heads: int = 1,
                         shaw_values: bool = False) -> int:
    """Build the encoding object itself and count its trainable scalars."""
    method = canonical_method(method)
    d_model = d_z if d_model is None else d_model
    if method == "tAPE":
        return build_table(AbsKind.TAPE, L, d_model).num_parameters
    if method == "VanillaAPE":
        return build_table(AbsKind.VANILLA, L, d_model).num_parameters
    if method == "Learned":
        return build_table(AbsKind.LEARNED, L, d_model).num_parameters
    if method == "Shaw":
        return ShawBias(L, d_z, values=shaw_values).num_parameters
    if method == "Vector":
        return VectorBias(L, d_z).num_parameters
    return erpe_new(L, heads).num_parameters


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=False)
