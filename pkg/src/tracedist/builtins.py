"""Built-in example chains, stored as JSON templates under ``data/``.

A template may declare one numeric ``parameter``; any probability written as
``[c, m]`` resolves to ``c + m * parameter``.
"""

from __future__ import annotations

import json
import os
from importlib import resources

from .chain import ChainError, MarkovChain, load_chain, parse_chain

BUILTIN_IDS = ("fig1", "fig2", "fig3", "lemma3-right", "cycle-ab", "cycle-aa", "fig1-unfolded")


def _template(name: str) -> dict:
    if name not in BUILTIN_IDS:
        raise ChainError(f"unknown built-in chain {name!r}; choose from {list(BUILTIN_IDS)}")
    text = resources.files("tracedist").joinpath("data").joinpath(f"{name}.json").read_text()
    return json.loads(text)


def _resolve(value, x):
    if isinstance(value, list):
        c, m = value
        return round(c + m * x, 15)
    if isinstance(value, dict):
        return {k: _resolve(v, x) for k, v in value.items()}
    return value


def builtin_document(name: str, value: float | None = None) -> dict:
    doc = _template(name)
    param = doc.pop("parameter", None)
    default = doc.pop("default", None)
    if param is None:
        if value is not None:
            raise ChainError(f"built-in chain {name!r} takes no parameter")
        return doc
    x = default if value is None else float(value)
    resolved = {k: (_resolve(v, x) if k in ("transitions", "initial", "pmin") else v)
                for k, v in doc.items()}
    resolved["name"] = f"{name}({param}={x:g})"
    return resolved


def builtin_chain(name: str, value: float | None = None) -> MarkovChain:
    """``fig1`` takes tau, ``fig3`` takes p_min; the others are fixed."""
    return parse_chain(builtin_document(name, value))


def fig1(tau: float = 0.0) -> MarkovChain:
    return builtin_chain("fig1", tau)


def fig3(pmin: float = 0.3) -> MarkovChain:
    return builtin_chain("fig3", pmin)


def resolve_chain(ref: str) -> MarkovChain:
    """A built-in id, optionally with ``:value`` (e.g. ``fig1:0.1``), or a path."""
    base, _, arg = ref.partition(":")
    if base in BUILTIN_IDS:
        if arg and "=" in arg:
            arg = arg.split("=", 1)[1]
        return builtin_chain(base, float(arg) if arg else None)
    if os.path.exists(ref):
        return load_chain(ref)
    raise ChainError(f"{ref!r} is neither a built-in chain id nor a file")
