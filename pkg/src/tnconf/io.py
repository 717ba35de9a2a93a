"""Reading and writing configuration and report documents (JSON).

Configuration documents carry ``m, n, N, points`` (row-major nested lists) and
optionally ``mu, lambdas, base, legs, kappas``; K_a documents may add ``flux``
and ``states``, in which case ``points`` can be omitted. Readers ignore unknown
fields. Reals are written with 17 significant digits; non-finite reals become
``null``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import SpectralParams, TnConfiguration, as_points
from .errors import InputError
from .ka import Flux, flux_from_spec, lift_states


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        s = format(x, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc, indent: int = 2) -> str:
    return _encode(doc, indent, 0) + "\n"


def write_document(doc, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(doc))


def read_document(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not text.strip():
        raise InputError(f"{path} is empty")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path} must hold a JSON object")
    return doc


@dataclass
class ConfigDocument:
    points: np.ndarray
    params: Optional[SpectralParams] = None
    config: Optional[TnConfiguration] = None
    flux: Optional[Flux] = None

    @property
    def shape(self) -> tuple:
        return self.points.shape[1:]


def _array(doc: dict, key: str):
    try:
        a = np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"field {key!r} is not numeric: {exc}") from exc
    if not np.all(np.isfinite(a)):
        raise InputError(f"field {key!r} has non-finite entries")
    return a


def config_from_doc(doc: dict) -> ConfigDocument:
    if not isinstance(doc, dict):
        raise InputError("configuration document must be an object")
    flux = flux_from_spec(doc["flux"]) if doc.get("flux") is not None else None
    if doc.get("points") is not None:
        points = as_points(_array(doc, "points"))
    elif doc.get("states") is not None and flux is not None:
        points = lift_states(flux, _array(doc, "states"))
    else:
        raise InputError("document has neither points nor states with a flux")
    N, m, n = points.shape
    for key, want in (("N", N), ("m", m), ("n", n)):
        if key in doc and doc[key] != want:
            raise InputError(f"field {key}={doc[key]!r} disagrees with points ({want})")
    params = None
    if doc.get("mu") is not None and doc.get("lambdas") is not None:
        lam = _array(doc, "lambdas")
        if lam.shape != (N,):
            raise InputError(f"need {N} lambdas, got shape {lam.shape}")
        params = SpectralParams(float(doc["mu"]), lam)
    config = None
    if all(doc.get(k) is not None for k in ("base", "legs", "kappas")):
        config = TnConfiguration(points, _array(doc, "base"), _array(doc, "legs"), _array(doc, "kappas"))
    return ConfigDocument(points, params, config, flux)


def config_to_doc(points, params: Optional[SpectralParams] = None,
                  config: Optional[TnConfiguration] = None, flux: Optional[Flux] = None) -> dict:
    P = as_points(points)
    N, m, n = P.shape
    doc = {"m": m, "n": n, "N": N, "points": P}
    if params is not None:
        doc["mu"] = params.mu
        doc["lambdas"] = params.lambdas
    if config is not None:
        doc["base"] = config.base
        doc["legs"] = config.legs
        doc["kappas"] = config.kappas
    if flux is not None:
        doc["flux"] = flux.to_spec()
        if (m, n) == (3, 2):
            doc["states"] = [[X[0, 1], X[1, 1]] for X in P]
    return doc
