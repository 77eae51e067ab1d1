"""JSON models and functions, CSV fields.

Model files::

    {"kind": "graph", "atoms": [{"id": "v0", "m": 1.0}, ...],
     "conductances": [[i, j, c], ...]}
    {"kind": "sg", "level": 4}
    {"kind": "superposition", "n": 2, "grid": 32}

Function files: ``{"backend": kind, "payload": ...}`` where the payload is a
list of vertex values (graph), ``{"level": m, "values": [...]}`` or three
boundary values (sg), and a catalogue id or ``{"const", "lin", "quad"}``
(superposition).
"""
from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .errors import BackendMismatchError
from .forms import AtomSpace, GraphForm, QuadPoly, SGForm, SGFunction, SuperpositionForm

FLOAT_FMT = "%.17g"


def model_to_dict(model):
    if isinstance(model, GraphForm):
        return {
            "kind": "graph",
            "atoms": [{"id": a, "m": float(m)} for a, m in zip(model.space.atoms, model.space.m_weights)],
            "conductances": [[i, j, c] for i, j, c in model.edges()],
        }
    if isinstance(model, SGForm):
        return {"kind": "sg", "level": model.level}
    if isinstance(model, SuperpositionForm):
        return {"kind": "superposition", "n": model.dim, "grid": model.grid}
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(data):
    kind = data.get("kind")
    if kind == "graph":
        atoms = data["atoms"]
        n = len(atoms)
        c = np.zeros((n, n))
        for i, j, w in data.get("conductances", []):
            c[int(i), int(j)] = c[int(j), int(i)] = float(w)
        space = AtomSpace(tuple(a["id"] for a in atoms), np.array([a["m"] for a in atoms], float), "graph")
        return GraphForm(space, c)
    if kind == "sg":
        return SGForm(int(data["level"]))
    if kind == "superposition":
        return SuperpositionForm(int(data.get("n", 2)), int(data.get("grid", 32)))
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


def function_to_dict(model, f):
    f = model.coerce(f)
    if isinstance(model, GraphForm):
        return {"backend": "graph", "payload": f.tolist()}
    if isinstance(model, SGForm):
        return {"backend": "sg", "payload": {"level": f.level, "values": f.values.tolist()}}
    return {
        "backend": "superposition",
        "payload": {"const": f.const, "lin": f.lin.tolist(), "quad": f.quad.tolist()},
    }


def function_from_dict(model, data):
    backend, payload = data.get("backend"), data.get("payload")
    expected = {GraphForm: "graph", SGForm: "sg", SuperpositionForm: "superposition"}[type(model)]
    if backend != expected:
        raise BackendMismatchError(f"{backend!r} function on a {expected} model")
    if backend == "sg" and isinstance(payload, dict):
        return model.coerce(SGFunction(int(payload["level"]), payload["values"]))
    if backend == "superposition" and isinstance(payload, dict):
        return model.coerce(QuadPoly(model.dim, payload["const"], payload["lin"], payload["quad"]))
    if backend == "graph" or backend == "sg":
        return model.coerce(np.asarray(payload, dtype=float))
    return model.coerce(payload)


def load_function(model, path):
    return function_from_dict(model, json.loads(Path(path).read_text()))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return FLOAT_FMT % float(v)


def field_csv(atoms, columns, header):
    """CSV text: one row per atom, ``header`` naming the atom column then each column."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    cols = [np.asarray(c) for c in columns]
    for k, a in enumerate(atoms):
        w.writerow([a] + [_fmt(c[k]) for c in cols])
    return buf.getvalue()


def read_field_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    atoms = [r[0] for r in body]
    values = np.array([[float(v) for v in r[1:]] for r in body])
    return header, atoms, values


def write_text(text, path=None, stream=None):
    if path is None:
        stream.write(text)
    else:
        Path(path).write_text(text)


def dumps(obj):
    return json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"{type(o).__name__} is not JSON serializable")
