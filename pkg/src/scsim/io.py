"""JSON instance files.

Every file is one JSON object. A ``"kind"`` field says what it holds
(``channel``, ``choi``, ``superchannel``, ``super_choi``, ``task``,
``result``); files without it are recognised from their keys. Matrices are
matrix literals ``{"rows": n, "cols": m, "entries": [[re, im], ...]}`` in
row-major order.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .channels import ChoiState, KrausChannel
from .superchannels import SPACE_ORDER, Superchannel, SuperChoi


class MalformedInput(ValueError):
    """File could not be parsed into an instance; the message says where."""


def matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2:
        raise ValueError("matrix literal needs a 2-d array")
    return {
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "entries": [[float(z.real), float(z.imag)] for z in m.ravel()],
    }


def _need(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise MalformedInput(f"{where}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise MalformedInput(f"{where}: missing field {key!r}")
    return obj[key]


def _int(obj: dict, key: str, where: str) -> int:
    v = _need(obj, key, where)
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise MalformedInput(f"{where}.{key}: expected a positive integer, got {v!r}")
    return v


def matrix_from_json(obj: Any, where: str = "matrix") -> np.ndarray:
    rows, cols = _int(obj, "rows", where), _int(obj, "cols", where)
    entries = _need(obj, "entries", where)
    if not isinstance(entries, list) or len(entries) != rows * cols:
        n = len(entries) if isinstance(entries, list) else "non-list"
        raise MalformedInput(f"{where}.entries: expected {rows * cols} entries, got {n}")
    out = np.empty(rows * cols, dtype=complex)
    for k, e in enumerate(entries):
        if (
            not isinstance(e, list)
            or len(e) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in e)
        ):
            raise MalformedInput(f"{where}.entries[{k}]: expected [re, im], got {e!r}")
        out[k] = complex(e[0], e[1])
    if not np.all(np.isfinite(out)):
        raise MalformedInput(f"{where}: non-finite entry")
    return out.reshape(rows, cols)


def channel_to_json(ch: KrausChannel) -> dict:
    return {
        "kind": "channel",
        "d_in": ch.d_in,
        "d_out": ch.d_out,
        "kraus": [matrix_to_json(k) for k in ch.kraus],
    }


def choi_to_json(w: ChoiState) -> dict:
    return {"kind": "choi", "d_in": w.d_in, "d_out": w.d_out, "choi": matrix_to_json(w.matrix)}


def superchannel_to_json(sc: Superchannel) -> dict:
    return {
        "kind": "superchannel",
        "d": sc.d,
        "class": sc.label,
        "V": matrix_to_json(sc.V),
        "W": matrix_to_json(sc.W),
        "anc_dims": list(sc.anc_dims),
    }


def super_choi_to_json(r: SuperChoi) -> dict:
    return {"kind": "super_choi", "d": r.d, "space_order": list(SPACE_ORDER), **matrix_to_json(r.matrix)}


def _channel(obj: dict) -> KrausChannel:
    d_in, d_out = _int(obj, "d_in", "channel"), _int(obj, "d_out", "channel")
    kraus = _need(obj, "kraus", "channel")
    if not isinstance(kraus, list) or not kraus:
        raise MalformedInput("channel.kraus: expected a non-empty list of matrices")
    ops = [matrix_from_json(k, f"channel.kraus[{i}]") for i, k in enumerate(kraus)]
    for i, k in enumerate(ops):
        if k.shape != (d_out, d_in):
            raise MalformedInput(f"channel.kraus[{i}]: shape {k.shape}, expected {(d_out, d_in)}")
    return KrausChannel(ops, d_in, d_out)


def _choi(obj: dict) -> ChoiState:
    d_in, d_out = _int(obj, "d_in", "choi"), _int(obj, "d_out", "choi")
    m = matrix_from_json(_need(obj, "choi", "choi"), "choi.choi")
    if m.shape != (d_in * d_out,) * 2:
        raise MalformedInput(f"choi.choi: shape {m.shape}, expected {(d_in * d_out,) * 2}")
    return ChoiState(m, d_in, d_out)


def _superchannel(obj: dict) -> Superchannel:
    d = _int(obj, "d", "superchannel")
    anc = _need(obj, "anc_dims", "superchannel")
    if not (isinstance(anc, list) and len(anc) == 2 and all(isinstance(a, int) and a >= 1 for a in anc)):
        raise MalformedInput(f"superchannel.anc_dims: expected [a1, a2] positive integers, got {anc!r}")
    v = matrix_from_json(_need(obj, "V", "superchannel"), "superchannel.V")
    w = matrix_from_json(_need(obj, "W", "superchannel"), "superchannel.W")
    try:
        return Superchannel(v, w, tuple(anc), d, str(obj.get("class", "")))
    except ValueError as e:
        raise MalformedInput(f"superchannel: {e}") from None


def _super_choi(obj: dict) -> SuperChoi:
    d = obj.get("d", 2)
    order = obj.get("space_order", list(SPACE_ORDER))
    if list(order) != list(SPACE_ORDER):
        raise MalformedInput(f"super_choi.space_order: expected {list(SPACE_ORDER)}, got {order!r}")
    m = matrix_from_json(obj, "super_choi")
    if not isinstance(d, int) or m.shape != (d**4,) * 2:
        raise MalformedInput(f"super_choi: shape {m.shape} does not match d={d!r}")
    return SuperChoi(m, d)


TASK_KEYS = {"task": str, "seed": int, "restarts": int, "budget": int, "tol": float, "terms": int}


def task_from_json(obj: dict) -> dict:
    """Validated task settings; unknown keys are rejected."""
    out = {}
    for key, val in obj.items():
        if key == "kind":
            continue
        if key not in TASK_KEYS:
            raise MalformedInput(f"task: unknown field {key!r}")
        typ = TASK_KEYS[key]
        ok = isinstance(val, (int, float)) and not isinstance(val, bool) if typ is float else isinstance(val, typ)
        if not ok or isinstance(val, bool):
            raise MalformedInput(f"task.{key}: expected {typ.__name__}, got {val!r}")
        out[key] = val
    if "task" not in out:
        raise MalformedInput("task: missing field 'task'")
    return out


_READERS = {
    "channel": _channel,
    "choi": _choi,
    "superchannel": _superchannel,
    "super_choi": _super_choi,
    "task": task_from_json,
    "result": lambda obj: obj,
}


def _guess_kind(obj: dict) -> str:
    if "kraus" in obj:
        return "channel"
    if "choi" in obj:
        return "choi"
    if "V" in obj:
        return "superchannel"
    if "space_order" in obj or "entries" in obj:
        return "super_choi"
    if "task" in obj:
        return "task"
    raise MalformedInput("cannot tell what this file holds: no 'kind' field and no recognisable keys")


def loads(text: str) -> Any:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedInput(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(obj, dict):
        raise MalformedInput("top level must be a JSON object")
    kind = obj.get("kind") or _guess_kind(obj)
    if kind not in _READERS:
        raise MalformedInput(f"unknown kind {kind!r}; expected one of {sorted(_READERS)}")
    return _READERS[kind](obj)


def load(path: str | os.PathLike) -> Any:
    """Read an instance file and return the matching object."""
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as e:
        raise MalformedInput(f"{path}: not UTF-8 text ({e.reason})") from None
    return loads(text)


def to_json(obj: Any) -> dict:
    if isinstance(obj, KrausChannel):
        return channel_to_json(obj)
    if isinstance(obj, ChoiState):
        return choi_to_json(obj)
    if isinstance(obj, Superchannel):
        return superchannel_to_json(obj)
    if isinstance(obj, SuperChoi):
        return super_choi_to_json(obj)
    raise TypeError(f"no file format for {type(obj).__name__}")


def dumps(obj: Any) -> str:
    data = obj if isinstance(obj, dict) else to_json(obj)
    return json.dumps(data, indent=1) + "\n"


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file in the same directory and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def save(path: str | os.PathLike, obj: Any) -> None:
    write_atomic(path, dumps(obj))
