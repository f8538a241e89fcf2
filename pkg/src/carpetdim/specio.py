"""JSON system description files.

Layout::

    {
      "ifss": [[{"a": "1/2", "b": "1/3", "swap": false, "flip_x": false,
                 "flip_y": false, "u": 0, "v": 0}, ...], ...],
      "probs": ["1/2", "1/2"]
    }

Scalars are numbers or ``"p/q"`` strings.  Rational inputs round-trip
bit-exactly through :func:`loads`/:func:`dumps`.
"""
from __future__ import annotations

import json
from pathlib import Path

from .rifs import BoxLikeMap, Ifs, Rifs, SpecError, format_scalar, parse_scalar

TOP_KEYS = {"ifss", "probs"}
MAP_KEYS = {"a", "b", "swap", "flip_x", "flip_y", "u", "v"}
REQUIRED_MAP_KEYS = {"a", "b"}


def _map_from_dict(d, where: str) -> BoxLikeMap:
    if not isinstance(d, dict):
        raise SpecError(f"{where}: map record must be an object")
    unknown = set(d) - MAP_KEYS
    if unknown:
        raise SpecError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = REQUIRED_MAP_KEYS - set(d)
    if missing:
        raise SpecError(f"{where}: missing key(s) {sorted(missing)}")
    flags = {}
    for key in ("swap", "flip_x", "flip_y"):
        val = d.get(key, False)
        if not isinstance(val, bool):
            raise SpecError(f"{where}.{key}: expected a boolean")
        flags[key] = val
    try:
        scalars = {key: parse_scalar(d.get(key, 0)) for key in ("a", "b", "u", "v")}
    except SpecError as exc:
        raise SpecError(f"{where}: {exc}") from None
    return BoxLikeMap(**scalars, **flags)


def from_dict(doc) -> Rifs:
    if not isinstance(doc, dict):
        raise SpecError("top level must be an object")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise SpecError(f"unknown top-level key(s) {sorted(unknown)}")
    missing = TOP_KEYS - set(doc)
    if missing:
        raise SpecError(f"missing top-level key(s) {sorted(missing)}")
    if not isinstance(doc["ifss"], list) or not isinstance(doc["probs"], list):
        raise SpecError("ifss and probs must be arrays")
    ifss = []
    for i, maps in enumerate(doc["ifss"]):
        if not isinstance(maps, list):
            raise SpecError(f"ifss[{i}] must be an array of map records")
        ifss.append(Ifs(tuple(_map_from_dict(m, f"ifss[{i}][{j}]") for j, m in enumerate(maps))))
    try:
        probs = tuple(parse_scalar(p) for p in doc["probs"])
    except SpecError as exc:
        raise SpecError(f"probs: {exc}") from None
    return Rifs(tuple(ifss), probs)


def to_dict(rifs: Rifs) -> dict:
    return {
        "ifss": [
            [
                {
                    "a": format_scalar(f.a),
                    "b": format_scalar(f.b),
                    "swap": f.swap,
                    "flip_x": f.flip_x,
                    "flip_y": f.flip_y,
                    "u": format_scalar(f.u),
                    "v": format_scalar(f.v),
                }
                for f in ifs
            ]
            for ifs in rifs.ifss
        ],
        "probs": [format_scalar(p) for p in rifs.probs],
    }


def loads(text: str) -> Rifs:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(doc)


def dumps(rifs: Rifs) -> str:
    return json.dumps(to_dict(rifs), indent=2) + "\n"


def load_spec(path) -> Rifs:
    """Read a system description file (OSError propagates to the caller)."""
    return loads(Path(path).read_text(encoding="utf-8"))


def save_spec(rifs: Rifs, path) -> None:
    Path(path).write_text(dumps(rifs), encoding="utf-8")
