"""Flat key = value text files.

One `key = value` pair per line, `#` starts a comment, blank lines ignored.
Repeated keys are allowed and preserved in order (park specs use a repeated
`model` key to open a new block). This is the one config syntax used for
waveform specs, park specs and pipeline configs.
"""

from __future__ import annotations

from .errors import ParseError


def parse_kv_lines(text: str, path: str = "<string>") -> list[tuple[str, str]]:
    """Return (key, value) pairs in file order."""
    pairs: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ParseError(f"{path}:{lineno}: empty key")
        pairs.append((key, value))
    return pairs


def load_kv(path: str) -> list[tuple[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_lines(fh.read(), path=str(path))


def kv_to_dict(pairs: list[tuple[str, str]], path: str = "<string>") -> dict[str, str]:
    """Collapse pairs into a dict, rejecting duplicate keys."""
    out: dict[str, str] = {}
    for key, value in pairs:
        if key in out:
            raise ParseError(f"{path}: duplicate key {key!r}")
        out[key] = value
    return out


def coerce_float(d: dict[str, str], key: str, default: float | None = None, path: str = "<kv>") -> float:
    if key not in d:
        if default is None:
            raise ParseError(f"{path}: missing required key {key!r}")
        return default
    try:
        return float(d[key])
    except ValueError as exc:
        raise ParseError(f"{path}: key {key!r}: not a number: {d[key]!r}") from exc


def coerce_int(d: dict[str, str], key: str, default: int | None = None, path: str = "<kv>") -> int:
    if key not in d:
        if default is None:
            raise ParseError(f"{path}: missing required key {key!r}")
        return default
    try:
        return int(d[key])
    except ValueError as exc:
        raise ParseError(f"{path}: key {key!r}: not an integer: {d[key]!r}") from exc


def format_kv(pairs: list[tuple[str, str]]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs)
