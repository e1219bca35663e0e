"""Minimal TOML-subset reader, used when the stdlib parser is unavailable.

Covers exactly what the project config files contain: ``[table]`` and
``[nested.table]`` headers, ``key = value`` pairs with strings, integers,
floats, booleans and (possibly nested, possibly multi-line) arrays, plus
comments and blank lines. Dates, inline tables, dotted keys,
arrays-of-tables and multi-line strings are deliberately out of scope and
raise.
"""

from __future__ import annotations

import re

_BARE_KEY = re.compile(r"[A-Za-z0-9_-]+")


class TomlError(ValueError):
    pass


def _split_comment(line: str, lineno: int) -> str:
    """Drop a trailing comment, respecting quoted strings."""
    out = []
    in_str = False
    escaped = False
    for ch in line:
        if in_str:
            out.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
            continue
        if ch == "#":
            break
        if ch == '"':
            in_str = True
        out.append(ch)
    if in_str:
        raise TomlError(f"line {lineno}: unterminated string")
    return "".join(out)


def _balanced(s: str) -> bool:
    depth = 0
    in_str = False
    escaped = False
    for ch in s:
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
        elif ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
    return depth == 0 and not in_str


def _parse_string(s: str, lineno: int) -> tuple:
    """Parse a leading quoted string; return (value, rest)."""
    assert s[0] == '"'
    out = []
    i = 1
    while i < len(s):
        ch = s[i]
        if ch == "\\":
            if i + 1 >= len(s):
                raise TomlError(f"line {lineno}: dangling escape")
            nxt = s[i + 1]
            mapped = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "\\": "\\"}.get(nxt)
            if mapped is None:
                raise TomlError(f"line {lineno}: unsupported escape \\{nxt}")
            out.append(mapped)
            i += 2
        elif ch == '"':
            return "".join(out), s[i + 1:]
        else:
            out.append(ch)
            i += 1
    raise TomlError(f"line {lineno}: unterminated string")


def _split_top_level(s: str, lineno: int) -> list:
    """Split an array body on commas outside strings/brackets."""
    parts = []
    depth = 0
    in_str = False
    escaped = False
    cur = []
    for ch in s:
        if in_str:
            cur.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
            continue
        if ch == '"':
            in_str = True
            cur.append(ch)
        elif ch == "[":
            depth += 1
            cur.append(ch)
        elif ch == "]":
            depth -= 1
            cur.append(ch)
        elif ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def _parse_value(s: str, lineno: int):
    s = s.strip()
    if not s:
        raise TomlError(f"line {lineno}: missing value")
    if s[0] == '"':
        value, rest = _parse_string(s, lineno)
        if rest.strip():
            raise TomlError(f"line {lineno}: trailing junk after string: {rest!r}")
        return value
    if s[0] == "[":
        if s[-1] != "]":
            raise TomlError(f"line {lineno}: unterminated array")
        body = s[1:-1].strip()
        if not body:
            return []
        parts = _split_top_level(body, lineno)
        if parts and parts[-1].strip() == "":  # trailing comma
            parts = parts[:-1]
        return [_parse_value(p, lineno) for p in parts]
    if s == "true":
        return True
    if s == "false":
        return False
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        raise TomlError(f"line {lineno}: cannot parse value {s!r}")


def loads(text: str) -> dict:
    root: dict = {}
    table = root
    buf = ""
    buf_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _split_comment(raw, lineno).strip()
        if not line and not buf:
            continue
        if buf:
            buf = buf + " " + line
        else:
            buf, buf_line = line, lineno
        if not _balanced(buf):
            continue
        stmt, buf = buf.strip(), ""
        if not stmt:
            continue
        if stmt.startswith("[["):
            raise TomlError(f"line {buf_line}: arrays of tables are not supported")
        if stmt.startswith("["):
            if not stmt.endswith("]"):
                raise TomlError(f"line {buf_line}: malformed table header {stmt!r}")
            path = stmt[1:-1].strip()
            if not path:
                raise TomlError(f"line {buf_line}: empty table name")
            table = root
            for part in path.split("."):
                part = part.strip()
                if not _BARE_KEY.fullmatch(part):
                    raise TomlError(f"line {buf_line}: malformed table name {path!r}")
                nxt = table.setdefault(part, {})
                if not isinstance(nxt, dict):
                    raise TomlError(f"line {buf_line}: {path!r} collides with a value")
                table = nxt
            continue
        if "=" not in stmt:
            raise TomlError(f"line {buf_line}: expected key = value, got {stmt!r}")
        key, _, rhs = stmt.partition("=")
        key = key.strip()
        if key.startswith('"') and key.endswith('"') and len(key) >= 2:
            key = key[1:-1]
        if not key:
            raise TomlError(f"line {buf_line}: empty key")
        if key in table:
            raise TomlError(f"line {buf_line}: duplicate key {key!r}")
        table[key] = _parse_value(rhs, buf_line)
    if buf:
        raise TomlError(f"line {buf_line}: unterminated value {buf!r}")
    return root
