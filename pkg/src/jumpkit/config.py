"""Plain key-value configuration files.

Format: one ``key = value`` assignment per line.  ``#`` starts a comment.
A value is a whitespace-separated list of tokens; ``,`` splits the list
into groups (used for per-leg vectors).  Numeric tokens are parsed as
floats, everything else is kept as a string::

    mass = 11.4
    leg_lengths = 0.072 0.211 0.2
    hip_offsets = 0.19 0.049 0, 0.19 -0.049 0
    kind = quadruped
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Malformed configuration input."""


def _parse_token(tok: str):
    try:
        return float(tok)
    except ValueError:
        return tok


def parse_kv_text(text: str, source: str = "<string>") -> dict:
    """Parse key-value config text into {key: list of groups of tokens}.

    Each group is a list of floats/strings.  Duplicate keys are an error.
    """
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        groups = []
        for part in val.split(","):
            toks = part.split()
            if toks:
                groups.append([_parse_token(t) for t in toks])
        if not groups:
            raise ConfigError(f"{source}:{lineno}: no value for key {key!r}")
        out[key] = groups
    return out


def parse_kv_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_text(fh.read(), source=str(path))


def scalar(cfg: dict, key: str, default=None):
    """Extract a single scalar value for `key`; error if shaped otherwise."""
    if key not in cfg:
        if default is not None:
            return default
        raise ConfigError(f"missing key {key!r}")
    groups = cfg[key]
    if len(groups) != 1 or len(groups[0]) != 1:
        raise ConfigError(f"key {key!r}: expected a single value")
    return groups[0][0]


def vector(cfg: dict, key: str, length: int | None = None):
    """Extract a flat list of floats for `key` (single group)."""
    if key not in cfg:
        raise ConfigError(f"missing key {key!r}")
    groups = cfg[key]
    if len(groups) != 1:
        raise ConfigError(f"key {key!r}: expected one group, got {len(groups)}")
    vals = groups[0]
    if length is not None and len(vals) != length:
        raise ConfigError(f"key {key!r}: expected {length} values, got {len(vals)}")
    if not all(isinstance(v, float) for v in vals):
        raise ConfigError(f"key {key!r}: expected numeric values")
    return vals


def groups(cfg: dict, key: str, group_length: int | None = None):
    """Extract a list of groups of floats for `key`."""
    if key not in cfg:
        raise ConfigError(f"missing key {key!r}")
    gs = cfg[key]
    for g in gs:
        if group_length is not None and len(g) != group_length:
            raise ConfigError(
                f"key {key!r}: expected groups of {group_length}, got {len(g)}"
            )
        if not all(isinstance(v, float) for v in g):
            raise ConfigError(f"key {key!r}: expected numeric values")
    return gs
