"""The ``key = value`` config-file grammar.

UTF-8 text, one ``key = value`` pair per line, ``#`` starts a comment,
blank lines ignored.  Unknown keys are a hard error at the point of use.
"""

from __future__ import annotations


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict:
    """Parse config text into an ordered key -> raw-string mapping."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def reject_unknown_keys(pairs: dict, allowed, context: str) -> None:
    unknown = [k for k in pairs if k not in allowed]
    if unknown:
        raise ConfigError(
            f"unknown {context} key(s): {', '.join(sorted(unknown))}; "
            f"allowed: {', '.join(sorted(allowed))}"
        )


def get_int(pairs: dict, key: str, default: int) -> int:
    if key not in pairs:
        return default
    try:
        return int(pairs[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {pairs[key]!r}") from None


def get_float(pairs: dict, key: str, default: float) -> float:
    if key not in pairs:
        return default
    try:
        return float(pairs[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {pairs[key]!r}") from None


def get_int_tuple(pairs: dict, key: str, default: tuple) -> tuple:
    if key not in pairs:
        return default
    try:
        return tuple(int(v) for v in pairs[key].split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated ints, got {pairs[key]!r}") from None
