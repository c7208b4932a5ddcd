"""Key = value run configuration with strict unknown-key rejection.

INI-style sections mirror the module split; command-line flags override
file values; every run echoes the fully resolved configuration into its
output directory so reruns are exact.
"""

from __future__ import annotations

import configparser
from pathlib import Path

KNOWN_KEYS = {
    "model": {"sigma", "n"},
    "schedule": {"alpha", "table"},
    "simulate": {"horizon", "dt", "replicas", "record_every", "initial",
                 "noise", "seed", "x0", "y0", "mode"},
    "gibbs": {"sweeps", "burn", "thin"},
    "verify": {"degree", "pitch", "eps", "radius", "nlist", "box"},
    "check": {"t", "replicas", "source", "boxes", "a"},
    "rate": {"slope", "delta", "horizon", "nlist", "replicas", "dt"},
    "action": {"grid", "i0"},
    "resolvent": {"lam", "domain", "npts", "preset"},
    "output": {"format", "label", "out", "threads"},
}


class ConfigError(ValueError):
    pass


def load_config(path):
    """Parse a config file, rejecting unknown sections and keys."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    text = Path(path).read_text()
    parser.read_string(text, source=str(path))
    out = {}
    for section in parser.sections():
        if section not in KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        out[section] = {}
        for key, value in parser.items(section):
            if key not in KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            out[section][key] = value
    return out


def resolved(config, section, key, override=None, default=None, cast=str):
    """Override > config file > default, with casting."""
    if override is not None:
        return override
    raw = config.get(section, {}).get(key)
    if raw is None:
        return default
    if cast is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return cast(raw)


def echo_lines(sections):
    """Render a resolved configuration back to key = value text."""
    lines = []
    for section in sorted(sections):
        lines.append(f"[{section}]")
        for key in sorted(sections[section]):
            lines.append(f"{key} = {sections[section][key]}")
        lines.append("")
    return "\n".join(lines)


def parse_table(text):
    """Parse 'n1:b1, n2:b2, ...' into a schedule table."""
    table = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        n, b = part.split(":")
        table[int(n)] = float(b)
    if not table:
        raise ConfigError("empty schedule table")
    return table


def parse_nlist(text):
    """Parse comma- or space-separated integers, allowing 2**k and 1e6."""
    out = []
    for tok in text.replace(",", " ").split():
        if "**" in tok:
            base, exp = tok.split("**")
            out.append(int(base) ** int(exp))
        else:
            out.append(int(float(tok)))
    if not out:
        raise ConfigError("empty n-list")
    return out
