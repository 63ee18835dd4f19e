"""Human-unit parsing and formatting.

Decimal prefixes throughout (1 MB = 10**6 bytes, 1 Gbps = 10**9 bit/s), which
is the convention that reproduces the published BDP values. Binary prefixes
(KiB, MiB, ...) are accepted for sizes.
"""

from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation

from .core import ValidationError


class UnitError(ValidationError):
    pass


SIZE_UNITS = {
    "B": Decimal(1),
    "KB": Decimal(10) ** 3,
    "MB": Decimal(10) ** 6,
    "GB": Decimal(10) ** 9,
    "TB": Decimal(10) ** 12,
    "KIB": Decimal(2) ** 10,
    "MIB": Decimal(2) ** 20,
    "GIB": Decimal(2) ** 30,
    "TIB": Decimal(2) ** 40,
}

# bytes/second per unit
RATE_UNITS = {
    "BPS": Decimal(1) / 8,
    "KBPS": Decimal(10) ** 3 / 8,
    "MBPS": Decimal(10) ** 6 / 8,
    "GBPS": Decimal(10) ** 9 / 8,
    "TBPS": Decimal(10) ** 12 / 8,
    "B/S": Decimal(1),
    "KB/S": Decimal(10) ** 3,
    "MB/S": Decimal(10) ** 6,
    "GB/S": Decimal(10) ** 9,
    "TB/S": Decimal(10) ** 12,
}

TIME_UNITS = {
    "S": Decimal(1),
    "MS": Decimal(10) ** -3,
    "US": Decimal(10) ** -6,
    "NS": Decimal(10) ** -9,
    "MIN": Decimal(60),
}

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z/]*)\s*$")


def _split(text: str, kind: str) -> tuple[Decimal, str]:
    m = _QUANTITY.match(text)
    if not m:
        raise UnitError(f"cannot parse {kind} {text!r}")
    try:
        value = Decimal(m.group(1))
    except InvalidOperation:  # pragma: no cover - regex already filters
        raise UnitError(f"cannot parse {kind} {text!r}") from None
    return value, m.group(2)


def _lookup(unit: str, table: dict, default: str, kind: str, text: str) -> Decimal:
    key = unit.upper() if unit else default
    if key not in table:
        raise UnitError(f"unknown {kind} unit {unit!r} in {text!r}")
    return table[key]


def parse_size(text: "str | int | float") -> int:
    """Parse a byte count such as ``"32MB"`` or ``4096``."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        if text != int(text):
            raise UnitError(f"size must be a whole number of bytes, got {text!r}")
        return int(text)
    value, unit = _split(str(text), "size")
    result = value * _lookup(unit, SIZE_UNITS, "B", "size", str(text))
    if result != result.to_integral_value():
        raise UnitError(f"{text!r} is not a whole number of bytes")
    return int(result)


def parse_rate(text: "str | int | float") -> float:
    """Parse a rate to bytes/second. Bare numbers are bytes/second."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    value, unit = _split(str(text), "rate")
    return float(value * _lookup(unit, RATE_UNITS, "B/S", "rate", str(text)))


def parse_time(text: "str | int | float") -> float:
    """Parse a duration to seconds. Bare numbers are seconds."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    value, unit = _split(str(text), "time")
    return float(value * _lookup(unit, TIME_UNITS, "S", "time", str(text)))


def _format(x, table: dict, order: list[str], names: dict, parse) -> str:
    for unit in order:
        factor = table[unit]
        scaled = Decimal(repr(float(x))) / factor if isinstance(x, float) else Decimal(x) / factor
        if abs(scaled) < 1 and unit != order[-1]:
            continue
        text = f"{_trim(scaled)}{names[unit]}"
        if parse(text) == x:
            return text
    return f"{_trim(Decimal(repr(x)) / table[order[-1]])}{names[order[-1]]}"


def _trim(d: Decimal) -> str:
    text = format(d.normalize(), "f")
    return text


def format_size(n: int) -> str:
    order = ["TB", "GB", "MB", "KB", "B"]
    names = {u: u for u in order}
    return _format(int(n), SIZE_UNITS, order, names, parse_size)


def format_rate(r: float) -> str:
    order = ["TBPS", "GBPS", "MBPS", "KBPS", "B/S"]
    names = {"TBPS": "Tbps", "GBPS": "Gbps", "MBPS": "Mbps", "KBPS": "Kbps", "B/S": "B/s"}
    return _format(float(r), RATE_UNITS, order, names, parse_rate)


def format_time(t: float) -> str:
    order = ["S", "MS", "US"]
    names = {"S": "s", "MS": "ms", "US": "us"}
    return _format(float(t), TIME_UNITS, order, names, parse_time)
