"""Calendar month stamps.

Months are carried around as flat integer indexes (``year * 12 + month - 1``)
so that "one month later" is ``+ 1`` and gaps are plain integer differences.
The textual form everywhere (CSV, CLI) is ``YYYY-MM``.
"""

import re

_MONTH_RE = re.compile(r"^(\d{4})-(\d{2})$")


def parse_month(text: str) -> int:
    """Parse ``YYYY-MM`` into a flat month index."""
    m = _MONTH_RE.match(text.strip())
    if not m:
        raise ValueError(f"bad month stamp {text!r}: expected YYYY-MM")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise ValueError(f"bad month stamp {text!r}: month must be 01..12")
    return year * 12 + month - 1


def format_month(index: int) -> str:
    """Inverse of :func:`parse_month`."""
    if index < 0:
        raise ValueError(f"negative month index {index}")
    return f"{index // 12:04d}-{index % 12 + 1:02d}"
