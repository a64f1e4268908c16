from __future__ import annotations

SIG_DIGITS = 9
UNDEF = "undef"


def fmt(x: float | int | None) -> str:
    """Render a number with up to 9 significant digits; ``None`` becomes ``undef``."""
    if x is None:
        return UNDEF
    out = format(float(x), f".{SIG_DIGITS}g")
    return "0" if out == "-0" else out


def fmt_timestamp(t: float) -> str:
    # Epoch timestamps need ~10 integer digits, so 9 significant digits would
    # collapse distinct samples; render at microsecond resolution instead.
    out = f"{float(t):.6f}".rstrip("0").rstrip(".")
    return "0" if out in ("-0", "") else out
