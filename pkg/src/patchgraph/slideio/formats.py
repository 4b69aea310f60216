"""Number formatting shared by every CSV artifact."""


def format_float(x) -> str:
    """Shortest decimal that parses back to the same float64."""
    return repr(float(x))


def format_mag(mag) -> str:
    mag = float(mag)
    return str(int(mag)) if mag.is_integer() else repr(mag)
