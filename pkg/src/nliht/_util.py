import numpy as np

from .errors import InvalidInput


def as_signal(x, name="x", length=None):
    """Return ``x`` as a finite 1-D float64 array, raising InvalidInput otherwise."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInput(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    if length is not None and arr.size != length:
        raise InvalidInput(f"{name} has length {arr.size}, expected {length}")
    return arr


def format_value(value):
    if isinstance(value, bool) or value is None:
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    if isinstance(value, (tuple, list)):
        return ";".join(format_value(v) for v in value)
    return str(value)


def key_value_lines(record):
    """Render a mapping as ``key=value`` lines in insertion order."""
    return "\n".join(f"{key}={format_value(value)}" for key, value in record.items()) + "\n"
