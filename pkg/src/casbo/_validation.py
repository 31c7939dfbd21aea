"""Input validation helpers shared across the package."""

import numbers

import numpy as np

__all__ = ["check_positive_int", "check_positive_scalar", "check_vector", "check_rng"]


def check_positive_int(value, name):
    """Validate a strictly positive integer and return it as ``int``."""
    if not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")
    return value


def check_positive_scalar(value, name):
    """Validate a strictly positive finite scalar and return it as ``float``."""
    if not isinstance(value, numbers.Real):
        raise ValueError(f"{name} must be a real scalar, got {value!r}")
    value = float(value)
    if not np.isfinite(value) or value <= 0.0:
        raise ValueError(f"{name} must be positive and finite, got {value}")
    return value


def check_vector(x, d=None, name="x"):
    """Coerce to a 1-D float array, optionally of fixed length ``d``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {x.shape}")
    if x.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if d is not None and x.shape[0] != d:
        raise ValueError(f"{name} must have length {d}, got {x.shape[0]}")
    return x


def check_rng(seed):
    """Return a counter-based random generator for ``seed``.

    Accepts an existing ``numpy.random.Generator`` (returned unchanged), an
    integer seed, or ``None`` for a fresh entropy-seeded stream.  Integer
    seeds use the Philox counter-based bit generator, so each seed yields an
    independent stream that is reproducible across platforms and safe to use
    from parallel runs.
    """
    if isinstance(seed, np.random.Generator) or hasattr(seed, "standard_normal"):
        return seed
    if seed is None:
        return np.random.Generator(np.random.Philox())
    if isinstance(seed, numbers.Integral):
        return np.random.Generator(np.random.Philox(int(seed)))
    raise ValueError(f"seed must be None, an int, or a Generator, got {seed!r}")
