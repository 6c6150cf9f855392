import os

THREADS_ENV = "FBMAVG_THREADS"


def n_threads():
    """Worker count from ``FBMAVG_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, value)
