import os


def max_threads():
    """Thread cap taken from ``RENEWALKIT_THREADS`` (default: CPU count)."""
    raw = os.environ.get("RENEWALKIT_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)
