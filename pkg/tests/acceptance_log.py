"""Collects one verdict line per acceptance criterion for the terminal summary."""

import time
from contextlib import contextmanager

RESULTS = {}


@contextmanager
def criterion(number, title):
    """Record PASS or FAIL for ``number``; the block may yield a detail string via ``note``."""
    notes = []
    start = time.perf_counter()
    try:
        yield notes.append
    except BaseException:
        RESULTS[number] = ("FAIL", title, notes, time.perf_counter() - start)
        print(format_line(number), flush=True)
        raise
    RESULTS[number] = ("PASS", title, notes, time.perf_counter() - start)
    print(format_line(number), flush=True)


def format_line(number):
    verdict, title, notes, seconds = RESULTS[number]
    detail = f" ({'; '.join(notes)})" if notes else ""
    return f"criterion {number:>2} {verdict}: {title} [{seconds:.1f}s]{detail}"
