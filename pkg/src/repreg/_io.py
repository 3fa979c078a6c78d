"""Text output to a path or an already-open file object."""

from __future__ import annotations

import contextlib


@contextlib.contextmanager
def text_sink(target):
    if hasattr(target, "write"):
        yield target
    else:
        with open(target, "w", newline="", encoding="utf-8") as fh:
            yield fh
