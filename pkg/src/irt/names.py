"""Fresh-name supply.

All binders are alpha-freshened once, at parse/elaboration time, so the
downstream passes never have to worry about capture.  Fresh names keep the
user-visible stem and append ``!<n>``; ``!`` survives both the textual EHC
format and SMT-LIB simple symbols.
"""

from __future__ import annotations

import itertools
import threading


def stem(name: str) -> str:
    """The user-visible part of a possibly-freshened name."""
    return name.split("!", 1)[0]


class NameSupply:
    """Monotone counter handing out names unique within one run.

    The counter is atomic so that definitions constrained in parallel still
    draw distinct names.
    """

    def __init__(self, start: int = 0):
        self._counter = itertools.count(start)
        self._lock = threading.Lock()

    def fresh(self, base: str = "x") -> str:
        with self._lock:
            n = next(self._counter)
        return f"{stem(base)}!{n}"
