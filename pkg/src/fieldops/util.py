"""Small shared helpers: sortable ids, timestamps, text normalization."""

from __future__ import annotations

import os
import re
import threading
import time

# Crockford base32, as used by ULID.
_B32 = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"

_ulid_lock = threading.Lock()
_ulid_last_ms = 0
_ulid_counter = 0


def new_ulid() -> str:
    """Return a 26-char ULID-style id: 48-bit ms timestamp + 80 random bits.

    Ids generated in the same process sort by creation time; ids minted in
    the same millisecond share it and sort by a bumped counter, so local
    order is always preserved.
    """
    global _ulid_last_ms, _ulid_counter
    with _ulid_lock:
        ms = int(time.time() * 1000)
        if ms <= _ulid_last_ms:
            ms = _ulid_last_ms
            _ulid_counter += 1
        else:
            _ulid_last_ms = ms
            _ulid_counter = 0
        value = (ms << 80) | (_ulid_counter << 64) | int.from_bytes(os.urandom(8), "big")
    chars = []
    for shift in range(125, -1, -5):
        chars.append(_B32[(value >> shift) & 0x1F])
    return "".join(chars)[:26]


def now_ms() -> int:
    """Wall-clock epoch milliseconds."""
    return int(time.time() * 1000)


def perf_ms() -> float:
    """Monotonic milliseconds, for durations only."""
    return time.perf_counter() * 1000.0


def one_line(text: str) -> str:
    """Collapse newlines and control whitespace to single spaces.

    Interpolated values (mission text, rule text, feedback) must not be able
    to fake a new prompt block, so anything that could start a fresh line is
    flattened before rendering.
    """
    return re.sub(r"[\r\n\t\v\f]+", " ", text)


_CAMEL_SPLIT = re.compile(r"(?<=[a-z])(?=[A-Z])")


def humanize_frame(frame: str) -> str:
    """FRAME_WestGate -> 'West Gate'; unknown shapes pass through unchanged."""
    name = frame[len("FRAME_"):] if frame.startswith("FRAME_") else frame
    return _CAMEL_SPLIT.sub(" ", name)
