"""Process-level tuning for long diagonalisation runs."""

import ctypes
import ctypes.util
import sys

_M_TRIM_THRESHOLD = -1
_M_MMAP_MAX = -4


def keep_heap_pages() -> bool:
    """Stop glibc from handing large freed blocks back to the kernel.

    Dense eigensolves allocate and free several hundred MB per call; on
    some virtual machines re-faulting those pages costs more than the
    LAPACK work itself.  No-op off glibc.
    """
    if not sys.platform.startswith("linux"):
        return False
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        ok = libc.mallopt(_M_MMAP_MAX, 0) and libc.mallopt(_M_TRIM_THRESHOLD, 2**31 - 1)
        return bool(ok)
    except (OSError, AttributeError):
        return False
