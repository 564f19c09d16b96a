"""Codec timing: binary wire format against the text baseline, and the
compiled backend against the pure-Python one when both are present.

Times are medians over repeated runs of encode-plus-decode on a float
vector, reported in seconds.
"""

from __future__ import annotations

import random
import statistics
import time
from typing import Callable, Dict, Optional

from . import conformance
from . import values as V
from . import wire
from .stream import BufferReader
from .values import ElementType


def make_payload(size: int, seed: int = 2024) -> "V.TypedArray":
    rng = random.Random(seed)
    vals = [rng.uniform(-1e9, 1e9) for _ in range(size)]
    return V.TypedArray.from_elements(ElementType.F64, vals, dims=(size,))


def _time_once(fn: Callable[[], object]) -> float:
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def _median_time(fn: Callable[[], object], repeats: int) -> float:
    return statistics.median(_time_once(fn) for _ in range(repeats))


def bench_formats(size: int, repeats: int = 5, seed: int = 2024) -> Dict[str, float]:
    """Encode+decode timings for the binary codec and the text baseline.

    Returns ``binary``, ``text`` (seconds) and ``ratio`` (text/binary).
    """
    payload = make_payload(size, seed)

    def run_binary():
        wire.decode_value(wire.encode_value(payload))

    def run_text():
        conformance.text_decode(conformance.text_encode(payload))

    binary = _median_time(run_binary, repeats)
    text = _median_time(run_text, repeats)
    return {
        "size": float(size),
        "binary": binary,
        "text": text,
        "ratio": text / binary if binary > 0 else float("inf"),
    }


def make_small_values_payload(narrays: int = 2000, seed: int = 2024) -> "V.List":
    """Many tiny arrays: the shape where per-value dispatch dominates."""
    rng = random.Random(seed)
    items = []
    for _ in range(narrays):
        n = rng.randint(0, 4)
        items.append(
            V.TypedArray.from_elements(
                ElementType.F64, [rng.random() for _ in range(n)], dims=(n,)
            )
        )
    return V.List(tuple(items))


def bench_backends(size: int, repeats: int = 5, seed: int = 2024) -> Optional[Dict[str, float]]:
    """Pure-Python codec vs the compiled one; None when only one exists.

    Large arrays are a memcpy either way, so this measures the
    dispatch-bound case: a list of many small arrays.
    """
    from . import _pycodec

    try:
        from . import _wirecore
    except ImportError:
        return None
    payload = make_small_values_payload(max(100, min(size, 5000)), seed)

    def run(codec):
        def go():
            buf = bytearray()
            codec.encode_value_into(payload, buf)
            codec.decode_value(BufferReader(bytes(buf)))
        return go

    pure = _median_time(run(_pycodec), repeats)
    compiled = _median_time(run(_wirecore), repeats)
    return {
        "narrays": float(len(payload.items)),
        "pure": pure,
        "compiled": compiled,
        "speedup": pure / compiled if compiled > 0 else float("inf"),
    }


def format_report(size: int, repeats: int = 5, which: str = "both") -> str:
    lines = []
    if which in ("both", "binary", "json-baseline"):
        r = bench_formats(size, repeats)
        if which in ("both", "binary"):
            lines.append("binary codec:   %.6f s  (%d floats, encode+decode)" % (r["binary"], size))
        if which in ("both", "json-baseline"):
            lines.append("text baseline:  %.6f s  (%d floats, encode+decode)" % (r["text"], size))
        if which == "both":
            lines.append("ratio (text/binary): %.2fx" % r["ratio"])
    b = bench_backends(size, repeats)
    if b is not None:
        lines.append(
            "backends on %d small arrays: pure %.6f s, compiled %.6f s (speedup %.2fx)"
            % (int(b["narrays"]), b["pure"], b["compiled"], b["speedup"])
        )
    else:
        lines.append("backends: compiled core not built, pure Python only")
    return "\n".join(lines)
