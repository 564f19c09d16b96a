"""Per-session object registry: u64 ids to live runtime objects.

Server-issued ids are even (2, 4, 6, ...) so they can never collide
with client-assigned callback ids, which are odd. Id 0 is reserved.
Ids are never reused within a session; RELEASE decrements a refcount
and the entry disappears at zero. Releasing an id that is already gone
is a no-op, because release frames may race a restart.
"""

from __future__ import annotations

from typing import Dict, Tuple

from .errors import EvalError


class ObjectRegistry:
    def __init__(self):
        self._entries: Dict[int, Tuple[object, int]] = {}
        self._counter = 0

    def put(self, obj) -> int:
        self._counter += 1
        ref_id = 2 * self._counter
        self._entries[ref_id] = (obj, 1)
        return ref_id

    def get(self, ref_id: int):
        try:
            return self._entries[ref_id][0]
        except KeyError:
            raise EvalError("unknown reference id %d" % ref_id) from None

    def contains(self, ref_id: int) -> bool:
        return ref_id in self._entries

    def retain(self, ref_id: int) -> None:
        obj, count = self._entries[ref_id]
        self._entries[ref_id] = (obj, count + 1)

    def release(self, ref_id: int) -> None:
        entry = self._entries.get(ref_id)
        if entry is None:
            return
        obj, count = entry
        if count <= 1:
            del self._entries[ref_id]
        else:
            self._entries[ref_id] = (obj, count - 1)

    def size(self) -> int:
        return len(self._entries)

    def clear(self) -> None:
        self._entries.clear()
