"""Deterministic random streams for reproducible runs.

Every random choice in the simulator draws from a stream keyed by
``(seed, session, step, purpose)``. Streams with the same key yield the
same sequence on every platform, and distinct keys are statistically
independent, so adding a new consumer of randomness never shifts the
draws seen by existing ones. The generator is SplitMix64; strings fold
into the key via FNV-1a.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 encoding of *text*."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK
    return h


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _mix(*parts: int) -> int:
    state = 0
    for part in parts:
        state ^= part & _MASK
        _, state = _splitmix64(state)
    return state


class RngStream:
    """A SplitMix64 sequence for one ``(seed, session, step, purpose)`` key."""

    def __init__(self, seed: int, session: str, step: int, purpose: str):
        self._state = _mix(seed, fnv1a(session), step, fnv1a(purpose))

    def next_u64(self) -> int:
        self._state, value = _splitmix64(self._state)
        return value

    def next_float(self) -> float:
        """Uniform in [0, 1): top 53 bits scaled by 2**-53."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def next_int(self, bound: int) -> int:
        """Uniform in [0, bound). ``bound`` must be positive."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound

    def next_range(self, low: float, high: float) -> float:
        return low + (high - low) * self.next_float()

    def next_bool(self, p: float) -> bool:
        """True with probability ``p``."""
        return self.next_float() < p

    def choice(self, items: list):
        if not items:
            raise ValueError("cannot choose from an empty list")
        return items[self.next_int(len(items))]


def derive(seed: int, session: str, step: int, purpose: str) -> RngStream:
    """Stream for one decision site. Same key, same draws — always."""
    return RngStream(seed, session, step, purpose)


def mix_key(*parts: int | str) -> int:
    """Fold mixed int/str parts into a 64-bit value (for derived seeds)."""
    folded = [fnv1a(p) if isinstance(p, str) else int(p) for p in parts]
    return _mix(*folded)
