"""Small helpers for hypothesis sets stored as integer bitmasks."""

from typing import Iterable, Iterator


def popcount(mask: int) -> int:
    return mask.bit_count()


def bits(mask: int) -> Iterator[int]:
    """Yield the set bit positions of ``mask`` in increasing order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def to_mask(members: Iterable[int] | int) -> int:
    if isinstance(members, int):
        return members
    mask = 0
    for m in members:
        if m < 0:
            raise ValueError(f"negative hypothesis id {m}")
        mask |= 1 << m
    return mask


def full(n: int) -> int:
    return (1 << n) - 1


def subsets(mask: int) -> Iterator[int]:
    """Every submask of ``mask``, including 0 and ``mask`` itself."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask
