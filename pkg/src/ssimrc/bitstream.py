"""Bit-level I/O with Exp-Golomb codes."""

from __future__ import annotations

import numpy as np


class BitWriter:
    def __init__(self):
        self._bits: list[int] = []

    def __len__(self) -> int:
        return len(self._bits)

    def write(self, value: int, nbits: int) -> None:
        for i in range(nbits - 1, -1, -1):
            self._bits.append((value >> i) & 1)

    def ue(self, v: int) -> None:
        if v < 0:
            raise ValueError("ue() codes non-negative integers")
        n = (v + 1).bit_length()
        self.write(0, n - 1)
        self.write(v + 1, n)

    def se(self, v: int) -> None:
        self.ue(se_index(v))

    def level(self, v: int) -> None:
        """Non-zero signed level: magnitude-1 interleaved with the sign."""
        if v == 0:
            raise ValueError("level() codes non-zero values only")
        self.ue(2 * (abs(v) - 1) + (v < 0))

    def align(self) -> None:
        while len(self._bits) % 8:
            self._bits.append(0)

    def extend(self, other: "BitWriter") -> None:
        self._bits.extend(other._bits)

    def getvalue(self) -> bytes:
        bits = self._bits + [0] * (-len(self._bits) % 8)
        return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


class BitReader:
    def __init__(self, data: bytes, offset_bits: int = 0):
        self._bits = np.unpackbits(np.frombuffer(data, np.uint8))
        self.pos = offset_bits

    def read(self, nbits: int) -> int:
        if self.pos + nbits > len(self._bits):
            raise EOFError("read past end of bitstream")
        v = 0
        for b in self._bits[self.pos:self.pos + nbits]:
            v = (v << 1) | int(b)
        self.pos += nbits
        return v

    def ue(self) -> int:
        zeros = 0
        while self.read(1) == 0:
            zeros += 1
        return (1 << zeros) - 1 + self.read(zeros)

    def se(self) -> int:
        k = self.ue()
        return (k + 1) // 2 if k % 2 else -(k // 2)

    def level(self) -> int:
        k = self.ue()
        mag = k // 2 + 1
        return -mag if k % 2 else mag

    def align(self) -> None:
        self.pos += -self.pos % 8


def se_index(v: int) -> int:
    return 2 * v - 1 if v > 0 else -2 * v


def ue_lengths(v: np.ndarray) -> np.ndarray:
    """Vectorised Exp-Golomb code lengths for non-negative integers."""
    _, e = np.frexp(np.asarray(v, dtype=np.float64) + 1.0)
    return 2 * (e.astype(np.int64) - 1) + 1
