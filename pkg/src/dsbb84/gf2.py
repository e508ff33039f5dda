"""Bit strings and linear algebra over GF(2).

A :class:`BitString` is an immutable sequence of bits with xor, slicing and
byte packing. :class:`Gf2Matrix` stores each row as a Python integer used as
a bitset (bit ``j`` of the row word is column ``j``), which makes row xor a
single integer operation and keeps matrix-vector products cheap for the
sizes this package needs (parity checks and hash matrices up to a few
thousand columns).
"""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence


def _pack_le(bits: Sequence[int]) -> int:
    word = 0
    for j, bit in enumerate(bits):
        if bit not in (0, 1):
            raise ValueError(f"bit values must be 0 or 1, got {bit!r}")
        if bit:
            word |= 1 << j
    return word


class BitString:
    """Immutable bit sequence, index 0 first, packed LSB-first into bytes."""

    __slots__ = ("_word", "_n")

    def __init__(self, bits: Iterable[int] = ()):
        bits = list(bits)
        self._n = len(bits)
        self._word = _pack_le(bits)

    @classmethod
    def from_int(cls, word: int, n: int) -> "BitString":
        if word < 0:
            raise ValueError("bit word must be non-negative")
        if word >> n:
            raise ValueError(f"word has bits beyond length {n}")
        out = cls.__new__(cls)
        out._word = word
        out._n = n
        return out

    @classmethod
    def zeros(cls, n: int) -> "BitString":
        return cls.from_int(0, n)

    @classmethod
    def from_bytes(cls, data: bytes, n: int) -> "BitString":
        if len(data) != (n + 7) // 8:
            raise ValueError(f"expected {(n + 7) // 8} bytes for {n} bits")
        word = int.from_bytes(data, "little")
        if word >> n:
            raise ValueError("padding bits beyond the stated length are set")
        return cls.from_int(word, n)

    def to_bytes(self) -> bytes:
        return self._word.to_bytes((self._n + 7) // 8, "little")

    @property
    def word(self) -> int:
        return self._word

    def __len__(self) -> int:
        return self._n

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            indices = range(*idx.indices(self._n))
            return BitString((self._word >> i) & 1 for i in indices)
        if idx < 0:
            idx += self._n
        if not 0 <= idx < self._n:
            raise IndexError("bit index out of range")
        return (self._word >> idx) & 1

    def __iter__(self) -> Iterator[int]:
        word = self._word
        for _ in range(self._n):
            yield word & 1
            word >>= 1

    def __xor__(self, other: "BitString") -> "BitString":
        if not isinstance(other, BitString):
            return NotImplemented
        if other._n != self._n:
            raise ValueError("xor requires equal lengths")
        return BitString.from_int(self._word ^ other._word, self._n)

    def __add__(self, other: "BitString") -> "BitString":
        """Concatenation: self occupies the low indices of the result."""
        if not isinstance(other, BitString):
            return NotImplemented
        return BitString.from_int(
            self._word | (other._word << self._n), self._n + other._n
        )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BitString)
            and self._n == other._n
            and self._word == other._word
        )

    def __hash__(self) -> int:
        return hash((self._n, self._word))

    def __repr__(self) -> str:
        shown = "".join(str(b) for b in self) if self._n <= 64 else "..."
        return f"BitString({self._n} bits: {shown})"

    def weight(self) -> int:
        return self._word.bit_count()

    def tolist(self) -> list:
        return list(self)


class Gf2Matrix:
    """Dense GF(2) matrix with integer-bitset rows."""

    __slots__ = ("rows", "n_cols")

    def __init__(self, rows: Sequence[int], n_cols: int):
        for word in rows:
            if word >> n_cols:
                raise ValueError("row word has bits beyond n_cols")
        self.rows = list(rows)
        self.n_cols = n_cols

    @classmethod
    def from_dense(cls, dense: Sequence[Sequence[int]]) -> "Gf2Matrix":
        n_cols = len(dense[0]) if dense else 0
        rows = []
        for row in dense:
            if len(row) != n_cols:
                raise ValueError("ragged rows")
            rows.append(_pack_le(row))
        return cls(rows, n_cols)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def entry(self, r: int, c: int) -> int:
        if not 0 <= c < self.n_cols:
            raise IndexError("column out of range")
        return (self.rows[r] >> c) & 1

    def mul_vec(self, x: BitString) -> BitString:
        """Matrix-vector product H x over GF(2)."""
        if len(x) != self.n_cols:
            raise ValueError(f"vector length {len(x)} != n_cols {self.n_cols}")
        word = 0
        xw = x.word
        for i, row in enumerate(self.rows):
            word |= ((row & xw).bit_count() & 1) << i
        return BitString.from_int(word, self.n_rows)

    def row_bits(self, r: int) -> BitString:
        return BitString.from_int(self.rows[r], self.n_cols)

    def rank(self) -> int:
        pivots = []
        for word in self.rows:
            for pw in pivots:
                low = pw & -pw
                if word & low:
                    word ^= pw
            if word:
                pivots.append(word)
        return len(pivots)

    def to_dense(self) -> list:
        return [[(row >> c) & 1 for c in range(self.n_cols)] for row in self.rows]


class Gf2Solver:
    """Reduced row-echelon cache for repeated solves against one matrix.

    Built once from H, after which :meth:`solve` returns some x with
    H x = y for any achievable y (free columns set to zero). Used to force
    a syndrome onto a candidate word after decoding.
    """

    def __init__(self, matrix: Gf2Matrix):
        self.n_cols = matrix.n_cols
        self.n_rows = matrix.n_rows
        # Each echelon entry is (row word, pivot column, combo word); the
        # combo records which original rows xor to this reduced row, so a
        # syndrome can be transformed by the same elimination. Combos of
        # rows that vanished entirely define the consistency conditions.
        self._entries: list = []
        self._null_combos: list = []
        for i, word in enumerate(matrix.rows):
            combo = 1 << i
            for pw, pc, pcombo in self._entries:
                if (word >> pc) & 1:
                    word ^= pw
                    combo ^= pcombo
            if word == 0:
                self._null_combos.append(combo)
                continue
            pc = (word & -word).bit_length() - 1
            for k, (ew, epc, ecombo) in enumerate(self._entries):
                if (ew >> pc) & 1:
                    self._entries[k] = (ew ^ word, epc, ecombo ^ combo)
            self._entries.append((word, pc, combo))

    @property
    def rank(self) -> int:
        return len(self._entries)

    def solve(self, y: BitString) -> BitString:
        """Return x with H x = y, raising ValueError when inconsistent."""
        if len(y) != self.n_rows:
            raise ValueError("syndrome length mismatch")
        yw = y.word
        for combo in self._null_combos:
            if (combo & yw).bit_count() & 1:
                raise ValueError("syndrome outside the row space")
        xw = 0
        for _, pc, combo in self._entries:
            if (combo & yw).bit_count() & 1:
                xw |= 1 << pc
        return BitString.from_int(xw, self.n_cols)
