"""Two-universal hashing for verification and privacy amplification.

The family is the modified Toeplitz construction ``H = [T | I]``: an
``m x (n - m)`` Toeplitz matrix ``T`` drawn from ``n - 1`` seed bits glued
to the ``m x m`` identity. Every member is surjective, and for distinct
inputs the collision probability over the seed draw is at most ``2^-m``,
which is what the correctness and secrecy accounting rely on.

Seeds are 64-bit integers expanded into diagonal bits with SHA-256 in
counter mode. The expansion is a pseudorandom convenience for driving the
family from a compact announced seed; the security statements treat the
diagonal bits as the actual hash choice.
"""

from __future__ import annotations

import hashlib

from .gf2 import BitString, Gf2Matrix

VERIFY_LABEL = b"verify"
PA_LABEL = b"pa"


def expand_seed(seed: int, label: bytes, n_bits: int) -> BitString:
    """Expand a 64-bit seed into ``n_bits`` pseudorandom bits."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in 64 bits")
    if n_bits < 0:
        raise ValueError("n_bits must be non-negative")
    prefix = bytes(label) + b"\x00" + seed.to_bytes(8, "little")
    chunks = []
    counter = 0
    produced = 0
    while produced < n_bits:
        chunks.append(
            hashlib.sha256(prefix + counter.to_bytes(4, "little")).digest()
        )
        produced += 256
        counter += 1
    word = int.from_bytes(b"".join(chunks), "little") & ((1 << n_bits) - 1)
    return BitString.from_int(word, n_bits)


def _reverse_bits(word: int, n_bits: int) -> int:
    if n_bits == 0:
        return 0
    return int(format(word, f"0{n_bits}b")[::-1], 2)


class ModifiedToeplitz:
    """Hash ``y = T x_left + x_right`` over GF(2).

    ``x_left`` is the first ``n_in - n_out`` input bits, ``x_right`` the
    remaining ``n_out``. ``T[r][c]`` is diagonal bit ``r - c + (w - 1)``
    with ``w = n_in - n_out``, so the diagonals are constant.
    """

    def __init__(self, diagonals: BitString, n_in: int, n_out: int):
        if not 0 <= n_out <= n_in:
            raise ValueError("need 0 <= n_out <= n_in")
        if len(diagonals) != max(n_in - 1, 0):
            raise ValueError(
                f"need {max(n_in - 1, 0)} diagonal bits, got {len(diagonals)}"
            )
        self.n_in = n_in
        self.n_out = n_out
        self.width = n_in - n_out
        # Row r of T in ascending column order is the reversed window
        # d[r + w - 1] .. d[r]; with the diagonal word bit-reversed that
        # window becomes a plain shift-and-mask per row.
        self._rev = _reverse_bits(diagonals.word, len(diagonals))

    def apply(self, x: BitString) -> BitString:
        if len(x) != self.n_in:
            raise ValueError(f"expected {self.n_in} input bits, got {len(x)}")
        w = self.width
        mask = (1 << w) - 1
        left = x.word & mask
        right = x.word >> w
        out = 0
        for r in range(self.n_out):
            row = (self._rev >> (self.n_out - 1 - r)) & mask
            out |= (((row & left).bit_count() & 1) ^ ((right >> r) & 1)) << r
        return BitString.from_int(out, self.n_out)

    def matrix(self) -> Gf2Matrix:
        """Materialize ``[T | I]``; intended for small sizes in tests."""
        w = self.width
        mask = (1 << w) - 1
        rows = []
        for r in range(self.n_out):
            row = (self._rev >> (self.n_out - 1 - r)) & mask
            rows.append(row | (1 << (w + r)))
        return Gf2Matrix(rows, self.n_in)


def hash_bits(x: BitString, seed: int, n_out: int, label: bytes) -> BitString:
    d = expand_seed(seed, label, max(len(x) - 1, 0))
    return ModifiedToeplitz(d, len(x), n_out).apply(x)


def verify_hash(x: BitString, seed: int, n_out: int) -> BitString:
    """Correctness-check digest exchanged after error correction."""
    return hash_bits(x, seed, n_out, VERIFY_LABEL)


def pa_hash(x: BitString, seed: int, n_out: int) -> BitString:
    """Final key extraction by privacy amplification."""
    return hash_bits(x, seed, n_out, PA_LABEL)
