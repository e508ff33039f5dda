"""Post-processing state machines for both parties.

The quantum phase produces per-round data for each side; everything after
that is classical messages over an authenticated channel. Bob opens each
block by disclosing which rounds clicked, his basis bits and his X-basis
outcomes; Alice replies with intensity and basis per clicked round plus
her bit for matched X rounds. After the last block Alice judges the final
length from the announced counts, and on proceed runs syndrome disclosure,
verification hashing and privacy amplification.

Both sides recompute the security accounting from the same pre-agreed
expected observables, so a disagreement on any announced quantity is a
protocol error rather than a silent divergence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bounds import (
    ExpectedObservables,
    Observables,
    SecurityResult,
    expected_observables,
    security_result,
)
from .channel import ChannelModel, generator, sample_block
from .ecc import LdpcCode, correct, syndrome_length
from .gf2 import BitString
from .hashing import pa_hash, verify_hash
from .params import ProtocolConstants
from .wire import (
    AliceBlockDisclosure,
    BobBlockDisclosure,
    End,
    PaSeed,
    SiftAnnounce,
    Syndrome,
    VerifyHash,
    VerifyResult,
    encode_message,
    decode_message,
)


class ProtocolError(RuntimeError):
    """Out-of-order, malformed or inconsistent message."""


def _bits_from_mask(mask: np.ndarray) -> BitString:
    packed = np.packbits(mask.astype(np.uint8), bitorder="little").tobytes()
    return BitString.from_int(int.from_bytes(packed, "little"), int(mask.shape[0]))


def _mask_from_bits(bits: BitString) -> np.ndarray:
    raw = np.frombuffer(bits.to_bytes(), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little", count=len(bits)).astype(bool)


def sift_masks(
    alpha: np.ndarray, beta: np.ndarray, clicked: np.ndarray
) -> tuple:
    """Boolean masks of matched-Z and matched-X clicked rounds."""
    matched = clicked & (alpha == beta)
    return matched & (alpha == 0), matched & (alpha == 1)


@dataclass
class AliceBlockData:
    omega_idx: np.ndarray
    alpha: np.ndarray
    a: np.ndarray


@dataclass
class BobBlockData:
    beta: np.ndarray
    clicked: np.ndarray
    b: np.ndarray


def alice_view(sample) -> AliceBlockData:
    return AliceBlockData(sample.omega_idx, sample.alpha, sample.a)


def bob_view(sample) -> BobBlockData:
    return BobBlockData(sample.beta, sample.clicked, sample.b)


@dataclass
class KeyMaterial:
    """What one party walks away with."""

    role: str
    aborted: bool
    abort_reason: Optional[str]
    key: Optional[BitString]
    n_fin: int
    n_sift: int
    observables: Optional[Observables]
    security: Optional[SecurityResult]
    ec_converged: Optional[bool] = None
    ec_iterations: Optional[int] = None


class _CountAccumulator:
    """Shared tally of sift and error counts while blocks stream in."""

    def __init__(self) -> None:
        self.sift = [0, 0, 0]
        self.err = [0, 0, 0]
        self.key_bits: list = []

    def add_block(self, omega_idx, alpha, a, beta, clicked, bob_bits) -> None:
        z_mask, _ = sift_masks(alpha, beta, clicked)
        for w in range(3):
            self.sift[w] += int(np.sum(z_mask & (omega_idx == w)))
        source = a if bob_bits is None else bob_bits
        self.key_bits.extend(source[z_mask].tolist())

    def add_errors(self, omega_idx, errors) -> None:
        for w in range(3):
            self.err[w] += int(np.sum(errors & (omega_idx == w)))

    def observables(self) -> Observables:
        return Observables(
            n_sift_s=self.sift[0],
            n_sift_d=self.sift[1],
            n_sift_v=self.sift[2],
            n_err_dx=self.err[1],
            n_err_vx=self.err[2],
        )

    def sifted_key(self) -> BitString:
        return BitString(self.key_bits)


class AliceMachine:
    """Reference side: judges length, owns the seeds, extracts first."""

    def __init__(
        self,
        constants: ProtocolConstants,
        blocks: Sequence[AliceBlockData],
        expected: ExpectedObservables,
        rng: np.random.Generator,
    ):
        if len(blocks) != constants.n_block:
            raise ValueError("block count mismatch")
        self.constants = constants
        self.blocks = list(blocks)
        self.expected = expected
        self._rng = rng
        self._acc = _CountAccumulator()
        self._next_block = 0
        self._state = "blocks"
        self.outbox: list = []
        self.result: Optional[KeyMaterial] = None
        self.security: Optional[SecurityResult] = None
        self._sifted: Optional[BitString] = None
        self._pa_seed: Optional[int] = None
        self._n_fin = 0

    @property
    def done(self) -> bool:
        return self._state == "done"

    def _draw_seed(self) -> int:
        return int(self._rng.integers(0, 2**64, dtype=np.uint64))

    def handle(self, msg) -> None:
        if self._state == "blocks" and isinstance(msg, BobBlockDisclosure):
            self._handle_block(msg)
        elif self._state == "verify" and isinstance(msg, VerifyResult):
            self._handle_verify(msg)
        else:
            raise ProtocolError(
                f"alice in state {self._state} cannot accept {type(msg).__name__}"
            )

    def _handle_block(self, msg: BobBlockDisclosure) -> None:
        if msg.j != self._next_block:
            raise ProtocolError(f"expected block {self._next_block}, got {msg.j}")
        data = self.blocks[msg.j]
        m = len(data.alpha)
        if len(msg.clicked) != m:
            raise ProtocolError("block disclosure has wrong round count")
        clicked = _mask_from_bits(msg.clicked)
        beta = _mask_from_bits(msg.basis).astype(np.int64)
        self._acc.add_block(data.omega_idx, data.alpha, data.a, beta, clicked, None)

        offs = np.flatnonzero(clicked)
        disclose = (data.alpha[offs] == 1) & (beta[offs] == 1)
        records = [
            (
                int(off),
                int(data.omega_idx[off]),
                int(data.alpha[off]),
                int(data.a[off]) if flag else None,
            )
            for off, flag in zip(offs.tolist(), disclose.tolist())
        ]
        self.outbox.append(AliceBlockDisclosure(msg.j, tuple(records)))

        bx_off = np.flatnonzero(clicked & (beta == 1))
        bx = _mask_from_bits(msg.x_outcomes)
        sel = data.alpha[bx_off] == 1
        errors = bx[sel] ^ (data.a[bx_off][sel] == 1)
        self._acc.add_errors(data.omega_idx[bx_off[sel]], errors)

        self._next_block += 1
        if self._next_block == self.constants.n_block:
            self._judge_and_commit()

    def _judge_and_commit(self) -> None:
        obs = self._acc.observables()
        self._sifted = self._acc.sifted_key()
        n_ec = syndrome_length(obs.n_sift, self.constants.e_bit_assumed)
        self.security = security_result(self.constants, obs, self.expected, n_ec)
        if self.security.abort:
            self.outbox.append(SiftAnnounce(obs.n_sift, proceed=False))
            self.outbox.append(End())
            self._finish(aborted=True, reason="insufficient extractable length")
            return
        self._n_fin = self.security.n_fin
        self.outbox.append(SiftAnnounce(obs.n_sift, proceed=True))
        code_seed = self._draw_seed()
        if n_ec == 0:
            # Zero assumed error rate discloses nothing; verification
            # still guards actual mismatches.
            self.outbox.append(Syndrome(BitString.zeros(0), code_seed))
        else:
            code = LdpcCode(obs.n_sift, n_ec, code_seed)
            self.outbox.append(Syndrome(code.syndrome(self._sifted), code_seed))
        verify_seed = self._draw_seed()
        digest = verify_hash(self._sifted, verify_seed, self.constants.n_verify)
        self.outbox.append(VerifyHash(verify_seed, digest))
        self._state = "verify"

    def _handle_verify(self, msg: VerifyResult) -> None:
        if not msg.ok:
            self.outbox.append(End())
            self._finish(aborted=True, reason="verification mismatch")
            return
        self._pa_seed = self._draw_seed()
        self.outbox.append(PaSeed(self._pa_seed, self._n_fin))
        self.outbox.append(End())
        key = pa_hash(self._sifted, self._pa_seed, self._n_fin)
        self._finish(aborted=False, reason=None, key=key)

    def _finish(self, aborted: bool, reason, key: Optional[BitString] = None) -> None:
        obs = self._acc.observables()
        self.result = KeyMaterial(
            role="alice",
            aborted=aborted,
            abort_reason=reason,
            key=key,
            n_fin=0 if aborted else self._n_fin,
            n_sift=obs.n_sift,
            observables=obs,
            security=self.security,
        )
        self._state = "done"


class BobMachine:
    """Measuring side: opens blocks, corrects, checks, extracts second."""

    def __init__(
        self,
        constants: ProtocolConstants,
        blocks: Sequence[BobBlockData],
        expected: ExpectedObservables,
    ):
        if len(blocks) != constants.n_block:
            raise ValueError("block count mismatch")
        self.constants = constants
        self.blocks = list(blocks)
        self.expected = expected
        self._acc = _CountAccumulator()
        self._next_block = 0
        self._state = "blocks"
        self.outbox: list = []
        self.result: Optional[KeyMaterial] = None
        self.security: Optional[SecurityResult] = None
        self._sifted: Optional[BitString] = None
        self._corrected: Optional[BitString] = None
        self._announced_sift = 0
        self._n_ec = 0
        self._ec_converged: Optional[bool] = None
        self._ec_iterations: Optional[int] = None
        self._emit_disclosure(0)

    @property
    def done(self) -> bool:
        return self._state == "done"

    def _emit_disclosure(self, j: int) -> None:
        data = self.blocks[j]
        clicked = data.clicked.astype(bool)
        x_mask = clicked & (data.beta == 1)
        self.outbox.append(
            BobBlockDisclosure(
                j,
                _bits_from_mask(clicked),
                _bits_from_mask(data.beta == 1),
                _bits_from_mask(data.b[x_mask] == 1),
            )
        )

    def handle(self, msg) -> None:
        handlers = {
            "blocks": (AliceBlockDisclosure, self._handle_block_reply),
            "sift": (SiftAnnounce, self._handle_sift),
            "syndrome": (Syndrome, self._handle_syndrome),
            "verify": (VerifyHash, self._handle_verify),
            "pa": (PaSeed, self._handle_pa),
            "end": (End, self._handle_end),
        }
        if self._state not in handlers:
            raise ProtocolError(f"bob is done, cannot accept {type(msg).__name__}")
        expected_type, handler = handlers[self._state]
        if not isinstance(msg, expected_type):
            # After an abort announcement or a failed verification the
            # next frame is End rather than the nominal successor.
            if isinstance(msg, End) and self._state in ("sift", "pa", "syndrome"):
                self._handle_end(msg)
                return
            raise ProtocolError(
                f"bob in state {self._state} cannot accept {type(msg).__name__}"
            )
        handler(msg)

    def _handle_block_reply(self, msg: AliceBlockDisclosure) -> None:
        if msg.j != self._next_block:
            raise ProtocolError(f"expected reply for block {self._next_block}")
        data = self.blocks[msg.j]
        clicked = data.clicked.astype(bool)
        offs = np.flatnonzero(clicked)
        if len(msg.records) != len(offs):
            raise ProtocolError("reply must cover exactly the clicked rounds")
        rec_off = np.array([r[0] for r in msg.records], dtype=np.int64).reshape(-1)
        if rec_off.shape != offs.shape or not np.array_equal(rec_off, offs):
            raise ProtocolError("reply offsets do not match clicked rounds")
        omega_idx = np.array([r[1] for r in msg.records], dtype=np.int64)
        alpha_c = np.array([r[2] for r in msg.records], dtype=np.int64)

        full_omega = np.zeros(len(data.beta), dtype=np.int64)
        full_alpha = np.full(len(data.beta), -1, dtype=np.int64)
        full_omega[offs] = omega_idx
        full_alpha[offs] = alpha_c
        self._acc.add_block(
            full_omega, full_alpha, None, data.beta, clicked, data.b
        )

        xx = (alpha_c == 1) & (data.beta[offs] == 1)
        for (off, _, _, a_bit), is_xx in zip(msg.records, xx.tolist()):
            if is_xx and a_bit is None:
                raise ProtocolError("matched X round must disclose the bit")
            if not is_xx and a_bit is not None:
                raise ProtocolError("only matched X rounds may disclose the bit")
        a_xx = np.array(
            [r[3] for r, is_xx in zip(msg.records, xx.tolist()) if is_xx],
            dtype=np.int64,
        )
        errors = (data.b[offs[xx]] == 1) ^ (a_xx == 1)
        self._acc.add_errors(omega_idx[xx], errors)

        self._next_block += 1
        if self._next_block < self.constants.n_block:
            self._emit_disclosure(self._next_block)
        else:
            self._state = "sift"

    def _handle_sift(self, msg: SiftAnnounce) -> None:
        obs = self._acc.observables()
        if msg.n_sift != obs.n_sift:
            raise ProtocolError("announced sift count disagrees with own tally")
        self._sifted = self._acc.sifted_key()
        self._announced_sift = obs.n_sift
        self._n_ec = syndrome_length(obs.n_sift, self.constants.e_bit_assumed)
        self.security = security_result(
            self.constants, obs, self.expected, self._n_ec
        )
        if msg.proceed == self.security.abort:
            raise ProtocolError("length judgement disagrees with announcement")
        self._state = "end" if not msg.proceed else "syndrome"

    def _handle_syndrome(self, msg: Syndrome) -> None:
        if len(msg.bits) != self._n_ec:
            raise ProtocolError("syndrome length disagrees with the rule")
        if self._n_ec == 0:
            self._corrected = self._sifted
            self._ec_converged, self._ec_iterations = True, 0
        else:
            code = LdpcCode(self._announced_sift, self._n_ec, msg.code_seed)
            self._corrected, self._ec_converged, self._ec_iterations = correct(
                self._sifted, msg.bits, code, self.constants.e_bit_assumed
            )
        self._state = "verify"

    def _handle_verify(self, msg: VerifyHash) -> None:
        own = verify_hash(self._corrected, msg.seed, self.constants.n_verify)
        ok = own == msg.digest
        self.outbox.append(VerifyResult(ok))
        self._state = "pa" if ok else "end"
        if not ok:
            self._abort_reason = "verification mismatch"

    def _handle_pa(self, msg: PaSeed) -> None:
        if msg.n_fin != self.security.n_fin:
            raise ProtocolError("final length disagrees with own computation")
        self._final_key = pa_hash(self._corrected, msg.seed, msg.n_fin)
        self._state = "end"

    def _handle_end(self, msg: End) -> None:
        obs = self._acc.observables()
        key = getattr(self, "_final_key", None)
        reason = getattr(self, "_abort_reason", None)
        if key is None and reason is None:
            reason = "insufficient extractable length"
        self.result = KeyMaterial(
            role="bob",
            aborted=key is None,
            abort_reason=reason if key is None else None,
            key=key,
            n_fin=len(key) if key is not None else 0,
            n_sift=obs.n_sift,
            observables=obs,
            security=self.security,
            ec_converged=self._ec_converged,
            ec_iterations=self._ec_iterations,
        )
        self._state = "done"


@dataclass
class ProtocolOutcome:
    alice: KeyMaterial
    bob: KeyMaterial
    transcript: bytes
    security: SecurityResult

    @property
    def aborted(self) -> bool:
        return self.alice.aborted

    @property
    def keys_match(self) -> bool:
        return (
            not self.aborted
            and self.alice.key is not None
            and self.alice.key == self.bob.key
        )


class InProcessTransport:
    """Shuttles encoded frames between two machines, keeping a transcript.

    Every message is serialized and re-decoded in transit, so each run
    exercises the wire format end to end.
    """

    def __init__(self, alice: AliceMachine, bob: BobMachine):
        self.alice = alice
        self.bob = bob
        self.transcript = bytearray()

    def _drain(self, sender, receiver) -> int:
        moved = 0
        while sender.outbox:
            raw = encode_message(sender.outbox.pop(0))
            self.transcript += raw
            msg, _ = decode_message(raw)
            if not receiver.done:
                receiver.handle(msg)
            elif not isinstance(msg, End):
                raise ProtocolError("message to a finished party")
            moved += 1
        return moved

    def run(self) -> None:
        while True:
            moved = self._drain(self.bob, self.alice)
            moved += self._drain(self.alice, self.bob)
            if moved == 0:
                break
        if not (self.alice.done and self.bob.done):
            raise ProtocolError("deadlock: no messages in flight, parties not done")


def run_protocol(
    constants: ProtocolConstants,
    channel: ChannelModel,
    seed: int,
    expected: ExpectedObservables | None = None,
) -> ProtocolOutcome:
    """Simulate one full session: quantum phase plus post-processing.

    Stream keys: 0 Alice settings, 1 Bob settings, 2 channel noise,
    3 Alice's post-processing seeds.
    """
    alice_rng = generator(seed, 0)
    bob_rng = generator(seed, 1)
    channel_rng = generator(seed, 2)
    post_rng = generator(seed, 3)
    if expected is None:
        expected = expected_observables(constants, channel)

    alice_blocks = []
    bob_blocks = []
    for _ in range(constants.n_block):
        sample = sample_block(constants, channel, alice_rng, bob_rng, channel_rng)
        alice_blocks.append(alice_view(sample))
        bob_blocks.append(bob_view(sample))

    alice = AliceMachine(constants, alice_blocks, expected, post_rng)
    bob = BobMachine(constants, bob_blocks, expected)
    transport = InProcessTransport(alice, bob)
    transport.run()
    return ProtocolOutcome(
        alice=alice.result,
        bob=bob.result,
        transcript=bytes(transport.transcript),
        security=alice.security,
    )
