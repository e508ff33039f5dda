"""Independent statistical checks of the security engine.

Nothing here feeds the bounds themselves. These routines attack the
claimed guarantees from the outside: tail inequalities are stress-tested
against i.i.d. sampling where the sum of conditional expectations is known
exactly, the assembled floor and ceiling are compared against hidden
per-round truth that only a simulation can see, and the verification hash
is attacked with mismatched keys.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import (
    Observables,
    expected_observables,
    kato_pair,
    kato_pair_prime,
    security_result,
)
from .channel import (
    ChannelModel,
    generator,
    sample_block,
    single_photon_error_x,
    single_photon_yield,
)
from .ecc import syndrome_length
from .gf2 import BitString
from .hashing import verify_hash
from .params import ProtocolConstants
from .protocol import sift_masks


@dataclass(frozen=True)
class TailTestResult:
    trials: int
    forward_violations: int
    reverse_violations: int
    eps: float

    @property
    def forward_rate(self) -> float:
        return self.forward_violations / self.trials

    @property
    def reverse_rate(self) -> float:
        return self.reverse_violations / self.trials


def kato_tail_mc(
    n: int, q: float, eps: float, trials: int, seed: int
) -> TailTestResult:
    """Empirical violation rates of both deviation envelopes.

    For i.i.d. Bernoulli(q) rounds the sum of conditional expectations is
    exactly lam = n q, so both envelope events are directly observable:

      forward:  lam >= count + (b + a (2 lam / n - 1)) sqrt(n)
      reverse:  count >= lam + (b' + a' (2 lam / n - 1)) sqrt(n)

    Each must occur with probability at most eps. The envelopes are
    centred at the true expectation, matching how the engine uses
    pre-agreed expected counts.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    lam = n * q
    a, b = kato_pair(n, lam, eps)
    ap, bp = kato_pair_prime(n, lam, eps)
    root = np.sqrt(n)
    centre = 2.0 * lam / n - 1.0
    forward_edge = lam - (b + a * centre) * root
    reverse_edge = lam + (bp + ap * centre) * root
    rng = generator(seed, 0x7A11)
    forward = 0
    reverse = 0
    block = 1_000_000
    remaining = trials
    while remaining > 0:
        k = min(block, remaining)
        counts = rng.binomial(n, q, size=k)
        forward += int(np.sum(counts <= forward_edge))
        reverse += int(np.sum(counts >= reverse_edge))
        remaining -= k
    return TailTestResult(trials, forward, reverse, eps)


@dataclass(frozen=True)
class GroundTruthRun:
    """One simulated session compared against its hidden truth."""

    n1z_true: int
    nph_true: int
    n1z_floor: int
    nph_ceil: int
    abort: bool
    covered: bool
    n_sift: int


def ground_truth_run(
    constants: ProtocolConstants, channel: ChannelModel, seed: int
) -> GroundTruthRun:
    """Run the quantum phase and score the floor and ceiling against truth.

    The hidden single-photon count is read off the source variable. Phase
    errors are not directly simulated, so each hidden single-photon sifted
    round draws an error flag at the exact conditional single-photon
    X-error probability; the ceiling must dominate that draw.
    """
    alice_rng = generator(seed, 0)
    bob_rng = generator(seed, 1)
    channel_rng = generator(seed, 2)
    truth_rng = generator(seed, 4)

    sift = [0, 0, 0]
    err = [0, 0, 0]
    n1z_true = 0
    for _ in range(constants.n_block):
        s = sample_block(constants, channel, alice_rng, bob_rng, channel_rng)
        z_mask, x_mask = sift_masks(s.alpha, s.beta, s.clicked)
        for w in range(3):
            sift[w] += int(np.sum(z_mask & (s.omega_idx == w)))
            err[w] += int(
                np.sum(x_mask & (s.omega_idx == w) & (s.a != s.b))
            )
        n1z_true += int(np.sum(z_mask & (s.n_photons == 1)))

    obs = Observables(
        n_sift_s=sift[0],
        n_sift_d=sift[1],
        n_sift_v=sift[2],
        n_err_dx=err[1],
        n_err_vx=err[2],
    )
    p_err_given_click = single_photon_error_x(channel) / single_photon_yield(channel)
    nph_true = int(truth_rng.binomial(n1z_true, p_err_given_click))

    expected = expected_observables(constants, channel)
    n_ec = syndrome_length(obs.n_sift, constants.e_bit_assumed)
    result = security_result(constants, obs, expected, n_ec)
    covered = result.abort or (
        result.n1z_floor <= n1z_true and nph_true <= result.nph_ceil
    )
    return GroundTruthRun(
        n1z_true=n1z_true,
        nph_true=nph_true,
        n1z_floor=result.n1z_floor,
        nph_ceil=result.nph_ceil,
        abort=result.abort,
        covered=covered,
        n_sift=obs.n_sift,
    )


@dataclass(frozen=True)
class VerificationAttack:
    trials: int
    false_accepts: int
    n_verify: int

    @property
    def rate(self) -> float:
        return self.false_accepts / self.trials

    @property
    def bound(self) -> float:
        return 2.0 ** (-self.n_verify)


def verification_mc(
    n_bits: int, n_verify: int, trials: int, seed: int
) -> VerificationAttack:
    """False-accept rate of the verification hash under forced mismatches.

    Every trial hashes two keys that differ in a fresh uniformly random
    nonzero pattern under a fresh seed; accepting any of them is a
    correctness failure, which two-universality caps at 2^-n_verify per
    trial.
    """
    rng = generator(seed, 0xC0)
    false_accepts = 0
    n_bytes = (n_bits + 7) // 8
    mask = (1 << n_bits) - 1
    for _ in range(trials):
        key_word = int.from_bytes(rng.bytes(n_bytes), "little") & mask
        diff = 0
        while diff == 0:
            diff = int.from_bytes(rng.bytes(n_bytes), "little") & mask
        k_a = BitString.from_int(key_word, n_bits)
        k_b = BitString.from_int(key_word ^ diff, n_bits)
        hash_seed = int(rng.integers(0, 2**64, dtype=np.uint64))
        if verify_hash(k_a, hash_seed, n_verify) == verify_hash(
            k_b, hash_seed, n_verify
        ):
            false_accepts += 1
    return VerificationAttack(trials, false_accepts, n_verify)
