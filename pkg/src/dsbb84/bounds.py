"""Finite-size security engine for decoy-state BB84.

Three layers live here:

* concentration coefficient pairs (a, b) and (a', b') that turn an expected
  count into a high-probability deviation envelope for the matching
  martingale sum,
* the decoy-state inversion that isolates the single-photon contribution
  from the three intensity settings,
* the assembly of the single-photon floor, the phase-error ceiling and the
  privacy-amplification length, with directed conservative rounding at
  named checkpoint quantities.

Sign conventions: the unprimed pair bounds a sum of conditional expectations
from above given the observed count, the primed pair bounds it from below.
All seven envelope events share the secrecy budget as
4 * eps^2/32 + 3 * eps^2/24 = eps^2/4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

from .channel import (
    ChannelModel,
    click_probability_total,
    error_probability_x,
    single_photon_error_x,
    single_photon_yield,
)
from .params import (
    INTENSITIES,
    DomainError,
    PhotonDistributions,
    ProtocolConstants,
    entropy_h,
)

__all__ = [
    "KatoPair",
    "kato_a",
    "kato_b",
    "kato_a_prime",
    "kato_b_prime",
    "kato_pair",
    "kato_pair_prime",
    "DecoyCoefficients",
    "decoy_coefficients",
    "Observables",
    "ExpectedObservables",
    "expected_observables",
    "n1z_lower",
    "nph_upper",
    "n_pa",
    "SecurityResult",
    "security_result",
    "CONSERVATIVE_SLACK",
]

# Relative slack applied at every named checkpoint in conservative mode.
CONSERVATIVE_SLACK = 1e-9


def _kato_validate(s: float, t: float, eps: float) -> float:
    if not s > 0.0:
        raise DomainError(f"sample size s must be positive, got {s!r}")
    if not 0.0 <= t <= s:
        raise DomainError(f"target count t must lie in [0, s], got t={t!r}, s={s!r}")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"tail probability must lie in (0, 1), got {eps!r}")
    return math.log(eps)


def kato_a(s: float, t: float, eps: float) -> float:
    """Slope coefficient of the upper deviation envelope at target count t."""
    ln_eps = _kato_validate(s, t, eps)
    quad = 9.0 * t * (s - t) - 2.0 * s * ln_eps
    disc = -(s * s) * ln_eps * quad
    if disc < 0.0:
        raise DomainError("negative discriminant in envelope coefficient")
    num = (
        216.0 * math.sqrt(s) * t * (s - t) * ln_eps
        - 48.0 * s**1.5 * ln_eps * ln_eps
        + 27.0 * math.sqrt(2.0) * (s - 2.0 * t) * math.sqrt(disc)
    )
    return num / (4.0 * (9.0 * s - 8.0 * ln_eps) * quad)


def kato_b(s: float, t: float, eps: float) -> float:
    """Offset coefficient paired with kato_a; always at least |a|.

    Evaluated as sqrt(a^2 + (-ln eps) (4a + 3 sqrt(s))^2 / (18 s)), the
    completed-square form of (18 a^2 s - (16 a^2 + 24 a sqrt(s) + 9 s)
    ln eps) / (18 s); the sum of squares form keeps full precision where
    the expanded form cancels catastrophically.
    """
    ln_eps = _kato_validate(s, t, eps)
    a = kato_a(s, t, eps)
    shifted = 4.0 * a + 3.0 * math.sqrt(s)
    return math.sqrt(a * a - ln_eps * shifted * shifted / (18.0 * s))


def kato_a_prime(s: float, t: float, eps: float) -> float:
    """Slope coefficient of the lower deviation envelope at target count t."""
    ln_eps = _kato_validate(s, t, eps)
    quad = 9.0 * t * (s - t) - 2.0 * s * ln_eps
    disc = -(s * s) * ln_eps * quad
    if disc < 0.0:
        raise DomainError("negative discriminant in envelope coefficient")
    num = (
        -216.0 * math.sqrt(s) * t * (s - t) * ln_eps
        + 48.0 * s**1.5 * ln_eps * ln_eps
        + 27.0 * math.sqrt(2.0) * (s - 2.0 * t) * math.sqrt(disc)
    )
    return num / (4.0 * (9.0 * s - 8.0 * ln_eps) * quad)


def kato_b_prime(s: float, t: float, eps: float) -> float:
    """Offset coefficient paired with kato_a_prime; always at least |a'|.

    Completed-square form of the lower-envelope offset, with the primed
    slope inside (the mirror of kato_b under a -> -a').
    """
    ln_eps = _kato_validate(s, t, eps)
    a = kato_a_prime(s, t, eps)
    shifted = 4.0 * a - 3.0 * math.sqrt(s)
    return math.sqrt(a * a - ln_eps * shifted * shifted / (18.0 * s))


class KatoPair(NamedTuple):
    a: float
    b: float


def kato_pair(s: float, t: float, eps: float) -> KatoPair:
    """(a, b) for the upper envelope tuned to expected count t."""
    return KatoPair(kato_a(s, t, eps), kato_b(s, t, eps))


def kato_pair_prime(s: float, t: float, eps: float) -> KatoPair:
    """(a', b') for the lower envelope tuned to expected count t."""
    return KatoPair(kato_a_prime(s, t, eps), kato_b_prime(s, t, eps))


@dataclass(frozen=True)
class DecoyCoefficients:
    """Linear combination isolating the single-photon detection fraction.

    lam and gamma are nonpositive, zeta is nonnegative; applied to the
    per-intensity detection probabilities the combination equals the
    single-photon term exactly (coefficient 1) minus nonnegative multiples
    of every other photon number's term.
    """

    lam: float
    zeta: float
    gamma: float
    denominator: float
    reduced_denominator: float

    def __iter__(self):
        return iter((self.lam, self.zeta, self.gamma))


def decoy_coefficients(constants: ProtocolConstants) -> DecoyCoefficients:
    """Inversion coefficients (lambda, zeta, gamma) for the three intensities."""
    mu_s = constants.mu["S"]
    mu_d = constants.mu["D"]
    mu_v = constants.mu["V"]
    p1_int = math.fsum(
        constants.p_intensity[w] * constants.mu[w] * math.exp(-constants.mu[w])
        for w in INTENSITIES
    )
    reduced = mu_d - mu_d * mu_d / mu_s - mu_v
    if reduced <= 0.0:
        raise DomainError(
            "decoy intensities cannot separate the single-photon term: "
            f"need mu_D (mu_S - mu_D)/mu_S > mu_V, got mu={dict(constants.mu)}"
        )
    denominator = reduced / p1_int
    kappa2 = (mu_d / mu_s) ** 2
    p_s0 = constants.p_intensity["S"] * math.exp(-mu_s)
    p_d0 = constants.p_intensity["D"] * math.exp(-mu_d)
    p_v0 = constants.p_intensity["V"] * math.exp(-mu_v)
    return DecoyCoefficients(
        lam=-kappa2 / (denominator * p_s0),
        zeta=1.0 / (denominator * p_d0),
        gamma=-1.0 / (denominator * p_v0),
        denominator=denominator,
        reduced_denominator=reduced,
    )


@dataclass(frozen=True)
class Observables:
    """Publicly announced counts of one protocol run.

    Sift counts are matched-Z-basis clicked rounds per intensity; error
    counts are matched-X-basis clicked rounds whose announced bits differ,
    for the decoy and vacuum intensities.
    """

    n_sift_s: int
    n_sift_d: int
    n_sift_v: int
    n_err_dx: int
    n_err_vx: int

    def __post_init__(self) -> None:
        for name in ("n_sift_s", "n_sift_d", "n_sift_v", "n_err_dx", "n_err_vx"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be nonnegative")

    @property
    def n_sift(self) -> int:
        return self.n_sift_s + self.n_sift_d + self.n_sift_v

    def as_dict(self) -> dict:
        return {
            "n_sift_s": self.n_sift_s,
            "n_sift_d": self.n_sift_d,
            "n_sift_v": self.n_sift_v,
            "n_err_dx": self.n_err_dx,
            "n_err_vx": self.n_err_vx,
        }


@dataclass(frozen=True)
class ExpectedObservables:
    """Pre-agreed expected counts tuning the deviation envelopes.

    These do not affect soundness, only tightness: any value in [0, N]
    yields a valid envelope. They normally come from the honest channel
    model via expected_observables.
    """

    n_sift_s: float
    n_sift_d: float
    n_sift_v: float
    n_err_dx: float
    n_err_vx: float
    n1z: float
    nph: float

    def as_dict(self) -> dict:
        return {
            "n_sift_s": self.n_sift_s,
            "n_sift_d": self.n_sift_d,
            "n_sift_v": self.n_sift_v,
            "n_err_dx": self.n_err_dx,
            "n_err_vx": self.n_err_vx,
            "n1z": self.n1z,
            "nph": self.nph,
        }


def expected_observables(
    constants: ProtocolConstants, channel: ChannelModel
) -> ExpectedObservables:
    """Expected counts under the honest channel model, in closed form."""
    n = constants.n_total
    pzz = constants.p_basis_alice * constants.p_basis_bob
    pxx = (1.0 - constants.p_basis_alice) * (1.0 - constants.p_basis_bob)
    dist = PhotonDistributions(constants)
    p1_int = dist.p_n[1]
    return ExpectedObservables(
        n_sift_s=n
        * constants.p_intensity["S"]
        * pzz
        * click_probability_total(channel, constants.mu["S"]),
        n_sift_d=n
        * constants.p_intensity["D"]
        * pzz
        * click_probability_total(channel, constants.mu["D"]),
        n_sift_v=n
        * constants.p_intensity["V"]
        * pzz
        * click_probability_total(channel, constants.mu["V"]),
        n_err_dx=n
        * constants.p_intensity["D"]
        * pxx
        * error_probability_x(channel, constants.mu["D"]),
        n_err_vx=n
        * constants.p_intensity["V"]
        * pxx
        * error_probability_x(channel, constants.mu["V"]),
        n1z=n * pzz * p1_int * single_photon_yield(channel),
        nph=n * pzz * p1_int * single_photon_error_x(channel),
    )


class _Checkpoints:
    """Directed slack and audit perturbations at named intermediate values.

    Every checkpoint is pushed by `slack` in the direction that makes the
    final bound more conservative. The rounding audit re-enters here with
    per-checkpoint relative perturbations; domination of the slack over a
    same-sized perturbation holds up to O(slack^2) residue.
    """

    def __init__(
        self,
        slack: float = 0.0,
        perturb: Mapping[str, float] | None = None,
        record: dict | None = None,
    ) -> None:
        self.slack = slack
        self.perturb = dict(perturb) if perturb else {}
        self.record = record

    def __call__(self, name: str, value: float, direction: int) -> float:
        v = float(value)
        shift = self.perturb.get(name, 0.0)
        if shift:
            v *= 1.0 + shift
        if self.slack:
            v += direction * self.slack * abs(v)
        if self.record is not None:
            self.record[name] = v
        return v


def _check_counts(constants: ProtocolConstants, obs: Observables) -> None:
    n = constants.n_total
    if obs.n_sift > n or obs.n_err_dx > n or obs.n_err_vx > n:
        raise DomainError("observed counts exceed the total number of rounds")


def n1z_lower(
    constants: ProtocolConstants,
    obs: Observables,
    exp: ExpectedObservables,
    *,
    slack: float = 0.0,
    perturb: Mapping[str, float] | None = None,
    record: dict | None = None,
) -> float:
    """High-probability lower envelope on single-photon matched-Z clicks.

    Combines the decoy inversion of the three sift counts with four
    deviation envelopes, each at tail weight eps_secrecy^2/32. Returns a
    real in [0, N]; degenerate envelopes collapse to the trivial 0.
    """
    _check_counts(constants, obs)
    ck = _Checkpoints(slack, perturb, record)
    n = float(constants.n_total)
    rn = math.sqrt(n)
    eps_ev = constants.eps_secrecy**2 / 32.0
    coef = decoy_coefficients(constants)
    a1, b1 = kato_pair(n, exp.n1z, eps_ev)
    a_s, b_s = kato_pair(n, exp.n_sift_s, eps_ev)
    a_v, b_v = kato_pair(n, exp.n_sift_v, eps_ev)
    a_d, b_d = kato_pair_prime(n, exp.n_sift_d, eps_ev)
    term_s = ck(
        "n1z_term_s",
        coef.lam * (obs.n_sift_s * (1.0 + 2.0 * a_s / rn) + (b_s - a_s) * rn),
        -1,
    )
    term_d = ck(
        "n1z_term_d",
        coef.zeta
        * (obs.n_sift_d - (b_d + a_d * (2.0 * obs.n_sift_d / n - 1.0)) * rn),
        -1,
    )
    term_v = ck(
        "n1z_term_v",
        coef.gamma * (obs.n_sift_v * (1.0 + 2.0 * a_v / rn) + (b_v - a_v) * rn),
        -1,
    )
    dev = ck("n1z_dev", (b1 - a1) * rn, +1)
    inner = ck("n1z_inner", term_s + term_d + term_v - dev, -1)
    den = 1.0 + 2.0 * a1 / rn
    if den <= 0.0 or inner <= 0.0:
        # The inversion prefactor degenerates (or the inversion already
        # went nonpositive); only the trivial floor survives.
        if record is not None:
            record["n1z_value"] = 0.0
        return 0.0
    pref = ck("n1z_pref", 1.0 / den, -1)
    value = ck("n1z_value", pref * inner, -1)
    return min(max(value, 0.0), n)


def nph_upper(
    constants: ProtocolConstants,
    obs: Observables,
    exp: ExpectedObservables,
    *,
    slack: float = 0.0,
    perturb: Mapping[str, float] | None = None,
    record: dict | None = None,
) -> float:
    """High-probability upper envelope on phase errors of the floor rounds.

    Translates matched-X error counts at the decoy and vacuum intensities
    into a ceiling on single-photon phase errors in the Z sift, with three
    deviation envelopes at tail weight eps_secrecy^2/24 each. Returns a
    real in [0, N]; degenerate envelopes collapse to the trivial N.
    """
    _check_counts(constants, obs)
    ck = _Checkpoints(slack, perturb, record)
    n = float(constants.n_total)
    rn = math.sqrt(n)
    eps_ev = constants.eps_secrecy**2 / 24.0
    dist = PhotonDistributions(constants)
    pd1 = dist.cond["D"][1]
    pd0 = dist.cond["D"][0]
    pv0 = dist.cond["V"][0]
    if pd1 <= 0.0 or pv0 <= 0.0:
        raise DomainError("phase-error inversion needs mu_D > 0 and p_V > 0")
    pz_over_px = (constants.p_basis_alice * constants.p_basis_bob) / (
        (1.0 - constants.p_basis_alice) * (1.0 - constants.p_basis_bob)
    )
    a_ph, b_ph = kato_pair_prime(n, exp.nph, eps_ev)
    a_dx, b_dx = kato_pair(n, exp.n_err_dx, eps_ev)
    a_vx, b_vx = kato_pair_prime(n, exp.n_err_vx, eps_ev)
    den = 1.0 - 2.0 * a_ph / rn
    if den <= 0.0:
        if record is not None:
            record["nph_value"] = n
        return n
    term_dx = ck(
        "nph_term_dx",
        (pz_over_px / pd1)
        * (obs.n_err_dx * (1.0 + 2.0 * a_dx / rn) + (b_dx - a_dx) * rn),
        +1,
    )
    term_vx = ck(
        "nph_term_vx",
        -(pz_over_px * pd0 / (pd1 * pv0))
        * (obs.n_err_vx - (b_vx + a_vx * (2.0 * obs.n_err_vx / n - 1.0)) * rn),
        +1,
    )
    dev = ck("nph_dev", (b_ph - a_ph) * rn, +1)
    inner = ck("nph_inner", term_dx + term_vx + dev, +1)
    if inner <= 0.0:
        if record is not None:
            record["nph_value"] = 0.0
        return 0.0
    pref = ck("nph_pref", 1.0 / den, +1)
    value = ck("nph_value", pref * inner, +1)
    return min(max(value, 0.0), n)


def pa_log_term(eps_secrecy: float) -> int:
    """Fixed privacy-amplification overhead ceil(-log2(eps^2/4))."""
    return math.ceil(2.0 - 2.0 * math.log2(eps_secrecy))


def n_pa(
    constants: ProtocolConstants,
    obs: Observables,
    n1z_floor: int,
    nph_ceil: int,
    *,
    slack: float = 0.0,
    perturb: Mapping[str, float] | None = None,
    record: dict | None = None,
) -> int:
    """Number of key bits removed by privacy amplification.

    With a zero single-photon floor the whole sift is written off and only
    the fixed overhead is added, so no key can survive.
    """
    if n1z_floor < 0 or nph_ceil < 0:
        raise DomainError("rounded envelope counts must be nonnegative")
    ck = _Checkpoints(slack, perturb, record)
    log_term = pa_log_term(constants.eps_secrecy)
    if n1z_floor == 0:
        raw = float(obs.n_sift + log_term)
    else:
        ratio = min(nph_ceil / n1z_floor, 1.0)
        raw = (
            obs.n_sift
            - n1z_floor
            + n1z_floor * entropy_h(ratio)
            + log_term
        )
    value = ck("n_pa_value", raw, +1)
    return math.ceil(value)


@dataclass(frozen=True)
class SecurityResult:
    """Outcome of the finite-size length computation for one run."""

    n_sift: int
    n1z_real: float
    n1z_floor: int
    nph_real: float
    nph_ceil: int
    n_pa: int
    n_ec: int
    n_verify: int
    n_fin: int
    abort: bool
    eps_secrecy: float
    eps_correct: float
    eps_total: float
    budget: tuple = ()
    intermediates: Mapping[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "n_sift": self.n_sift,
            "n1z_real": self.n1z_real,
            "n1z_floor": self.n1z_floor,
            "nph_real": self.nph_real,
            "nph_ceil": self.nph_ceil,
            "n_pa": self.n_pa,
            "n_ec": self.n_ec,
            "n_verify": self.n_verify,
            "n_fin": self.n_fin,
            "abort": self.abort,
            "eps_secrecy": self.eps_secrecy,
            "eps_correct": self.eps_correct,
            "eps_total": self.eps_total,
            "budget": [list(entry) for entry in self.budget],
            "intermediates": dict(self.intermediates),
        }


def security_result(
    constants: ProtocolConstants,
    obs: Observables,
    exp: ExpectedObservables,
    n_ec: int,
    *,
    slack: float = CONSERVATIVE_SLACK,
    perturb: Mapping[str, float] | None = None,
) -> SecurityResult:
    """Full conservative length computation with its accounting trail.

    The returned budget lists one entry per deviation envelope; the tail
    weights sum to eps_secrecy^2/4, which is what the secrecy parameter
    certifies against. Failure probability of verification is reported
    separately as eps_correct = 2^-n_verify.
    """
    record: dict[str, float] = {}
    n1_real = n1z_lower(constants, obs, exp, slack=slack, perturb=perturb, record=record)
    nph_real = nph_upper(constants, obs, exp, slack=slack, perturb=perturb, record=record)
    n1_floor = math.floor(n1_real)
    nph_ceil = math.ceil(nph_real)
    pa_bits = n_pa(
        constants, obs, n1_floor, nph_ceil, slack=slack, perturb=perturb, record=record
    )
    n_fin = obs.n_sift - pa_bits - n_ec - constants.n_verify
    abort = n_fin <= 0
    eps2 = constants.eps_secrecy**2
    budget = (
        ("sift count S envelope", eps2 / 32.0),
        ("sift count V envelope", eps2 / 32.0),
        ("sift count D envelope", eps2 / 32.0),
        ("single-photon Z envelope", eps2 / 32.0),
        ("X error count D envelope", eps2 / 24.0),
        ("X error count V envelope", eps2 / 24.0),
        ("phase error envelope", eps2 / 24.0),
    )
    eps_correct = 2.0 ** (-constants.n_verify)
    return SecurityResult(
        n_sift=obs.n_sift,
        n1z_real=n1_real,
        n1z_floor=n1_floor,
        nph_real=nph_real,
        nph_ceil=nph_ceil,
        n_pa=pa_bits,
        n_ec=n_ec,
        n_verify=constants.n_verify,
        n_fin=max(n_fin, 0),
        abort=abort,
        eps_secrecy=constants.eps_secrecy,
        eps_correct=eps_correct,
        eps_total=constants.eps_secrecy + eps_correct,
        budget=budget,
        intermediates=record,
    )
