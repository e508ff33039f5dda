"""Decoy-state BB84 with a finite-size security engine.

Simulates the quantum phase of a three-intensity decoy-state BB84 session
against a lossy, misaligned, dark-count channel, runs the classical
post-processing between two explicit state machines, and computes the
extractable key length with concentration envelopes whose failure budget
is accounted per event.
"""

from .bounds import (
    ExpectedObservables,
    Observables,
    SecurityResult,
    expected_observables,
    security_result,
)
from .channel import ChannelModel, load_channel
from .gf2 import BitString
from .params import ConfigurationError, DomainError, ProtocolConstants, load_constants
from .protocol import KeyMaterial, ProtocolOutcome, run_protocol

__version__ = "0.1.0"

__all__ = [
    "BitString",
    "ChannelModel",
    "ConfigurationError",
    "DomainError",
    "ExpectedObservables",
    "KeyMaterial",
    "Observables",
    "ProtocolConstants",
    "ProtocolOutcome",
    "SecurityResult",
    "expected_observables",
    "load_channel",
    "load_constants",
    "run_protocol",
    "security_result",
    "__version__",
]
