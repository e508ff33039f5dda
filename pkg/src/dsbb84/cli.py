"""Command-line interface.

Four subcommands:

* ``keyrate``: analytic finite-size length for a configuration, using
  expected counts projected to integers. No sampling involved.
* ``simulate``: one full simulated session including post-processing;
  optionally writes both final keys as lowercase hex, one per line.
* ``scan``: repeat the analytic keyrate over a swept parameter.
* ``verify-bounds``: Monte Carlo attack on the two tail envelopes.

Exit codes: 0 on success, 1 when the protocol aborts or a checked bound
is exceeded, 2 for configuration errors, 3 for internal inconsistencies.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .bounds import Observables, expected_observables, security_result
from .channel import ChannelModel, load_channel
from .ecc import syndrome_length
from .oracles import kato_tail_mc
from .params import ConfigurationError, DomainError, load_constants
from .protocol import ProtocolError, run_protocol

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_ABORT = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


def _read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_report(path: str, report: dict) -> None:
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _report_skeleton(command: str, args) -> dict:
    report = {"schema_version": SCHEMA_VERSION, "command": command}
    if getattr(args, "seed", None) is not None:
        report["seed"] = args.seed
    return report


def _load_config(args) -> tuple:
    constants = load_constants(_read_json(args.constants))
    channel = load_channel(_read_json(args.channel))
    return constants, channel


def _rounded_observables(constants, channel) -> Observables:
    exp = expected_observables(constants, channel)
    return Observables(
        n_sift_s=round(exp.n_sift_s),
        n_sift_d=round(exp.n_sift_d),
        n_sift_v=round(exp.n_sift_v),
        n_err_dx=round(exp.n_err_dx),
        n_err_vx=round(exp.n_err_vx),
    )


def _analytic_result(constants, channel):
    exp = expected_observables(constants, channel)
    obs = _rounded_observables(constants, channel)
    n_ec = syndrome_length(obs.n_sift, constants.e_bit_assumed)
    return security_result(constants, obs, exp, n_ec)


def cmd_keyrate(args) -> int:
    constants, channel = _load_config(args)
    result = _analytic_result(constants, channel)
    report = _report_skeleton("keyrate", args)
    report["constants"] = constants.as_dict()
    report["channel"] = channel.as_dict()
    report["result"] = result.as_dict()
    if args.json:
        _write_report(args.json, report)
    print(
        f"n_sift={result.n_sift} n1z_floor={result.n1z_floor} "
        f"nph_ceil={result.nph_ceil} n_pa={result.n_pa} n_ec={result.n_ec} "
        f"n_fin={result.n_fin} eps_total={result.eps_total:.3e}"
    )
    if result.abort:
        print("abort: no extractable key at this configuration")
        return EXIT_ABORT
    return EXIT_OK


def cmd_simulate(args) -> int:
    constants, channel = _load_config(args)
    outcome = run_protocol(constants, channel, args.seed)
    report = _report_skeleton("simulate", args)
    report["constants"] = constants.as_dict()
    report["channel"] = channel.as_dict()
    report["result"] = outcome.security.as_dict()
    report["aborted"] = outcome.aborted
    report["abort_reason"] = outcome.alice.abort_reason
    report["keys_match"] = outcome.keys_match
    report["transcript_bytes"] = len(outcome.transcript)
    if args.json:
        _write_report(args.json, report)
    if outcome.aborted:
        print(f"abort: {outcome.alice.abort_reason}")
        return EXIT_ABORT
    if not outcome.keys_match:
        print("internal error: both sides accepted but keys differ")
        return EXIT_INTERNAL
    if args.keys_out:
        with open(args.keys_out, "w", encoding="utf-8") as fh:
            for key in (outcome.alice.key, outcome.bob.key):
                fh.write(key.to_bytes().hex() + "\n")
    print(
        f"n_sift={outcome.alice.n_sift} n_fin={outcome.alice.n_fin} "
        f"ec_iterations={outcome.bob.ec_iterations} "
        f"transcript={len(outcome.transcript)} bytes"
    )
    return EXIT_OK


def cmd_scan(args) -> int:
    constants, channel = _load_config(args)
    base = constants.as_dict()
    values = [float(v) for v in args.values.split(",")]
    rows = []
    any_key = False
    for value in values:
        override = dict(base)
        if args.param in ("mu_S", "mu_D", "mu_V"):
            override["mu"] = dict(override["mu"])
            override["mu"][args.param[-1]] = value
        elif args.param in ("p_S", "p_D", "p_V"):
            override["p_intensity"] = dict(override["p_intensity"])
            override["p_intensity"][args.param[-1]] = value
        elif args.param in base:
            override[args.param] = value
        else:
            raise ConfigurationError(f"unknown scan parameter {args.param}")
        swept = load_constants(override)
        result = _analytic_result(swept, channel)
        rows.append({"value": value, "result": result.as_dict()})
        any_key = any_key or not result.abort
        print(
            f"{args.param}={value:g}: n_fin={result.n_fin}"
            + (" (abort)" if result.abort else "")
        )
    report = _report_skeleton("scan", args)
    report["constants"] = base
    report["channel"] = channel.as_dict()
    report["param"] = args.param
    report["rows"] = rows
    if args.json:
        _write_report(args.json, report)
    return EXIT_OK if any_key else EXIT_ABORT


def cmd_verify_bounds(args) -> int:
    result = kato_tail_mc(args.n, args.q, args.eps, args.trials, args.seed)
    report = _report_skeleton("verify-bounds", args)
    report["params"] = {
        "n": args.n,
        "q": args.q,
        "eps": args.eps,
        "trials": args.trials,
    }
    report["result"] = dataclasses.asdict(result)
    report["forward_rate"] = result.forward_rate
    report["reverse_rate"] = result.reverse_rate
    if args.json:
        _write_report(args.json, report)
    ok = result.forward_rate <= args.eps and result.reverse_rate <= args.eps
    print(
        f"forward {result.forward_violations}/{result.trials} "
        f"({result.forward_rate:.3e}), reverse {result.reverse_violations}/"
        f"{result.trials} ({result.reverse_rate:.3e}), budget {args.eps:.3e}"
    )
    return EXIT_OK if ok else EXIT_ABORT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsbb84",
        description="Decoy-state BB84 finite-size key engine and simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--constants", required=True, help="constants JSON file")
    common.add_argument("--channel", required=True, help="channel JSON file")
    common.add_argument("--json", help="write a JSON report here ('-' for stdout)")

    p = sub.add_parser("keyrate", parents=[common], help="analytic key length")
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("simulate", parents=[common], help="one simulated session")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--keys-out", help="write both final keys as hex lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scan", parents=[common], help="sweep one parameter")
    p.add_argument("--param", required=True, help="e.g. mu_S, p_D, eps_secrecy")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("verify-bounds", help="Monte Carlo tail check")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--q", type=float, default=0.3)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--json", help="write a JSON report here ('-' for stdout)")
    p.set_defaults(func=cmd_verify_bounds)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
