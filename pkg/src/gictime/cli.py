"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 safety regression
(an accepted forgery where the receiver's preconditions should have stopped
it, or a live exchange leaking its send time).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import random
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .clock import DriftBound, GicClock
from .config import CONFIG_DIR_ENV, ConfigError, load_scenario, load_traffic
from .crypto import Signer
from .multicadence import (
    CadencePair,
    EmptyRegionError,
    ReceiverPolicy,
    closed_form_centroid,
    forgery_conditions,
    forgery_region,
    simulate_scenario2_attack,
)
from .net import ReplayShim, UdpChannel, UdpTimeServer, leaks_time
from .sim import run_sweep, safety_regressions, summarize, to_csv, to_json
from .tesla import derive_chain, verify_key
from .timebase import NS_PER_S, format_s, to_ns
from .timesync import (
    NONCE_BYTES,
    AdjustmentPolicy,
    NtsRequest,
    ResponseInvalid,
    SyncRefused,
    SyncTimeout,
    TimeServer,
    TimeoutPosture,
    adjustment_interval,
    run_synchronization,
    schedule_next_query,
    theta_bounds,
)
from .traffic import run_study

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_REGRESSION = 2
SWEEP_KINDS = ("receipt-safety", "clock-safety", "post-sync", "multicadence")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fraction_s(value: Fraction) -> str:
    seconds = Fraction(value) / NS_PER_S
    return str(seconds)


def _emit(data: dict, fmt: str | None, output: str | None) -> None:
    if fmt == "json":
        text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key, value in data.items():
            writer.writerow([key, json.dumps(value) if isinstance(value, (dict, list)) else value])
        text = buffer.getvalue()
    else:
        text = "".join(f"{key}: {value}\n" for key, value in data.items())
    _write(text, output)


def _write(text: str, output: str | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _default_config(name: str) -> str:
    base = os.environ.get(CONFIG_DIR_ENV)
    if not base:
        raise UsageError(f"no --config given and ${CONFIG_DIR_ENV} is not set")
    return str(Path(base) / name)


# -- sweep ------------------------------------------------------------------

def cmd_sweep(args) -> int:
    path = args.config
    if path is None:
        if args.kind is None:
            raise UsageError("give --config or --kind")
        path = _default_config(f"{args.kind.replace('-', '_')}.yaml")
    config = load_scenario(path, kind=args.kind, seed=args.seed)
    trace: list[str] | None = [] if args.trace else None
    outcomes = run_sweep(config, trace)
    summary = summarize(outcomes, config)
    if args.format == "json":
        _write(to_json(summary), args.output)
    else:
        _write(to_csv(outcomes), args.output)
    if args.summary:
        Path(args.summary).write_text(to_json(summary))
    if trace is not None:
        Path(args.trace).write_text("".join(line + "\n" for line in trace))

    counts = ", ".join(f"{k}={v}" for k, v in summary["counts"].items() if v)
    print(f"{config.sweep_kind.value}: {summary['points']} points ({counts})", file=sys.stderr)
    regressions = safety_regressions(outcomes, config)
    if regressions:
        for o in regressions[:5]:
            print(f"REGRESSION: forgery accepted at theta={format_s(o.theta)} delta={format_s(o.delta)} {o.policy}".rstrip(),
                  file=sys.stderr)
        print(f"{len(regressions)} accepted forgeries inside the certified-safe region", file=sys.stderr)
        return EXIT_REGRESSION
    return EXIT_OK


# -- sync-demo --------------------------------------------------------------

class _RecordingClock:
    """Receiver clock wrapper that remembers every reading it hands out."""

    def __init__(self, inner):
        self.inner = inner
        self.readings: list[int] = []

    def measure(self, t: int) -> int:
        reading = self.inner.measure(t)
        self.readings.append(reading)
        return reading

    def apply_adjustment(self, delta_theta: int, at: int | None = None):
        return self.inner.apply_adjustment(delta_theta, at)


def cmd_sync_demo(args) -> int:
    theta_big = to_ns(args.theta_big)
    if theta_big <= 0:
        raise UsageError("--theta-big must be positive")
    if args.lambda_slack < 1:
        raise UsageError("--lambda-slack must be at least 1")
    if min(args.delay_request, args.delay_response) < 0:
        raise UsageError("delays must be non-negative")
    if args.seed is not None:
        seed = args.seed.to_bytes(8, "big", signed=True)
        provider, receiver = Signer.from_seed(b"provider|" + seed), Signer.from_seed(b"receiver|" + seed)
        rng = random.Random(args.seed)
    else:
        provider, receiver = Signer.generate(), Signer.generate()
        rng = random.SystemRandom()
    drift = DriftBound.linear(args.drift_rate)
    policy = AdjustmentPolicy(args.policy)
    posture = TimeoutPosture(args.posture)
    true_clock = GicClock(to_ns(args.offset))
    clock = _RecordingClock(true_clock)
    sent: list[bytes] = []
    report: dict = {}
    code = EXIT_OK

    server = TimeServer(provider, receiver_keys=[receiver.verifier])
    with UdpTimeServer(server) as udp:
        channel = UdpChannel(udp.server_address, args.timeout, args.delay_request, args.delay_response)
        report["provider"] = f"udp://{udp.server_address[0]}:{udp.server_address[1]}"
        if args.replay_shim:
            channel = ReplayShim(channel)
            channel.capture(NtsRequest.create(receiver, os.urandom(NONCE_BYTES)).to_bytes())
        next_required = channel.now() + 10 * theta_big
        try:
            result = run_synchronization(
                channel, clock, provider.verifier, theta_big, drift, receiver, policy,
                posture=posture, next_required=next_required, lambda_slack=args.lambda_slack,
                rng=rng, on_request=sent.append,
            )
        except SyncRefused as exc:
            report["status"] = "refused"
            report["detail"] = f"SyncRefused: round trip {format_s(exc.round_trip)} s >= Theta {format_s(theta_big)} s"
            result = None
        except ResponseInvalid as exc:
            report["status"] = "invalid"
            report["detail"] = f"ResponseInvalid: {exc}"
            result = None
        except SyncTimeout as exc:
            report["status"] = "timeout"
            report["detail"] = f"SyncTimeout: posture {exc.posture.value}"
            if exc.retry_at is not None:
                report["retry_at"] = format_s(exc.retry_at)
            result = None

    if result is not None:
        lo, hi = theta_bounds(result.record)
        adj_lo, adj_hi = adjustment_interval(result.record, theta_big)
        report["status"] = "accepted"
        report["round_trip"] = format_s(result.record.round_trip)
        report["theta_bounds"] = f"[{format_s(lo)}, {format_s(hi)}]"
        report["safe_adjustment_interval"] = f"({format_s(int(adj_lo))}, {format_s(int(adj_hi))})"
        report["delta_theta"] = format_s(result.delta_theta)
        report["policy"] = policy.value
        report["next_sync_before"] = format_s(result.next_sync_time) if result.next_sync_time is not None else "never"
        if result.next_sync_time is not None:
            report["next_query_at"] = format_s(
                schedule_next_query(result.next_sync_time, args.lambda_slack, theta_big, rng)
            )

    request = sent[0] if sent else b""
    tau1 = clock.readings[0] if clock.readings else None
    leaked = tau1 is not None and leaks_time(request, tau1)
    report["request_bytes"] = len(request)
    report["request_carries_send_time"] = "yes" if leaked else "no"
    if leaked:
        code = EXIT_REGRESSION

    half = Fraction(theta_big, 2)
    after = result.clock.theta if result is not None else true_clock.theta
    if result is not None and not -half < after < half:
        code = EXIT_REGRESSION
        report["safety"] = "post-sync clock outside half of Theta"
    if args.reveal_ground_truth:
        report["true_offset_before"] = format_s(true_clock.theta)
        report["true_offset_after"] = format_s(after)

    _emit(report, args.format, args.output)
    return code


# -- multicadence -----------------------------------------------------------

def cmd_multicadence(args) -> int:
    pair = CadencePair(to_ns(args.theta_red), to_ns(args.theta_blue))
    try:
        region = forgery_region(pair)
    except EmptyRegionError as exc:
        _emit({"region": "empty", "detail": str(exc)}, args.format, args.output)
        return EXIT_OK
    centroid = region.centroid
    point = tuple(round(c) for c in centroid)
    report = {
        "theta_red": format_s(pair.theta_red),
        "theta_blue": format_s(pair.theta_blue),
        "vertices": [f"({_fraction_s(t)}, {_fraction_s(d)})" for t, d in region.vertices],
        "centroid": f"({_fraction_s(centroid[0])}, {_fraction_s(centroid[1])})",
        "centroid_matches_closed_form": centroid == closed_form_centroid(pair),
        "centroid_conditions": forgery_conditions(*centroid, pair),
    }
    code = EXIT_OK
    start = 10 * NS_PER_S
    for policy in ReceiverPolicy:
        outcome = simulate_scenario2_attack(pair, point[0], point[1], policy, to_ns(args.latency), start=start)
        if outcome.accepted:
            report[f"attack_{policy.value}"] = "accepted"
        else:
            since = format_s(outcome.detected_at - start)
            report[f"attack_{policy.value}"] = f"detected when the shared key arrives, {since} s after the message"
        if policy is ReceiverPolicy.FAST_AND_SLOW and outcome.accepted:
            code = EXIT_REGRESSION
    _emit(report, args.format, args.output)
    return code


# -- traffic-study ----------------------------------------------------------

def cmd_traffic_study(args) -> int:
    config = load_traffic(args.config or _default_config("traffic.yaml"), seed=args.seed)
    report = run_study(config)
    if args.format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["bin_low", "bin_high", "count"])
        edges = report.histogram_edges
        for lo, hi, count in zip(edges[:-1], edges[1:], report.histogram_counts):
            writer.writerow([f"{lo:.9f}", f"{hi:.9f}", int(count)])
        _write(buffer.getvalue(), args.output)
    else:
        _write(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", args.output)
    fit = report.fit
    wait = f"{fit.mean_interarrival:.4f} s" if fit is not None else "n/a"
    print(f"flagged {report.flagged} of {report.requests} requests; mean wait for a vulnerable clock {wait}",
          file=sys.stderr)
    return EXIT_OK


# -- chain-tool -------------------------------------------------------------

def _hex(value: str, name: str) -> bytes:
    try:
        return bytes.fromhex(value)
    except ValueError:
        raise UsageError(f"{name} is not valid hex") from None


def cmd_chain_tool(args) -> int:
    if args.action == "derive":
        if args.length < 1:
            raise UsageError("--length must be at least 1")
        if args.n_k % 8 or not 0 < args.n_k <= 256:
            raise UsageError("--n-k must be a multiple of 8 between 8 and 256")
        chain = derive_chain(args.chain_seed.encode(), args.length, args.n_k)
        if args.format == "csv":
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(["index", "key"])
            for i, key in enumerate(chain.keys):
                writer.writerow([i, key.hex()])
            _write(buffer.getvalue(), args.output)
            return EXIT_OK
        report = {"length": len(chain), "n_k": chain.n_k, "root": chain.root.hex()}
        if args.show_keys:
            report["keys"] = [k.hex() for k in chain.keys]
        _emit(report, args.format, args.output)
        return EXIT_OK
    ok = verify_key(_hex(args.key, "--key"), args.index, _hex(args.root, "--root"))
    _emit({"index": args.index, "valid": ok}, args.format, args.output)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"config file (relative names also searched in ${CONFIG_DIR_ENV})")
    common.add_argument("--output", "-o", help="output file (default stdout)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--format", choices=("csv", "json"), help="output format")

    parser = _Parser(prog="gictime", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sweep", parents=[common], help="run a (theta, delta) validation sweep")
    p.add_argument("--kind", choices=SWEEP_KINDS)
    p.add_argument("--summary", help="also write the JSON summary here")
    p.add_argument("--trace", help="write the event trace here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("sync-demo", parents=[common], help="one hardened exchange over loopback UDP")
    p.add_argument("--theta-big", type=float, default=1.0, help="key-disclosure delay, s")
    p.add_argument("--offset", type=float, default=0.0, help="true receiver offset, s (hidden unless revealed)")
    p.add_argument("--policy", choices=[x.value for x in AdjustmentPolicy], default="midpoint")
    p.add_argument("--drift-rate", type=float, default=1e-6)
    p.add_argument("--delay-request", type=float, default=0.0, help="hold the request leg, s")
    p.add_argument("--delay-response", type=float, default=0.0, help="hold the response leg, s")
    p.add_argument("--replay-shim", action="store_true", help="answer with a stale captured response")
    p.add_argument("--timeout", type=float, default=2.0)
    p.add_argument("--posture", choices=[x.value for x in TimeoutPosture], default="shutdown")
    p.add_argument("--lambda-slack", type=float, default=1.0)
    p.add_argument("--reveal-ground-truth", action="store_true", help="debug: print the true offset")
    p.set_defaults(func=cmd_sync_demo)

    p = sub.add_parser("multicadence", parents=[common], help="forgery region for two disclosure delays")
    p.add_argument("--theta-red", type=float, default=2.0)
    p.add_argument("--theta-blue", type=float, default=6.0)
    p.add_argument("--latency", type=float, default=0.0)
    p.set_defaults(func=cmd_multicadence)

    p = sub.add_parser("traffic-study", parents=[common], help="vulnerability study on synthetic traffic")
    p.set_defaults(func=cmd_traffic_study)

    p = sub.add_parser("chain-tool", help="derive or check TESLA key chains")
    actions = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    d = actions.add_parser("derive", parents=[common])
    d.add_argument("--chain-seed", required=True)
    d.add_argument("--length", type=int, required=True)
    d.add_argument("--n-k", type=int, default=128)
    d.add_argument("--show-keys", action="store_true")
    v = actions.add_parser("verify", parents=[common])
    v.add_argument("--key", required=True)
    v.add_argument("--index", type=int, required=True)
    v.add_argument("--root", required=True)
    p.set_defaults(func=cmd_chain_tool)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"gictime: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
