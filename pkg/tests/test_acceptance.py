"""End-to-end acceptance checks, one PASS/FAIL line per criterion."""

import random
import time
from fractions import Fraction as F
from pathlib import Path

import numpy as np
from scipy import stats

from gictime.adversary import (
    DelayPolicy,
    EavesdropObservation,
    TransitModel,
    forge_after_release,
    hardened_posterior_samples,
    infer_vulnerability,
    poisson_mle,
)
from gictime.clock import DriftBound, DriftPolicy, GicClock, drift_evolve
from gictime.config import load_scenario, load_traffic
from gictime.crypto import Signer
from gictime.multicadence import (
    CadencePair,
    ReceiverPolicy,
    forgery_conditions,
    forgery_region,
    simulate_scenario2_attack,
)
from gictime.net import leaks_time
from gictime.sim import (
    FORGERY_ACCEPTED,
    SAFE,
    SYNC_REFUSED,
    EventLoop,
    SimulatedChannel,
    boundary_agreement,
    run_sweep,
    to_csv,
)
from gictime.tesla import ReceiptVerdict, authenticate, build_instance, derive_chain
from gictime.timesync import (
    AdjustmentPolicy,
    CertificationState,
    SyncRecord,
    SyncRefused,
    TimeServer,
    certify_clock_safety,
    measure_exchange,
    next_sync_time,
    run_synchronization,
    select_adjustment,
    theta_bounds,
)
from gictime.traffic import run_study
from conftest import s

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
TIME_LIMIT = 10.0
CASES = 10_000
_runs: dict[str, tuple[object, list, float]] = {}


def shipped(name):
    """Run a shipped sweep once per session; returns (config, outcomes, seconds)."""
    if name not in _runs:
        config = load_scenario(CONFIGS / f"{name}.yaml")
        start = time.perf_counter()
        outcomes = run_sweep(config)
        _runs[name] = (config, outcomes, time.perf_counter() - start)
    return _runs[name]


def test_criterion_1_receipt_sweep(criterion):
    config, outcomes, elapsed = shipped("receipt_safety")
    lag = config.receipt_lag_bound
    half = F(config.theta_big, 2)
    in_window = [o for o in outcomes if -half + lag < o.theta < half and o.classification == FORGERY_ACCEPTED]
    compliant = [o for o in outcomes if o.theta > -lag and o.classification == FORGERY_ACCEPTED]
    boundary = boundary_agreement(outcomes, config)
    ok = not in_window and not compliant and boundary["within_one_step"] and elapsed < TIME_LIMIT
    criterion(1, ok, f"{len(outcomes)} points, accepted forgeries in window {len(in_window)}, "
                     f"with compliant clock {len(compliant)}, boundary max deviation "
                     f"{boundary['max_deviation']} s (step {boundary['grid_step']}), {elapsed:.2f} s")
    assert ok


def test_criterion_2_clock_sweep(criterion):
    config, outcomes, elapsed = shipped("clock_safety")
    half = F(config.theta_big, 2)
    margin = 2 * config.base_latency
    certified = {SAFE, FORGERY_ACCEPTED}
    misses = [o for o in outcomes if o.theta < -half and o.classification in certified]
    honest = [o for o in outcomes if o.delta == 0 and -half + margin < o.theta < half - margin]
    refused = [o for o in honest if o.classification not in certified]
    ok = not misses and honest and not refused and elapsed < TIME_LIMIT
    criterion(2, ok, f"lagging clocks certified safe {len(misses)}, honest in-margin clocks rejected "
                     f"{len(refused)} of {len(honest)}, {elapsed:.2f} s")
    assert ok


def test_criterion_3_post_sync_sweep(criterion):
    config, outcomes, elapsed = shipped("post_sync")
    half = F(config.theta_big, 2)
    short = [o for o in outcomes if o.delta < config.theta_big]
    long = [o for o in outcomes if o.delta >= config.theta_big]
    bad_short = [o for o in short if o.classification == SYNC_REFUSED or not -half < o.post_sync_theta < half]
    bad_long = [o for o in long if o.classification != SYNC_REFUSED or o.post_sync_theta != o.theta]
    spread = 0
    for delta in config.delta_grid:
        finals = [o.post_sync_theta for o in short if o.delta == delta and o.policy == "midpoint"]
        if finals:
            spread = max(spread, max(finals) - min(finals))
    ok = not bad_short and not bad_long and spread <= 1 and elapsed < TIME_LIMIT
    criterion(3, ok, f"short-delay violations {len(bad_short)}, long-delay non-refusals {len(bad_long)}, "
                     f"midpoint spread {spread} ns, {elapsed:.2f} s")
    assert ok


def _bound_containment(rng):
    violations = 0
    for _ in range(CASES):
        theta = rng.randint(-s(100), s(100))
        t1 = rng.randint(0, s(10**6))
        latency, processing = rng.randint(0, s(1)), rng.randint(0, s(1))
        d12, d34 = rng.randint(0, s(50)), rng.randint(0, s(50))
        t2 = t1 + latency + d12
        t3 = t2 + processing
        t4 = t3 + latency + d34
        lo, hi = theta_bounds(SyncRecord(t1 + theta, t2, t3, t4 + theta))
        violations += not lo <= theta <= hi
    return violations


def _random_bound(rng):
    if rng.random() < 0.5:
        return DriftBound.linear(rng.uniform(0, 1e-3))
    return DriftBound.affine(rng.uniform(0, 0.05), rng.uniform(0, 1e-3))


def _certification_soundness(rng, provider, receiver):
    violations = 0
    theta_big = s(1)
    for i in range(CASES):
        latency = rng.randint(0, s(0.1))
        server = TimeServer(provider, processing=rng.randint(0, s(0.05)))
        policy_delays = {"delta_12": rng.randint(0, s(3)), "delta_34": rng.randint(0, s(3))}
        channel = SimulatedChannel(EventLoop(s(100)), server, DelayPolicy(**policy_delays), latency)
        clock = GicClock(rng.randint(-s(3), -theta_big // 2 - 1))
        record = measure_exchange(channel, clock, provider.verifier, receiver, i.to_bytes(16, "big"))
        bound = _random_bound(rng)
        elapsed = rng.randint(0, s(1000))
        clock = drift_evolve(clock, elapsed, bound, DriftPolicy.LAGGING)
        cert = certify_clock_safety(CertificationState(record, bound, record.t3), record.t3 + elapsed, theta_big)
        violations += cert.safe
    return violations


def _sync_soundness(rng, provider, receiver):
    violations = refused = 0
    theta_big = s(1)
    half = F(theta_big, 2)
    for i in range(CASES):
        latency = rng.randint(0, s(0.1))
        server = TimeServer(provider, processing=rng.randint(0, s(0.05)))
        delays = DelayPolicy(delta_12=rng.randint(0, s(0.6)), delta_34=rng.randint(0, s(0.6)))
        channel = SimulatedChannel(EventLoop(s(100)), server, delays, latency)
        theta = rng.randint(-s(3), s(3))
        clock = GicClock(theta)
        policy = rng.choice(list(AdjustmentPolicy))
        try:
            result = run_synchronization(channel, clock, provider.verifier, theta_big, _random_bound(rng),
                                         receiver, policy, nonce=i.to_bytes(16, "big"))
        except SyncRefused:
            refused += 1
            violations += clock.theta != theta
            continue
        violations += not -half < result.clock.theta < half
    return violations, refused


def _forgery_exclusion(rng):
    violations = 0
    chain = derive_chain(b"acceptance", 2)
    for _ in range(CASES):
        theta_big = rng.randint(s(0.01), s(10))
        inst = build_instance(chain, [b"authentic"], s(100), theta_big, theta_big)
        item = inst.tuple_for(1)
        lag_bound = rng.randint(1, theta_big)
        theta = rng.randint(-lag_bound + 1, theta_big)
        latency = rng.randint(0, s(0.1))
        # the forged commitment cannot leave the adversary before the key is out
        sent_h = item.t_k + rng.randint(0, 3 * theta_big)
        sent_m = item.t_m + latency + rng.randint(0, 3 * theta_big)
        forged = forge_after_release(inst, 1, chain.keys[1], b"spoof", sent_h)
        receipt = (sent_m + theta, sent_h + latency + theta)
        verdict = authenticate(forged, chain.keys[1], chain.root, lag_bound, receipt, len(chain))
        violations += verdict is ReceiptVerdict.AUTHENTIC
    return violations


def test_criterion_4_property_suites(criterion):
    provider, receiver = Signer.from_seed("acc-provider"), Signer.from_seed("acc-receiver")
    a = _bound_containment(random.Random(401))
    b = _certification_soundness(random.Random(402), provider, receiver)
    c, refused = _sync_soundness(random.Random(403), provider, receiver)
    d = _forgery_exclusion(random.Random(404))
    ok = a == b == c == d == 0
    criterion(4, ok, f"{CASES} cases each; violations: containment {a}, certification {b}, "
                     f"synchronization {c} ({refused} refused), forgery exclusion {d}")
    assert ok


def test_criterion_5_multicadence(criterion):
    pair = CadencePair(2, 6)
    region = forgery_region(pair)
    exact = region.vertices == ((F(-1), F(2)), (F(-3), F(2)), (F(-3), F(4))) and region.centroid == (F(-7, 3), F(8, 3))
    conditions = forgery_conditions(*region.centroid, pair)

    ns_pair = CadencePair(s(2), s(6))
    theta, delta = (int(v * 10**9) for v in region.centroid)
    start = s(10)
    fast = simulate_scenario2_attack(ns_pair, theta, delta, ReceiverPolicy.FAST_ONLY, start=start)
    both = simulate_scenario2_attack(ns_pair, theta, delta, ReceiverPolicy.FAST_AND_SLOW, start=start)
    blue_release = start + ns_pair.theta_blue + delta

    rng = random.Random(505)
    violations = 0
    (t1, d1), (t2, d2), (t3, d3) = region.vertices
    for _ in range(CASES):
        w = [F(rng.randint(1, 10**6)) for _ in range(3)]
        total = sum(w)
        point = ((w[0] * t1 + w[1] * t2 + w[2] * t3) / total, (w[0] * d1 + w[1] * d2 + w[2] * d3) / total)
        violations += not all(forgery_conditions(*point, pair).values())
    ok = (exact and all(conditions.values()) and fast.accepted and not both.accepted
          and both.detected_at == blue_release and violations == 0)
    criterion(5, ok, f"vertices/centroid exact {exact}, centroid conditions {sum(conditions.values())}/4, "
                     f"fast-only accepted {fast.accepted}, fast-and-slow detected at blue release "
                     f"{both.detected_at == blue_release}, sampled violations {violations}")
    assert ok


def test_criterion_6_poisson_study(criterion):
    rng = np.random.default_rng(606)
    times = np.cumsum(rng.exponential(0.57, 100_000))
    direct = poisson_mle(times).mean_interarrival

    config = load_traffic(CONFIGS / "traffic.yaml")
    report = run_study(config)
    study = report.fit.mean_interarrival
    flagged_exactly = report.flagged == report.flagged_by_population["vulnerable"] == config.vulnerable_events
    example = infer_vulnerability(EavesdropObservation(t2a=s(1000), tau1=s(1000) - s(3.2)), TransitModel(), s(6))
    ok = (abs(direct / 0.57 - 1) <= 0.02 and abs(study / 0.57 - 1) <= 0.02 and flagged_exactly
          and report.false_accusations == 0 and report.threshold == -3.1 and example == 0.99)
    criterion(6, ok, f"mean gap {direct:.4f} s direct, {study:.4f} s from study; flagged {report.flagged} "
                     f"of {config.vulnerable_events} planted, false accusations {report.false_accusations}, "
                     f"threshold {report.threshold} s")
    assert ok


def test_criterion_7_hardened_opacity(criterion):
    provider, receiver = Signer.from_seed("acc-provider"), Signer.from_seed("acc-receiver")
    nonce = bytes.fromhex("7a" * 16)
    payloads, leaks = set(), 0
    rng = random.Random(707)
    starts = rng.sample(range(s(1), s(10**6)), 1_000)
    for start in starts:
        sent = []
        channel = SimulatedChannel(EventLoop(start), TimeServer(provider))
        clock = GicClock(rng.randint(-s(5), s(5)))
        record = measure_exchange(channel, clock, provider.verifier, receiver, nonce, on_request=sent.append)
        payloads.add(sent[0])
        leaks += leaks_time(sent[0], record.tau1)

    lam, theta_big = 1.5, s(1)
    theta, observed = hardened_posterior_samples(100_000, s(10**5), lam, theta_big, s(5), random.Random(708))
    width = 2 * lam * theta_big
    residual = (observed - theta) / width
    ks = stats.kstest(residual, "uniform").statistic
    ok = len(payloads) == 1 and leaks == 0 and ks < 0.02 and residual.min() > 0 and residual.max() < 1
    criterion(7, ok, f"{len(starts)} send times gave {len(payloads)} distinct request(s), {leaks} leaks; "
                     f"posterior KS deviation {ks:.4f} over 100000 samples")
    assert ok


def test_criterion_8_next_sync_solver(criterion):
    rng = random.Random(808)
    theta_big = s(1)
    worst = 0
    compared = 0
    while compared < 1_000:
        lag, lead = rng.randint(0, s(0.49)), rng.randint(0, s(0.49))
        record = SyncRecord(0, lag, lag, lag + lead)
        try:
            delta = select_adjustment(record, theta_big, rng.choice(list(AdjustmentPolicy)))
        except SyncRefused:
            continue
        bound = _random_bound(rng)
        closed = next_sync_time(record, delta, theta_big, bound, record.t3, "closed")
        bisect = next_sync_time(record, delta, theta_big, bound, record.t3, "bisect")
        if (closed is None) != (bisect is None):
            worst = float("inf")
        elif closed is not None:
            worst = max(worst, abs(closed - bisect))
        compared += 1

    example = SyncRecord(0, s(0.05), s(0.05), s(0.10))
    hand = example.t3 + s(450_000)
    closed = next_sync_time(example, 0, theta_big, DriftBound.linear(1e-6), example.t3, "closed")
    bisect = next_sync_time(example, 0, theta_big, DriftBound.linear(1e-6), example.t3, "bisect")
    ok = worst <= 1_000 and closed == hand and abs(bisect - hand) <= 1_000
    criterion(8, ok, f"{compared} records, worst closed/bisect gap {worst} ns; example closed "
                     f"{closed - example.t3} ns, bisect {bisect - example.t3} ns after sync")
    assert ok


def test_criterion_9_determinism(criterion):
    names = ("receipt_safety", "clock_safety", "post_sync", "multicadence")
    identical = []
    for name in names:
        config, first, _ = shipped(name)
        identical.append(to_csv(first).encode() == to_csv(run_sweep(config)).encode())
    ok = all(identical)
    criterion(9, ok, ", ".join(f"{n} {'identical' if same else 'DIFFERS'}" for n, same in zip(names, identical)))
    assert ok
