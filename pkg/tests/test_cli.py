import json
from pathlib import Path

import pytest

import gictime.tesla
from gictime.cli import EXIT_OK, EXIT_REGRESSION, EXIT_USAGE, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SMALL_SWEEP = """version: 1
kind: receipt_safety
theta_big: 1.0
base_latency: 0.01
seed: 7
theta_grid: [-0.6, -0.4, 0.0, 0.6]
delta_grid: [0.0, 0.9, 1.0]
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(SMALL_SWEEP)
    return path


def test_sweep_writes_csv(small, tmp_path):
    out = tmp_path / "out.csv"
    assert main(["sweep", "--config", str(small), "-o", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("theta,delta,policy,classification")
    assert len(lines) == 1 + 12
    assert "-0.600000000,1.000000000,,forgery_accepted" in out.read_text()


def test_sweep_outputs_byte_identical(small, tmp_path):
    paths = []
    for name in ("a", "b"):
        out, trace, summary = (tmp_path / f"{name}.{ext}" for ext in ("csv", "trace", "json"))
        assert main(["sweep", "--config", str(small), "-o", str(out), "--trace", str(trace),
                     "--summary", str(summary)]) == EXIT_OK
        paths.append((out, trace, summary))
    for first, second in zip(*paths):
        assert first.read_bytes() == second.read_bytes()


def test_sweep_json_summary(small, capsys):
    assert main(["sweep", "--config", str(small), "--format", "json"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["points"] == 12 and summary["safety_regressions"] == 0


def test_faulty_receipt_check_trips_regression_guard(small, monkeypatch):
    monkeypatch.setattr(gictime.tesla, "receipt_safety_check", lambda *args, **kw: True)
    assert main(["sweep", "--config", str(small), "-o", "/dev/null"]) == EXIT_REGRESSION


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "nope.yaml")]) == EXIT_USAGE
    assert "cannot read" in capsys.readouterr().err


def test_broken_config_is_usage_error(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text(SMALL_SWEEP + "typo_key: 1\n")
    assert main(["sweep", "--config", str(path)]) == EXIT_USAGE


def test_sweep_without_config_or_env(monkeypatch):
    monkeypatch.delenv("GICTIME_CONFIG_DIR", raising=False)
    assert main(["sweep", "--kind", "receipt-safety"]) == EXIT_USAGE
    assert main(["sweep"]) == EXIT_USAGE


def test_default_config_from_env(tmp_path, monkeypatch):
    (tmp_path / "receipt_safety.yaml").write_text(SMALL_SWEEP)
    monkeypatch.setenv("GICTIME_CONFIG_DIR", str(tmp_path))
    out = tmp_path / "o.csv"
    assert main(["sweep", "--kind", "receipt-safety", "-o", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 13


@pytest.mark.parametrize("argv", [["frobnicate"], ["sweep", "--bogus"], ["sync-demo", "--policy", "sideways"], []])
def test_unknown_arguments_exit_one(argv):
    with pytest.raises(SystemExit) as err:
        main(argv)
    assert err.value.code == EXIT_USAGE


def test_shipped_multicadence_sweep_clean(tmp_path):
    assert main(["sweep", "--config", str(CONFIGS / "multicadence.yaml"), "-o", str(tmp_path / "m.csv")]) == EXIT_OK


# -- sync-demo --------------------------------------------------------------

def demo(capsys, *extra):
    code = main(["sync-demo", "--format", "json", "--seed", "1", *extra])
    return code, json.loads(capsys.readouterr().out)


def test_sync_demo_accepts(capsys):
    code, report = demo(capsys, "--offset", "-0.2")
    assert code == EXIT_OK and report["status"] == "accepted"
    assert report["request_carries_send_time"] == "no"
    assert "true_offset_before" not in report
    assert report["theta_bounds"].startswith("[")


def test_sync_demo_reveals_truth_on_request(capsys):
    code, report = demo(capsys, "--offset", "-0.2", "--reveal-ground-truth")
    assert report["true_offset_before"] == "-0.200000000"


def test_sync_demo_refuses_long_request_delay(capsys):
    code, report = demo(capsys, "--delay-request", "1.0")
    assert code == EXIT_OK and report["status"] == "refused"
    assert "SyncRefused" in report["detail"]


def test_sync_demo_replay(capsys):
    code, report = demo(capsys, "--replay-shim")
    assert report["status"] == "invalid" and "ResponseInvalid" in report["detail"]


def test_sync_demo_timeout_posture(capsys, monkeypatch):
    import gictime.net
    monkeypatch.setattr(gictime.net.UdpChannel, "exchange", lambda self, request: None)
    code, report = demo(capsys, "--posture", "randomized-retry")
    assert report["status"] == "timeout" and "randomized-retry" in report["detail"]
    assert "retry_at" in report


def test_sync_demo_bad_arguments():
    assert main(["sync-demo", "--theta-big", "0"]) == EXIT_USAGE
    assert main(["sync-demo", "--lambda-slack", "0.5"]) == EXIT_USAGE


# -- multicadence, traffic, chain -------------------------------------------

def test_multicadence_report(capsys):
    assert main(["multicadence", "--format", "json"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["centroid"] == "(-7/3, 8/3)"
    assert report["vertices"] == ["(-1, 2)", "(-3, 2)", "(-3, 4)"]
    assert report["attack_fast-only"] == "accepted"
    assert report["attack_fast-and-slow"].startswith("detected")


def test_multicadence_empty_region(capsys):
    assert main(["multicadence", "--theta-red", "3", "--theta-blue", "3", "--format", "json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["region"] == "empty"


def test_traffic_study(tmp_path, capsys):
    path = tmp_path / "t.yaml"
    path.write_text("version: 1\nseed: 2\nvulnerable: {events: 2000}\n")
    assert main(["traffic-study", "--config", str(path)]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["flagged"] == 2000 and report["false_accusations"] == 0
    assert main(["traffic-study", "--config", str(path), "--format", "csv"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("bin_low,bin_high,count\n")


def test_chain_tool_round_trip(capsys):
    assert main(["chain-tool", "derive", "--chain-seed", "abc", "--length", "4", "--show-keys", "--format", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["root"] == report["keys"][0]
    assert main(["chain-tool", "verify", "--key", report["keys"][3], "--index", "3", "--root", report["root"],
                 "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["valid"] is True
    assert main(["chain-tool", "verify", "--key", report["keys"][2], "--index", "3", "--root", report["root"],
                 "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["valid"] is False


def test_chain_tool_rejects_bad_input():
    assert main(["chain-tool", "derive", "--chain-seed", "a", "--length", "0"]) == EXIT_USAGE
    assert main(["chain-tool", "derive", "--chain-seed", "a", "--length", "2", "--n-k", "12"]) == EXIT_USAGE
    assert main(["chain-tool", "verify", "--key", "zz", "--index", "1", "--root", "00"]) == EXIT_USAGE
