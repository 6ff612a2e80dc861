import json
import os
import signal
import subprocess
import sys

import pytest

from anchor.cli import main
from anchor.prg import Prg
from anchor.service.client import AnchorClient
from anchor.service.registry import RecordStatus, registry_load

KEY_HEX = "11" * 32


@pytest.fixture
def storage_key(monkeypatch):
    monkeypatch.setenv("ANCHOR_STORAGE_KEY", KEY_HEX)
    return bytes.fromhex(KEY_HEX)


def test_provision_prints_otk_once(tmp_path, storage_key, capsys):
    reg = tmp_path / "reg.jsonl"
    assert main(["provision", "--device", "s1", "--kind", "switch", "--registry", str(reg)]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1 and len(bytes.fromhex(out[0])) == 32
    rec = registry_load(reg, storage_key)["s1"]
    assert rec.status is RecordStatus.PROVISIONED and rec.k_long_term.hex() == out[0]


def test_provision_requires_storage_key(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("ANCHOR_STORAGE_KEY", raising=False)
    with pytest.raises(SystemExit):
        main(["provision", "--device", "s1", "--kind", "switch", "--registry", str(tmp_path / "r")])
    assert main(["provision", "--device", "s1", "--kind", "controller", "--test-mode",
                 "--registry", str(tmp_path / "r")]) == 0


def test_provision_with_entropy_script(tmp_path, storage_key, capsys):
    script = tmp_path / "e.hex"
    script.write_text("\n".join(f"{i:02x}{i * 3 % 256:02x}" for i in range(40)))
    outs = []
    for i in range(2):
        main(["provision", "--device", "s1", "--kind", "switch", "--registry", str(tmp_path / f"r{i}"),
              "--entropy-script", str(script)])
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]


def test_attack_text_and_json(capsys):
    assert main(["attack", "--scenario", "replay"]) == 0
    assert "scenario replay: PASS" in capsys.readouterr().out
    assert main(["attack", "--scenario", "tamper", "--flips", "200", "--encrypt", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_attack_mutant_fails(capsys):
    assert main(["attack", "--scenario", "replay", "--mutant", "no-counter-check"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_attack_unknown_scenario():
    with pytest.raises(SystemExit):
        main(["attack", "--scenario", "nope"])


def test_explore(capsys):
    assert main(["explore", "--depth", "2"]) == 0
    assert "0 violation(s)" in capsys.readouterr().out
    assert main(["explore", "--depth", "6", "--mutant", "reused-nonce", "--stop-at-first", "--json"]) == 1
    data = json.loads(capsys.readouterr().out)
    assert data["violations"][0]["lemma"] == "injective_agreement_device"
    assert data["violations"][0]["trace"]


def test_explore_depth_too_large(capsys):
    assert main(["explore", "--depth", "9"]) == 2
    assert "DepthTooLarge" in capsys.readouterr().err


def test_bench(capsys):
    assert main(["bench", "primitives", "--iters", "1000", "--json"]) == 0
    assert len(json.loads(capsys.readouterr().out)["rows"]) == 5
    assert main(["bench", "channel", "--msgs", "100", "--size", "32", "--mode", "sealed", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["overhead_bytes_per_message"] == 68
    assert main(["bench", "channel", "--msgs", "100", "--size", "32", "--mode", "plain"]) == 0
    assert "plain" in capsys.readouterr().out


def test_serve_end_to_end(tmp_path, storage_key, capsys):
    reg, policy = tmp_path / "reg.jsonl", tmp_path / "policy.json"
    policy.write_text(json.dumps([{"controller": "c*", "device": "s*", "allow": True}]))
    main(["provision", "--device", "s1", "--kind", "switch", "--registry", str(reg)])
    otk = bytes.fromhex(capsys.readouterr().out.strip())

    env = dict(os.environ, ANCHOR_STORAGE_KEY=KEY_HEX)
    proc = subprocess.Popen([sys.executable, "-m", "anchor", "serve", "--listen", "127.0.0.1:0",
                             "--registry", str(reg), "--policy", str(policy)],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env=env)
    try:
        line = proc.stdout.readline()
        assert line.startswith("listening on "), proc.stderr.read()
        addr = line.split()[-1]
        with AnchorClient(addr) as cl:
            k = cl.register("s1", otk, Prg.from_seed(bytes(32)))
    finally:
        proc.send_signal(signal.SIGTERM)
        assert proc.wait(timeout=10) == 0
    rec = registry_load(reg, storage_key)["s1"]
    assert rec.status is RecordStatus.ACTIVE and rec.k_long_term == k
