import json

import pytest

from anchor.service.policy import PolicyRule, authorize, load_policy


def test_default_deny():
    assert authorize([], "c1", "s1") is False


def test_glob_allow():
    assert authorize([PolicyRule("c*", "s*", True)], "c1", "s9") is True
    assert authorize([PolicyRule("c*", "s*", True)], "x1", "s9") is False


def test_first_match_wins():
    rules = [PolicyRule("c1", "s1", False), PolicyRule("c*", "*", True)]
    assert authorize(rules, "c1", "s1") is False
    assert authorize(rules, "c1", "s2") is True


def test_load_policy(tmp_path):
    path = tmp_path / "policy.json"
    path.write_text(json.dumps([{"controller": "c1", "device": "s1", "allow": False},
                                {"controller": "*", "device": "*", "allow": True}]))
    rules = load_policy(path)
    assert rules == [PolicyRule("c1", "s1", False), PolicyRule("*", "*", True)]


@pytest.mark.parametrize("text", ['{"controller": "c"}', '[{"controller": "c"}]', "[1]"])
def test_load_policy_malformed(tmp_path, text):
    path = tmp_path / "policy.json"
    path.write_text(text)
    with pytest.raises(ValueError):
        load_policy(path)
