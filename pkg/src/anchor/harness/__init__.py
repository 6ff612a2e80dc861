"""Adversarial in-memory network, attack scenarios and the bounded explorer."""
from .deployment import Deployment, ManualClock, build_deployment
from .explorer import ExploreConfig, ExploreStats, Violation, explore_bounded, replay_trace
from .knowledge import Knowledge
from .network import LEMMAS, ActionKind, NetAction, World, check_properties
from .report import Assertion, Report
from .scenarios import SCENARIOS, ScenarioConfig, forge_after_recovery, run_scenario

__all__ = [
    "LEMMAS", "SCENARIOS", "ActionKind", "Assertion", "Deployment", "ExploreConfig", "ExploreStats",
    "Knowledge", "ManualClock", "NetAction", "Report", "ScenarioConfig", "Violation", "World",
    "build_deployment", "check_properties", "explore_bounded", "forge_after_recovery",
    "replay_trace", "run_scenario",
]
