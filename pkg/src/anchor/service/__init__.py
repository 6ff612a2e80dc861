"""The central mediator: registry, policy and the TCP server.

``server`` and ``client`` are not imported here because they depend on the
protocol package, which itself depends on :mod:`anchor.service.registry`.
"""
from .policy import PolicyRule, authorize, load_policy
from .registry import DeviceRecord, Kind, Registry, RecordStatus, registry_append, registry_load

__all__ = ["DeviceRecord", "Kind", "PolicyRule", "RecordStatus", "Registry", "authorize",
           "load_policy", "registry_append", "registry_load"]
