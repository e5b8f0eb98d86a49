"""Deterministic layer-2 LAN simulator for ARP spoofing attacks and defenses."""

from .attacker import Attacker, MitmPlan
from .cache import ArpCache, CacheEffect, CacheEntry, CachePolicy, EntryKind, PROFILE_NAMES
from .engine import EventLog, Simulation, run_scenario
from .frames import (
    ArpPacket,
    BROADCAST_MAC,
    CodecError,
    EtherFrame,
    IcmpEcho,
    MacAddr,
    MalformedArpError,
    TruncatedFrameError,
    ZERO_MAC,
    arp_frame,
    arp_reply,
    arp_request,
    icmp_frame,
    ipv4,
)
from .host import Host, HostConfig
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .server import ArpServer, SpoofRecord, TableFullError
from .switch import AclAction, AclRule, Switch, acl_preset, evaluate_acl

__all__ = [
    "AclAction",
    "AclRule",
    "ArpCache",
    "ArpPacket",
    "ArpServer",
    "Attacker",
    "BROADCAST_MAC",
    "CacheEffect",
    "CacheEntry",
    "CachePolicy",
    "CodecError",
    "EntryKind",
    "EtherFrame",
    "EventLog",
    "Host",
    "HostConfig",
    "IcmpEcho",
    "MacAddr",
    "MalformedArpError",
    "MitmPlan",
    "PROFILE_NAMES",
    "Scenario",
    "ScenarioError",
    "Simulation",
    "SpoofRecord",
    "Switch",
    "TableFullError",
    "TruncatedFrameError",
    "ZERO_MAC",
    "acl_preset",
    "arp_frame",
    "arp_reply",
    "arp_request",
    "evaluate_acl",
    "icmp_frame",
    "ipv4",
    "load_scenario",
    "parse_scenario",
    "run_scenario",
]
