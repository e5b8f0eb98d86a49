"""Scenario files: schema, parsing, validation.

A scenario is a TOML document describing one experiment: the hosts on
the segment, optional switch filtering, an optional attacker, an
optional ARP authority, and a timed script of actions and assertions.
Everything a run needs is in the file, so a scenario always replays to
the identical event log.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from ipaddress import IPv4Network
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .cache import PROFILE_NAMES
from .frames import CodecError, Ipv4Addr, MacAddr, ipv4
from .switch import ACL_PRESETS

ACTIONS = (
    "ping",
    "reconfigure",
    "start_server",
    "start_attack",
    "host_down",
    "host_up",
    "wait",
    "assert",
)

ASSERT_CHECKS = (
    "cache_maps",
    "cache_absent",
    "echo_replies",
    "spoof_listed",
    "spoof_list_empty",
    "server_maps",
    "alarm_count",
)


class ScenarioError(ValueError):
    """Scenario file rejected; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class SimSettings:
    link_delay: float = 0.001
    arp_timeout: float = 1.0
    arp_retries: int = 1


@dataclass(frozen=True)
class HostSpec:
    name: str
    ip: Ipv4Addr
    mac: MacAddr
    profile: str = "windows"
    static_entries: tuple[tuple[Ipv4Addr, MacAddr], ...] = ()
    suppress_arp_replies: bool = False


@dataclass(frozen=True)
class SwitchSpec:
    acl: str | None = None
    hold_down: float = 60.0
    aging: float = 300.0
    ports: tuple[tuple[int, str], ...] | None = None


@dataclass(frozen=True)
class AttackerSpec:
    name: str
    ip: Ipv4Addr
    mac: MacAddr
    victim_a: Ipv4Addr
    victim_b: Ipv4Addr
    repoison_interval: float = 10.0
    relay: bool = True
    prime_delay: float = 0.05
    learn_timeout: float = 2.0


@dataclass(frozen=True)
class ServerSpec:
    host: str
    started: bool = False
    manual_entries: tuple[tuple[Ipv4Addr, MacAddr], ...] = ()
    sweep: bool = False
    sweep_interval: float = 0.0
    subnet: str | None = None
    capacity: int = 254
    probe_timeout: float = 2.0
    probe_retries: int = 1
    flap_threshold: int = 3
    flap_window: float = 60.0


@dataclass(frozen=True)
class ScriptStep:
    at: float
    action: str
    fields: dict


@dataclass(frozen=True)
class Scenario:
    name: str
    hosts: tuple[HostSpec, ...]
    switch: SwitchSpec
    attacker: AttackerSpec | None
    server: ServerSpec | None
    script: tuple[ScriptStep, ...]
    sim: SimSettings = SimSettings()
    until: float | None = None
    allow_ip_conflicts: bool = False
    allow_mac_conflicts: bool = False

    def host(self, name: str) -> HostSpec:
        for spec in self.hosts:
            if spec.name == name:
                return spec
        raise KeyError(name)


class _Collector:
    """Accumulates parse errors so a bad file reports everything at once."""

    def __init__(self) -> None:
        self.errors: list[str] = []

    def add(self, message: str) -> None:
        self.errors.append(message)

    def mac(self, value, where: str) -> MacAddr | None:
        try:
            return MacAddr.parse(str(value))
        except CodecError as exc:
            self.add(f"{where}: {exc}")
            return None

    def ip(self, value, where: str) -> Ipv4Addr | None:
        try:
            return ipv4(str(value))
        except ValueError:
            self.add(f"{where}: invalid IPv4 address {value!r}")
            return None

    def number(self, value, where: str, minimum: float | None = None) -> float | None:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            self.add(f"{where}: expected a number, got {value!r}")
            return None
        if minimum is not None and value < minimum:
            self.add(f"{where}: must be >= {minimum}")
            return None
        return float(value)


def _parse_pairs(raw, where: str, errors: _Collector) -> tuple[tuple[Ipv4Addr, MacAddr], ...]:
    pairs = []
    if not isinstance(raw, list):
        errors.add(f"{where}: expected a list of [ip, mac] pairs")
        return ()
    for index, item in enumerate(raw):
        if not isinstance(item, list) or len(item) != 2:
            errors.add(f"{where}[{index}]: expected an [ip, mac] pair")
            continue
        ip = errors.ip(item[0], f"{where}[{index}].ip")
        mac = errors.mac(item[1], f"{where}[{index}].mac")
        if ip is not None and mac is not None:
            pairs.append((ip, mac))
    return tuple(pairs)


def _parse_hosts(raw, errors: _Collector) -> tuple[HostSpec, ...]:
    hosts = []
    if not isinstance(raw, list) or not raw:
        errors.add("hosts: at least one host is required")
        return ()
    for index, table in enumerate(raw):
        where = f"hosts[{index}]"
        if not isinstance(table, dict):
            errors.add(f"{where}: expected a table")
            continue
        name = table.get("name")
        if not isinstance(name, str) or not name:
            errors.add(f"{where}.name: required")
            continue
        ip = errors.ip(table.get("ip"), f"{where}.ip")
        mac = errors.mac(table.get("mac"), f"{where}.mac")
        profile = table.get("profile", "windows")
        if profile not in PROFILE_NAMES:
            errors.add(f"{where}.profile: unknown profile {profile!r}")
            continue
        static = _parse_pairs(table.get("static_entries", []), f"{where}.static_entries", errors)
        if ip is None or mac is None:
            continue
        hosts.append(
            HostSpec(
                name=name,
                ip=ip,
                mac=mac,
                profile=profile,
                static_entries=static,
                suppress_arp_replies=bool(table.get("suppress_arp_replies", False)),
            )
        )
    return tuple(hosts)


def _parse_switch(raw, errors: _Collector) -> SwitchSpec:
    if raw is None:
        return SwitchSpec()
    if not isinstance(raw, dict):
        errors.add("switch: expected a table")
        return SwitchSpec()
    acl = raw.get("acl")
    if acl is not None and acl not in ACL_PRESETS:
        errors.add(f"switch.acl: unknown preset {acl!r}, pick one of {list(ACL_PRESETS)}")
        acl = None
    hold_down = errors.number(raw.get("hold_down", 60.0), "switch.hold_down", 0.0)
    aging = errors.number(raw.get("aging", 300.0), "switch.aging", 0.0)
    ports = None
    if "ports" in raw:
        if not isinstance(raw["ports"], dict):
            errors.add("switch.ports: expected a table of port -> node name")
        else:
            parsed = []
            for key, value in raw["ports"].items():
                try:
                    number = int(key)
                except ValueError:
                    errors.add(f"switch.ports.{key}: port numbers must be integers")
                    continue
                parsed.append((number, str(value)))
            ports = tuple(sorted(parsed))
    return SwitchSpec(
        acl=acl,
        hold_down=hold_down if hold_down is not None else 60.0,
        aging=aging if aging is not None else 300.0,
        ports=ports,
    )


def _parse_attacker(raw, errors: _Collector) -> AttackerSpec | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        errors.add("attacker: expected a table")
        return None
    name = raw.get("name", "attacker")
    ip = errors.ip(raw.get("ip"), "attacker.ip")
    mac = errors.mac(raw.get("mac"), "attacker.mac")
    victim_a = errors.ip(raw.get("victim_a"), "attacker.victim_a")
    victim_b = errors.ip(raw.get("victim_b"), "attacker.victim_b")
    if None in (ip, mac, victim_a, victim_b):
        return None
    if victim_a == victim_b:
        errors.add("attacker: victim_a and victim_b must differ")
        return None
    if ip in (victim_a, victim_b):
        errors.add("attacker: cannot target its own address")
        return None
    return AttackerSpec(
        name=str(name),
        ip=ip,
        mac=mac,
        victim_a=victim_a,
        victim_b=victim_b,
        repoison_interval=raw.get("repoison_interval", 10.0),
        relay=bool(raw.get("relay", True)),
        prime_delay=raw.get("prime_delay", 0.05),
        learn_timeout=raw.get("learn_timeout", 2.0),
    )


def _parse_server(raw, errors: _Collector) -> ServerSpec | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        errors.add("server: expected a table")
        return None
    host = raw.get("host")
    if not isinstance(host, str) or not host:
        errors.add("server.host: required")
        return None
    subnet = raw.get("subnet")
    if subnet is not None:
        try:
            IPv4Network(str(subnet))
        except ValueError:
            errors.add(f"server.subnet: invalid network {subnet!r}")
            subnet = None
    return ServerSpec(
        host=host,
        started=bool(raw.get("started", False)),
        manual_entries=_parse_pairs(
            raw.get("manual_entries", []), "server.manual_entries", errors
        ),
        sweep=bool(raw.get("sweep", False)),
        sweep_interval=raw.get("sweep_interval", 0.0),
        subnet=str(subnet) if subnet is not None else None,
        capacity=int(raw.get("capacity", 254)),
        probe_timeout=raw.get("probe_timeout", 2.0),
        probe_retries=int(raw.get("probe_retries", 1)),
        flap_threshold=int(raw.get("flap_threshold", 3)),
        flap_window=raw.get("flap_window", 60.0),
    )


_ASSERT_REQUIRED = {
    "cache_maps": ("host", "ip", "mac"),
    "cache_absent": ("host", "ip"),
    "echo_replies": ("host",),
    "spoof_listed": ("mac",),
    "spoof_list_empty": (),
    "server_maps": ("ip", "mac"),
    "alarm_count": (),
}

_ACTION_REQUIRED = {
    "ping": ("from", "to"),
    "reconfigure": ("host",),
    "start_server": (),
    "start_attack": (),
    "host_down": ("host",),
    "host_up": ("host",),
    "wait": (),
    "assert": ("check",),
}


def _parse_script(raw, errors: _Collector) -> tuple[ScriptStep, ...]:
    steps = []
    if raw is None:
        return ()
    if not isinstance(raw, list):
        errors.add("script: expected an array of tables")
        return ()
    previous = None
    for index, table in enumerate(raw):
        where = f"script[{index}]"
        if not isinstance(table, dict):
            errors.add(f"{where}: expected a table")
            continue
        at = errors.number(table.get("at"), f"{where}.at", 0.0)
        action = table.get("action")
        if action not in ACTIONS:
            errors.add(f"{where}.action: unknown action {action!r}")
            continue
        if at is None:
            continue
        if previous is not None and at < previous:
            errors.add(f"{where}.at: script times must be non-decreasing")
        previous = at
        fields = {k: v for k, v in table.items() if k not in ("at", "action")}
        for required in _ACTION_REQUIRED[action]:
            if required not in fields:
                errors.add(f"{where}.{required}: required for action {action!r}")
        if action == "reconfigure" and not ("new_ip" in fields or "new_mac" in fields):
            errors.add(f"{where}: reconfigure needs new_ip and/or new_mac")
        if action == "assert":
            check = fields.get("check")
            if check not in ASSERT_CHECKS:
                errors.add(f"{where}.check: unknown check {check!r}")
            else:
                for required in _ASSERT_REQUIRED[check]:
                    if required not in fields:
                        errors.add(f"{where}.{required}: required for check {check!r}")
        steps.append(ScriptStep(at=at, action=str(action), fields=fields))
    return tuple(steps)


def _cross_validate(scenario: Scenario, errors: _Collector) -> None:
    names = [h.name for h in scenario.hosts]
    if scenario.attacker is not None:
        names.append(scenario.attacker.name)
    duplicates = {n for n in names if names.count(n) > 1}
    for name in sorted(duplicates):
        errors.add(f"hosts: node name {name!r} is not unique")

    ips = [h.ip for h in scenario.hosts]
    if scenario.attacker is not None:
        ips.append(scenario.attacker.ip)
    if not scenario.allow_ip_conflicts:
        seen: set = set()
        for ip in ips:
            if ip in seen:
                errors.add(
                    f"hosts: duplicate IP {ip} (set allow_ip_conflicts = true if intended)"
                )
            seen.add(ip)
    macs = [h.mac for h in scenario.hosts]
    if scenario.attacker is not None:
        macs.append(scenario.attacker.mac)
    if not scenario.allow_mac_conflicts:
        seen = set()
        for mac in macs:
            if mac in seen:
                errors.add(
                    f"hosts: duplicate MAC {mac} (set allow_mac_conflicts = true if intended)"
                )
            seen.add(mac)

    if scenario.server is not None and scenario.server.host not in [
        h.name for h in scenario.hosts
    ]:
        errors.add(f"server.host: {scenario.server.host!r} is not a defined host")

    if scenario.switch.acl is not None and scenario.server is None:
        errors.add("switch.acl: an ACL preset needs a [server] block to anchor its rules")

    if scenario.switch.ports is not None:
        port_names = [n for _, n in scenario.switch.ports]
        numbers = [p for p, _ in scenario.switch.ports]
        if sorted(port_names) != sorted(names):
            errors.add("switch.ports: must map every node exactly once")
        if len(set(numbers)) != len(numbers):
            errors.add("switch.ports: duplicate port numbers")

    host_names = set(names)
    for index, step in enumerate(scenario.script):
        where = f"script[{index}]"
        fields = step.fields
        if step.action == "ping":
            if fields.get("from") not in host_names:
                errors.add(f"{where}.from: unknown node {fields.get('from')!r}")
        if step.action in ("reconfigure", "host_down", "host_up"):
            if fields.get("host") not in host_names:
                errors.add(f"{where}.host: unknown node {fields.get('host')!r}")
        if step.action == "start_server" and scenario.server is None:
            errors.add(f"{where}: start_server without a [server] block")
        if step.action == "start_attack" and scenario.attacker is None:
            errors.add(f"{where}: start_attack without an [attacker] block")
        if step.action == "assert":
            host = fields.get("host")
            if host is not None and host not in host_names:
                errors.add(f"{where}.host: unknown node {host!r}")
            if fields.get("check") in ("spoof_listed", "spoof_list_empty", "server_maps", "alarm_count") and scenario.server is None:
                errors.add(f"{where}: check needs a [server] block")


def _resolve_ping_targets(scenario: Scenario, errors: _Collector) -> Scenario:
    """Ping targets may be host names; pin them to addresses at load time."""
    by_name = {h.name: h.ip for h in scenario.hosts}
    if scenario.attacker is not None:
        by_name[scenario.attacker.name] = scenario.attacker.ip
    steps = []
    for index, step in enumerate(scenario.script):
        if step.action == "ping":
            target = step.fields.get("to")
            if isinstance(target, str) and target in by_name:
                fields = dict(step.fields)
                fields["to"] = str(by_name[target])
                step = ScriptStep(step.at, step.action, fields)
            else:
                resolved = errors.ip(target, f"script[{index}].to")
                if resolved is None:
                    continue
        steps.append(step)
    return Scenario(
        name=scenario.name,
        hosts=scenario.hosts,
        switch=scenario.switch,
        attacker=scenario.attacker,
        server=scenario.server,
        script=tuple(steps),
        sim=scenario.sim,
        until=scenario.until,
        allow_ip_conflicts=scenario.allow_ip_conflicts,
        allow_mac_conflicts=scenario.allow_mac_conflicts,
    )


def parse_scenario(data: dict, name_hint: str = "scenario") -> Scenario:
    errors = _Collector()
    name = data.get("name", name_hint)
    sim_raw = data.get("sim", {})
    sim = SimSettings(
        link_delay=sim_raw.get("link_delay", 0.001),
        arp_timeout=sim_raw.get("arp_timeout", 1.0),
        arp_retries=int(sim_raw.get("arp_retries", 1)),
    )
    until = data.get("until")
    if until is not None:
        until = errors.number(until, "until", 0.0)
    scenario = Scenario(
        name=str(name),
        hosts=_parse_hosts(data.get("hosts"), errors),
        switch=_parse_switch(data.get("switch"), errors),
        attacker=_parse_attacker(data.get("attacker"), errors),
        server=_parse_server(data.get("server"), errors),
        script=_parse_script(data.get("script"), errors),
        sim=sim,
        until=until,
        allow_ip_conflicts=bool(data.get("allow_ip_conflicts", False)),
        allow_mac_conflicts=bool(data.get("allow_mac_conflicts", False)),
    )
    if not errors.errors:
        scenario = _resolve_ping_targets(scenario, errors)
        _cross_validate(scenario, errors)
    if errors.errors:
        raise ScenarioError(errors.errors)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError:
        raise ScenarioError([f"{path}: no such file"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError([f"{path}: {exc}"]) from None
    return parse_scenario(data, name_hint=path.stem)
