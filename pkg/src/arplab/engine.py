"""Deterministic discrete-event kernel and scenario runner.

Virtual time advances only when an event fires.  Events live in a heap
keyed by (time, priority, sequence), where the sequence number is the
order of scheduling, so simultaneous events always fire in a stable
order and a scenario replays to a byte-identical log.  Frames take one
fixed propagation delay from node to switch and another from switch to
node; there is no other latency and no randomness anywhere.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from ipaddress import IPv4Network

from .attacker import Attacker, MitmPlan
from .cache import CachePolicy
from .frames import (
    ETHERTYPE_ARP,
    ETHERTYPE_IPV4,
    CodecError,
    EtherFrame,
    IcmpEcho,
    ICMP_ECHO_REQUEST,
    Ipv4Addr,
    MacAddr,
    ipv4,
)
from .host import Host, HostConfig
from .scenario import Scenario, ScriptStep
from .server import ArpServer
from .switch import Switch, acl_preset

_US = 1_000_000


def _to_us(seconds: float) -> int:
    return int(round(seconds * _US))


class EventLog:
    """Append-only run record; one dict per event, sequenced."""

    def __init__(self) -> None:
        self.records: list[dict] = []

    def append(self, kind: str, virtual_time: float, **fields) -> dict:
        record = {"seq": len(self.records), "virtual_time": virtual_time, "kind": kind}
        for key, value in fields.items():
            if value is not None:
                record[key] = value
        self.records.append(record)
        return record

    def of_kind(self, *kinds: str) -> list[dict]:
        return [r for r in self.records if r["kind"] in kinds]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def to_text(self) -> str:
        lines = []
        for r in self.records:
            extras = " ".join(
                f"{k}={v}" for k, v in r.items() if k not in ("seq", "virtual_time", "kind")
            )
            lines.append(f"{r['virtual_time']:>12.6f}  {r['kind']:<13} {extras}")
        return "\n".join(lines) + "\n"


@dataclass
class _Node:
    name: str
    port: int
    host: Host | None = None
    attacker: Attacker | None = None
    server: ArpServer | None = None


class _Timers:
    """Per-node scheduling facade handed to the protocol objects."""

    def __init__(self, sim: "Simulation", origin: str):
        self._sim = sim
        self._origin = origin

    def call_at(self, at: float, fn) -> None:
        origin = self._origin

        def fire(now: float) -> None:
            self._sim._emit_all(origin, fn(now))

        self._sim._schedule(at, fire)


class Simulation:
    """One scenario wired up and ready to run."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.log = EventLog()
        self.failures = 0
        self._now_us = 0
        self._event_seq = 0
        self._next_frame_id = 0
        self._queue: list[tuple[int, int, int, object]] = []
        self._nodes: dict[str, _Node] = {}
        self._ports: dict[int, _Node] = {}
        self.server: ArpServer | None = None
        self._server_host: Host | None = None
        self._build()

    # -- construction ----------------------------------------------------

    @property
    def now(self) -> float:
        return self._now_us / _US

    def _recorder(self, kind: str, **fields) -> None:
        self.log.append(kind, self.now, **fields)

    def _build(self) -> None:
        scn = self.scenario
        sim = scn.sim
        self._link_delay = sim.link_delay

        names = [h.name for h in scn.hosts]
        if scn.attacker is not None:
            names.append(scn.attacker.name)

        preset = None
        server_name = scn.server.host if scn.server is not None else None
        if scn.switch.acl is not None:
            server_spec = scn.host(server_name)
            preset = acl_preset(scn.switch.acl, server_spec.mac)

        if scn.switch.ports is not None:
            ordered = [name for _, name in sorted(scn.switch.ports)]
        else:
            ordered = names
        self.switch = Switch.for_nodes(
            ordered,
            preset=preset,
            server=server_name,
            hold_down=scn.switch.hold_down,
            aging=scn.switch.aging,
            recorder=self._recorder,
        )

        for spec in scn.hosts:
            config = HostConfig(
                name=spec.name,
                ip=spec.ip,
                mac=spec.mac,
                policy=CachePolicy.for_profile(spec.profile),
                static_entries=spec.static_entries,
                suppress_arp_replies=spec.suppress_arp_replies,
            )
            host = Host(
                config,
                timers=_Timers(self, spec.name),
                recorder=self._recorder,
                arp_timeout=sim.arp_timeout,
                arp_retries=sim.arp_retries,
            )
            port = self.switch.port_of(spec.name)
            node = _Node(spec.name, port, host=host)
            self._nodes[spec.name] = node
            self._ports[port] = node

        if scn.attacker is not None:
            spec = scn.attacker
            attacker = Attacker(
                spec.name,
                spec.ip,
                spec.mac,
                timers=_Timers(self, spec.name),
                recorder=self._recorder,
            )
            port = self.switch.port_of(spec.name)
            node = _Node(spec.name, port, attacker=attacker)
            self._nodes[spec.name] = node
            self._ports[port] = node
            self.attacker: Attacker | None = attacker
        else:
            self.attacker = None

        if scn.server is not None:
            spec = scn.server
            server_node = self._nodes[spec.host]
            host = server_node.host
            server = ArpServer(
                host_ip=host.ip,
                host_mac=host.mac,
                capacity=spec.capacity,
                probe_timeout=spec.probe_timeout,
                probe_retries=spec.probe_retries,
                flap_threshold=spec.flap_threshold,
                flap_window=spec.flap_window,
                timers=_Timers(self, spec.host),
                recorder=self._recorder,
            )
            for ip, mac in spec.manual_entries:
                server.add_manual(ip, mac)
            server_node.server = server
            self.server = server
            self._server_host = host
            if spec.started:
                self._schedule(0.0, lambda now: self._start_server(now))

        self._ping_ident = 0
        for step in scn.script:
            self._schedule_step(step)

    # -- scheduling --------------------------------------------------------

    def _schedule(self, at: float, fn, priority: int = 0) -> None:
        at_us = _to_us(at)
        if at_us < self._now_us:
            at_us = self._now_us
        heapq.heappush(self._queue, (at_us, priority, self._event_seq, fn))
        self._event_seq += 1

    def _emit_all(self, origin: str, frames) -> None:
        for frame in frames or ():
            self.transmit(origin, frame)

    # -- frame path ----------------------------------------------------------

    def _describe(self, frame: EtherFrame) -> dict:
        fields: dict = {
            "src": str(frame.src),
            "dst": str(frame.dst),
            "ethertype": f"0x{frame.ethertype:04x}",
        }
        if frame.ethertype == ETHERTYPE_ARP:
            try:
                packet = frame.arp()
            except CodecError:
                fields["proto"] = "malformed-arp"
                return fields
            fields.update(
                proto="arp",
                op=packet.op,
                sender_ip=str(packet.sender_ip),
                sender_mac=str(packet.sender_mac),
                target_ip=str(packet.target_ip),
                target_mac=str(packet.target_mac),
            )
        elif frame.ethertype == ETHERTYPE_IPV4:
            try:
                echo = frame.icmp()
            except CodecError:
                fields["proto"] = "malformed-ipv4"
                return fields
            fields.update(
                proto="icmp",
                icmp_kind=echo.kind,
                src_ip=str(echo.src_ip),
                dst_ip=str(echo.dst_ip),
                ident=echo.ident,
                echo_seq=echo.seq,
            )
        else:
            fields["proto"] = "other"
            fields["payload_len"] = len(frame.payload)
        return fields

    def transmit(self, origin: str, frame: EtherFrame) -> int:
        """Put one frame on the wire from the named node."""
        node = self._nodes[origin]
        frame_id = self._next_frame_id
        self._next_frame_id += 1
        is_attacker = node.attacker is not None
        self.log.append(
            "frame_tx",
            self.now,
            frame_id=frame_id,
            origin=origin,
            port=node.port,
            attacker_origin=is_attacker,
            **self._describe(frame),
        )
        arrival_port = node.port

        def ingress(now: float) -> None:
            deliveries = self.switch.ingress(arrival_port, frame, now, frame_id)
            for out_port, out_frame in deliveries:
                self._schedule(
                    now + self._link_delay,
                    lambda at, p=out_port, f=out_frame: self._deliver(p, f, frame_id, at),
                )

        self._schedule(self.now + self._link_delay, ingress)
        return frame_id

    def _deliver(self, port: int, frame: EtherFrame, frame_id: int, now: float) -> None:
        node = self._ports[port]
        self.log.append(
            "frame_rx",
            now,
            frame_id=frame_id,
            node=node.name,
            port=port,
            dst=str(frame.dst),
            src=str(frame.src),
        )
        if node.host is not None:
            if not node.host.up:
                return
            self._emit_all(node.name, node.host.handle_frame(frame, now))
            if node.server is not None and frame.ethertype == ETHERTYPE_ARP:
                self._emit_all(node.name, node.server.handle_frame(frame, now, frame_id))
        elif node.attacker is not None:
            self._emit_all(node.name, node.attacker.handle_frame(frame, now))

    # -- script actions --------------------------------------------------------

    def _schedule_step(self, step: ScriptStep) -> None:
        action = step.action
        if action == "ping":
            self._ping_ident += 1
            ident = self._ping_ident
            host = step.fields["from"]
            target = ipv4(step.fields["to"])
            count = int(step.fields.get("count", 1))
            interval = float(step.fields.get("interval", 1.0))
            for i in range(count):
                self._schedule(
                    step.at + i * interval,
                    lambda now, seq=i + 1: self._ping(host, target, ident, seq, now),
                )
        elif action == "reconfigure":
            self._schedule(step.at, lambda now: self._reconfigure(step, now))
        elif action == "start_server":
            self._schedule(step.at, lambda now: self._start_server(now))
        elif action == "start_attack":
            self._schedule(step.at, lambda now: self._start_attack(now))
        elif action == "host_down":
            name = step.fields["host"]
            self._schedule(step.at, lambda now: self._nodes[name].host.set_up(False))
        elif action == "host_up":
            name = step.fields["host"]
            self._schedule(step.at, lambda now: self._nodes[name].host.set_up(True))
        elif action == "wait":
            self._schedule(step.at, lambda now: None)
        elif action == "assert":
            # Assertions run after every frame event of the same instant.
            self._schedule(step.at, lambda now: self._run_assert(step, now), priority=1)

    def _ping(self, host_name: str, target: Ipv4Addr, ident: int, seq: int, now: float) -> None:
        node = self._nodes[host_name]
        echo = IcmpEcho(ICMP_ECHO_REQUEST, node.host.ip, target, ident=ident, seq=seq)
        self._emit_all(host_name, node.host.send_ip(target, echo, now))

    def _reconfigure(self, step: ScriptStep, now: float) -> None:
        name = step.fields["host"]
        node = self._nodes[name]
        new_ip = step.fields.get("new_ip")
        new_mac = step.fields.get("new_mac")
        node.host.reconfigure(
            new_ip=ipv4(new_ip) if new_ip is not None else None,
            new_mac=MacAddr.parse(new_mac) if new_mac is not None else None,
            now=now,
        )
        # Real stacks announce an address change to the whole segment.
        self.transmit(name, node.host.gratuitous_arp(now))

    def _start_server(self, now: float) -> None:
        spec = self.scenario.server
        if self.server.running:
            return
        self.server.running = True
        if spec.sweep:
            self._sweep_round(now)

    def _sweep_round(self, now: float) -> None:
        spec = self.scenario.server
        if not self.server.running:
            return
        subnet = spec.subnet
        if subnet is None:
            subnet = str(IPv4Network(f"{self._server_host.ip}/24", strict=False))
        for echo in self.server.sweep(subnet, now):
            if echo.dst_ip == self._server_host.ip:
                continue
            self._emit_all(spec.host, self._server_host.send_ip(echo.dst_ip, echo, now))
        if spec.sweep_interval > 0:
            self._schedule(now + spec.sweep_interval, self._sweep_round)

    def _start_attack(self, now: float) -> None:
        spec = self.scenario.attacker
        plan = MitmPlan(
            victim_a=spec.victim_a,
            victim_b=spec.victim_b,
            repoison_interval=spec.repoison_interval,
            relay=spec.relay,
            prime_delay=spec.prime_delay,
            learn_timeout=spec.learn_timeout,
        )
        self._emit_all(spec.name, self.attacker.run_mitm(plan, now))

    # -- assertions -------------------------------------------------------------

    def _run_assert(self, step: ScriptStep, now: float) -> None:
        fields = step.fields
        check = fields["check"]
        ok, actual = self._evaluate_assert(check, fields, now)
        detail = {
            k: v for k, v in fields.items() if k != "check"
        }
        self.log.append(
            "assert_result",
            now,
            check=check,
            ok=ok,
            actual=actual,
            **{k: str(v) for k, v in detail.items()},
        )
        if not ok:
            self.failures += 1

    def _evaluate_assert(self, check: str, fields: dict, now: float):
        if check == "cache_maps":
            host = self._nodes[fields["host"]].host
            actual = host.cache.lookup(ipv4(fields["ip"]), now)
            return str(actual) == str(MacAddr.parse(fields["mac"])), str(actual)
        if check == "cache_absent":
            host = self._nodes[fields["host"]].host
            actual = host.cache.lookup(ipv4(fields["ip"]), now)
            return actual is None, str(actual)
        if check == "echo_replies":
            host = self._nodes[fields["host"]].host
            from_ip = fields.get("from")
            count = host.count_echo_replies(
                since=float(fields.get("since", 0.0)),
                from_ip=ipv4(from_ip) if from_ip is not None else None,
            )
            if "equals" in fields:
                return count == int(fields["equals"]), count
            return count >= int(fields.get("min", 1)), count
        if check == "spoof_listed":
            mac = MacAddr.parse(fields["mac"])
            reason = fields.get("reason")
            return self.server.spoofed(mac, reason), [
                f"{r.mac}:{r.reason}" for r in self.server.spoof_list
            ]
        if check == "spoof_list_empty":
            return not self.server.spoof_list, [
                f"{r.mac}:{r.reason}" for r in self.server.spoof_list
            ]
        if check == "server_maps":
            actual = self.server.lookup(ipv4(fields["ip"]))
            return str(actual) == str(MacAddr.parse(fields["mac"])), str(actual)
        if check == "alarm_count":
            reason = fields.get("reason")
            count = sum(
                1 for r in self.server.spoof_list if reason is None or r.reason == reason
            )
            if "equals" in fields:
                return count == int(fields["equals"]), count
            return count >= int(fields.get("min", 1)), count
        raise ValueError(f"unknown assert check {check!r}")

    # -- main loop -----------------------------------------------------------------

    def default_until(self) -> float:
        if self.scenario.until is not None:
            return self.scenario.until
        last = max((s.at for s in self.scenario.script), default=0.0)
        return last + 2.0

    def run(self, until: float | None = None) -> EventLog:
        horizon = _to_us(until if until is not None else self.default_until())
        while self._queue and self._queue[0][0] <= horizon:
            at_us, _, _, fn = heapq.heappop(self._queue)
            self._now_us = at_us
            fn(self.now)
        self._now_us = horizon
        return self.log


def run_scenario(scenario: Scenario, until: float | None = None) -> Simulation:
    sim = Simulation(scenario)
    sim.run(until)
    return sim
