"""End-host network stack: ARP resolution, ICMP echo, cache upkeep.

A host only ever sends IP traffic to addresses it can resolve.  A cache
miss queues the payload, broadcasts an ARP request, and retries once
before declaring the destination unreachable.  Replies to echo requests
are automatic, which is exactly the behaviour a cache-priming attack
leans on: forcing a host to answer makes it resolve the forged source
address first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .cache import ArpCache, CacheEffect, CachePolicy
from .frames import (
    ARP_REQUEST,
    BROADCAST_MAC,
    ETHERTYPE_ARP,
    ETHERTYPE_IPV4,
    CodecError,
    EtherFrame,
    IcmpEcho,
    ICMP_ECHO_REPLY,
    ICMP_ECHO_REQUEST,
    Ipv4Addr,
    MacAddr,
    arp_frame,
    arp_reply,
    arp_request,
)

DEFAULT_ARP_TIMEOUT = 1.0
DEFAULT_ARP_RETRIES = 1


@dataclass(frozen=True)
class HostConfig:
    name: str
    ip: Ipv4Addr
    mac: MacAddr
    policy: CachePolicy
    static_entries: tuple[tuple[Ipv4Addr, MacAddr], ...] = ()
    suppress_arp_replies: bool = False


@dataclass
class PendingResolution:
    target_ip: Ipv4Addr
    queued: list[IcmpEcho]
    issued_at: float
    retries_left: int
    generation: int


@dataclass(frozen=True)
class EchoRecord:
    at: float
    src_ip: Ipv4Addr
    ident: int
    seq: int


class Host:
    """A well-behaved LAN node with a single interface."""

    def __init__(
        self,
        config: HostConfig,
        timers=None,
        recorder=None,
        arp_timeout: float = DEFAULT_ARP_TIMEOUT,
        arp_retries: int = DEFAULT_ARP_RETRIES,
    ) -> None:
        self.name = config.name
        self.ip = config.ip
        self.mac = config.mac
        self.policy = config.policy
        self.suppress_arp_replies = config.suppress_arp_replies
        self.cache = ArpCache()
        self.up = True
        self.echo_replies: list[EchoRecord] = []
        self.echo_requests_seen: list[EchoRecord] = []
        self._arp_timeout = arp_timeout
        self._arp_retries = arp_retries
        self._pending: dict[Ipv4Addr, PendingResolution] = {}
        self._generation = 0
        self._timers = timers
        self._recorder = recorder
        for ip, mac in config.static_entries:
            self.cache.add_static(ip, mac)

    def _log(self, kind: str, **fields) -> None:
        if self._recorder is not None:
            self._recorder(kind, **fields)

    def _log_cache(self, ip: Ipv4Addr, effect: CacheEffect) -> None:
        if effect is CacheEffect.IGNORED:
            return
        entry = self.cache.get(ip)
        if entry is None:
            return
        self._log(
            "cache_change",
            host=self.name,
            ip=str(ip),
            mac=str(entry.mac),
            entry_kind=entry.kind.value,
            expires_at=entry.expires_at,
            effect=effect.value,
        )

    # -- sending ---------------------------------------------------------

    def send_ip(self, dst_ip: Ipv4Addr, payload: IcmpEcho, now: float) -> list[EtherFrame]:
        """Send an ICMP payload, resolving the destination first if needed."""
        if not self.up:
            return []
        mac = self.cache.lookup(dst_ip, now)
        if mac is not None:
            return [EtherFrame(mac, self.mac, ETHERTYPE_IPV4, payload.encode())]

        pending = self._pending.get(dst_ip)
        if pending is not None:
            pending.queued.append(payload)
            return []

        self._pending[dst_ip] = PendingResolution(
            dst_ip, [payload], now, self._arp_retries, self._generation
        )
        self._schedule_timeout(dst_ip, now)
        return [self._resolution_request(dst_ip)]

    def _resolution_request(self, dst_ip: Ipv4Addr) -> EtherFrame:
        packet = arp_request(self.ip, self.mac, dst_ip)
        return arp_frame(packet, self.mac, BROADCAST_MAC)

    def _schedule_timeout(self, dst_ip: Ipv4Addr, now: float) -> None:
        if self._timers is None:
            return
        generation = self._generation
        self._timers.call_at(
            now + self._arp_timeout,
            lambda at: self.resolution_timeout(dst_ip, at, generation),
        )

    def resolution_timeout(
        self, dst_ip: Ipv4Addr, now: float, generation: int | None = None
    ) -> list[EtherFrame]:
        """Retry an unanswered resolution, or give up on it."""
        pending = self._pending.get(dst_ip)
        if pending is None:
            return []
        if generation is not None and pending.generation != generation:
            return []
        if pending.retries_left > 0:
            pending.retries_left -= 1
            self._schedule_timeout(dst_ip, now)
            return [self._resolution_request(dst_ip)]
        del self._pending[dst_ip]
        self._log(
            "frame_drop",
            stage="resolution",
            reason="unreachable",
            host=self.name,
            dst_ip=str(dst_ip),
            queued=len(pending.queued),
        )
        return []

    # -- receiving -------------------------------------------------------

    def handle_frame(self, frame: EtherFrame, now: float) -> list[EtherFrame]:
        if not self.up:
            return []
        if frame.dst != self.mac and not frame.dst.is_broadcast:
            return []
        if frame.ethertype == ETHERTYPE_ARP:
            return self._handle_arp(frame, now)
        if frame.ethertype == ETHERTYPE_IPV4:
            return self._handle_ipv4(frame, now)
        return []

    def _handle_arp(self, frame: EtherFrame, now: float) -> list[EtherFrame]:
        try:
            packet = frame.arp()
        except CodecError:
            self._log("frame_drop", stage="host", reason="malformed_arp", host=self.name)
            return []

        if packet.is_request:
            addressed = packet.target_ip == self.ip
        else:
            addressed = packet.sender_ip in self._pending

        if packet.sender_ip != self.ip:
            effect = self.cache.observe_arp(packet, addressed, self.policy, now)
            self._log_cache(packet.sender_ip, effect)

        out: list[EtherFrame] = []
        out.extend(self._flush_resolved(packet.sender_ip, now))

        if packet.is_request and packet.target_ip == self.ip and not self.suppress_arp_replies:
            reply = arp_reply(
                self.ip, self.mac, packet.sender_ip, packet.sender_mac
            )
            out.append(arp_frame(reply, self.mac, frame.src))
        return out

    def _flush_resolved(self, ip: Ipv4Addr, now: float) -> list[EtherFrame]:
        pending = self._pending.get(ip)
        if pending is None:
            return []
        mac = self.cache.lookup(ip, now)
        if mac is None:
            return []
        del self._pending[ip]
        return [
            EtherFrame(mac, self.mac, ETHERTYPE_IPV4, echo.encode())
            for echo in pending.queued
        ]

    def _handle_ipv4(self, frame: EtherFrame, now: float) -> list[EtherFrame]:
        try:
            echo = frame.icmp()
        except CodecError:
            return []
        if echo.dst_ip != self.ip:
            return []
        if echo.kind == ICMP_ECHO_REQUEST:
            self.echo_requests_seen.append(EchoRecord(now, echo.src_ip, echo.ident, echo.seq))
            reply = IcmpEcho(ICMP_ECHO_REPLY, self.ip, echo.src_ip, echo.ident, echo.seq)
            return self.send_ip(echo.src_ip, reply, now)
        self.echo_replies.append(EchoRecord(now, echo.src_ip, echo.ident, echo.seq))
        return []

    # -- management ------------------------------------------------------

    def gratuitous_arp(self, now: float) -> EtherFrame:
        """Announce this host's own binding to the whole segment."""
        packet = arp_request(self.ip, self.mac, self.ip)
        return arp_frame(packet, self.mac, BROADCAST_MAC)

    def reconfigure(
        self,
        new_ip: Ipv4Addr | None = None,
        new_mac: MacAddr | None = None,
        now: float = 0.0,
    ) -> None:
        """Change identity in place.  Cache kept, pending lookups dropped."""
        if new_ip is not None:
            self.ip = new_ip
        if new_mac is not None:
            self.mac = new_mac
        self._cancel_pending()

    def set_up(self, up: bool) -> None:
        self.up = up
        if not up:
            self._cancel_pending()

    def _cancel_pending(self) -> None:
        self._pending.clear()
        self._generation += 1

    def count_echo_replies(
        self,
        since: float = 0.0,
        from_ip: Ipv4Addr | None = None,
    ) -> int:
        return sum(
            1
            for r in self.echo_replies
            if r.at >= since and (from_ip is None or r.src_ip == from_ip)
        )
