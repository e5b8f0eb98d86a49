"""Central ARP authority with spoof detection.

The server keeps its own IP-to-MAC table and answers ARP requests on
behalf of the whole segment, so ordinary hosts never need to trust each
other's replies.  Every ARP frame that reaches it is first screened:

* A frame whose Ethernet source differs from its ARP sender MAC is a
  hider; it raises an alarm and is processed no further.
* A sender IP that the table knows under a different MAC is a possible
  impersonation.  The update is held while the recorded owner is probed
  directly; an answer convicts the claimant, silence (after one retry)
  means the old host is gone and the new binding is committed.
* A sender MAC that the table knows under a different IP is treated as
  a legitimate address change and rebound quietly, but a MAC whose
  binding flaps too often in a short window raises an alarm.
* Unknown pairs are simply learned, up to a fixed table capacity.

Operator-supplied entries are pinned: they are never rebound or
overwritten by anything learned from the wire.
"""

from __future__ import annotations

from dataclasses import dataclass
from ipaddress import IPv4Network

from .frames import (
    BROADCAST_MAC,
    CodecError,
    EtherFrame,
    IcmpEcho,
    ICMP_ECHO_REQUEST,
    Ipv4Addr,
    MacAddr,
    arp_frame,
    arp_reply,
    arp_request,
    ipv4,
)

UNSPECIFIED_IP = ipv4("0.0.0.0")

DEFAULT_CAPACITY = 254
DEFAULT_PROBE_TIMEOUT = 2.0
DEFAULT_PROBE_RETRIES = 1
DEFAULT_FLAP_THRESHOLD = 3
DEFAULT_FLAP_WINDOW = 60.0

SOURCE_LEARNED = "learned"
SOURCE_MANUAL = "manual"

ALARM_HIDING = "hiding"
ALARM_IMPERSONATION = "impersonation"
ALARM_MAC_FLAP = "mac_flap"


@dataclass
class ServerEntry:
    ip: Ipv4Addr
    mac: MacAddr
    source: str
    updated_at: float


@dataclass(frozen=True)
class SpoofRecord:
    at: float
    mac: MacAddr
    reason: str
    evidence_frame_id: int | None


@dataclass
class Probe:
    questioned_ip: Ipv4Addr
    old_mac: MacAddr
    claimant_mac: MacAddr
    claim_frame_id: int | None
    issued_at: float
    retries_left: int


class TableFullError(RuntimeError):
    """The server table is at capacity and cannot take another entry."""


class ArpServer:
    """The answering and policing application, one per segment."""

    def __init__(
        self,
        host_ip: Ipv4Addr,
        host_mac: MacAddr,
        capacity: int = DEFAULT_CAPACITY,
        probe_timeout: float = DEFAULT_PROBE_TIMEOUT,
        probe_retries: int = DEFAULT_PROBE_RETRIES,
        flap_threshold: int = DEFAULT_FLAP_THRESHOLD,
        flap_window: float = DEFAULT_FLAP_WINDOW,
        timers=None,
        recorder=None,
    ) -> None:
        self.host_ip = host_ip
        self.host_mac = host_mac
        self.capacity = capacity
        self.probe_timeout = probe_timeout
        self.probe_retries = probe_retries
        self.flap_threshold = flap_threshold
        self.flap_window = flap_window
        self.running = False
        self.spoof_list: list[SpoofRecord] = []
        self._table: dict[Ipv4Addr, ServerEntry] = {}
        self._probes: dict[Ipv4Addr, Probe] = {}
        self._rebinds: dict[MacAddr, list[float]] = {}
        self._timers = timers
        self._recorder = recorder

    # -- bookkeeping ---------------------------------------------------------

    def _log(self, kind: str, **fields) -> None:
        if self._recorder is not None:
            self._recorder(kind, **fields)

    def _alarm(self, mac: MacAddr, reason: str, frame_id: int | None, now: float) -> None:
        self.spoof_list.append(SpoofRecord(now, mac, reason, frame_id))
        self._log(
            "alarm",
            mac=str(mac),
            reason=reason,
            evidence_frame_id=frame_id,
        )

    def table_snapshot(self) -> dict[Ipv4Addr, ServerEntry]:
        return dict(self._table)

    def lookup(self, ip: Ipv4Addr) -> MacAddr | None:
        entry = self._table.get(ip)
        return entry.mac if entry is not None else None

    def spoofed(self, mac: MacAddr, reason: str | None = None) -> bool:
        return any(
            r.mac == mac and (reason is None or r.reason == reason) for r in self.spoof_list
        )

    def add_manual(self, ip: Ipv4Addr, mac: MacAddr, now: float = 0.0) -> ServerEntry:
        """Pin a binding by hand.  Replaces whatever the wire taught us."""
        if ip not in self._table and len(self._table) >= self.capacity:
            raise TableFullError(f"table full at {self.capacity} entries")
        entry = ServerEntry(ip, mac, SOURCE_MANUAL, now)
        self._table[ip] = entry
        self._log(
            "table_change",
            table="server",
            event="manual_added",
            ip=str(ip),
            mac=str(mac),
        )
        return entry

    # -- learning and detection ----------------------------------------------

    def handle_frame(
        self, frame: EtherFrame, now: float, frame_id: int | None = None
    ) -> list[EtherFrame]:
        """Screen one ARP frame, then answer it if it was a request."""
        if not self.running:
            return []
        try:
            packet = frame.arp()
        except CodecError:
            return []

        # Hiding check: the two source identities must agree.
        if frame.src != packet.sender_mac:
            self._alarm(packet.sender_mac, ALARM_HIDING, frame_id, now)
            return []

        out: list[EtherFrame] = []
        self._check_probe_reply(packet, frame_id, now)
        out.extend(self._screen(packet, frame_id, now))
        if packet.is_request:
            out.extend(self._answer(packet, frame))
        return out

    def learn_from_broadcast(
        self, frame: EtherFrame, now: float, frame_id: int | None = None
    ) -> list[EtherFrame]:
        """Passive learning path; runs the very same screening cascade."""
        try:
            packet = frame.arp()
        except CodecError:
            return []
        if frame.src != packet.sender_mac:
            self._alarm(packet.sender_mac, ALARM_HIDING, frame_id, now)
            return []
        return self._screen(packet, frame_id, now)

    def _check_probe_reply(self, packet, frame_id: int | None, now: float) -> None:
        if not packet.is_reply:
            return
        probe = self._probes.get(packet.sender_ip)
        if probe is None or packet.sender_mac != probe.old_mac:
            return
        # The recorded owner is alive; the held claim was an impersonation.
        del self._probes[packet.sender_ip]
        self._alarm(probe.claimant_mac, ALARM_IMPERSONATION, probe.claim_frame_id, now)
        self._log(
            "table_change",
            table="server",
            event="claim_discarded",
            ip=str(probe.questioned_ip),
            mac=str(probe.claimant_mac),
        )

    def _screen(self, packet, frame_id: int | None, now: float) -> list[EtherFrame]:
        sender_ip, sender_mac = packet.sender_ip, packet.sender_mac
        if sender_ip == UNSPECIFIED_IP:
            return []

        entry = self._table.get(sender_ip)
        if entry is not None and entry.mac == sender_mac:
            entry.updated_at = now
            return []

        if entry is not None:
            # Conflicting claim on a known IP: hold it and ask the owner.
            return self._open_probe(sender_ip, entry, sender_mac, frame_id, now)

        owner = self._find_by_mac(sender_mac)
        if owner is not None:
            self._rebind(owner, sender_ip, frame_id, now)
            return []

        self._insert(sender_ip, sender_mac, now)
        return []

    def _find_by_mac(self, mac: MacAddr) -> ServerEntry | None:
        for entry in self._table.values():
            if entry.mac == mac:
                return entry
        return None

    def _insert(self, ip: Ipv4Addr, mac: MacAddr, now: float) -> None:
        if len(self._table) >= self.capacity:
            self._log(
                "table_change",
                table="server",
                event="insert_refused",
                ip=str(ip),
                mac=str(mac),
                capacity=self.capacity,
            )
            return
        self._table[ip] = ServerEntry(ip, mac, SOURCE_LEARNED, now)
        self._log(
            "table_change", table="server", event="inserted", ip=str(ip), mac=str(mac)
        )

    def _rebind(self, entry: ServerEntry, new_ip: Ipv4Addr, frame_id: int | None, now: float) -> None:
        if entry.source == SOURCE_MANUAL:
            self._log(
                "table_change",
                table="server",
                event="claim_ignored",
                reason="manual_pinned",
                ip=str(entry.ip),
                mac=str(entry.mac),
            )
            return
        old_ip = entry.ip
        del self._table[old_ip]
        entry.ip = new_ip
        entry.updated_at = now
        self._table[new_ip] = entry
        self._log(
            "table_change",
            table="server",
            event="rebound",
            mac=str(entry.mac),
            old_ip=str(old_ip),
            ip=str(new_ip),
        )
        self._note_rebind(entry.mac, frame_id, now)

    def _note_rebind(self, mac: MacAddr, frame_id: int | None, now: float) -> None:
        self._rebinds.setdefault(mac, []).append(now)
        self.flap_monitor(now, evidence_frame_id=frame_id)

    def flap_monitor(self, now: float, evidence_frame_id: int | None = None) -> list[MacAddr]:
        """Alarm on every MAC whose binding changed too often recently."""
        flapping = []
        for mac, times in self._rebinds.items():
            recent = [t for t in times if t >= now - self.flap_window]
            if len(recent) >= self.flap_threshold:
                self._alarm(mac, ALARM_MAC_FLAP, evidence_frame_id, now)
                flapping.append(mac)
                recent = []
            self._rebinds[mac] = recent
        return flapping

    # -- probing -------------------------------------------------------------

    def _probe_frame(self, probe: Probe) -> EtherFrame:
        packet = arp_request(self.host_ip, self.host_mac, probe.questioned_ip)
        return arp_frame(packet, self.host_mac, probe.old_mac)

    def _open_probe(
        self,
        questioned_ip: Ipv4Addr,
        entry: ServerEntry,
        claimant_mac: MacAddr,
        frame_id: int | None,
        now: float,
    ) -> list[EtherFrame]:
        if questioned_ip in self._probes:
            # One outstanding question per IP; later claims wait their turn.
            return []
        probe = Probe(
            questioned_ip, entry.mac, claimant_mac, frame_id, now, self.probe_retries
        )
        self._probes[questioned_ip] = probe
        self._log(
            "table_change",
            table="server",
            event="claim_held",
            ip=str(questioned_ip),
            mac=str(claimant_mac),
            old_mac=str(entry.mac),
        )
        self._arm_probe_deadline(questioned_ip, now)
        return [self._probe_frame(probe)]

    def _arm_probe_deadline(self, questioned_ip: Ipv4Addr, now: float) -> None:
        if self._timers is None:
            return
        self._timers.call_at(
            now + self.probe_timeout,
            lambda at: self.probe_timeout_expired(questioned_ip, at),
        )

    def probe_timeout_expired(self, questioned_ip: Ipv4Addr, now: float) -> list[EtherFrame]:
        """Deadline handler: retry once, then resolve the held claim."""
        probe = self._probes.get(questioned_ip)
        if probe is None:
            return []
        if probe.retries_left > 0:
            probe.retries_left -= 1
            self._arm_probe_deadline(questioned_ip, now)
            return [self._probe_frame(probe)]

        del self._probes[questioned_ip]
        entry = self._table.get(questioned_ip)
        if entry is None:
            return []
        if entry.source == SOURCE_MANUAL:
            # Pinned bindings never fall to an unanswered probe.
            self._alarm(probe.claimant_mac, ALARM_IMPERSONATION, probe.claim_frame_id, now)
            self._log(
                "table_change",
                table="server",
                event="claim_discarded",
                reason="manual_pinned",
                ip=str(questioned_ip),
                mac=str(probe.claimant_mac),
            )
            return []
        old_mac = entry.mac
        entry.mac = probe.claimant_mac
        entry.updated_at = now
        self._log(
            "table_change",
            table="server",
            event="mac_changed",
            ip=str(questioned_ip),
            old_mac=str(old_mac),
            mac=str(probe.claimant_mac),
        )
        return []

    # -- answering -----------------------------------------------------------

    def _answer(self, packet, frame: EtherFrame) -> list[EtherFrame]:
        target = packet.target_ip
        if target == self.host_ip:
            # The host's own stack answers for the machine we run on.
            return []
        entry = self._table.get(target)
        if entry is None:
            return []
        reply = arp_reply(target, entry.mac, packet.sender_ip, packet.sender_mac)
        return [arp_frame(reply, self.host_mac, frame.src)]

    # -- active learning -------------------------------------------------------

    def sweep(self, subnet: IPv4Network | str, now: float) -> list[IcmpEcho]:
        """Echo every address in the subnet once.

        Returns the echo payloads to send; resolving each destination is
        the sending host's job, and it is exactly those resolution
        replies that feed the table.
        """
        network = IPv4Network(subnet) if isinstance(subnet, str) else subnet
        return [
            IcmpEcho(ICMP_ECHO_REQUEST, self.host_ip, address, ident=0, seq=index + 1)
            for index, address in enumerate(network.hosts())
        ]
