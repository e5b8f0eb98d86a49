"""Per-host ARP cache with OS-specific update policies.

The interesting behavioural differences between operating systems sit in
how they treat unsolicited ARP traffic: some never create an entry from
it, some create short-lived entries with a capped number of refreshes,
and nearly all of them will overwrite an existing entry.  That last one
is what cache poisoning exploits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .frames import ArpPacket, Ipv4Addr, MacAddr, ipv4

UNSPECIFIED_IP = ipv4("0.0.0.0")


class EntryKind(Enum):
    SOLICITED = "solicited"
    UNSOLICITED = "unsolicited"
    STATIC = "static"


class CacheEffect(Enum):
    """What a single ARP observation did to the cache."""

    CREATED = "created"
    UPDATED = "updated"
    REFRESHED = "refreshed"
    IGNORED = "ignored"


@dataclass
class CacheEntry:
    ip: Ipv4Addr
    mac: MacAddr
    kind: EntryKind
    inserted_at: float
    expires_at: float | None
    refresh_count: int = 0

    def valid(self, now: float) -> bool:
        # An entry expiring at t is still usable at exactly t.
        return self.expires_at is None or self.expires_at >= now


@dataclass(frozen=True)
class CachePolicy:
    """Knobs that describe one operating system's cache behaviour."""

    profile: str
    solicited_lifetime: float = 1200.0
    unsolicited_lifetime: float = 300.0
    unsolicited_max_refreshes: int = 3
    unsolicited_creates_entry: bool = False
    unsolicited_updates_entry: bool = True
    static_overwritable_by_arp: bool = False

    @classmethod
    def for_profile(cls, name: str, **overrides) -> "CachePolicy":
        try:
            base = _PROFILES[name]
        except KeyError:
            raise ValueError(f"unknown cache profile {name!r}") from None
        return replace(base, **overrides) if overrides else base


_PROFILES = {
    # Unsolicited ARP never creates an entry but freely updates one.
    "windows": CachePolicy(profile="windows"),
    "linux": CachePolicy(profile="linux"),
    # Unsolicited ARP creates a short-lived entry, extendable a few times.
    "solaris": CachePolicy(
        profile="solaris",
        unsolicited_creates_entry=True,
    ),
}

PROFILE_NAMES = tuple(sorted(_PROFILES))


class ArpCache:
    """One IP-to-MAC mapping table, at most one entry per IP."""

    def __init__(self) -> None:
        self._entries: dict[Ipv4Addr, CacheEntry] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, ip: Ipv4Addr) -> CacheEntry | None:
        return self._entries.get(ip)

    def entries(self) -> list[CacheEntry]:
        return list(self._entries.values())

    def lookup(self, ip: Ipv4Addr, now: float) -> MacAddr | None:
        """Return the MAC for a non-expired entry.  Never mutates."""
        entry = self._entries.get(ip)
        if entry is None or not entry.valid(now):
            return None
        return entry.mac

    def add_static(self, ip: Ipv4Addr, mac: MacAddr, now: float = 0.0) -> CacheEntry:
        entry = CacheEntry(ip, mac, EntryKind.STATIC, now, None)
        self._entries[ip] = entry
        return entry

    def remove(self, ip: Ipv4Addr) -> bool:
        return self._entries.pop(ip, None) is not None

    def purge_expired(self, now: float) -> int:
        stale = [ip for ip, e in self._entries.items() if not e.valid(now)]
        for ip in stale:
            del self._entries[ip]
        return len(stale)

    def observe_arp(
        self,
        packet: ArpPacket,
        addressed_to_me: bool,
        policy: CachePolicy,
        now: float,
    ) -> CacheEffect:
        """Apply one ARP observation under the given policy.

        ``addressed_to_me`` means the observation was directed at this
        host: a request asking for its IP, or a reply it was waiting
        for.  Everything else is unsolicited.
        """
        sender_ip, sender_mac = packet.sender_ip, packet.sender_mac
        if sender_ip == UNSPECIFIED_IP:
            return CacheEffect.IGNORED

        entry = self._entries.get(sender_ip)
        if entry is not None and not entry.valid(now):
            del self._entries[sender_ip]
            entry = None

        if entry is not None and entry.kind is EntryKind.STATIC:
            if not policy.static_overwritable_by_arp:
                return CacheEffect.IGNORED
            if entry.mac == sender_mac:
                return CacheEffect.IGNORED
            entry.mac = sender_mac
            return CacheEffect.UPDATED

        if addressed_to_me:
            if entry is None:
                self._entries[sender_ip] = CacheEntry(
                    sender_ip,
                    sender_mac,
                    EntryKind.SOLICITED,
                    now,
                    now + policy.solicited_lifetime,
                )
                return CacheEffect.CREATED
            changed = entry.mac != sender_mac
            entry.mac = sender_mac
            entry.kind = EntryKind.SOLICITED
            entry.inserted_at = now
            entry.expires_at = now + policy.solicited_lifetime
            entry.refresh_count = 0
            return CacheEffect.UPDATED if changed else CacheEffect.REFRESHED

        # Unsolicited path.
        if entry is None:
            if not policy.unsolicited_creates_entry:
                return CacheEffect.IGNORED
            self._entries[sender_ip] = CacheEntry(
                sender_ip,
                sender_mac,
                EntryKind.UNSOLICITED,
                now,
                now + policy.unsolicited_lifetime,
            )
            return CacheEffect.CREATED

        if not policy.unsolicited_updates_entry:
            return CacheEffect.IGNORED

        changed = entry.mac != sender_mac
        entry.mac = sender_mac
        if entry.kind is EntryKind.UNSOLICITED:
            # Each refresh extends the lease by one lifetime, but the
            # total never passes max_refreshes lifetimes after insert.
            cap = max(1, policy.unsolicited_max_refreshes)
            entry.refresh_count = min(entry.refresh_count + 1, policy.unsolicited_max_refreshes)
            entry.expires_at = entry.inserted_at + policy.unsolicited_lifetime * min(
                1 + entry.refresh_count, cap
            )
        else:
            entry.expires_at = now + policy.solicited_lifetime
        return CacheEffect.UPDATED if changed else CacheEffect.REFRESHED
