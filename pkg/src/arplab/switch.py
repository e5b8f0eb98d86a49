"""Learning switch with per-port, per-direction ACL filtering.

Forwarding follows the usual transparent-bridge rules: learn the source
address on the arrival port, deliver known unicast destinations out of
one port, flood everything else to every port except the one the frame
came in on.  Two twists matter for the experiments here:

* a hold-down window refuses to move a MAC to a new port until the
  binding has been quiet long enough, which blunts MAC-cloning, and
* ordered permit/deny rule lists can be bound to ports in both
  directions, which is how ARP traffic gets funnelled to one authority.

Rule lists are first-match-wins with an implicit deny at the end, so
any list that intends to pass general traffic must close with an
explicit permit-any rule.  A port with no list bound filters nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .frames import (
    BROADCAST_MAC,
    ETHERTYPE_ARP,
    EtherFrame,
    MacAddr,
)

DEFAULT_HOLD_DOWN = 60.0
DEFAULT_AGING = 300.0

ACL_PRESET_IDEAL = "ideal-4.4.1"
ACL_PRESET_CISCO = "cisco-4.5.1"
ACL_PRESETS = (ACL_PRESET_IDEAL, ACL_PRESET_CISCO)


class AclAction(Enum):
    PERMIT = "permit"
    DENY = "deny"


class Direction(Enum):
    INBOUND = "inbound"
    OUTBOUND = "outbound"


@dataclass(frozen=True)
class AclRule:
    """One match line.  ``None`` in a match field means any."""

    action: AclAction
    src: MacAddr | None = None
    dst: MacAddr | None = None
    ethertype: int | None = None
    direction: Direction = Direction.INBOUND

    def matches(self, src: MacAddr, dst: MacAddr, ethertype: int) -> bool:
        if self.src is not None and self.src != src:
            return False
        if self.dst is not None and self.dst != dst:
            return False
        if self.ethertype is not None and self.ethertype != ethertype:
            return False
        return True

    def render(self) -> str:
        src = "any" if self.src is None else f"host {self.src}"
        dst = "any" if self.dst is None else f"host {self.dst}"
        suffix = "" if self.ethertype is None else f" 0x{self.ethertype:x}"
        return f"{self.action.value} {src} {dst}{suffix}"


def evaluate_acl(
    rules: list[AclRule], src: MacAddr, dst: MacAddr, ethertype: int
) -> tuple[AclAction, int | None]:
    """First matching rule decides; no match at all means deny."""
    for index, rule in enumerate(rules):
        if rule.matches(src, dst, ethertype):
            return rule.action, index
    return AclAction.DENY, None


@dataclass(frozen=True)
class AclPreset:
    name: str
    inbound: tuple[AclRule, ...]
    outbound: tuple[AclRule, ...]


def acl_preset(name: str, server_mac: MacAddr) -> AclPreset:
    """Build one of the shipped rule bundles around a server address.

    ``ideal-4.4.1`` states the policy directly: inbound ARP claiming the
    server's own source address is rejected (nobody may impersonate the
    authority), and outbound ARP is delivered only when it originates
    from the authority.

    ``cisco-4.5.1`` is the same intent expressed in the vocabulary of a
    real switch, as an inbound-only list: ARP may go to the server or
    to broadcast, all other ARP is dropped, everything else flows.  It
    has no outbound leg and no source check, a gap the tests pin down.
    """
    if name == ACL_PRESET_IDEAL:
        inbound = (
            AclRule(AclAction.DENY, src=server_mac, ethertype=ETHERTYPE_ARP),
            AclRule(AclAction.PERMIT),
        )
        outbound = (
            AclRule(
                AclAction.PERMIT,
                src=server_mac,
                ethertype=ETHERTYPE_ARP,
                direction=Direction.OUTBOUND,
            ),
            AclRule(AclAction.DENY, ethertype=ETHERTYPE_ARP, direction=Direction.OUTBOUND),
            AclRule(AclAction.PERMIT, direction=Direction.OUTBOUND),
        )
        return AclPreset(name, inbound, outbound)
    if name == ACL_PRESET_CISCO:
        inbound = (
            AclRule(AclAction.PERMIT, dst=server_mac, ethertype=ETHERTYPE_ARP),
            AclRule(AclAction.PERMIT, dst=BROADCAST_MAC, ethertype=ETHERTYPE_ARP),
            AclRule(AclAction.DENY, ethertype=ETHERTYPE_ARP),
            AclRule(AclAction.PERMIT),
        )
        return AclPreset(name, inbound, ())
    raise ValueError(f"unknown ACL preset {name!r}")


@dataclass
class ForwardingEntry:
    mac: MacAddr
    port: int
    learned_at: float


@dataclass
class PortBinding:
    port: int
    attached: str
    inbound_acl: str | None = None
    outbound_acl: str | None = None


class Switch:
    """A single switch connecting every simulated node."""

    def __init__(
        self,
        ports: dict[int, PortBinding],
        acl_lists: dict[str, list[AclRule]] | None = None,
        hold_down: float = DEFAULT_HOLD_DOWN,
        aging: float = DEFAULT_AGING,
        recorder=None,
    ) -> None:
        self.ports = dict(sorted(ports.items()))
        self.acl_lists = dict(acl_lists or {})
        self.hold_down = hold_down
        self.aging = aging
        self._recorder = recorder
        self._table: dict[MacAddr, ForwardingEntry] = {}

    @classmethod
    def for_nodes(
        cls,
        names: list[str],
        preset: AclPreset | None = None,
        server: str | None = None,
        **kwargs,
    ) -> "Switch":
        """Wire nodes to ports 1..n, applying a preset to non-server ports."""
        acl_lists: dict[str, list[AclRule]] = {}
        in_name = out_name = None
        if preset is not None:
            if preset.inbound:
                in_name = f"{preset.name}-in"
                acl_lists[in_name] = list(preset.inbound)
            if preset.outbound:
                out_name = f"{preset.name}-out"
                acl_lists[out_name] = list(preset.outbound)
        ports = {}
        for offset, name in enumerate(names):
            filtered = preset is not None and name != server
            ports[offset + 1] = PortBinding(
                offset + 1,
                name,
                inbound_acl=in_name if filtered else None,
                outbound_acl=out_name if filtered else None,
            )
        return cls(ports, acl_lists, **kwargs)

    def _log(self, kind: str, **fields) -> None:
        if self._recorder is not None:
            self._recorder(kind, **fields)

    def port_of(self, attached: str) -> int:
        for binding in self.ports.values():
            if binding.attached == attached:
                return binding.port
        raise KeyError(f"no port has {attached!r} attached")

    def forwarding_entry(self, mac: MacAddr) -> ForwardingEntry | None:
        return self._table.get(mac)

    # -- forwarding table --------------------------------------------------

    def learn(self, port: int, src: MacAddr, now: float) -> str:
        """Track a source address.  Returns learned|refreshed|held|moved."""
        entry = self._table.get(src)
        if entry is not None and now > entry.learned_at + self.aging:
            del self._table[src]
            entry = None
        if entry is None:
            self._table[src] = ForwardingEntry(src, port, now)
            self._log("table_change", table="forwarding", event="learned", mac=str(src), port=port)
            return "learned"
        if entry.port == port:
            entry.learned_at = now
            return "refreshed"
        if now < entry.learned_at + self.hold_down:
            self._log(
                "table_change",
                table="forwarding",
                event="held",
                mac=str(src),
                port=entry.port,
                rejected_port=port,
            )
            return "held"
        old_port = entry.port
        entry.port = port
        entry.learned_at = now
        self._log(
            "table_change",
            table="forwarding",
            event="moved",
            mac=str(src),
            port=port,
            old_port=old_port,
        )
        return "moved"

    def age_forwarding(self, now: float) -> int:
        stale = [mac for mac, e in self._table.items() if now > e.learned_at + self.aging]
        for mac in stale:
            entry = self._table.pop(mac)
            self._log(
                "table_change", table="forwarding", event="aged", mac=str(mac), port=entry.port
            )
        return len(stale)

    def _lookup_port(self, mac: MacAddr, now: float) -> int | None:
        entry = self._table.get(mac)
        if entry is None or now > entry.learned_at + self.aging:
            return None
        return entry.port

    # -- frame path ---------------------------------------------------------

    def _acl_check(
        self, binding: PortBinding, direction: Direction, frame: EtherFrame
    ) -> tuple[AclAction, AclRule | None, int | None, str | None]:
        name = (
            binding.inbound_acl if direction is Direction.INBOUND else binding.outbound_acl
        )
        if name is None:
            return AclAction.PERMIT, None, None, None
        rules = self.acl_lists[name]
        action, index = evaluate_acl(rules, frame.src, frame.dst, frame.ethertype)
        rule = rules[index] if index is not None else None
        return action, rule, index, name

    def ingress(
        self, port: int, frame: EtherFrame, now: float, frame_id: int | None = None
    ) -> list[tuple[int, EtherFrame]]:
        """Run one frame through the switch; returns (port, frame) deliveries."""
        binding = self.ports.get(port)
        if binding is None:
            raise KeyError(f"frame arrived on unknown port {port}")

        action, rule, index, acl = self._acl_check(binding, Direction.INBOUND, frame)
        if action is AclAction.DENY:
            self._log(
                "frame_drop",
                frame_id=frame_id,
                stage="inbound",
                port=port,
                acl=acl,
                rule_index=index,
                rule=rule.render() if rule else "implicit deny",
            )
            return []

        if not frame.src.is_broadcast:
            self.learn(port, frame.src, now)

        if frame.dst.is_broadcast:
            candidates = [p for p in self.ports if p != port]
        else:
            known = self._lookup_port(frame.dst, now)
            if known is None:
                candidates = [p for p in self.ports if p != port]
            elif known == port:
                self._log(
                    "frame_drop",
                    frame_id=frame_id,
                    stage="forwarding",
                    port=port,
                    reason="same_port",
                )
                return []
            else:
                candidates = [known]

        deliveries: list[tuple[int, EtherFrame]] = []
        for out_port in candidates:
            out_binding = self.ports[out_port]
            action, rule, index, acl = self._acl_check(out_binding, Direction.OUTBOUND, frame)
            if action is AclAction.DENY:
                self._log(
                    "frame_drop",
                    frame_id=frame_id,
                    stage="outbound",
                    port=out_port,
                    acl=acl,
                    rule_index=index,
                    rule=rule.render() if rule else "implicit deny",
                )
                continue
            deliveries.append((out_port, frame))
        return deliveries
