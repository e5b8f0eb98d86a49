"""Wire formats for the simulated LAN.

Ethernet II framing, ARP packets, and a compact ICMP echo encoding are
the only formats that travel between simulated nodes.  Layouts:

    Ethernet II:  dst(6) src(6) ethertype(2, big-endian) payload(0..1500)
    ARP:          hw_type(2)=1 proto_type(2)=0x0800 hw_size(1)=6
                  proto_size(1)=4 opcode(2) sender_mac(6) sender_ip(4)
                  target_mac(6) target_ip(4)            -> 28 bytes
    ICMP echo:    icmp_type(1) src_ip(4) dst_ip(4) ident(2) seq(2)

The ICMP layout is deliberately minimal: the simulator carries the
addressing that an IP header would normally hold inside the echo
payload itself and skips checksums entirely.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from ipaddress import IPv4Address

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806

ETH_HEADER_LEN = 14
MAX_PAYLOAD = 1500

ARP_REQUEST = 1
ARP_REPLY = 2
ARP_LEN = 28
_ARP_FMT = "!HHBBH6s4s6s4s"

ICMP_ECHO_REQUEST = "request"
ICMP_ECHO_REPLY = "reply"
_ICMP_FMT = "!B4s4sHH"
_ICMP_TYPE_CODES = {ICMP_ECHO_REQUEST: 8, ICMP_ECHO_REPLY: 0}
_ICMP_TYPE_NAMES = {8: ICMP_ECHO_REQUEST, 0: ICMP_ECHO_REPLY}

Ipv4Addr = IPv4Address


def ipv4(text: str | int) -> Ipv4Addr:
    return IPv4Address(text)


class CodecError(ValueError):
    """Raised when a byte sequence cannot be encoded or decoded."""


class TruncatedFrameError(CodecError):
    """Byte sequence shorter than the Ethernet header."""


class MalformedArpError(CodecError):
    """ARP payload with a bad length or unsupported field values."""


@dataclass(frozen=True, order=True)
class MacAddr:
    """A 48-bit hardware address, stored as raw octets."""

    octets: bytes

    def __post_init__(self) -> None:
        if len(self.octets) != 6:
            raise CodecError(f"MAC needs 6 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> "MacAddr":
        parts = text.strip().lower().split(":")
        if len(parts) != 6 or not all(1 <= len(p) <= 2 for p in parts):
            raise CodecError(f"bad MAC address {text!r}")
        try:
            return cls(bytes(int(p, 16) for p in parts))
        except ValueError:
            raise CodecError(f"bad MAC address {text!r}") from None

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)

    def __repr__(self) -> str:
        return f"MacAddr({str(self)!r})"

    @property
    def is_broadcast(self) -> bool:
        return self.octets == b"\xff" * 6

    @property
    def is_zero(self) -> bool:
        return self.octets == b"\x00" * 6


BROADCAST_MAC = MacAddr(b"\xff" * 6)
ZERO_MAC = MacAddr(b"\x00" * 6)


@dataclass(frozen=True)
class ArpPacket:
    op: int
    sender_mac: MacAddr
    sender_ip: Ipv4Addr
    target_mac: MacAddr
    target_ip: Ipv4Addr

    def encode(self) -> bytes:
        if self.op not in (ARP_REQUEST, ARP_REPLY):
            raise MalformedArpError(f"unsupported ARP opcode {self.op}")
        return struct.pack(
            _ARP_FMT,
            1,
            ETHERTYPE_IPV4,
            6,
            4,
            self.op,
            self.sender_mac.octets,
            self.sender_ip.packed,
            self.target_mac.octets,
            self.target_ip.packed,
        )

    @classmethod
    def decode(cls, data: bytes) -> "ArpPacket":
        if len(data) != ARP_LEN:
            raise MalformedArpError(f"ARP payload must be {ARP_LEN} bytes, got {len(data)}")
        hw_type, proto_type, hw_size, proto_size, op, smac, sip, tmac, tip = struct.unpack(
            _ARP_FMT, data
        )
        if hw_type != 1 or proto_type != ETHERTYPE_IPV4:
            raise MalformedArpError(f"unsupported ARP hw/proto type {hw_type:#x}/{proto_type:#x}")
        if hw_size != 6 or proto_size != 4:
            raise MalformedArpError(f"unsupported ARP address sizes {hw_size}/{proto_size}")
        if op not in (ARP_REQUEST, ARP_REPLY):
            raise MalformedArpError(f"unsupported ARP opcode {op}")
        return cls(op, MacAddr(smac), IPv4Address(sip), MacAddr(tmac), IPv4Address(tip))

    @property
    def is_request(self) -> bool:
        return self.op == ARP_REQUEST

    @property
    def is_reply(self) -> bool:
        return self.op == ARP_REPLY


@dataclass(frozen=True)
class EtherFrame:
    dst: MacAddr
    src: MacAddr
    ethertype: int
    payload: bytes = field(default=b"")

    def encode(self) -> bytes:
        """Serialize to wire bytes.  Pure: equal frames encode identically."""
        if len(self.payload) > MAX_PAYLOAD:
            raise CodecError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")
        return (
            self.dst.octets
            + self.src.octets
            + struct.pack("!H", self.ethertype)
            + self.payload
        )

    @classmethod
    def decode(cls, data: bytes) -> "EtherFrame":
        if len(data) < ETH_HEADER_LEN:
            raise TruncatedFrameError(f"frame of {len(data)} bytes is shorter than the header")
        (ethertype,) = struct.unpack("!H", data[12:14])
        return cls(MacAddr(data[0:6]), MacAddr(data[6:12]), ethertype, data[14:])

    def arp(self) -> ArpPacket:
        if self.ethertype != ETHERTYPE_ARP:
            raise MalformedArpError(f"frame ethertype {self.ethertype:#06x} is not ARP")
        return ArpPacket.decode(self.payload)

    def icmp(self) -> "IcmpEcho":
        if self.ethertype != ETHERTYPE_IPV4:
            raise CodecError(f"frame ethertype {self.ethertype:#06x} is not IPv4")
        return IcmpEcho.decode(self.payload)


@dataclass(frozen=True)
class IcmpEcho:
    """An echo request or reply, with the IP addressing folded in."""

    kind: str
    src_ip: Ipv4Addr
    dst_ip: Ipv4Addr
    ident: int = 0
    seq: int = 0

    def encode(self) -> bytes:
        if self.kind not in _ICMP_TYPE_CODES:
            raise CodecError(f"unknown echo kind {self.kind!r}")
        return struct.pack(
            _ICMP_FMT,
            _ICMP_TYPE_CODES[self.kind],
            self.src_ip.packed,
            self.dst_ip.packed,
            self.ident,
            self.seq,
        )

    @classmethod
    def decode(cls, data: bytes) -> "IcmpEcho":
        if len(data) != struct.calcsize(_ICMP_FMT):
            raise CodecError(f"bad echo payload length {len(data)}")
        code, sip, dip, ident, seq = struct.unpack(_ICMP_FMT, data)
        if code not in _ICMP_TYPE_NAMES:
            raise CodecError(f"unknown ICMP type {code}")
        return cls(_ICMP_TYPE_NAMES[code], IPv4Address(sip), IPv4Address(dip), ident, seq)


def arp_request(
    sender_ip: Ipv4Addr,
    sender_mac: MacAddr,
    target_ip: Ipv4Addr,
    target_mac: MacAddr = ZERO_MAC,
) -> ArpPacket:
    return ArpPacket(ARP_REQUEST, sender_mac, sender_ip, target_mac, target_ip)


def arp_reply(
    sender_ip: Ipv4Addr,
    sender_mac: MacAddr,
    target_ip: Ipv4Addr,
    target_mac: MacAddr,
) -> ArpPacket:
    return ArpPacket(ARP_REPLY, sender_mac, sender_ip, target_mac, target_ip)


def arp_frame(packet: ArpPacket, eth_src: MacAddr, eth_dst: MacAddr) -> EtherFrame:
    return EtherFrame(eth_dst, eth_src, ETHERTYPE_ARP, packet.encode())


def icmp_frame(echo: IcmpEcho, eth_src: MacAddr, eth_dst: MacAddr) -> EtherFrame:
    return EtherFrame(eth_dst, eth_src, ETHERTYPE_IPV4, echo.encode())
