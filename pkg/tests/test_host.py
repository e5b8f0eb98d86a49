"""Host stack: resolution, queueing, priming, replies, reconfiguration."""

import pytest

from arplab import CachePolicy, Host, HostConfig, IcmpEcho, ipv4
from arplab.frames import (
    BROADCAST_MAC,
    ETHERTYPE_IPV4,
    EtherFrame,
    ICMP_ECHO_REQUEST,
    arp_frame,
    arp_reply,
    arp_request,
)

from conftest import IP15, IP100, IP_ATTACKER, MAC15, MAC100, MAC_ATTACKER, ManualTimers, Recorder


def make_host(timers=None, recorder=None, profile="windows", **kwargs):
    config = HostConfig(
        name="h15",
        ip=IP15,
        mac=MAC15,
        policy=CachePolicy.for_profile(profile),
        **kwargs,
    )
    return Host(config, timers=timers, recorder=recorder)


def echo(dst_ip=IP100, src_ip=IP15):
    return IcmpEcho(ICMP_ECHO_REQUEST, src_ip, dst_ip, ident=7, seq=1)


class TestResolution:
    def test_cold_send_broadcasts_request(self, timers):
        host = make_host(timers)
        frames = host.send_ip(IP100, echo(), 0.0)
        assert len(frames) == 1
        assert frames[0].dst == BROADCAST_MAC
        packet = frames[0].arp()
        assert packet.is_request
        assert packet.target_ip == IP100
        assert packet.sender_ip == IP15

    def test_reply_flushes_queued_payload(self, timers):
        host = make_host(timers)
        host.send_ip(IP100, echo(), 0.0)
        reply = arp_frame(arp_reply(IP100, MAC100, IP15, MAC15), MAC100, MAC15)
        out = host.handle_frame(reply, 0.01)
        assert len(out) == 1
        assert out[0].dst == MAC100
        assert out[0].ethertype == ETHERTYPE_IPV4
        assert host.cache.lookup(IP100, 0.01) == MAC100

    def test_warm_send_goes_direct(self, timers):
        host = make_host(timers)
        host.send_ip(IP100, echo(), 0.0)
        reply = arp_frame(arp_reply(IP100, MAC100, IP15, MAC15), MAC100, MAC15)
        host.handle_frame(reply, 0.01)
        frames = host.send_ip(IP100, echo(), 0.02)
        assert len(frames) == 1
        assert frames[0].dst == MAC100

    def test_second_send_while_pending_queues(self, timers):
        host = make_host(timers)
        assert len(host.send_ip(IP100, echo(), 0.0)) == 1
        assert host.send_ip(IP100, echo(), 0.1) == []

    def test_timeout_retries_then_gives_up(self, timers, recorder):
        host = make_host(timers, recorder)
        host.send_ip(IP100, echo(), 0.0)
        retry = timers.fire(1.0)
        assert len(retry) == 1 and retry[0].arp().is_request
        assert timers.fire(2.0) == []
        drops = recorder.of_kind("frame_drop")
        assert drops and drops[0]["reason"] == "unreachable"
        assert drops[0]["queued"] == 1

    def test_unsolicited_reply_does_not_resolve_pending(self, timers):
        # The reply must answer something we asked about; a different
        # sender IP leaves the resolution outstanding.
        host = make_host(timers)
        host.send_ip(IP100, echo(), 0.0)
        stray = arp_frame(arp_reply(IP_ATTACKER, MAC_ATTACKER, IP15, MAC15), MAC_ATTACKER, MAC15)
        assert host.handle_frame(stray, 0.01) == []
        assert host.cache.lookup(IP_ATTACKER, 0.01) is None


class TestArpHandling:
    def test_answers_request_for_own_ip(self):
        host = make_host()
        request = arp_frame(arp_request(IP100, MAC100, IP15), MAC100, BROADCAST_MAC)
        out = host.handle_frame(request, 0.0)
        assert len(out) == 1
        packet = out[0].arp()
        assert packet.is_reply
        assert packet.sender_ip == IP15 and packet.sender_mac == MAC15
        assert out[0].dst == MAC100

    def test_ignores_request_for_other_ip(self):
        host = make_host()
        request = arp_frame(arp_request(IP100, MAC100, IP_ATTACKER), MAC100, BROADCAST_MAC)
        assert host.handle_frame(request, 0.0) == []

    def test_suppress_flag_silences_replies(self):
        host = make_host(suppress_arp_replies=True)
        request = arp_frame(arp_request(IP100, MAC100, IP15), MAC100, BROADCAST_MAC)
        assert host.handle_frame(request, 0.0) == []

    def test_addressed_request_populates_cache(self):
        host = make_host()
        request = arp_frame(arp_request(IP100, MAC100, IP15), MAC100, BROADCAST_MAC)
        host.handle_frame(request, 0.0)
        assert host.cache.lookup(IP100, 0.0) == MAC100

    def test_unsolicited_reply_ignored_by_windows_profile(self):
        host = make_host()
        forged = arp_frame(arp_reply(IP100, MAC_ATTACKER, IP15, MAC15), MAC_ATTACKER, MAC15)
        host.handle_frame(forged, 0.0)
        assert host.cache.lookup(IP100, 0.0) is None

    def test_own_ip_claims_not_cached(self):
        host = make_host()
        forged = arp_frame(arp_request(IP15, MAC_ATTACKER, IP15), MAC_ATTACKER, BROADCAST_MAC)
        host.handle_frame(forged, 0.0)
        assert host.cache.get(IP15) is None

    def test_frames_for_other_macs_ignored(self):
        host = make_host()
        request = arp_frame(arp_request(IP100, MAC100, IP15), MAC100, MAC_ATTACKER)
        assert host.handle_frame(request, 0.0) == []


class TestEcho:
    def test_echo_request_auto_replies(self, timers):
        host = make_host(timers)
        host.cache.add_static(IP100, MAC100)
        frame = EtherFrame(MAC15, MAC100, ETHERTYPE_IPV4, echo(dst_ip=IP15, src_ip=IP100).encode())
        out = host.handle_frame(frame, 0.0)
        assert len(out) == 1
        reply = out[0].icmp()
        assert reply.kind == "reply"
        assert reply.dst_ip == IP100 and reply.ident == 7
        assert len(host.echo_requests_seen) == 1

    def test_priming_forces_resolution(self, timers):
        # An echo request from an unknown source makes the host resolve
        # that source before it can answer, which is the attack hook.
        host = make_host(timers)
        frame = EtherFrame(MAC15, MAC_ATTACKER, ETHERTYPE_IPV4,
                           echo(dst_ip=IP15, src_ip=IP100).encode())
        out = host.handle_frame(frame, 0.0)
        assert len(out) == 1
        packet = out[0].arp()
        assert packet.is_request and packet.target_ip == IP100

    def test_echo_reply_counted(self):
        host = make_host()
        reply = IcmpEcho("reply", IP100, IP15, ident=7, seq=1)
        frame = EtherFrame(MAC15, MAC100, ETHERTYPE_IPV4, reply.encode())
        host.handle_frame(frame, 3.0)
        assert host.count_echo_replies() == 1
        assert host.count_echo_replies(since=2.0, from_ip=IP100) == 1
        assert host.count_echo_replies(since=4.0) == 0
        assert host.count_echo_replies(from_ip=IP_ATTACKER) == 0

    def test_echo_for_other_destination_dropped(self):
        host = make_host()
        frame = EtherFrame(MAC15, MAC100, ETHERTYPE_IPV4,
                           echo(dst_ip=IP100, src_ip=IP100).encode())
        assert host.handle_frame(frame, 0.0) == []


class TestManagement:
    def test_down_host_is_silent(self, timers):
        host = make_host(timers)
        host.set_up(False)
        assert host.send_ip(IP100, echo(), 0.0) == []
        request = arp_frame(arp_request(IP100, MAC100, IP15), MAC100, BROADCAST_MAC)
        assert host.handle_frame(request, 0.0) == []
        host.set_up(True)
        assert len(host.send_ip(IP100, echo(), 1.0)) == 1

    def test_gratuitous_announces_own_binding(self):
        host = make_host()
        frame = host.gratuitous_arp(0.0)
        packet = frame.arp()
        assert frame.dst == BROADCAST_MAC
        assert packet.is_request
        assert packet.sender_ip == IP15 and packet.target_ip == IP15

    def test_reconfigure_updates_identity_and_cancels_pending(self, timers):
        host = make_host(timers)
        host.send_ip(IP100, echo(), 0.0)
        host.reconfigure(new_ip=ipv4("192.0.0.17"), now=0.5)
        assert host.ip == ipv4("192.0.0.17")
        # The stale resolution timer fires without effect.
        assert timers.fire(1.0) == []
        assert timers.fire(2.0) == []

    def test_reconfigure_keeps_cache(self):
        host = make_host()
        host.cache.add_static(IP100, MAC100)
        host.reconfigure(new_mac=MAC_ATTACKER, now=0.0)
        assert host.mac == MAC_ATTACKER
        assert host.cache.lookup(IP100, 0.0) == MAC100

    def test_static_entries_from_config(self):
        host = make_host(static_entries=((IP100, MAC100),))
        assert host.cache.lookup(IP100, 0.0) == MAC100
        frames = host.send_ip(IP100, echo(), 0.0)
        assert frames[0].dst == MAC100

    def test_cache_change_records_logged(self, timers):
        rec = Recorder()
        host = make_host(timers, rec)
        request = arp_frame(arp_request(IP100, MAC100, IP15), MAC100, BROADCAST_MAC)
        host.handle_frame(request, 0.0)
        changes = rec.of_kind("cache_change")
        assert changes and changes[0]["ip"] == str(IP100)
        assert changes[0]["effect"] == "created"
        assert changes[0]["entry_kind"] == "solicited"
