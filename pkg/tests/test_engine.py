"""Simulation engine, scenario validation, and the command-line interface."""

import json

import pytest

from arplab import (
    ScenarioError,
    Simulation,
    load_scenario,
    parse_scenario,
    run_scenario,
)
from arplab.cli import main
from arplab.engine import EventLog


def base_scenario():
    return {
        "name": "unit",
        "until": 2.5,
        "hosts": [
            {"name": "h15", "ip": "192.0.0.15", "mac": "00:0b:cd:b6:3e:a2"},
            {"name": "h100", "ip": "192.0.0.100", "mac": "00:08:c7:9f:bd:a8"},
        ],
        "script": [
            {"at": 0.5, "action": "ping", "from": "h15", "to": "h100"},
            {"at": 2.0, "action": "assert", "check": "echo_replies", "host": "h15", "min": 1},
        ],
    }


def acl_scenario():
    data = base_scenario()
    data["hosts"].append({"name": "srv", "ip": "192.0.0.1", "mac": "00:50:da:e2:11:01"})
    data["switch"] = {"acl": "cisco-4.5.1"}
    data["server"] = {
        "host": "srv",
        "started": True,
        "manual_entries": [["192.0.0.15", "00:0b:cd:b6:3e:a2"],
                           ["192.0.0.100", "00:08:c7:9f:bd:a8"]],
    }
    return data


class TestEventLog:
    def test_none_valued_fields_are_omitted(self):
        log = EventLog()
        record = log.append("frame_tx", 0.5, port=None, node="h15")
        assert "port" not in record
        assert record["node"] == "h15"
        assert (record["seq"], record["virtual_time"]) == (0, 0.5)

    def test_of_kind_filters(self):
        log = EventLog()
        log.append("frame_tx", 0.0)
        log.append("frame_rx", 0.1)
        log.append("alarm", 0.2)
        assert len(log.of_kind("frame_tx", "alarm")) == 2

    def test_text_rendering_has_one_line_per_record(self):
        log = EventLog()
        log.append("frame_tx", 0.000123, node="h15")
        text = log.to_text()
        assert text.count("\n") == 1
        assert "frame_tx" in text and "node=h15" in text


class TestSimulation:
    def test_scripted_ping_gets_its_reply(self):
        sim = run_scenario(parse_scenario(base_scenario()))
        assert sim.failures == 0
        result = sim.log.of_kind("assert_result")[0]
        assert result["ok"] is True

    def test_event_log_is_valid_sorted_jsonl(self):
        sim = run_scenario(parse_scenario(base_scenario()))
        lines = sim.log.to_jsonl().splitlines()
        assert lines
        for line in lines:
            parsed = json.loads(line)
            assert list(parsed) == sorted(parsed)
            assert {"seq", "virtual_time", "kind"} <= set(parsed)

    def test_identical_runs_produce_identical_logs(self):
        scenario = parse_scenario(acl_scenario())
        first = run_scenario(scenario).log.to_jsonl()
        second = run_scenario(scenario).log.to_jsonl()
        assert first == second

    def test_every_transmitted_frame_is_accounted_for(self):
        sim = run_scenario(parse_scenario(acl_scenario()))
        tx_ids = {r["frame_id"] for r in sim.log.of_kind("frame_tx")}
        rx_ids = {r["frame_id"] for r in sim.log.of_kind("frame_rx")}
        drop_ids = {
            r["frame_id"] for r in sim.log.of_kind("frame_drop") if "frame_id" in r
        }
        assert tx_ids  # the run did transmit
        assert tx_ids <= rx_ids | drop_ids  # nothing vanished
        assert (rx_ids | drop_ids) <= tx_ids  # nothing materialised

    def test_simultaneous_steps_run_in_script_order(self):
        data = base_scenario()
        data["script"] = [
            {"at": 0.5, "action": "ping", "from": "h15", "to": "h100"},
            {"at": 0.5, "action": "ping", "from": "h100", "to": "h15"},
        ]
        data["until"] = 1.5
        sim = run_scenario(parse_scenario(data))
        origins = [r["origin"] for r in sim.log.of_kind("frame_tx")[:2]]
        assert origins == ["h15", "h100"]

    def test_default_horizon_pads_the_last_step(self):
        data = base_scenario()
        del data["until"]
        sim = Simulation(parse_scenario(data))
        assert sim.default_until() == pytest.approx(4.0)  # last step at 2.0

    def test_failed_assert_is_counted_not_raised(self):
        data = base_scenario()
        data["script"][1] = {
            "at": 2.0,
            "action": "assert",
            "check": "cache_maps",
            "host": "h15",
            "ip": "192.0.0.100",
            "mac": "00:00:00:00:00:01",
        }
        sim = run_scenario(parse_scenario(data))
        assert sim.failures == 1
        result = sim.log.of_kind("assert_result")[0]
        assert result["ok"] is False

    def test_down_host_is_silent_until_brought_back(self):
        data = base_scenario()
        data["until"] = 5.5
        data["script"] = [
            {"at": 0.1, "action": "host_down", "host": "h100"},
            {"at": 0.5, "action": "ping", "from": "h15", "to": "h100"},
            {"at": 3.0, "action": "assert", "check": "cache_absent",
             "host": "h15", "ip": "192.0.0.100"},
            {"at": 3.2, "action": "host_up", "host": "h100"},
            {"at": 3.5, "action": "ping", "from": "h15", "to": "h100"},
            {"at": 5.0, "action": "assert", "check": "echo_replies",
             "host": "h15", "since": 3.0, "min": 1},
        ]
        sim = run_scenario(parse_scenario(data))
        assert sim.failures == 0
        unreachable = [
            r for r in sim.log.of_kind("frame_drop") if r.get("reason") == "unreachable"
        ]
        assert len(unreachable) == 1

    def test_ping_targets_resolve_to_addresses_at_load(self):
        scenario = parse_scenario(base_scenario())
        assert scenario.script[0].fields["to"] == "192.0.0.100"


class TestValidation:
    def expect_errors(self, data, *needles):
        with pytest.raises(ScenarioError) as info:
            parse_scenario(data)
        blob = "; ".join(info.value.errors)
        for needle in needles:
            assert needle in blob, f"missing {needle!r} in {blob!r}"
        return info.value

    def test_all_problems_reported_at_once(self):
        data = base_scenario()
        data["hosts"][0]["mac"] = "not-a-mac"
        data["hosts"][1]["ip"] = "not-an-ip"
        exc = self.expect_errors(data, "hosts[0].mac", "hosts[1].ip")
        assert len(exc.errors) >= 2

    def test_duplicate_ip_points_at_the_escape_hatch(self):
        data = base_scenario()
        data["hosts"][1]["ip"] = data["hosts"][0]["ip"]
        self.expect_errors(
            data, "duplicate IP 192.0.0.15 (set allow_ip_conflicts = true if intended)"
        )
        data["allow_ip_conflicts"] = True
        data["script"] = []
        assert parse_scenario(data).allow_ip_conflicts is True

    def test_duplicate_mac_flagged(self):
        data = base_scenario()
        data["hosts"][1]["mac"] = data["hosts"][0]["mac"]
        self.expect_errors(data, "duplicate MAC")

    def test_acl_preset_requires_a_server(self):
        data = base_scenario()
        data["switch"] = {"acl": "cisco-4.5.1"}
        self.expect_errors(
            data, "switch.acl: an ACL preset needs a [server] block to anchor its rules"
        )

    def test_unknown_action_and_check_named_in_errors(self):
        data = base_scenario()
        data["script"] = [
            {"at": 0.1, "action": "teleport"},
            {"at": 0.2, "action": "assert", "check": "vibes"},
        ]
        self.expect_errors(data, "unknown action 'teleport'", "unknown check 'vibes'")

    def test_script_times_must_not_go_backwards(self):
        data = base_scenario()
        data["script"] = [
            {"at": 2.0, "action": "wait"},
            {"at": 1.0, "action": "wait"},
        ]
        self.expect_errors(data, "script times must be non-decreasing")

    def test_ports_must_cover_every_node(self):
        data = base_scenario()
        data["switch"] = {"ports": {"1": "h15"}}
        self.expect_errors(data, "switch.ports: must map every node exactly once")

    def test_start_server_needs_a_server_block(self):
        data = base_scenario()
        data["script"] = [{"at": 0.1, "action": "start_server"}]
        self.expect_errors(data, "start_server without a [server] block")

    def test_ping_from_unknown_node_rejected(self):
        data = base_scenario()
        data["script"][0]["from"] = "ghost"
        self.expect_errors(data, "unknown node 'ghost'")

    def test_missing_file_is_a_scenario_error(self, tmp_path):
        with pytest.raises(ScenarioError) as info:
            load_scenario(tmp_path / "absent.toml")
        assert info.value.errors[0].endswith("no such file")

    def test_unparseable_toml_is_a_scenario_error(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("hosts = [\n")
        with pytest.raises(ScenarioError):
            load_scenario(path)


MINI_TOML = """\
name = "mini"
until = 2.5

[[hosts]]
name = "h15"
ip = "192.0.0.15"
mac = "00:0b:cd:b6:3e:a2"

[[hosts]]
name = "h100"
ip = "192.0.0.100"
mac = "00:08:c7:9f:bd:a8"

[[script]]
at = 0.5
action = "ping"
from = "h15"
to = "h100"

[[script]]
at = 2.0
action = "assert"
check = "echo_replies"
host = "h15"
min = {min}
"""

SERVED_TOML = """\
name = "served"
until = 1.0

[[hosts]]
name = "srv"
ip = "192.0.0.1"
mac = "00:50:da:e2:11:01"

[[hosts]]
name = "h15"
ip = "192.0.0.15"
mac = "00:0b:cd:b6:3e:a2"

[server]
host = "srv"
started = true

[[script]]
at = 0.1
action = "wait"
"""


@pytest.fixture
def mini(tmp_path):
    path = tmp_path / "mini.toml"
    path.write_text(MINI_TOML.format(min=1))
    return path


class TestCli:
    def test_run_passing_scenario_exits_zero(self, mini, capsys):
        assert main(["run", str(mini)]) == 0
        captured = capsys.readouterr()
        for line in captured.out.splitlines():
            json.loads(line)
        assert "assert echo_replies at 2.000s: ok" in captured.err

    def test_run_failing_scenario_exits_one(self, tmp_path, capsys):
        path = tmp_path / "fails.toml"
        path.write_text(MINI_TOML.format(min=5))
        assert main(["run", str(path)]) == 1
        captured = capsys.readouterr()
        assert "FAILED" in captured.err
        assert "1 assertion(s) failed" in captured.err

    def test_run_missing_scenario_exits_two(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.toml")]) == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_run_invalid_scenario_reports_every_error(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text('[[hosts]]\nname = "x"\nip = "nope"\nmac = "nope"\n')
        assert main(["run", str(path)]) == 2
        err = capsys.readouterr().err
        assert err.count("error:") >= 2

    def test_until_flag_truncates_the_run(self, mini, capsys):
        assert main(["run", str(mini), "--until", "0.1"]) == 0
        captured = capsys.readouterr()
        assert "assert" not in captured.err

    def test_log_flag_writes_file_instead_of_stdout(self, mini, tmp_path, capsys):
        out = tmp_path / "events.jsonl"
        assert main(["run", str(mini), "--log", str(out)]) == 0
        assert capsys.readouterr().out == ""
        lines = out.read_text().splitlines()
        assert lines and all(json.loads(line) for line in lines)

    def test_text_format_is_human_readable(self, mini, capsys):
        assert main(["run", str(mini), "--format", "text"]) == 0
        first = capsys.readouterr().out.splitlines()[0]
        with pytest.raises(ValueError):
            json.loads(first)
        assert "frame_tx" in first

    def test_dump_spoof_list_prints_verdict(self, tmp_path, capsys):
        path = tmp_path / "served.toml"
        path.write_text(SERVED_TOML)
        assert main(["run", str(path), "--dump-spoof-list"]) == 0
        out = capsys.readouterr().out
        assert "spoof list:" in out
        assert "(empty)" in out

    def test_validate_reports_shape(self, mini, capsys):
        assert main(["validate", str(mini)]) == 0
        assert capsys.readouterr().out.strip() == "mini: ok (2 hosts, 2 script steps)"

    def test_list_scenarios_marks_invalid_files(self, tmp_path, capsys):
        (tmp_path / "mini.toml").write_text(MINI_TOML.format(min=1))
        (tmp_path / "broken.toml").write_text("hosts = [\n")
        assert main(["list-scenarios", "--dir", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "mini" in out
        assert "(invalid)" in out

    def test_bare_names_resolve_through_environment(self, tmp_path, monkeypatch, capsys):
        scen_dir = tmp_path / "scen"
        scen_dir.mkdir()
        (scen_dir / "mini.toml").write_text(MINI_TOML.format(min=1))
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("ARPLAB_SCENARIOS", str(scen_dir))
        assert main(["run", "mini"]) == 0
        capsys.readouterr()

    def test_dir_flag_beats_environment(self, tmp_path, monkeypatch, capsys):
        good = tmp_path / "good"
        good.mkdir()
        (good / "mini.toml").write_text(MINI_TOML.format(min=1))
        monkeypatch.chdir(tmp_path)
        monkeypatch.setenv("ARPLAB_SCENARIOS", str(tmp_path / "missing"))
        assert main(["run", "mini", "--dir", str(good)]) == 0
        capsys.readouterr()
