"""CLI verbs in-process plus daemon round trips over real sockets."""

from __future__ import annotations

import json
import os
import queue
import signal
import subprocess
import sys
import threading
import time

import pytest

from digstack import fixtures
from digstack.cli import main
from digstack.digcovery import Digcovery, DomainRecord
from digstack.digrectory import Digrectory
from digstack.dnsserver import UdpDnsServer
from digstack.webapi import DigcoveryHttpServer


def run_cli(capsys, argv: list[str]) -> tuple[int, str]:
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


def entry_file(tmp_path, entries=None) -> str:
    path = tmp_path / "objects.json"
    rows = entries if entries is not None else [fixtures.light_lab_entry().to_dict()]
    path.write_text(json.dumps(rows))
    return str(path)


# --- local verbs --------------------------------------------------------------------


def test_compare_frames_reference_numbers(capsys):
    code, out = run_cli(capsys, ["--json", "compare-frames"])
    assert code == 0
    report = json.loads(out)
    by_pair = {r["pair"]: r for r in report["pairs"]}
    srv = by_pair["srv-lookup"]
    assert (srv["original_bytes"], srv["optimized_bytes"]) == (181, 79)
    assert (srv["frames_original"], srv["frames_optimized"]) == (3, 1)
    txt = by_pair["txt-metadata"]
    assert (txt["original_bytes"], txt["optimized_bytes"]) == (221, 130)
    assert (txt["frames_original"], txt["frames_optimized"]) == (3, 2)
    assert txt["bytes_saved"] == 91


def test_compare_frames_text_table(capsys):
    code, out = run_cli(capsys, ["compare-frames"])
    assert code == 0
    assert "srv-lookup" in out and "3 -> 1" in out


def test_expand_txt_round(capsys):
    code, out = run_cli(
        capsys, ["expand-txt", "r=light;i=2;l=86400;m=dimmer;f=EIB;area=1;zone=2;deviceID=3|value;onoff"]
    )
    assert code == 0
    assert out.strip() == fixtures.JOINED_TXT.decode()
    code, _ = run_cli(capsys, ["expand-txt", "i=2;l=60"])
    assert code == 1


def test_register_without_publish(tmp_path, capsys):
    journal = tmp_path / "dir.journal"
    code, out = run_cli(
        capsys, ["register", entry_file(tmp_path), "--journal", str(journal)]
    )
    assert code == 0 and "created light_lab" in out
    # same content again: the journal replays, the entry just refreshes
    code, out = run_cli(
        capsys, ["register", entry_file(tmp_path), "--journal", str(journal)]
    )
    assert code == 0 and "refreshed light_lab" in out


def test_register_bad_file_exits_one(tmp_path, capsys):
    path = tmp_path / "objects.json"
    path.write_text(json.dumps([{"instance": "x"}]))
    assert main(["register", str(path)]) == 1
    path.write_text("not json")
    assert main(["register", str(path)]) == 1
    assert main(["register", str(tmp_path / "missing.json")]) == 1


def test_register_domain_mismatch_exits_one(tmp_path, capsys):
    code, _ = run_cli(
        capsys,
        ["register", entry_file(tmp_path), "--domain", "rd.other.org"],
    )
    assert code == 1


# --- against an in-process lookup service ---------------------------------------------


@pytest.fixture()
def stack(tmp_path):
    """Lookup service plus one populated directory, all on loopback."""
    core = Digcovery()
    http = DigcoveryHttpServer(core).start()
    directory = Digrectory(fixtures.DOMAIN)
    directory.register(fixtures.light_lab_entry())
    dns = UdpDnsServer(directory.answer).start()
    core.register_domain(
        DomainRecord(fixtures.DOMAIN, dns.address[0], dns.address[1], owner="test")
    )
    core.ingest(fixtures.DOMAIN, directory.pointer_summaries())
    try:
        yield http.url, dns.address
    finally:
        dns.stop()
        http.stop()


def test_discover_pattern_and_exit_codes(stack, capsys):
    url, _ = stack
    code, out = run_cli(capsys, ["--json", "--digcovery", url, "discover", "_lamp.*"])
    assert code == 0
    assert json.loads(out)["domains"][0]["domain"] == fixtures.DOMAIN
    code, _ = run_cli(capsys, ["--digcovery", url, "discover", "_nothing._here"])
    assert code == 2
    code, _ = run_cli(capsys, ["--digcovery", url, "discover", "bad..pattern"])
    assert code == 1


def test_discover_query_file(stack, tmp_path, capsys):
    url, _ = stack
    qfile = tmp_path / "query.json"
    qfile.write_text(json.dumps({"query": fixtures.campus_box_query()}))
    code, out = run_cli(capsys, ["--json", "--digcovery", url, "discover", "--query", str(qfile)])
    assert code == 0
    hits = json.loads(out)["results"]
    # one hit per advertised service path, all for the geo-tagged light
    assert {h["instance"] for h in hits} == {"light_lab"}
    assert len(hits) == 5

    qfile.write_text(json.dumps({"term": {"rt": "uranium"}}))
    code, _ = run_cli(capsys, ["--digcovery", url, "discover", "--query", str(qfile)])
    assert code == 2

    qfile.write_text(json.dumps({"fuzzy": {}}))
    code, _ = run_cli(capsys, ["--digcovery", url, "discover", "--query", str(qfile)])
    assert code == 1


def test_resolve_via_lookup_and_direct(stack, capsys):
    url, dns_addr = stack
    code, out = run_cli(
        capsys, ["--json", "--digcovery", url, "resolve", "light_lab", fixtures.DOMAIN]
    )
    assert code == 0
    row = json.loads(out)
    assert row["host"] == fixtures.HOSTNAME and row["port"] == 1234
    assert "2001:720:1710::11" in row["addrs"] and "155.54.210.163" in row["addrs"]
    assert row["txt"] == [fixtures.JOINED_TXT.decode()]

    direct = f"{dns_addr[0]}:{dns_addr[1]}"
    code, out = run_cli(
        capsys, ["--json", "resolve", "light_lab", fixtures.DOMAIN, "--dns", direct]
    )
    assert code == 0 and json.loads(out)["port"] == 1234

    code, _ = run_cli(capsys, ["--digcovery", url, "resolve", "ghost", fixtures.DOMAIN])
    assert code == 2
    code, _ = run_cli(capsys, ["--digcovery", url, "resolve", "x", "unregistered.example"])
    assert code == 2


def test_register_with_publish(stack, tmp_path, capsys):
    url, dns_addr = stack
    entry = fixtures.light_lab_entry().to_dict()
    entry["instance"] = "light_cli"
    entry["ptr_paths"] = ["_lamp._sub._coap._udp"]
    code, out = run_cli(
        capsys,
        [
            "--json",
            "--digcovery",
            url,
            "register",
            entry_file(tmp_path, [entry]),
            "--publish",
            "--dns-host",
            dns_addr[0],
            "--dns-port",
            str(dns_addr[1]),
        ],
    )
    assert code == 0
    report = json.loads(out)
    assert report["pointers_accepted"] == 1
    code, out = run_cli(capsys, ["--json", "--digcovery", url, "discover", "*.*"])
    assert code == 0


def test_unreachable_lookup_service_exits_one(capsys):
    code, _ = run_cli(
        capsys,
        ["--digcovery", "http://127.0.0.1:1", "--timeout", "0.3", "discover", "*.*"],
    )
    assert code == 1


# --- daemon subprocesses --------------------------------------------------------------


def spawn(argv: list[str]):
    proc = subprocess.Popen(
        [sys.executable, "-m", "digstack.cli", "--json", *argv],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
        env={**os.environ, "PYTHONUNBUFFERED": "1"},
    )
    lines: queue.Queue = queue.Queue()
    threading.Thread(target=lambda: lines.put(proc.stdout.readline()), daemon=True).start()
    try:
        ready = json.loads(lines.get(timeout=15))
    except (queue.Empty, json.JSONDecodeError):
        proc.terminate()
        raise AssertionError(f"daemon not ready: {proc.stderr.read()}")
    assert ready.get("ready") is True
    return proc, ready


def stop(proc) -> None:
    proc.send_signal(signal.SIGTERM)
    try:
        proc.wait(timeout=10)
    except subprocess.TimeoutExpired:
        proc.kill()


def test_daemons_end_to_end(tmp_path):
    lookup, ready = spawn(["digcovery", "--listen", "127.0.0.1:0", "--dns-listen", "127.0.0.1:0"])
    try:
        url = ready["http"]
        journal = tmp_path / "daemon.journal"
        seed = Digrectory(fixtures.DOMAIN, journal_path=str(journal))
        seed.register(fixtures.light_lab_entry())

        directory_proc, dir_ready = spawn(
            [
                "--digcovery",
                url,
                "digrectory",
                "--domain",
                fixtures.DOMAIN,
                "--listen",
                "127.0.0.1:0",
                "--journal",
                str(journal),
                "--publish",
                "--publish-interval",
                "0.2",
            ]
        )
        try:
            deadline = 20
            result = subprocess.run(
                [sys.executable, "-m", "digstack.cli", "--json", "--digcovery", url, "discover", "_lamp.*"],
                capture_output=True,
                text=True,
                timeout=deadline,
            )
            for _ in range(40):
                if result.returncode == 0:
                    break
                time.sleep(0.25)
                result = subprocess.run(
                    [sys.executable, "-m", "digstack.cli", "--json", "--digcovery", url, "discover", "_lamp.*"],
                    capture_output=True,
                    text=True,
                    timeout=deadline,
                )
            assert result.returncode == 0, result.stderr
            domains = json.loads(result.stdout)["domains"]
            assert domains[0]["domain"] == fixtures.DOMAIN
            dns_hostport = dir_ready["dns"]

            resolved = subprocess.run(
                [
                    sys.executable,
                    "-m",
                    "digstack.cli",
                    "--json",
                    "resolve",
                    "light_lab",
                    fixtures.DOMAIN,
                    "--dns",
                    dns_hostport,
                ],
                capture_output=True,
                text=True,
                timeout=deadline,
            )
            assert resolved.returncode == 0, resolved.stderr
            assert json.loads(resolved.stdout)["port"] == 1234
        finally:
            stop(directory_proc)
    finally:
        stop(lookup)
