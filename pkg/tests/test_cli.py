import json

import pytest

from modfleet.cli import main


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Shared synth -> ingest pipeline for the command tests."""
    root = tmp_path_factory.mktemp("cli")
    trips = root / "trips.csv"
    truth = root / "truth.json"
    profile = root / "profile.json"
    rc = main(["synth", "--stations", "4", "--rate", "40", "--seed", "7",
               "--out", str(trips), "--truth", str(truth)])
    assert rc == 0
    rc = main(["ingest", "--trips", str(trips), "--stations", "4",
               "--seed", "7", "--out", str(profile)])
    assert rc == 0
    return {"root": root, "trips": trips, "truth": truth, "profile": profile}


def test_synth_deterministic(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(["synth", "--stations", "3", "--rate", "15", "--seed", "3",
                 "--out", str(a)]) == 0
    assert main(["synth", "--stations", "3", "--rate", "15", "--seed", "3",
                 "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_truth_file_schema(pipeline):
    doc = json.loads(pipeline["truth"].read_text())
    assert doc["schema"] == 1
    assert len(doc["centers"]) == 4


def test_profile_schema(pipeline):
    doc = json.loads(pipeline["profile"].read_text())
    assert doc["schema"] == 1
    assert len(doc["hours"]) == 24


def test_analyze_json_and_csv(pipeline):
    out_json = pipeline["root"] / "report.json"
    rc = main(["analyze", "--profile", str(pipeline["profile"]),
               "--hour", "18", "--fleet", "20,80", "--out", str(out_json)])
    assert rc == 0
    doc = json.loads(out_json.read_text())
    fleets = [r["fleet"] for r in doc["results"]]
    assert fleets == [20, 80]
    avail = [min(r["availability"].values()) for r in doc["results"]]
    assert avail[1] >= avail[0]

    out_csv = pipeline["root"] / "report.csv"
    rc = main(["analyze", "--profile", str(pipeline["profile"]),
               "--hour", "18", "--fleet", "20", "--out", str(out_csv)])
    assert rc == 0
    lines = out_csv.read_text().strip().splitlines()
    assert lines[0] == "fleet,station,availability,throughput,gamma"
    assert len(lines) == 5


def test_rebalance_plan_output(pipeline):
    out = pipeline["root"] / "plan.json"
    rc = main(["rebalance", "--profile", str(pipeline["profile"]),
               "--hour", "18", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == 1
    assert doc["cost"] >= 0.0
    assert len(doc["beta"]) == 4


def test_simulate_with_trace(pipeline):
    out = pipeline["root"] / "summary.json"
    trace = pipeline["root"] / "events.ndjson"
    rc = main(["simulate", "--profile", str(pipeline["profile"]),
               "--fleet", "30", "--mode", "queue",
               "--policy", "realtime-dispatch", "--duration", "7200",
               "--seed", "5", "--out", str(out), "--trace", str(trace)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["schema"] == 1
    assert doc["fleet"] == 30
    lines = trace.read_text().strip().splitlines()
    assert lines
    types = {json.loads(line)["type"] for line in lines}
    assert "customer" in types


def test_congestion_csv(pipeline):
    out = pipeline["root"] / "ens.csv"
    rc = main(["congestion", "--systems", "10", "--seed", "3",
               "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "seed,reb_ratio,avg_util_increase,max_util_increase"
    assert len(lines) == 11


def test_config_file_supplies_defaults(pipeline, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hour": 18, "fleet": "25"}))
    out = tmp_path / "rep.json"
    rc = main(["analyze", "--profile", str(pipeline["profile"]),
               "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["results"][0]["fleet"] == 25


def test_validation_error_exit_code(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("pickup_datetime,dropoff_datetime,pickup_lon,pickup_lat,"
                   "dropoff_lon,dropoff_lat\nnope,2024-01-01T00:00:00Z,0,0,0,0\n")
    assert main(["ingest", "--trips", str(bad), "--stations", "2"]) == 2


def test_missing_file_exit_code(tmp_path):
    assert main(["ingest", "--trips", str(tmp_path / "absent.csv"),
                 "--stations", "2"]) == 2
