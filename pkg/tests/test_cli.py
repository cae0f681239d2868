import csv
import json

import pytest

from govimpact.cli import main


@pytest.fixture(scope="module")
def fx(tmp_path_factory):
    d = tmp_path_factory.mktemp("clifx")
    assert main(["synth", "--fixture", "--out", str(d)]) == 0
    return d


def test_run_all_succeeds(fx, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run-all", "--config", str(fx / "fixture.cfg"), "--out", str(out)]) == 0
    captured = capsys.readouterr()
    assert "event 3 aborted" in captured.err
    assert (out / "report.json").is_file() and (out / "manifest.json").is_file()


def test_missing_supply_exit_code(fx, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    text = (fx / "fixture.cfg").read_text().replace("supply.csv", "no_supply.csv")
    cfg.write_text(text.replace("= logs", f"= {fx}/logs").replace("= pools", f"= {fx}/pools")
                   .replace("= ethusd", f"= {fx}/ethusd").replace("= events", f"= {fx}/events"))
    assert main(["run-all", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "no_supply.csv" in capsys.readouterr().err


def test_schema_error_reports_line(fx, tmp_path, capsys):
    bad = tmp_path / "events.csv"
    rows = (fx / "events.csv").read_text().splitlines()
    rows.insert(2, "oops,not,a,valid,row")
    bad.write_text("\n".join(rows) + "\n")
    code = main(["counterfactuals", "--trades", str(tmp_path / "t.csv"), "--events", str(bad),
                 "--event", "1", "--out", str(tmp_path / "cf.csv")])
    assert code == 2
    assert "events.csv:3" in capsys.readouterr().err


def test_config_syntax_error_line(tmp_path, capsys):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("dt = 6h\nthis line is wrong\n")
    assert main(["run-all", "--config", str(cfg)]) == 2
    assert ":2" in capsys.readouterr().err


def test_stage_chain(fx, tmp_path):
    trades, cleaned = tmp_path / "trades.csv", tmp_path / "clean.csv"
    assert main(["ingest", "--logs", str(fx / "logs.jsonl"), "--pools", str(fx / "pools.csv"),
                 "--out", str(trades)]) == 0
    assert main(["clean", "--in", str(trades), "--out", str(cleaned),
                 "--report", str(tmp_path / "clean.json")]) == 0
    assert main(["aggregate", "--in", str(cleaned), "--from", "2021-05-01", "--to",
                 "2021-05-03", "--asset", "ALPH", "--out", str(tmp_path / "agg.csv")]) == 0
    with open(tmp_path / "agg.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8 and {r["asset"] for r in rows} == {"ALPH"}

    cf = tmp_path / "cf.csv"
    events = str(fx / "events.csv")
    assert main(["counterfactuals", "--config", str(fx / "fixture.cfg"), "--trades",
                 str(cleaned), "--events", events, "--event", "1", "--out", str(cf)]) == 0
    fits = tmp_path / "fits"
    assert main(["did", "--config", str(fx / "fixture.cfg"), "--trades", str(cleaned),
                 "--events", events, "--event", "1", "--out-dir", str(fits)]) == 0
    assert main(["impact", "--config", str(fx / "fixture.cfg"), "--fits", str(fits),
                 "--events", events, "--out", str(tmp_path / "impact.json")]) == 0
    report = json.loads((tmp_path / "impact.json").read_text())
    assert report["events"][0]["event_id"] == 1
    assert main(["did", "--config", str(fx / "fixture.cfg"), "--trades", str(cleaned),
                 "--events", events, "--event", "3", "--out-dir", str(fits)]) == 3
    assert main(["sweep", "--config", str(fx / "fixture.cfg"), "--trades", str(cleaned),
                 "--events", events, "--out", str(tmp_path / "sweep.csv")]) == 0


def test_match_command(tmp_path):
    actors, tokens = tmp_path / "a.csv", tmp_path / "t.csv"
    actors.write_text("actor\nCurve\nLazarus\n")
    tokens.write_text("token_id,token_name\ncurve,Curve DAO Token\nuni,Uniswap\n")
    out = tmp_path / "m.csv"
    assert main(["match", "--actors", str(actors), "--tokens", str(tokens), "--all",
                 "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert [(r["actor"], r["token_id"]) for r in rows if r["matched"] == "true"] == [
        ("Curve", "curve")]


def test_synth_command(tmp_path):
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"n_assets": 3, "n_slots": 10, "seed": 1}))
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s")]) == 0
    assert len(list((tmp_path / "s").glob("*.csv"))) == 3
    spec.write_text(json.dumps({"n_assets": 3, "pairwise_corr": 1.0}))
    assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "s2")]) == 2
